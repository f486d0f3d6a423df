from pathlib import Path

import numpy as np
import pytest

from nnobserver import plant, synthesis
from nnobserver.nn import NeuralNetwork

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def reference_forward(weights, biases, activations, x):
    """Straight-line evaluator kept independent of the package code."""
    import math

    cur = [float(v) for v in x]
    for w, b, act in zip(weights, biases, activations):
        nxt = []
        for row, bi in zip(w, b):
            z = sum(wij * cj for wij, cj in zip(row, cur)) + bi
            if act == "tanh":
                z = math.tanh(z)
            elif act == "relu":
                z = max(z, 0.0)
            elif act == "sigmoid":
                z = 1.0 / (1.0 + math.exp(-z))
            nxt.append(z)
        cur = nxt
    return np.array(cur)


ACTIVATIONS = ["relu", "tanh", "sigmoid", "purelin"]


def random_network(rng, max_depth=4, max_width=8, n_in=None, n_out=None) -> NeuralNetwork:
    depth = int(rng.integers(1, max_depth + 1))
    widths = [int(rng.integers(1, max_width + 1)) for _ in range(depth + 1)]
    if n_in is not None:
        widths[0] = n_in
    if n_out is not None:
        widths[-1] = n_out
    ws = [rng.normal(size=(widths[k + 1], widths[k])) for k in range(depth)]
    bs = [rng.normal(size=widths[k + 1]) for k in range(depth)]
    acts = [ACTIVATIONS[int(rng.integers(0, 4))] for _ in range(depth)]
    return NeuralNetwork.from_arrays(ws, bs, acts)


@pytest.fixture(scope="session")
def example1():
    return plant.fixture_example1()


@pytest.fixture(scope="session")
def acc():
    return plant.fixture_acc()


@pytest.fixture(scope="session")
def example1_report(example1):
    system, decomp, scenario = example1
    return synthesis.design_pipeline(system, decomp, scenario.u_lower, scenario.u_upper)


@pytest.fixture(scope="session")
def example1_trace(example1, example1_report):
    from nnobserver.monitor import simulate_closed_loop

    system, decomp, scenario = example1
    return simulate_closed_loop(system, example1_report, decomp, scenario)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

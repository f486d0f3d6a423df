"""Compare the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Both backends are checked to
agree before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from nnobserver import _kernels_py
from nnobserver.nn import NeuralNetwork
from nnobserver.plant import example1_network

try:
    from nnobserver import _kernels
except ImportError:
    _kernels = None


def random_network(rng, widths, activation="tanh"):
    ws = [rng.normal(size=(widths[k + 1], widths[k])) for k in range(len(widths) - 1)]
    bs = [rng.normal(size=widths[k + 1]) for k in range(len(widths) - 1)]
    acts = [activation] * (len(ws) - 1) + ["purelin"]
    return NeuralNetwork.from_arrays(ws, bs, acts)


def bench(label, fn, number):
    t = min(timeit.repeat(fn, number=number, repeat=5)) / number
    print(f"  {label:28s} {t * 1e6:10.2f} us/call")
    return t


def run(number):
    rng = np.random.default_rng(0)
    cases = {
        "example1 3-5-2": example1_network(),
        "random 8-16-16-8": random_network(rng, [8, 16, 16, 8]),
        "random 32-64-64-32": random_network(rng, [32, 64, 64, 32]),
    }
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    for name, nn in cases.items():
        x = rng.normal(size=nn.input_dim)
        lo, hi = x - 0.1, x + 0.1
        packed = nn._packed
        ref = _kernels_py.interval_forward(packed, lo, hi)
        print(name)
        t_py = bench("python forward", lambda: _kernels_py.forward(packed, x), number)
        i_py = bench("python interval_forward", lambda: _kernels_py.interval_forward(packed, lo, hi), number)
        if _kernels is not None:
            got = _kernels.interval_forward(packed, lo, hi)
            assert np.allclose(got[0], ref[0], atol=1e-12) and np.allclose(got[1], ref[1], atol=1e-12)
            assert np.allclose(_kernels.forward(packed, x), _kernels_py.forward(packed, x), atol=1e-12)
            t_cy = bench("cython forward", lambda: _kernels.forward(packed, x), number)
            i_cy = bench("cython interval_forward", lambda: _kernels.interval_forward(packed, lo, hi), number)
            print(f"  speedup forward x{t_py / t_cy:.1f}, interval x{i_py / i_cy:.1f}")

    tab = rng.normal(size=(60, 120))
    print("tableau 60x120 pivot")
    p_py = bench("python pivot", lambda: _kernels_py.pivot(tab.copy(), 3, 7), number)
    if _kernels is not None:
        a, b = tab.copy(), tab.copy()
        _kernels.pivot(a, 3, 7)
        _kernels_py.pivot(b, 3, 7)
        assert np.allclose(a, b, atol=1e-12)
        p_cy = bench("cython pivot", lambda: _kernels.pivot(tab.copy(), 3, 7), number)
        print(f"  speedup pivot x{p_py / p_cy:.1f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--number", type=int, default=2000)
    run(ap.parse_args().number)

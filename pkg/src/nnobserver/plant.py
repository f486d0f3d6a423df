"""Lipschitz plants with an embedded network, their bounding decompositions
and simulation scenarios, plus the two reference fixtures.

Symbol conventions inside expressions:

* ``f`` reads states ``x1..xn`` and outputs ``y1..ym``;
* ``f_lower``/``f_upper`` read box corners ``xl1..xln``, ``xu1..xun`` and
  outputs ``y1..ym``;
* scenario inputs read time ``t``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Expression
from .nn import NeuralNetwork

STATE_DRIVEN = "state_driven"
OUTPUT_DRIVEN = "output_driven"


class InputMode(str, enum.Enum):
    STATE_DRIVEN = STATE_DRIVEN
    OUTPUT_DRIVEN = OUTPUT_DRIVEN


def state_symbols(n_x: int, n_y: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n_x)] + [f"y{j + 1}" for j in range(n_y)]


def bound_symbols(n_x: int, n_y: int) -> list[str]:
    return (
        [f"xl{i + 1}" for i in range(n_x)]
        + [f"xu{i + 1}" for i in range(n_x)]
        + [f"y{j + 1}" for j in range(n_y)]
    )


def _exprs(items, symbols, n, what) -> tuple[Expression, ...]:
    out = tuple(e if isinstance(e, Expression) else Expression(str(e), symbols) for e in items)
    if len(out) != n:
        raise ValueError(f"{what} needs {n} expressions, got {len(out)}")
    for e in out:
        unknown = e.symbols - set(symbols)
        if unknown:
            raise ValueError(f"{what}: unknown symbols {sorted(unknown)}; valid: {', '.join(symbols)}")
    return out


def _vector_eval(exprs, env, shape=()):
    return np.stack([np.broadcast_to(np.asarray(e(env), dtype=np.float64), shape) for e in exprs])


@dataclass(frozen=True, eq=False)
class LipschitzSystem:
    """``dx/dt = A x + f(x) + B u + E Phi(eta)``, ``y = C x``.

    ``eta`` is ``[x; u]`` in state-driven mode and ``[y; u]`` in
    output-driven mode. ``B`` carries inputs that act on the state directly
    rather than through the network.
    """

    a_matrix: np.ndarray
    c_matrix: np.ndarray
    f: tuple
    beta: float
    nn: NeuralNetwork
    nn_input_mode: InputMode = InputMode.STATE_DRIVEN
    embedding: np.ndarray | None = None
    b_matrix: np.ndarray | None = None
    _effective: NeuralNetwork = field(init=False, repr=False)

    def __post_init__(self):
        a = np.array(self.a_matrix, dtype=np.float64, ndmin=2)
        c = np.array(self.c_matrix, dtype=np.float64, ndmin=2)
        n_x = a.shape[0]
        if a.shape != (n_x, n_x):
            raise ValueError(f"A must be square, got {a.shape}")
        if c.shape[1] != n_x:
            raise ValueError(f"C must have {n_x} columns, got {c.shape}")
        n_y = c.shape[0]
        mode = InputMode(self.nn_input_mode)
        lead = n_x if mode is InputMode.STATE_DRIVEN else n_y
        n_u = self.nn.input_dim - lead
        if n_u < 0:
            raise ValueError(
                f"network input width {self.nn.input_dim} is smaller than the {lead} "
                f"{'states' if mode is InputMode.STATE_DRIVEN else 'outputs'} it must read"
            )
        emb = np.eye(n_x) if self.embedding is None else np.array(self.embedding, dtype=np.float64, ndmin=2)
        if emb.shape != (n_x, self.nn.output_dim):
            raise ValueError(f"embedding must be {n_x} x {self.nn.output_dim}, got {emb.shape}")
        b = np.zeros((n_x, n_u)) if self.b_matrix is None else np.array(self.b_matrix, dtype=np.float64).reshape(n_x, -1)
        if b.shape != (n_x, n_u):
            raise ValueError(f"B must be {n_x} x {n_u}, got {b.shape}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        f = _exprs(self.f, state_symbols(n_x, n_y), n_x, "f")
        for name, val in (("a_matrix", a), ("c_matrix", c), ("embedding", emb), ("b_matrix", b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "nn_input_mode", mode)
        object.__setattr__(self, "beta", float(self.beta))
        identity = emb.shape[0] == emb.shape[1] and np.array_equal(emb, np.eye(n_x))
        object.__setattr__(self, "_effective", self.nn if identity else self.nn.with_output_layer(emb))

    @property
    def n_x(self) -> int:
        return self.a_matrix.shape[0]

    @property
    def n_y(self) -> int:
        return self.c_matrix.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_matrix.shape[1]

    @property
    def state_driven(self) -> bool:
        return self.nn_input_mode is InputMode.STATE_DRIVEN

    @property
    def effective_network(self) -> NeuralNetwork:
        """The network with the embedding folded in as a final linear layer."""
        return self._effective

    @property
    def f_is_zero(self) -> bool:
        return all(e.is_zero for e in self.f)

    def output(self, x) -> np.ndarray:
        return self.c_matrix @ np.asarray(x, dtype=np.float64)

    def f_value(self, x, y=None) -> np.ndarray:
        if self.f_is_zero:
            return np.zeros(self.n_x)
        x = np.asarray(x, dtype=np.float64)
        y = self.output(x) if y is None else y
        env = {f"x{i + 1}": x[i] for i in range(self.n_x)}
        env.update({f"y{j + 1}": y[j] for j in range(self.n_y)})
        return _vector_eval(self.f, env)

    def nn_input(self, x, u) -> np.ndarray:
        lead = x if self.state_driven else self.output(x)
        return np.concatenate([lead, np.asarray(u, dtype=np.float64).reshape(-1)])


def eval_dynamics(system: LipschitzSystem, x, u, t: float = 0.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if x.shape != (system.n_x,):
        raise ValueError(f"state must have length {system.n_x}, got {x.shape}")
    if u.shape != (system.n_u,):
        raise ValueError(f"input must have length {system.n_u}, got {u.shape}")
    y = system.output(x)
    out = system.a_matrix @ x + system.f_value(x, y) + system.b_matrix @ u
    return out + system.effective_network(system.nn_input(x, u))


@dataclass(frozen=True, eq=False)
class BoundingDecomposition:
    f_lower: tuple
    f_upper: tuple
    gamma_l1: float = 0.0
    gamma_l2: float = 0.0
    gamma_u1: float = 0.0
    gamma_u2: float = 0.0
    rho_lower: np.ndarray | None = None
    rho_upper: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.f_lower)
        for name in ("gamma_l1", "gamma_l2", "gamma_u1", "gamma_u2"):
            v = float(getattr(self, name))
            if v < 0:
                raise ValueError(f"{name} must be nonnegative")
            object.__setattr__(self, name, v)
        for name in ("rho_lower", "rho_upper"):
            v = getattr(self, name)
            v = np.zeros(n) if v is None else np.array(v, dtype=np.float64).reshape(-1)
            if v.shape != (n,) or np.any(v < 0):
                raise ValueError(f"{name} must be a nonnegative vector of length {n}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def bind(self, system: LipschitzSystem) -> "BoundingDecomposition":
        """Parse string entries against ``system``'s symbol space."""
        syms = bound_symbols(system.n_x, system.n_y)
        return BoundingDecomposition(
            _exprs(self.f_lower, syms, system.n_x, "f_lower"),
            _exprs(self.f_upper, syms, system.n_x, "f_upper"),
            self.gamma_l1,
            self.gamma_l2,
            self.gamma_u1,
            self.gamma_u2,
            self.rho_lower,
            self.rho_upper,
        )

    @property
    def gamma_lower(self) -> float:
        return self.gamma_l1 + self.gamma_l2

    @property
    def gamma_upper(self) -> float:
        return self.gamma_u1 + self.gamma_u2

    @property
    def is_zero(self) -> bool:
        return all(isinstance(e, Expression) and e.is_zero for e in self.f_lower + self.f_upper)

    @classmethod
    def zero(cls, n_x: int) -> "BoundingDecomposition":
        return cls(tuple(["0"] * n_x), tuple(["0"] * n_x))


def _bounds_env(x_lower, x_upper, y):
    env = {f"xl{i + 1}": x_lower[i] for i in range(len(x_lower))}
    env.update({f"xu{i + 1}": x_upper[i] for i in range(len(x_upper))})
    if y is not None:
        env.update({f"y{j + 1}": y[j] for j in range(len(y))})
    return env


def eval_bounds(decomp: BoundingDecomposition, x_lower, x_upper, y=None, check: bool = True):
    """Return ``(f_lower(x_lower, x_upper), f_upper(x_lower, x_upper))``.

    ``check=False`` skips the ordering test, for estimators whose bounds may
    cross (a fault the monitor reports rather than refuses).
    """
    x_lower = np.asarray(x_lower, dtype=np.float64)
    x_upper = np.asarray(x_upper, dtype=np.float64)
    if check and np.any(x_lower > x_upper):
        raise ValueError("x_lower must not exceed x_upper")
    shape = x_lower.shape[1:]
    env = _bounds_env(x_lower, x_upper, y)
    return _vector_eval(decomp.f_lower, env, shape), _vector_eval(decomp.f_upper, env, shape)


@dataclass
class ValidationReport:
    passed: bool
    samples: int
    worst_margin: float
    assumption2_margin: float
    assumption3_margin: float
    counterexample: dict | None = None

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        text = (
            f"{verdict}: {self.samples} samples, worst margin {self.worst_margin:.6g} "
            f"(bracketing {self.assumption2_margin:.6g}, growth {self.assumption3_margin:.6g})"
        )
        if self.counterexample:
            text += f"\ncounterexample: {self.counterexample}"
        return text


def validate_decomposition(
    system: LipschitzSystem,
    decomp: BoundingDecomposition,
    sample_count: int = 10_000,
    seed: int = 0,
    scale: float = 10.0,
    center=None,
    tol: float = 1e-9,
) -> ValidationReport:
    """Monte Carlo check of the bracketing and growth conditions on ``f``.

    Boxes are drawn around centres uniform in ``center +- scale``; points are
    uniform inside each box, and every tenth box is degenerate.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    n = system.n_x
    rng = np.random.default_rng(seed)
    c0 = np.zeros(n) if center is None else np.asarray(center, dtype=np.float64)
    mid = c0[:, None] + rng.uniform(-scale, scale, size=(n, sample_count))
    half = rng.uniform(0.0, 0.5 * scale, size=(n, sample_count))
    half[:, ::10] = 0.0
    lo, hi = mid - half, mid + half
    x = lo + rng.uniform(size=(n, sample_count)) * (hi - lo)
    y = system.c_matrix @ x
    env = {f"x{i + 1}": x[i] for i in range(n)}
    env.update({f"y{j + 1}": y[j] for j in range(system.n_y)})
    fx = _vector_eval(system.f, env, (sample_count,))
    fl, fu = eval_bounds(decomp, lo, hi, y)
    slack = tol * (1.0 + np.abs(fx))
    m2 = np.minimum(fx - fl, fu - fx)
    grow_l = decomp.gamma_l1 * (x - lo) + decomp.gamma_l2 * (hi - x) + decomp.rho_lower[:, None]
    grow_u = decomp.gamma_u1 * (x - lo) + decomp.gamma_u2 * (hi - x) + decomp.rho_upper[:, None]
    m3 = np.minimum(grow_l - (fx - fl), grow_u - (fu - fx))
    bad = np.minimum(m2, m3) + slack < 0
    worst2, worst3 = float(m2.min()), float(m3.min())
    counter = None
    if np.any(bad):
        k = int(np.argmax(bad.any(axis=0)))
        counter = {
            "x_lower": lo[:, k].tolist(),
            "x": x[:, k].tolist(),
            "x_upper": hi[:, k].tolist(),
            "f": fx[:, k].tolist(),
            "f_lower": fl[:, k].tolist(),
            "f_upper": fu[:, k].tolist(),
        }
    return ValidationReport(counter is None, sample_count, min(worst2, worst3), worst2, worst3, counter)


@dataclass(frozen=True, eq=False)
class Scenario:
    u_signal: tuple
    u_lower: np.ndarray
    u_upper: np.ndarray
    x0: np.ndarray
    x0_lower: np.ndarray
    x0_upper: np.ndarray
    t_end: float
    dt: float

    def __post_init__(self):
        sig = tuple(e if isinstance(e, Expression) else Expression(str(e), ["t"]) for e in self.u_signal)
        object.__setattr__(self, "u_signal", sig)
        for name in ("u_lower", "u_upper", "x0", "x0_lower", "x0_upper"):
            v = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "dt", float(self.dt))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if not (len(sig) == self.u_lower.shape[0] == self.u_upper.shape[0]):
            raise ValueError("u, u_lower and u_upper must have the same length")
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("u_lower exceeds u_upper")
        if not (self.x0.shape == self.x0_lower.shape == self.x0_upper.shape):
            raise ValueError("x0 and its bounds must have the same length")
        if np.any(self.x0_lower > self.x0) or np.any(self.x0 > self.x0_upper):
            raise ValueError("x0 must lie inside [x0_lower, x0_upper]")
        if sig:
            grid = self.times
            u = np.stack([np.broadcast_to(np.asarray(e({"t": grid}), dtype=np.float64), grid.shape) for e in sig])
            bad = (u < self.u_lower[:, None] - 1e-12) | (u > self.u_upper[:, None] + 1e-12)
            if np.any(bad):
                i, k = np.argwhere(bad)[0]
                raise ValueError(f"input u{i + 1}(t={grid[k]:g}) = {u[i, k]:g} leaves its envelope")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def u_at(self, t: float) -> np.ndarray:
        env = {"t": t}
        return np.array([float(e(env)) for e in self.u_signal])

    def with_dt(self, dt: float) -> "Scenario":
        return Scenario(self.u_signal, self.u_lower, self.u_upper, self.x0, self.x0_lower, self.x0_upper, self.t_end, dt)


# -- fixtures -----------------------------------------------------------------

EXAMPLE1_A = [[-2.0, 1.0], [3.0, -5.0]]
EXAMPLE1_C = [[0.0, 1.0]]
EXAMPLE1_W1 = [
    [0.6266, 0.8433, 0.3241],
    [-0.2485, -1.5838, -0.5620],
    [0.5243, -1.4939, 1.1992],
    [-0.4300, -1.4659, 0.1102],
    [0.2629, 0.6789, -1.2695],
]
EXAMPLE1_B1 = [-1.0191, -1.3852, 0.9549, -0.6011, -1.1719]
EXAMPLE1_W2 = [
    [-0.4617, 0.6824, 0.2419, 0.0344, 0.4333],
    [-0.6691, 0.3819, 0.3326, -0.7591, -0.6569],
]
EXAMPLE1_B2 = [-1.0719, -1.0741]


def example1_network() -> NeuralNetwork:
    return NeuralNetwork.from_arrays(
        [EXAMPLE1_W1, EXAMPLE1_W2], [EXAMPLE1_B1, EXAMPLE1_B2], ["tanh", "purelin"]
    )


def fixture_example1():
    """Two-state linear plant driven by a 3-5-2 tanh/purelin network of ``(x, u)``."""
    system = LipschitzSystem(
        EXAMPLE1_A, EXAMPLE1_C, ("0", "0"), 0.0, example1_network(), InputMode.STATE_DRIVEN
    )
    decomp = BoundingDecomposition.zero(2).bind(system)
    scenario = Scenario(
        ("10*sin(5*t)",),
        [-10.0],
        [10.0],
        x0=[0.5, -0.5],
        x0_lower=[-1.0, -1.0],
        x0_upper=[1.0, 1.0],
        t_end=10.0,
        dt=1e-3,
    )
    return system, decomp, scenario


ACC_MU = 1e-4
ACC_GAINS = {"k_spacing": 0.05, "k_rel_speed": 0.3, "k_set_speed": 0.2}
ACC_T_GAP = 1.4
ACC_V_SET = 30.0

ACC_A = [
    [0, 1, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [0, 0, -2, 0, 0, 0],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, -2],
]
ACC_C = [
    [0, 0, 0, 0, 1, 0],
    [1, 0, 0, -1, 0, 0],
    [0, 1, 0, 0, -1, 0],
]
ACC_F = ("0", "0", "-0.0001*(y1+y3)^2", "0", "0", "-0.0001*y1^2")


def acc_controller(k_spacing=0.05, k_rel_speed=0.3, k_set_speed=0.2, t_gap=ACC_T_GAP) -> NeuralNetwork:
    """One tanh unit computing ``2 tanh(k1 (d_rel - t_gap v_e) + k2 v_rel + k3 (v_set - v_e))``.

    Inputs are ``(v_e, d_rel, v_rel, alpha_l, v_set, t_gap)``. The time gap
    multiplies a state, so its nominal value is folded into the ``v_e`` weight
    and the ``t_gap`` input itself carries zero weight.
    """
    hidden = [[-(k_spacing * t_gap + k_set_speed), k_spacing, k_rel_speed, 0.0, k_set_speed, 0.0]]
    return NeuralNetwork.from_arrays([hidden, [[2.0]]], [[0.0], [0.0]], ["tanh", "purelin"])


def fixture_acc():
    """Lead/ego car pair with the network controller acting on the ego car."""
    emb = np.zeros((6, 1))
    emb[5, 0] = 1.0
    b = np.zeros((6, 3))
    b[2, 0] = 2.0
    system = LipschitzSystem(
        ACC_A,
        ACC_C,
        ACC_F,
        0.0,
        acc_controller(**ACC_GAINS),
        InputMode.OUTPUT_DRIVEN,
        embedding=emb,
        b_matrix=b,
    )
    exact = tuple(e.text for e in system.f)
    decomp = BoundingDecomposition(exact, exact).bind(system)
    x0 = np.array([60.0, 25.0, 0.0, 10.0, 22.0, 0.0])
    scenario = Scenario(
        ("0.03125+0.6*sin(0.2*t)", str(ACC_V_SET), str(ACC_T_GAP)),
        [-3.0, ACC_V_SET, ACC_T_GAP],
        [2.0, ACC_V_SET, ACC_T_GAP],
        x0=x0,
        x0_lower=x0 - 1.0,
        x0_upper=x0 + 1.0,
        t_end=100.0,
        dt=1e-2,
    )
    return system, decomp, scenario


def system_from_parts(
    a, c, f: Sequence[str], beta: float, nn: NeuralNetwork, mode=STATE_DRIVEN, embedding=None, b=None
) -> LipschitzSystem:
    return LipschitzSystem(a, c, tuple(f), beta, nn, InputMode(mode), embedding, b)

"""Closed-loop simulation and streaming interval estimation.

Both the co-simulation and the streaming monitor hold the measurement ``y``
constant across each RK4 step, so replaying recorded measurements through
``monitor_step`` reproduces a simulated estimator trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .nn import interval_forward_raw
from .plant import BoundingDecomposition, LipschitzSystem, Scenario, eval_bounds, eval_dynamics
from .synthesis import DesignReport, Mode, StabilityCertificate

DEFAULT_TOL = 1e-6


class IntegrationFault(ArithmeticError):
    def __init__(self, t: float, what: str = "derivative"):
        self.t = t
        super().__init__(f"non-finite {what} at t={t:g}")


def rk4_step(fn: Callable[[float, np.ndarray], np.ndarray], state, t: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=np.float64)
    k1 = fn(t, state)
    k2 = fn(t + 0.5 * dt, state + 0.5 * dt * k1)
    k3 = fn(t + 0.5 * dt, state + 0.5 * dt * k2)
    k4 = fn(t + dt, state + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise IntegrationFault(t)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    x_lower: np.ndarray
    x_upper: np.ndarray
    t: float = 0.0

    @property
    def width(self) -> np.ndarray:
        return self.x_upper - self.x_lower


class EstimatorModel:
    """Right-hand side of the estimator pair for one system and design."""

    def __init__(self, system: LipschitzSystem, design: DesignReport, decomp: BoundingDecomposition, u_lower, u_upper):
        mode = design.mode
        if mode is Mode.STABLE_STATE_DRIVEN and not system.state_driven:
            raise ValueError("state-driven design applied to an output-driven system")
        if mode is Mode.STABLE_OUTPUT_DRIVEN and system.state_driven:
            raise ValueError("output-driven design applied to a state-driven system")
        n_x, n_y = system.n_x, system.n_y
        if design.gains.l_lower.shape != (n_x, n_y) or design.gains.l_upper.shape != (n_x, n_y):
            raise ValueError(f"design gains do not match a system with n_x={n_x}, n_y={n_y}")
        if design.aux_pair.input_dim != system.effective_network.input_dim or \
                design.aux_pair.output_dim != n_x:
            raise ValueError("design networks do not match the system's network")
        self.system = system
        self.decomp = decomp
        self.pair = design.aux_pair
        self.a = system.a_matrix
        self.c = system.c_matrix
        self.l_lower = design.gains.l_lower
        self.l_upper = design.gains.l_upper
        self.u_lower = np.asarray(u_lower, dtype=np.float64).reshape(-1)
        self.u_upper = np.asarray(u_upper, dtype=np.float64).reshape(-1)
        if self.u_lower.shape != (system.n_u,) or self.u_upper.shape != (system.n_u,):
            raise ValueError(f"input envelope must have {system.n_u} entries")
        b = system.b_matrix
        b_pos, b_neg = np.maximum(b, 0.0), np.minimum(b, 0.0)
        # direct input channel bracketed by the envelope
        self.bu_lower = b_pos @ self.u_lower + b_neg @ self.u_upper
        self.bu_upper = b_pos @ self.u_upper + b_neg @ self.u_lower
        self.n_x = n_x

    def nn_bounds(self, x_lower, x_upper, y):
        if self.system.state_driven:
            lo = np.concatenate([x_lower, self.u_lower])
            hi = np.concatenate([x_upper, self.u_upper])
        else:
            lo = np.concatenate([y, self.u_lower])
            hi = np.concatenate([y, self.u_upper])
        return interval_forward_raw(self.pair, lo, hi)

    def derivative(self, z: np.ndarray, y: np.ndarray) -> np.ndarray:
        n = self.n_x
        xl, xu = z[:n], z[n:]
        fl, fu = eval_bounds(self.decomp, xl, xu, y, check=False)
        pl, pu = self.nn_bounds(xl, xu, y)
        dl = self.a @ xl + fl + pl + self.bu_lower + self.l_lower @ (y - self.c @ xl)
        du = self.a @ xu + fu + pu + self.bu_upper + self.l_upper @ (y - self.c @ xu)
        return np.concatenate([dl, du])

    def step(self, est: EstimatorState, y, dt: float) -> EstimatorState:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(y)):
            raise IntegrationFault(est.t, "measurement")
        z = np.concatenate([est.x_lower, est.x_upper])
        z = rk4_step(lambda t, s: self.derivative(s, y), z, est.t, dt)
        return EstimatorState(z[: self.n_x], z[self.n_x:], est.t + dt)


def monitor_step(
    system: LipschitzSystem,
    design: DesignReport,
    decomp: BoundingDecomposition,
    est: EstimatorState,
    y,
    dt: float,
    u_lower=None,
    u_upper=None,
) -> EstimatorState:
    """Advance the estimator one step from an external measurement.

    The input envelope defaults to the one recorded in the design diagnostics.
    Build an :class:`EstimatorModel` once when stepping in a loop.
    """
    if u_lower is None or u_upper is None:
        ci = design.diagnostics["certificate_inputs"]
        u_lower, u_upper = ci["u_lower"], ci["u_upper"]
    return EstimatorModel(system, design, decomp, u_lower, u_upper).step(est, y, dt)


@dataclass(frozen=True, eq=False)
class Trace:
    times: np.ndarray
    x: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    y: np.ndarray
    u: np.ndarray

    def __len__(self):
        return self.times.shape[0]

    @property
    def e_lower(self) -> np.ndarray:
        return self.x - self.x_lower

    @property
    def e_upper(self) -> np.ndarray:
        return self.x_upper - self.x

    @property
    def width(self) -> np.ndarray:
        return self.x_upper - self.x_lower


def simulate_closed_loop(
    system: LipschitzSystem,
    design: DesignReport,
    decomp: BoundingDecomposition,
    scenario: Scenario,
) -> Trace:
    """Co-integrate plant and estimator on the scenario grid."""
    if scenario.x0.shape != (system.n_x,):
        raise ValueError(f"scenario x0 has {scenario.x0.shape[0]} entries, system has {system.n_x} states")
    model = EstimatorModel(system, design, decomp, scenario.u_lower, scenario.u_upper)
    times = scenario.times
    n = times.shape[0]
    xs = np.empty((n, system.n_x))
    xls = np.empty_like(xs)
    xus = np.empty_like(xs)
    ys = np.empty((n, system.n_y))
    us = np.empty((n, system.n_u))

    def plant(t, x):
        return eval_dynamics(system, x, scenario.u_at(t), t)

    x = scenario.x0.copy()
    est = EstimatorState(scenario.x0_lower.copy(), scenario.x0_upper.copy(), 0.0)
    for k in range(n):
        t = times[k]
        y = system.output(x)
        xs[k], xls[k], xus[k], ys[k], us[k] = x, est.x_lower, est.x_upper, y, scenario.u_at(t)
        if k + 1 == n:
            break
        dt = times[k + 1] - t
        x = rk4_step(plant, x, t, dt)
        est = model.step(EstimatorState(est.x_lower, est.x_upper, t), y, dt)
    return Trace(times, xs, xls, xus, ys, us)


def replay_measurements(
    system: LipschitzSystem,
    design: DesignReport,
    decomp: BoundingDecomposition,
    times,
    ys,
    x0_lower,
    x0_upper,
    u_lower,
    u_upper,
):
    """Run the monitor over recorded ``(t, y)`` samples; returns ``(x_lower, x_upper)`` arrays."""
    times = np.asarray(times, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    model = EstimatorModel(system, design, decomp, u_lower, u_upper)
    lo = np.empty((times.shape[0], system.n_x))
    hi = np.empty_like(lo)
    est = EstimatorState(np.asarray(x0_lower, dtype=np.float64), np.asarray(x0_upper, dtype=np.float64), times[0])
    for k in range(times.shape[0]):
        lo[k], hi[k] = est.x_lower, est.x_upper
        if k + 1 < times.shape[0]:
            est = model.step(EstimatorState(est.x_lower, est.x_upper, times[k]), ys[k], times[k + 1] - times[k])
    return lo, hi


# -- checks --------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    t: float
    index: int
    side: str
    magnitude: float


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...]
    worst: float
    tol: float

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self, limit: int = 10) -> str:
        if self.passed:
            return f"bracketing holds at tol {self.tol:g}"
        lines = [f"{len(self.violations)} bracketing violation(s), worst {self.worst:.3e}"]
        for v in self.violations[:limit]:
            lines.append(f"  t={v.t:g} x{v.index + 1} below {v.side} bound by {v.magnitude:.3e}"
                         if v.side == "lower" else
                         f"  t={v.t:g} x{v.index + 1} above {v.side} bound by {v.magnitude:.3e}")
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


def check_bracketing(trace: Trace, tol: float = DEFAULT_TOL) -> ViolationReport:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    found = []
    worst = 0.0
    for side, gap in (("lower", -trace.e_lower), ("upper", -trace.e_upper)):
        # gap > 0 means the state left the interval on this side
        worst = max(worst, float(np.max(gap, initial=0.0)))
        for k, i in np.argwhere(gap > tol):
            found.append(Violation(float(trace.times[k]), int(i), side, float(gap[k, i])))
    found.sort(key=lambda v: (v.t, v.index, v.side))
    return ViolationReport(tuple(found), worst, tol)


@dataclass(frozen=True, eq=False)
class ErrorMetrics:
    xi_norm: np.ndarray
    envelope: np.ndarray
    max_width: float
    final_width: float
    envelope_ok: bool
    worst_excess: float

    @property
    def first_failure(self) -> int | None:
        bad = np.nonzero(self.xi_norm > self.envelope + DEFAULT_TOL)[0]
        return int(bad[0]) if bad.size else None


def error_metrics(trace: Trace, cert: StabilityCertificate, tol: float = DEFAULT_TOL) -> ErrorMetrics:
    """``||xi||_1`` per step against ``C exp(-lambda t) ||xi_0||_1 + r``."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    xi = np.abs(trace.e_lower).sum(axis=1) + np.abs(trace.e_upper).sum(axis=1)
    env = cert.envelope(trace.times - trace.times[0], xi[0])
    excess = xi - env
    width = trace.width
    return ErrorMetrics(
        xi, env, float(np.max(width)), float(np.max(width[-1])),
        bool(np.all(excess <= tol)), float(np.max(excess)),
    )


def width_profile(trace: Trace, transient: float = 0.2) -> dict:
    """Max, final and post-transient median of the widest interval per step."""
    w = np.max(trace.width, axis=1)
    start = int(transient * (len(w) - 1))
    return {
        "max_width": float(np.max(w)),
        "final_width": float(w[-1]),
        "median_width": float(np.median(w[start:])),
        "finite": bool(np.all(np.isfinite(w))),
    }


# -- CSV -----------------------------------------------------------------------

def _header(n_x, n_y, n_u):
    return (["t"] + [f"x{i + 1}" for i in range(n_x)] + [f"xl{i + 1}" for i in range(n_x)]
            + [f"xu{i + 1}" for i in range(n_x)] + [f"y{j + 1}" for j in range(n_y)]
            + [f"u{k + 1}" for k in range(n_u)])


def write_trace_csv(trace: Trace, path) -> None:
    n_x, n_y, n_u = trace.x.shape[1], trace.y.shape[1], trace.u.shape[1]
    data = np.hstack([trace.times[:, None], trace.x, trace.x_lower, trace.x_upper, trace.y, trace.u])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_header(n_x, n_y, n_u))
        for row in data:
            w.writerow([repr(float(v)) for v in row])


def _read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    head = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric entry") from exc
    if data.size and data.shape[1] != len(head):
        raise ValueError(f"{path}: rows do not match the {len(head)}-column header")
    return head, data.reshape(-1, len(head))


def _group(head, data, prefix):
    cols = []
    i = 1
    while f"{prefix}{i}" in head:
        cols.append(head.index(f"{prefix}{i}"))
        i += 1
    return data[:, cols]


def read_trace_csv(path) -> Trace:
    head, data = _read_columns(path)
    if "t" not in head:
        raise ValueError(f"{Path(path)}: missing t column")
    return Trace(data[:, head.index("t")], _group(head, data, "x"), _group(head, data, "xl"),
                 _group(head, data, "xu"), _group(head, data, "y"), _group(head, data, "u"))


def read_measurements(path, n_y: int):
    """Return ``(t, y)`` from a CSV with at least ``t, y1..ym`` columns."""
    head, data = _read_columns(path)
    missing = [c for c in ["t"] + [f"y{j + 1}" for j in range(n_y)] if c not in head]
    if missing:
        raise ValueError(f"{Path(path)}: missing column(s) {', '.join(missing)}")
    return data[:, head.index("t")], _group(head, data, "y")[:, :n_y]

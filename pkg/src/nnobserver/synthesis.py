"""Observer-gain synthesis and stability certificates.

The estimator pair runs ``A xhat + f_bound + Phi_bound + B_bound u + L (y - C xhat)``.
Gains come from linear programs:

* ``metzler_only``: ``A - L C`` Metzler for both gains (positivity only);
* ``stable_state_driven``: a diagonal ``X > 0`` and ``Y = X L`` making
  ``X A - Y C`` Metzler and the co-positive function ``v' e`` (``v = X 1``)
  strictly decreasing, with the network's gap bound ``U`` on the state part;
* ``stable_output_driven``: the same with ``U = 0``, because the network only
  sees measured outputs.

The bound on the auxiliary networks' output gap comes from a chain of
nonnegative matrices ``S_l`` (``S_L = I``) with
``alpha (S_lo_l W_pos_l - S_up_l W_neg_l) <= S_lo_{l-1}`` and its upper twin.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .nn import AuxiliaryPair, NeuralNetwork, lipschitz_bound, make_auxiliary_pair, network_to_dict
from .plant import BoundingDecomposition, LipschitzSystem

DEFAULT_CHAIN_EPSILON = 1e-9


class Mode(str, enum.Enum):
    METZLER_ONLY = "metzler_only"
    STABLE_STATE_DRIVEN = "stable_state_driven"
    STABLE_OUTPUT_DRIVEN = "stable_output_driven"


class SynthesisInfeasible(RuntimeError):
    """No gains satisfy the requested conditions."""

    def __init__(self, variant: str, block: str, step: int = 4, outcome: lp.LpOutcome | None = None):
        self.variant = variant
        self.block = block
        self.step = step
        self.outcome = outcome
        super().__init__(f"step {step}: {variant} gain LP infeasible; first failing block: {block}")


class CertificateError(ValueError):
    pass


def is_metzler(m, tol: float = 0.0) -> bool:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"Metzler test needs a square matrix, got shape {m.shape}")
    off = m[~np.eye(m.shape[0], dtype=bool)]
    return bool(np.all(off >= -tol))


# -- S-matrix chain ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SMatrixChain:
    s_lower: tuple[np.ndarray, ...]  # index l = 0..L
    s_upper: tuple[np.ndarray, ...]
    n_lead: int

    @property
    def u_lower(self) -> np.ndarray:
        return self.s_lower[0][:, : self.n_lead]

    @property
    def u_upper(self) -> np.ndarray:
        return self.s_upper[0][:, : self.n_lead]

    @property
    def v_lower(self) -> np.ndarray:
        return self.s_lower[0][:, self.n_lead:]

    @property
    def v_upper(self) -> np.ndarray:
        return self.s_upper[0][:, self.n_lead:]


def chain_violation(chain: SMatrixChain, pair: AuxiliaryPair, alpha: float) -> float:
    """Largest breach of nonnegativity, identity seeds or the chain inequality."""
    worst = 0.0
    n_out = pair.output_dim
    L = len(pair.split_layers)
    for s in chain.s_lower + chain.s_upper:
        worst = max(worst, float(np.max(-s, initial=0.0)))
    worst = max(worst, float(np.max(np.abs(chain.s_lower[L] - np.eye(n_out)))))
    worst = max(worst, float(np.max(np.abs(chain.s_upper[L] - np.eye(n_out)))))
    for ell in range(1, L + 1):
        sp = pair.split_layers[ell - 1]
        lo = alpha * (chain.s_lower[ell] @ sp.w_upper - chain.s_upper[ell] @ sp.w_lower)
        hi = alpha * (chain.s_upper[ell] @ sp.w_upper - chain.s_lower[ell] @ sp.w_lower)
        worst = max(worst, float(np.max(lo - chain.s_lower[ell - 1])), float(np.max(hi - chain.s_upper[ell - 1])))
    return worst


def _checked(chain: SMatrixChain, pair: AuxiliaryPair, alpha: float, tol: float = 1e-8) -> SMatrixChain:
    bad = chain_violation(chain, pair, alpha)
    if bad > tol:
        raise AssertionError(f"S-matrix chain breaks its defining inequalities by {bad:.3e}")
    return chain


def recursive_s_chain(
    pair: AuxiliaryPair, alpha: float, epsilon: float = DEFAULT_CHAIN_EPSILON, n_lead: int | None = None
) -> SMatrixChain:
    if alpha <= 0 or epsilon <= 0:
        raise ValueError("alpha and epsilon must be positive")
    n_out = pair.output_dim
    L = len(pair.split_layers)
    s_lo = [None] * (L + 1)
    s_hi = [None] * (L + 1)
    s_lo[L] = np.eye(n_out)
    s_hi[L] = np.eye(n_out)
    for ell in range(L, 0, -1):
        sp = pair.split_layers[ell - 1]
        pad = epsilon * np.ones((n_out, sp.w_lower.shape[1]))
        s_lo[ell - 1] = alpha * (s_lo[ell] @ sp.w_upper - s_hi[ell] @ sp.w_lower) + pad
        s_hi[ell - 1] = alpha * (s_hi[ell] @ sp.w_upper - s_lo[ell] @ sp.w_lower) + pad
    chain = SMatrixChain(tuple(s_lo), tuple(s_hi), pair.input_dim if n_lead is None else n_lead)
    return _checked(chain, pair, alpha)


def synthesize_s_chain_lp(pair: AuxiliaryPair, alpha: float, n_lead: int | None = None) -> SMatrixChain:
    """Entrywise-minimal chain: minimise the sum of all entries of both ``S_0``.

    Rows of the chain never interact, so one LP is solved per output row.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    layers = pair.split_layers
    L = len(layers)
    n_out = pair.output_dim
    widths = [layers[0].w_lower.shape[1]] + [sp.w_lower.shape[0] for sp in layers]
    offsets = {}
    pos = 0
    for ell in range(L):
        offsets[ell] = pos
        pos += 2 * widths[ell]
    n_vars = pos

    def lo_idx(ell, j):
        return offsets[ell] + j

    def hi_idx(ell, j):
        return offsets[ell] + widths[ell] + j

    s_lo = [np.zeros((n_out, widths[ell])) for ell in range(L)] + [np.eye(n_out)]
    s_hi = [np.zeros((n_out, widths[ell])) for ell in range(L)] + [np.eye(n_out)]
    for i in range(n_out):
        cons = []
        for ell in range(1, L + 1):
            sp = layers[ell - 1]
            for j in range(widths[ell - 1]):
                row_lo = np.zeros(n_vars)
                row_hi = np.zeros(n_vars)
                rhs_lo = rhs_hi = 0.0
                if ell == L:
                    rhs_lo = -alpha * (sp.w_upper[i, j] - sp.w_lower[i, j])
                    rhs_hi = rhs_lo
                else:
                    for k in range(widths[ell]):
                        row_lo[lo_idx(ell, k)] += alpha * sp.w_upper[k, j]
                        row_lo[hi_idx(ell, k)] -= alpha * sp.w_lower[k, j]
                        row_hi[hi_idx(ell, k)] += alpha * sp.w_upper[k, j]
                        row_hi[lo_idx(ell, k)] -= alpha * sp.w_lower[k, j]
                row_lo[lo_idx(ell - 1, j)] -= 1.0
                row_hi[hi_idx(ell - 1, j)] -= 1.0
                cons.append(lp.le(row_lo, rhs_lo, f"chain_lower[{ell}]"))
                cons.append(lp.le(row_hi, rhs_hi, f"chain_upper[{ell}]"))
        obj = np.zeros(n_vars)
        obj[offsets[0]: offsets[0] + 2 * widths[0]] = 1.0
        out = lp.solve(lp.LpProblem(n_vars, obj, cons, free_vars=frozenset()))
        if out.status is not lp.LpStatus.OPTIMAL:
            raise AssertionError(f"S-chain LP returned {out.status.value} for output row {i}; encoding bug")
        for ell in range(L):
            s_lo[ell][i] = out.point[offsets[ell]: offsets[ell] + widths[ell]]
            s_hi[ell][i] = out.point[offsets[ell] + widths[ell]: offsets[ell] + 2 * widths[ell]]
    chain = SMatrixChain(tuple(s_lo), tuple(s_hi), pair.input_dim if n_lead is None else n_lead)
    return _checked(chain, pair, alpha)


# -- gains ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GainDesign:
    l_lower: np.ndarray
    l_upper: np.ndarray
    x_diag: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    a: float
    mode: Mode

    @property
    def v(self) -> np.ndarray:
        return np.diag(self.x_diag).copy()

    @classmethod
    def from_xy(cls, v, y_lower, y_upper, a, mode) -> "GainDesign":
        v = np.asarray(v, dtype=np.float64)
        return cls(y_lower / v[:, None], y_upper / v[:, None], np.diag(v), y_lower, y_upper, float(a), Mode(mode))


@dataclass(frozen=True)
class StabilityCertificate:
    lam: float
    big_c: float
    radius_r: float
    theta: float
    v: tuple[float, ...]

    def envelope(self, t, xi0_norm):
        return self.big_c * np.exp(-self.lam * np.asarray(t)) * xi0_norm + self.radius_r


class _Layout:
    def __init__(self):
        self.size = 0
        self.slices = {}

    def add(self, name, *shape):
        n = int(np.prod(shape)) if shape else 1
        self.slices[name] = (self.size, shape)
        self.size += n

    def index(self, name, *idx):
        start, shape = self.slices[name]
        return start + (int(np.ravel_multi_index(idx, shape)) if shape else 0)

    def get(self, point, name):
        start, shape = self.slices[name]
        n = int(np.prod(shape)) if shape else 1
        vals = point[start: start + n]
        return vals.reshape(shape) if shape else float(vals[0])


def _metzler_lp(a_mat, c_mat):
    n_x, n_y = a_mat.shape[0], c_mat.shape[0]
    lay = _Layout()
    lay.add("a")
    lay.add("L_lower", n_x, n_y)
    lay.add("L_upper", n_x, n_y)
    blocks = []
    for side in ("lower", "upper"):
        name = f"L_{side}"
        cons = []
        for i in range(n_x):
            for j in range(n_x):
                row = np.zeros(lay.size)
                for k in range(n_y):
                    row[lay.index(name, i, k)] -= c_mat[k, j]
                if i == j:
                    row[lay.index("a")] -= 1.0
                cons.append(lp.ge(row, -a_mat[i, j], f"metzler_{side}"))
        blocks.append((f"metzler_{side}", cons))
    return lay, blocks


def _stable_lp(a_mat, c_mat, gamma_lower, gamma_upper, u_lower, u_upper):
    n_x, n_y = a_mat.shape[0], c_mat.shape[0]
    lay = _Layout()
    lay.add("v", n_x)
    lay.add("Y_lower", n_x, n_y)
    lay.add("Y_upper", n_x, n_y)
    lay.add("a")
    pos = []
    for i in range(n_x):
        row = np.zeros(lay.size)
        row[lay.index("v", i)] = 1.0
        pos.append(lp.LinearConstraint(row, "gt", 0.0, "positivity"))
    blocks = [("positivity", pos)]
    for side in ("lower", "upper"):
        name = f"Y_{side}"
        cons = []
        for i in range(n_x):
            for j in range(n_x):
                # (X A - Y C)_ij = v_i A_ij - sum_k Y_ik C_kj, minus a on the diagonal
                row = np.zeros(lay.size)
                row[lay.index("v", i)] += a_mat[i, j]
                for k in range(n_y):
                    row[lay.index(name, i, k)] -= c_mat[k, j]
                if i == j:
                    row[lay.index("a")] -= 1.0
                cons.append(lp.LinearConstraint(row, "gt", 0.0, f"metzler_{side}"))
        blocks.append((f"metzler_{side}", cons))
    for side, gamma, u_mat in (("lower", gamma_lower, u_lower), ("upper", gamma_upper, u_upper)):
        name = f"Y_{side}"
        cons = []
        for j in range(n_x):
            # (A' v - C' Y' 1 + gamma v + U' v)_j < 0
            row = np.zeros(lay.size)
            for i in range(n_x):
                row[lay.index("v", i)] += a_mat[i, j] + u_mat[i, j]
                for k in range(n_y):
                    row[lay.index(name, i, k)] -= c_mat[k, j]
            row[lay.index("v", j)] += gamma
            cons.append(lp.LinearConstraint(row, "lt", 0.0, f"decay_{side}"))
        blocks.append((f"decay_{side}", cons))
    return lay, blocks


def _solve_blocks(lay, blocks, variant, margin, log=None):
    cons = [c for _, block in blocks for c in block]
    out = lp.feasible_point(cons, margin, num_vars=lay.size, log=log)
    if out.status is lp.LpStatus.INFEASIBLE:
        # report the first block whose addition breaks feasibility
        prefix = []
        failing = blocks[-1][0]
        for name, block in blocks:
            prefix = prefix + block
            if lp.feasible_point(prefix, margin, num_vars=lay.size).status is lp.LpStatus.INFEASIBLE:
                failing = name
                break
        raise SynthesisInfeasible(variant, failing, outcome=out)
    return out


def _as_mats(a_matrix, c_matrix):
    a_mat = np.array(a_matrix, dtype=np.float64, ndmin=2)
    c_mat = np.array(c_matrix, dtype=np.float64, ndmin=2)
    if a_mat.shape[0] != a_mat.shape[1] or c_mat.shape[1] != a_mat.shape[0]:
        raise ValueError(f"inconsistent shapes A {a_mat.shape}, C {c_mat.shape}")
    return a_mat, c_mat


def synthesize_gains_metzler(a_matrix, c_matrix, log=None) -> GainDesign:
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    lay, blocks = _metzler_lp(a_mat, c_mat)
    out = _solve_blocks(lay, blocks, Mode.METZLER_ONLY.value, lp.STRICT_MARGIN, log)
    l_lo = lay.get(out.point, "L_lower")
    l_hi = lay.get(out.point, "L_upper")
    n_x = a_mat.shape[0]
    return GainDesign(l_lo, l_hi, np.eye(n_x), l_lo.copy(), l_hi.copy(), lay.get(out.point, "a"), Mode.METZLER_ONLY)


def _stable(a_mat, c_mat, gamma_lower, gamma_upper, u_lo, u_hi, mode, margin, log):
    if gamma_lower < 0 or gamma_upper < 0:
        raise ValueError("gamma values must be nonnegative")
    lay, blocks = _stable_lp(a_mat, c_mat, gamma_lower, gamma_upper, u_lo, u_hi)
    out = _solve_blocks(lay, blocks, mode.value, margin, log)
    return GainDesign.from_xy(
        lay.get(out.point, "v"), lay.get(out.point, "Y_lower"), lay.get(out.point, "Y_upper"), lay.get(out.point, "a"), mode
    )


def synthesize_gains_stable(
    a_matrix,
    c_matrix,
    gamma_lower: float,
    gamma_upper: float,
    chain: SMatrixChain,
    strict_margin: float = lp.STRICT_MARGIN,
    rho_lower=None,
    rho_upper=None,
    u_lower=None,
    u_upper=None,
    b_matrix=None,
    log=None,
) -> tuple[GainDesign, StabilityCertificate]:
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    design = _stable(
        a_mat, c_mat, gamma_lower, gamma_upper, chain.u_lower, chain.u_upper, Mode.STABLE_STATE_DRIVEN, strict_margin, log
    )
    cert = compute_certificate(
        design, a_mat, c_mat, gamma_lower, gamma_upper, chain, rho_lower, rho_upper, u_lower, u_upper, b_matrix=b_matrix
    )
    return design, cert


def synthesize_gains_output_driven(
    a_matrix,
    c_matrix,
    gamma_lower: float,
    gamma_upper: float,
    strict_margin: float = lp.STRICT_MARGIN,
    rho_lower=None,
    rho_upper=None,
    u_lower=None,
    u_upper=None,
    coupling=None,
    b_matrix=None,
    log=None,
) -> tuple[GainDesign, StabilityCertificate]:
    """Gain design independent of the network: the gap term ``U`` vanishes."""
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    zero = np.zeros_like(a_mat)
    design = _stable(a_mat, c_mat, gamma_lower, gamma_upper, zero, zero, Mode.STABLE_OUTPUT_DRIVEN, strict_margin, log)
    cert = compute_certificate(
        design, a_mat, c_mat, gamma_lower, gamma_upper, None, rho_lower, rho_upper, u_lower, u_upper,
        coupling=coupling, b_matrix=b_matrix,
    )
    return design, cert


def decay_rows(design: GainDesign, a_matrix, c_matrix, gamma_lower, gamma_upper, u_lower=None, u_upper=None):
    """Left-hand sides of the two decay conditions, one entry per state."""
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    v = design.v
    zero = np.zeros_like(a_mat)
    u_lower = zero if u_lower is None else u_lower
    u_upper = zero if u_upper is None else u_upper
    lower = a_mat.T @ v - c_mat.T @ design.y_lower.sum(axis=0) + gamma_lower * v + u_lower.T @ v
    upper = a_mat.T @ v - c_mat.T @ design.y_upper.sum(axis=0) + gamma_upper * v + u_upper.T @ v
    return lower, upper


def compute_certificate(
    design: GainDesign,
    a_matrix,
    c_matrix,
    gamma_lower: float,
    gamma_upper: float,
    chain: SMatrixChain | None = None,
    rho_lower=None,
    rho_upper=None,
    u_lower=None,
    u_upper=None,
    *,
    coupling=None,
    b_matrix=None,
) -> StabilityCertificate:
    """Decay rate, overshoot and ultimate radius of ``||xi||_1``.

    ``coupling`` is the ``(V_lower, V_upper)`` input part of ``S_0``; taken
    from ``chain`` when omitted. ``b_matrix`` adds the direct input channel's
    width ``|B| (u_upper - u_lower)`` to the ultimate bound.
    """
    if design.mode is Mode.METZLER_ONLY:
        raise CertificateError("positivity-only designs carry no certificate")
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    n_x = a_mat.shape[0]
    v = design.v
    if design.mode is Mode.STABLE_STATE_DRIVEN:
        if chain is None:
            raise CertificateError("state-driven designs need the S-matrix chain")
        u_lo, u_hi = chain.u_lower, chain.u_upper
    else:
        u_lo = u_hi = None
    row_lo, row_hi = decay_rows(design, a_mat, c_mat, gamma_lower, gamma_upper, u_lo, u_hi)
    lam = float(min(np.min(-row_lo / v), np.min(-row_hi / v)))
    if not lam > 0:
        raise CertificateError(f"decay rate {lam:.3e} is not positive; the design misses the strict decay condition")
    if coupling is None and chain is not None:
        coupling = (chain.v_lower, chain.v_upper)
    rho_l = np.zeros(n_x) if rho_lower is None else np.asarray(rho_lower, dtype=np.float64)
    rho_u = np.zeros(n_x) if rho_upper is None else np.asarray(rho_upper, dtype=np.float64)
    theta = float((rho_l + rho_u) @ v)
    if u_lower is not None and u_upper is not None:
        du = np.asarray(u_upper, dtype=np.float64) - np.asarray(u_lower, dtype=np.float64)
        if np.any(du < 0):
            raise ValueError("u_lower exceeds u_upper")
        if coupling is not None:
            theta += float(du @ ((coupling[0] + coupling[1]).T @ v))
        if b_matrix is not None:
            theta += float(du @ (np.abs(np.asarray(b_matrix, dtype=np.float64)).T @ v))
    v_min, v_max = float(v.min()), float(v.max())
    return StabilityCertificate(lam, v_max / v_min, theta / (lam * v_min), theta, tuple(float(x) for x in v))


def verify_design(
    design: GainDesign,
    a_matrix,
    c_matrix,
    gamma_lower: float = 0.0,
    gamma_upper: float = 0.0,
    u_lower=None,
    u_upper=None,
) -> dict[str, float]:
    """Smallest slack of each constraint block, recomputed from the gains.

    Positive values mean the block holds strictly with that margin.
    """
    a_mat, c_mat = _as_mats(a_matrix, c_matrix)
    n_x = a_mat.shape[0]
    off = ~np.eye(n_x, dtype=bool)
    out = {}
    if design.mode is Mode.METZLER_ONLY:
        for side, gain in (("lower", design.l_lower), ("upper", design.l_upper)):
            m = a_mat - gain @ c_mat
            out[f"metzler_{side}"] = float(min(np.min(m[off], initial=np.inf), np.min(np.diag(m) - design.a)))
        return out
    v = design.v
    out["positivity"] = float(v.min())
    for side, y in (("lower", design.y_lower), ("upper", design.y_upper)):
        m = np.diag(v) @ a_mat - y @ c_mat
        out[f"metzler_{side}"] = float(min(np.min(m[off], initial=np.inf), np.min(np.diag(m) - design.a)))
    if design.mode is Mode.STABLE_OUTPUT_DRIVEN:
        u_lower = u_upper = None
    row_lo, row_hi = decay_rows(design, a_mat, c_mat, gamma_lower, gamma_upper, u_lower, u_upper)
    out["decay_lower"] = float(np.min(-row_lo))
    out["decay_upper"] = float(np.min(-row_hi))
    return out


# -- pipeline ------------------------------------------------------------------

@dataclass(eq=False)
class DesignReport:
    gains: GainDesign
    chain: SMatrixChain | None
    certificate: StabilityCertificate | None
    aux_pair: AuxiliaryPair
    coupling: tuple[np.ndarray, np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def mode(self) -> Mode:
        return self.gains.mode


def default_mode(system: LipschitzSystem) -> Mode:
    return Mode.STABLE_STATE_DRIVEN if system.state_driven else Mode.STABLE_OUTPUT_DRIVEN


def design_pipeline(
    system: LipschitzSystem,
    decomp: BoundingDecomposition,
    u_lower,
    u_upper,
    mode: Mode | str | None = None,
    strict_margin: float = lp.STRICT_MARGIN,
    log: list[str] | None = None,
) -> DesignReport:
    """Auxiliary networks, S-chain, ``U``/``V`` split, gain LP, certificate."""
    mode = default_mode(system) if mode is None else Mode(mode)
    u_lower = np.asarray(u_lower, dtype=np.float64).reshape(-1)
    u_upper = np.asarray(u_upper, dtype=np.float64).reshape(-1)
    if u_lower.shape != (system.n_u,) or u_upper.shape != (system.n_u,):
        lead = "n_x" if system.state_driven else "n_y"
        raise ValueError(
            f"network input width {system.nn.input_dim} must equal {lead} + n_u; "
            f"input envelope has {u_lower.shape[0]} entries, expected {system.n_u}"
        )
    if mode is Mode.STABLE_STATE_DRIVEN and not system.state_driven:
        raise ValueError("state-driven synthesis needs a state-driven system")
    if mode is Mode.STABLE_OUTPUT_DRIVEN and system.state_driven:
        raise ValueError("output-driven synthesis needs an output-driven system")

    steps = []
    net: NeuralNetwork = system.effective_network
    pair = make_auxiliary_pair(net)
    alpha = lipschitz_bound(net)
    steps.append({"step": 1, "name": "auxiliary networks", "status": "ok", "layers": net.depth})
    n_lead = system.n_x if system.state_driven else system.n_y
    chain = None
    coupling = None
    if mode is Mode.STABLE_STATE_DRIVEN:
        chain = synthesize_s_chain_lp(pair, alpha, n_lead=n_lead)
        steps.append({"step": 2, "name": "S-chain LP", "status": "optimal",
                      "objective": float(chain.s_lower[0].sum() + chain.s_upper[0].sum())})
        coupling = (chain.v_lower, chain.v_upper)
        steps.append({"step": 3, "name": "U/V split", "status": "ok"})
    elif mode is Mode.STABLE_OUTPUT_DRIVEN:
        steps.append({"step": 2, "name": "S-chain LP", "status": "skipped"})
        rec = recursive_s_chain(pair, alpha, n_lead=n_lead)
        coupling = (rec.v_lower, rec.v_upper)
        steps.append({"step": 3, "name": "V from recursive chain", "status": "ok"})

    g_lo, g_hi = decomp.gamma_lower, decomp.gamma_upper
    try:
        if mode is Mode.METZLER_ONLY:
            gains = synthesize_gains_metzler(system.a_matrix, system.c_matrix, log=log)
            cert = None
        elif mode is Mode.STABLE_STATE_DRIVEN:
            gains, cert = synthesize_gains_stable(
                system.a_matrix, system.c_matrix, g_lo, g_hi, chain, strict_margin,
                decomp.rho_lower, decomp.rho_upper, u_lower, u_upper, system.b_matrix, log=log,
            )
        else:
            gains, cert = synthesize_gains_output_driven(
                system.a_matrix, system.c_matrix, g_lo, g_hi, strict_margin,
                decomp.rho_lower, decomp.rho_upper, u_lower, u_upper, coupling, system.b_matrix, log=log,
            )
    except SynthesisInfeasible as exc:
        exc.step = 4
        raise
    steps.append({"step": 4, "name": f"{mode.value} gain LP", "status": "feasible"})
    steps.append({"step": 5, "name": "gains and certificate", "status": "ok"})
    u_part = (chain.u_lower, chain.u_upper) if chain is not None else (None, None)
    margins = verify_design(gains, system.a_matrix, system.c_matrix, g_lo, g_hi, *u_part)
    diagnostics = {
        "steps": steps,
        "strict_margin": strict_margin,
        "alpha": alpha,
        "block_margins": margins,
        "certificate_inputs": {
            "gamma_lower": g_lo,
            "gamma_upper": g_hi,
            "rho_lower": decomp.rho_lower.tolist(),
            "rho_upper": decomp.rho_upper.tolist(),
            "u_lower": u_lower.tolist(),
            "u_upper": u_upper.tolist(),
        },
    }
    return DesignReport(gains, chain, cert, pair, coupling, diagnostics)


def recompute_certificate(report: DesignReport, system: LipschitzSystem) -> StabilityCertificate:
    ci = report.diagnostics["certificate_inputs"]
    return compute_certificate(
        report.gains, system.a_matrix, system.c_matrix, ci["gamma_lower"], ci["gamma_upper"], report.chain,
        ci["rho_lower"], ci["rho_upper"], ci["u_lower"], ci["u_upper"],
        coupling=report.coupling, b_matrix=system.b_matrix,
    )


# -- report documents ------------------------------------------------------------

def _mat(a):
    return None if a is None else np.asarray(a).tolist()


def report_to_dict(report: DesignReport) -> dict:
    g = report.gains
    doc = {
        "mode": g.mode.value,
        "gains": {
            "l_lower": _mat(g.l_lower),
            "l_upper": _mat(g.l_upper),
            "x_diag": np.diag(g.x_diag).tolist(),
            "y_lower": _mat(g.y_lower),
            "y_upper": _mat(g.y_upper),
            "a": g.a,
        },
        "chain": None,
        "coupling": None if report.coupling is None else {"v_lower": _mat(report.coupling[0]), "v_upper": _mat(report.coupling[1])},
        "certificate": None,
        "network": network_to_dict(report.aux_pair.source),
        "diagnostics": report.diagnostics,
    }
    if report.chain is not None:
        doc["chain"] = {
            "n_lead": report.chain.n_lead,
            "s0_lower": _mat(report.chain.s_lower[0]),
            "s0_upper": _mat(report.chain.s_upper[0]),
            "s_lower": [_mat(s) for s in report.chain.s_lower],
            "s_upper": [_mat(s) for s in report.chain.s_upper],
        }
    c = report.certificate
    if c is not None:
        doc["certificate"] = {"lambda": c.lam, "big_c": c.big_c, "radius_r": c.radius_r, "theta": c.theta, "v": list(c.v)}
    return doc


def report_from_dict(doc: dict, system: LipschitzSystem) -> DesignReport:
    g = doc["gains"]
    n_x, n_y = system.n_x, system.n_y

    def m(key):
        return np.array(g[key], dtype=np.float64).reshape(n_x, n_y)

    gains = GainDesign(m("l_lower"), m("l_upper"), np.diag(np.array(g["x_diag"], dtype=np.float64)),
                       m("y_lower"), m("y_upper"), float(g["a"]), Mode(doc["mode"]))
    chain = None
    if doc.get("chain"):
        ch = doc["chain"]
        chain = SMatrixChain(
            tuple(np.array(s, dtype=np.float64) for s in ch["s_lower"]),
            tuple(np.array(s, dtype=np.float64) for s in ch["s_upper"]),
            int(ch["n_lead"]),
        )
    coupling = None
    if doc.get("coupling"):
        coupling = (np.array(doc["coupling"]["v_lower"], dtype=np.float64),
                    np.array(doc["coupling"]["v_upper"], dtype=np.float64))
    cert = None
    if doc.get("certificate"):
        c = doc["certificate"]
        cert = StabilityCertificate(float(c["lambda"]), float(c["big_c"]), float(c["radius_r"]), float(c["theta"]),
                                    tuple(float(x) for x in c["v"]))
    return DesignReport(gains, chain, cert, make_auxiliary_pair(system.effective_network), coupling,
                        dict(doc.get("diagnostics", {})))

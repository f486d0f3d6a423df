"""Command-line front end.

Exit codes: 0 ok, 2 config error, 3 infeasible, 4 bracketing or check
violation, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import monitor, synthesis
from .config import ConfigDocument, ConfigError, load_config
from .expr import ExpressionError
from .nn import network_to_dict
from .plant import validate_decomposition

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_VIOLATION = 4
EXIT_IO = 5


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _say(msg: str) -> None:
    print(msg, flush=True)


def _load_report(path, cfg: ConfigDocument) -> synthesis.DesignReport:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_CONFIG, f"report {path} is not valid JSON: {exc}") from exc
    if doc.get("network") != network_to_dict(cfg.system.effective_network):
        raise CliError(EXIT_CONFIG, f"report {path} was produced for a different network")
    try:
        return synthesis.report_from_dict(doc, cfg.system)
    except (KeyError, ValueError, TypeError) as exc:
        raise CliError(EXIT_CONFIG, f"report {path} does not match the config: {exc}") from exc


def _scenario(cfg: ConfigDocument, dt_override):
    return cfg.scenario if dt_override is None else cfg.scenario.with_dt(dt_override)


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config)
    log = [] if args.debug else None
    try:
        report = synthesis.design_pipeline(
            cfg.system, cfg.decomposition, cfg.scenario.u_lower, cfg.scenario.u_upper,
            mode=args.mode or cfg.mode, strict_margin=cfg.options["strict_margin"], log=log,
        )
    except synthesis.SynthesisInfeasible as exc:
        if log:
            print("\n".join(log), file=sys.stderr)
        _say(f"infeasible (exit {EXIT_INFEASIBLE}): step {exc.step}, {exc.variant}, failing block {exc.block}")
        return EXIT_INFEASIBLE
    if log:
        print("\n".join(log), file=sys.stderr)
    out = Path(args.report or args.out or "report.json")
    out.write_text(json.dumps(synthesis.report_to_dict(report), indent=2))
    g = report.gains
    _say(f"mode {g.mode.value}")
    _say(f"L_lower = {np.array2string(g.l_lower, precision=6)}")
    _say(f"L_upper = {np.array2string(g.l_upper, precision=6)}")
    if report.certificate is not None:
        c = report.certificate
        _say(f"certificate: lambda={c.lam:.6g} C={c.big_c:.6g} r={c.radius_r:.6g}")
    _say(f"report written to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    report = _load_report(args.report, cfg)
    scenario = _scenario(cfg, args.dt_override)
    tol = cfg.options["tol"] if args.tol is None else args.tol
    trace = monitor.simulate_closed_loop(cfg.system, report, cfg.decomposition, scenario)
    out = Path(args.out or "trace.csv")
    monitor.write_trace_csv(trace, out)
    _say(f"trace written to {out} ({len(trace)} rows)")
    vr = monitor.check_bracketing(trace, tol)
    _say(vr.summary())
    code = EXIT_OK if vr.passed else EXIT_VIOLATION
    if report.certificate is not None:
        em = monitor.error_metrics(trace, report.certificate, tol)
        if em.envelope_ok:
            _say("certificate envelope holds")
        else:
            k = em.first_failure
            bad = int(np.count_nonzero(em.xi_norm > em.envelope + tol))
            _say(f"{bad} certificate envelope violation(s); first at t={trace.times[k]:g}: "
                 f"|xi|_1={em.xi_norm[k]:.6g} > {em.envelope[k]:.6g}")
            code = EXIT_VIOLATION
    return code


def cmd_monitor(args) -> int:
    cfg = load_config(args.config)
    report = _load_report(args.report, cfg)
    sc = cfg.scenario
    tol = cfg.options["tol"] if args.tol is None else args.tol
    times, ys = monitor.read_measurements(args.measurements, cfg.system.n_y)
    if times.size == 0:
        raise CliError(EXIT_CONFIG, f"{args.measurements}: no measurement rows")
    lo, hi = monitor.replay_measurements(cfg.system, report, cfg.decomposition, times, ys,
                                         sc.x0_lower, sc.x0_upper, sc.u_lower, sc.u_upper)
    recorded = monitor.read_trace_csv(args.measurements)
    has_x = recorded.x.shape[1] == cfg.system.n_x
    x = recorded.x if has_x else np.full_like(lo, np.nan)
    trace = monitor.Trace(times, x, lo, hi, ys, recorded.u.reshape(times.shape[0], -1))
    if args.out:
        monitor.write_trace_csv(trace, args.out)
        _say(f"bounds written to {args.out}")
    _say(f"monitored {times.shape[0]} samples; final width {np.array2string(hi[-1] - lo[-1], precision=6)}")
    if not has_x:
        return EXIT_OK
    vr = monitor.check_bracketing(trace, tol)
    _say(vr.summary())
    return EXIT_OK if vr.passed else EXIT_VIOLATION


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    samples = cfg.options["validate_samples"] if args.samples is None else args.samples
    seed = cfg.options["seed"] if args.seed is None else args.seed
    rep = validate_decomposition(cfg.system, cfg.decomposition, sample_count=samples, seed=seed,
                                 scale=cfg.options["validate_scale"])
    _say(rep.summary())
    return EXIT_OK if rep.passed else EXIT_VIOLATION


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    report = _load_report(args.report, cfg)
    sys_ = cfg.system
    margin = cfg.options["strict_margin"]
    g_lo, g_hi = cfg.decomposition.gamma_lower, cfg.decomposition.gamma_upper
    chain = report.chain
    u_part = (chain.u_lower, chain.u_upper) if chain is not None else (None, None)
    margins = synthesis.verify_design(report.gains, sys_.a_matrix, sys_.c_matrix, g_lo, g_hi, *u_part)
    ok = True
    for block, value in margins.items():
        need = 0.0 if report.mode is synthesis.Mode.METZLER_ONLY else margin
        good = value >= need - 1e-9
        ok &= good
        _say(f"{block:14s} margin {value: .3e}  {'ok' if good else 'FAIL'}")
    for side, gain in (("lower", report.gains.l_lower), ("upper", report.gains.l_upper)):
        good = synthesis.is_metzler(sys_.a_matrix - gain @ sys_.c_matrix, 1e-9)
        ok &= good
        _say(f"A - L_{side} C Metzler: {'ok' if good else 'FAIL'}")
    if chain is not None:
        bad = synthesis.chain_violation(chain, report.aux_pair, report.diagnostics.get("alpha", 1.0))
        good = bad <= 1e-8
        ok &= good
        _say(f"S-chain inequality breach {bad:.3e}  {'ok' if good else 'FAIL'}")
    if report.certificate is not None:
        try:
            fresh = synthesis.recompute_certificate(report, sys_)
        except synthesis.CertificateError as exc:
            _say(f"certificate: {exc}")
            return EXIT_VIOLATION
        c = report.certificate
        diffs = [abs(a - b) for a, b in ((c.lam, fresh.lam), (c.theta, fresh.theta),
                                          (c.big_c, fresh.big_c), (c.radius_r, fresh.radius_r))]
        good = max(diffs) <= 1e-12 * max(1.0, abs(c.radius_r))
        ok &= good
        _say(f"certificate reproduces: {'ok' if good else 'FAIL'} (max diff {max(diffs):.3e})")
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nnobserver", description="Interval state estimation for systems with neural network components.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, report=False):
        sp.add_argument("--config", required=True, help="JSON config document")
        if report:
            sp.add_argument("--report", required=True, help="design report written by synthesize")

    sp = sub.add_parser("synthesize", help="design observer gains")
    common(sp)
    sp.add_argument("--report", help="output report path (default report.json)")
    sp.add_argument("--out", help="alias for --report")
    sp.add_argument("--mode", choices=[m.value for m in synthesis.Mode])
    sp.add_argument("--debug", action="store_true", help="print the simplex pivot log to stderr")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("simulate", help="co-simulate plant and estimator")
    common(sp, report=True)
    sp.add_argument("--out", help="trace CSV path (default trace.csv)")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--dt-override", type=float)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("monitor", help="run the estimator over a measurement CSV")
    common(sp, report=True)
    sp.add_argument("--measurements", required=True, help="CSV with t, y1..ym columns")
    sp.add_argument("--out", help="CSV of estimated bounds")
    sp.add_argument("--tol", type=float)
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("validate", help="sample-check the bounding decomposition")
    common(sp)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("check", help="re-verify a report by substitution")
    common(sp, report=True)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ExpressionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except monitor.IntegrationFault as exc:
        print(f"integration fault: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

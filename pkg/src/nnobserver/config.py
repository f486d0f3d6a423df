"""JSON configuration documents for the command-line tools.

Layout::

    {
      "A": [[..]], "C": [[..]], "B": [[..]], "f": ["..."], "beta": 0,
      "network": "net.json" | {"layers": [..]},
      "nn_input_mode": "state_driven", "embedding": [[..]],
      "decomposition": {"f_lower": [..], "f_upper": [..],
                        "gammas": {"l1": 0, "l2": 0, "u1": 0, "u2": 0},
                        "rhos": {"lower": [..], "upper": [..]}},
      "scenario": {"u": ["10*sin(5*t)"], "u_lower": [..], "u_upper": [..],
                   "x0": [..], "x0_lower": [..], "x0_upper": [..], "t_end": 10, "dt": 0.001},
      "options": {"mode": "stable_state_driven", "tol": 1e-6, ...}
    }

``B`` maps inputs straight into the state derivative; ``embedding`` maps the
network output into state channels. Both default to the trivial choice.

Relative network paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .nn import NetworkError, load_network, network_from_dict
from .plant import BoundingDecomposition, LipschitzSystem, Scenario
from .synthesis import Mode

SYSTEM_KEYS = {"A", "C", "B", "f", "beta", "network", "nn_input_mode", "embedding"}
SYSTEM_REQUIRED = {"A", "C", "network"}
DECOMP_KEYS = {"f_lower", "f_upper", "gammas", "rhos"}
GAMMA_KEYS = {"l1", "l2", "u1", "u2"}
RHO_KEYS = {"lower", "upper"}
SCENARIO_KEYS = {"u", "u_lower", "u_upper", "x0", "x0_lower", "x0_upper", "t_end", "dt"}
OPTION_DEFAULTS = {
    "mode": None,
    "tol": 1e-6,
    "strict_margin": 1e-6,
    "validate_samples": 10000,
    "validate_scale": 10.0,
    "seed": 0,
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.key_path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True, eq=False)
class ConfigDocument:
    system: LipschitzSystem
    decomposition: BoundingDecomposition
    scenario: Scenario
    options: dict
    source: Path | None = None

    @property
    def mode(self) -> Mode | None:
        m = self.options.get("mode")
        return None if m is None else Mode(m)


def _check_keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")
    for key in required:
        if key not in obj:
            raise ConfigError(f"{where}.{key}" if where else key, "missing required key")


def _wrap(where, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError, NetworkError, KeyError) as exc:
        raise ConfigError(where, str(exc)) from exc


def _network(spec, base: Path | None):
    if isinstance(spec, str):
        path = Path(spec)
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            return load_network(path)
        except OSError as exc:
            raise OSError(f"cannot read network file {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("network", f"{path} is not valid JSON: {exc}") from exc
    return network_from_dict(spec)


def config_from_dict(doc: dict, base: Path | None = None) -> ConfigDocument:
    _check_keys(doc, SYSTEM_KEYS | {"decomposition", "scenario", "options"}, "", SYSTEM_REQUIRED | {"scenario"})
    nn = _wrap("network", _network, doc["network"], base)
    n_x = len(doc["A"]) if isinstance(doc["A"], list) else 0
    system = _wrap(
        "",
        LipschitzSystem,
        doc["A"],
        doc["C"],
        tuple(doc.get("f", ["0"] * n_x)),
        doc.get("beta", 0.0),
        nn,
        doc.get("nn_input_mode", "state_driven"),
        doc.get("embedding"),
        doc.get("B"),
    )

    dd = doc.get("decomposition")
    if dd is None:
        if not system.f_is_zero:
            raise ConfigError("decomposition", "required when f is nonzero")
        decomp = BoundingDecomposition.zero(system.n_x)
    else:
        _check_keys(dd, DECOMP_KEYS, "decomposition", ("f_lower", "f_upper"))
        gammas = dd.get("gammas", {})
        rhos = dd.get("rhos", {})
        _check_keys(gammas, GAMMA_KEYS, "decomposition.gammas")
        _check_keys(rhos, RHO_KEYS, "decomposition.rhos")
        decomp = _wrap(
            "decomposition", BoundingDecomposition, tuple(dd["f_lower"]), tuple(dd["f_upper"]),
            *(float(gammas.get(k, 0.0)) for k in ("l1", "l2", "u1", "u2")),
            rhos.get("lower"), rhos.get("upper"),
        )
    decomp = _wrap("decomposition", decomp.bind, system)

    sc = doc["scenario"]
    _check_keys(sc, SCENARIO_KEYS, "scenario", SCENARIO_KEYS - {"x0_lower", "x0_upper"})
    x0 = sc["x0"]
    scenario = _wrap(
        "scenario", Scenario, tuple(sc["u"]), sc["u_lower"], sc["u_upper"], x0,
        sc.get("x0_lower", x0), sc.get("x0_upper", x0), sc["t_end"], sc["dt"],
    )
    if scenario.x0.shape != (system.n_x,):
        raise ConfigError("scenario.x0", f"expected {system.n_x} entries, got {scenario.x0.shape[0]}")
    if scenario.u_lower.shape != (system.n_u,):
        raise ConfigError("scenario.u", f"system takes {system.n_u} inputs, scenario gives {scenario.u_lower.shape[0]}")

    od = doc.get("options", {})
    _check_keys(od, set(OPTION_DEFAULTS), "options")
    options = {**OPTION_DEFAULTS, **od}
    if options["mode"] is not None:
        _wrap("options.mode", Mode, options["mode"])
    return ConfigDocument(system, decomp, scenario, options)


def load_config(path) -> ConfigDocument:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path} is not valid JSON: {exc}") from exc
    cfg = config_from_dict(doc, path.parent)
    return ConfigDocument(cfg.system, cfg.decomposition, cfg.scenario, cfg.options, path)

"""Scenario configuration: flat ``key = value`` text with dotted keys, or JSON.

Text format::

    # comment
    deformation.kind = q_deformed
    deformation.tau = 0.1
    beta = inf
    sweep.values = 0, 0.05, 0.1

JSON documents may use the same dotted keys or nest them as objects.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .algebra import DeformationSpec, ModeParams
from .evolve import InitialState
from .liouvillian import BathModel

MODES = ("spectrum", "evolve", "steady", "thermo", "sweep")
SWEEP_PARAMS = ("tau", "beta", "lambda", "dim")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def _float(text) -> float:
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)
    s = str(text).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _int(text) -> int:
    if isinstance(text, int) and not isinstance(text, bool):
        return text
    val = float(str(text).strip())
    if val != int(val):
        raise ValueError(f"{text!r} is not an integer")
    return int(val)


def _complex(text) -> complex:
    if isinstance(text, (int, float, complex)) and not isinstance(text, bool):
        return complex(text)
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return complex(float(text[0]), float(text[1]))
    return complex(str(text).strip().replace(" ", "").replace("i", "j"))


def _list(conv):
    def parse(text):
        items = text if isinstance(text, (list, tuple)) else [
            x for x in str(text).split(",") if x.strip()
        ]
        return [conv(x) for x in items]
    return parse


def _str(text) -> str:
    return str(text).strip()


SCHEMA = {
    "mode": _str,
    "omega": _float,
    "dim": _int,
    "beta": _float,
    "lambda": _float,
    "deformation.kind": _str,
    "deformation.tau": _float,
    "deformation.table": _list(_float),
    "bath.kind": _str,
    "bath.gamma": _float,
    "bath.nbar_bath": _float,
    "bath.m_squeeze": _complex,
    "bath.d_plus": _list(_float),
    "bath.d_minus": _list(_float),
    "bath.d_pq": _list(_float),
    "initial_state.kind": _str,
    "initial_state.n": _int,
    "initial_state.beta": _float,
    "initial_state.weights": _list(_float),
    "initial_state.path": _str,
    "t_end": _float,
    "dt": _float,
    "sample_every": _int,
    "sweep.parameter": _str,
    "sweep.values": _list(_float),
    "sweep.mode": _str,
    "output.path": _str,
    "output.format": _str,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario; ``raw`` keeps the parsed key/value pairs."""

    mode: str
    deformation: DeformationSpec
    mode_params: ModeParams
    raw: dict = field(default_factory=dict)
    bath: BathModel | None = None
    beta: float | None = None
    lam: float | None = None
    initial_state: InitialState | None = None
    t_end: float | None = None
    dt: float | None = None
    sample_every: int = 1
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    sweep_mode: str = "thermo"
    output_path: str | None = None
    output_format: str = "csv"

    @property
    def tau(self) -> float:
        if self.deformation.kind == "identity":
            return 0.0
        if self.deformation.kind == "q_deformed":
            return self.deformation.tau
        raise ConfigError("deformation.kind", "thermo needs identity or q_deformed")

    def with_value(self, parameter: str, value: float) -> "ScenarioConfig":
        """Copy with one sweep parameter replaced, re-validated for the base mode."""
        raw = {k: v for k, v in self.raw.items() if not k.startswith("sweep.")}
        if parameter == "tau":
            raw["deformation.kind"] = "q_deformed"
            raw["deformation.tau"] = value
        elif parameter == "dim":
            try:
                raw["dim"] = _int(value)
            except ValueError as exc:
                raise ConfigError("sweep.values", str(exc)) from exc
        else:
            raw[parameter] = value
        raw["mode"] = self.sweep_mode
        return build_config(raw)


def parse_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ConfigError(key, "duplicate key")
        raw[key] = value
    return raw


def _flatten(obj: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def load_config(path: str | Path, mode: str | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            raw = _flatten(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc.msg}") from exc
    else:
        raw = parse_text(text)
    if mode is not None:
        if "mode" in raw and str(raw["mode"]).strip() != mode:
            raise ConfigError("mode", f"config says {raw['mode']!r}, command line says {mode!r}")
        raw["mode"] = mode
    return build_config(raw)


def _typed(raw: dict) -> dict:
    vals = {}
    for key, value in raw.items():
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        try:
            vals[key] = SCHEMA[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {value!r}: {exc}") from exc
    return vals


def _need(vals: dict, key: str):
    if key not in vals:
        raise ConfigError(key, "required for this mode")
    return vals[key]


def _guard(key: str, build):
    try:
        return build()
    except ConfigError:
        raise
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(key, str(exc)) from exc


def _deformation(vals: dict) -> DeformationSpec:
    kind = vals.get("deformation.kind", "identity")
    if kind == "identity":
        return DeformationSpec.identity()
    if kind == "q_deformed":
        tau = _need(vals, "deformation.tau")
        return _guard("deformation.tau", lambda: DeformationSpec.q_deformed(tau))
    if kind == "custom":
        table = _need(vals, "deformation.table")
        return _guard("deformation.table", lambda: DeformationSpec.custom(table))
    raise ConfigError("deformation.kind", f"unknown kind {kind!r}")


def _bath(vals: dict) -> BathModel:
    kind = vals.get("bath.kind", "thermal")
    if kind == "thermal":
        lam = _need(vals, "lambda")
        beta = _need(vals, "beta")
        return _guard("beta", lambda: BathModel.thermal(lam, beta))
    if kind == "squeezed":
        gamma = _need(vals, "bath.gamma")
        nbar = _need(vals, "bath.nbar_bath")
        m = vals.get("bath.m_squeeze", 0j)
        return _guard("bath", lambda: BathModel.squeezed(gamma, nbar, m))
    if kind == "custom":
        lam = _need(vals, "lambda")
        d_plus = _need(vals, "bath.d_plus")
        # a one-element list is a constant table
        tables = [d_plus, vals.get("bath.d_minus", [0.0]), vals.get("bath.d_pq", [0.0])]
        tables = [t[0] if len(t) == 1 else t for t in tables]
        return _guard("bath", lambda: BathModel.custom(lam, *tables))
    raise ConfigError("bath.kind", f"unknown kind {kind!r}")


def _initial_state(vals: dict) -> InitialState:
    kind = vals.get("initial_state.kind", "fock")
    if kind == "fock":
        return InitialState("fock", n=vals.get("initial_state.n", 0))
    if kind == "thermal":
        return InitialState("thermal", beta=_need(vals, "initial_state.beta"))
    if kind == "diagonal":
        return InitialState("diagonal", weights=tuple(_need(vals, "initial_state.weights")))
    if kind == "file":
        return InitialState("file", path=_need(vals, "initial_state.path"))
    raise ConfigError("initial_state.kind", f"unknown kind {kind!r}")


def build_config(raw: dict) -> ScenarioConfig:
    vals = _typed(raw)
    mode = vals.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
    omega = vals.get("omega", 1.0)
    dim = vals.get("dim", 32)
    mode_params = _guard("dim", lambda: ModeParams(omega, dim))
    cfg = ScenarioConfig(
        mode=mode,
        deformation=_deformation(vals),
        mode_params=mode_params,
        raw=dict(raw),
        beta=vals.get("beta"),
        lam=vals.get("lambda"),
        output_path=vals.get("output.path"),
        output_format=vals.get("output.format", "csv"),
    )
    if cfg.output_format not in FORMATS:
        raise ConfigError("output.format", f"must be one of {', '.join(FORMATS)}")

    if mode == "sweep":
        param = _need(vals, "sweep.parameter")
        if param not in SWEEP_PARAMS:
            raise ConfigError("sweep.parameter", f"must be one of {', '.join(SWEEP_PARAMS)}")
        values = _need(vals, "sweep.values")
        if not values:
            raise ConfigError("sweep.values", "empty values list")
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("sweep.values", "values must be finite")
        base = vals.get("sweep.mode", "thermo")
        if base not in MODES or base == "sweep":
            raise ConfigError("sweep.mode", "base mode must be spectrum, evolve, steady or thermo")
        cfg = replace(cfg, sweep_parameter=param, sweep_values=tuple(values), sweep_mode=base)
        # validate the first expanded scenario up front
        cfg.with_value(param, values[0])
        return cfg

    if mode in ("evolve", "steady"):
        cfg = replace(cfg, bath=_bath(vals))
    if mode == "evolve":
        cfg = replace(
            cfg,
            initial_state=_initial_state(vals),
            t_end=_need(vals, "t_end"),
            dt=_need(vals, "dt"),
            sample_every=vals.get("sample_every", 1),
        )
        if not cfg.dt > 0:
            raise ConfigError("dt", "must be > 0")
        if not cfg.t_end >= 0:
            raise ConfigError("t_end", "must be >= 0")
        if cfg.sample_every < 1:
            raise ConfigError("sample_every", "must be >= 1")
    if mode == "thermo":
        beta = _need(vals, "beta")
        if not (math.isfinite(beta) and beta > 0):
            raise ConfigError("beta", "thermo needs a finite beta > 0")
        if cfg.deformation.kind == "custom":
            raise ConfigError("deformation.kind", "thermo needs identity or q_deformed")
    return cfg

"""Run configuration: a TOML document whose every key has a scenario default.

An empty document is the 40-vehicle, 1400 m ring scenario with the
IDM/OVRV parameter table.  Unknown keys and invalid values are rejected with
the offending key and, when it appears in the source text, its line number.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Any, Optional

import tomli
import tomli_w

from . import __version__
from .analysis import STRATEGIES, SynthesisRequest
from .metrics import DEFAULT_LENGTHS, DEFAULT_THRESHOLDS
from .models import AccelBounds, AttackTypeI, AttackTypeII, IdmParams, OvrvParams
from .ringsim import FleetConfig, SimConfig

ATTACK_TYPES = ("none", "type1", "type2")

# section path -> {key: default}; the type of each default is the accepted type
SCHEMA: dict = {
    "model.idm": {"v0": 30.0, "T": 1.5, "s0": 2.0, "a_max": 1.4, "b_comf": 2.0},
    "model.ovrv": {"k1": 0.05, "k2": 0.10, "eta": 21.51, "tau": 2.5},
    "fleet": {
        "m": 40,
        "ring_length": 1400.0,
        "acc_penetration": 0.2,
        "attacked_fraction_of_acc": 0.5,
        "placement": "even",
        "vehicle_length": 5.0,
    },
    "sim": {
        "dt": 0.1,
        "duration": 600.0,
        "warmup": 60.0,
        "speed_limit": 30.0,
        "a_min": -8.0,
        "a_max_phys": 5.0,
        "initial_speed_rule": "ovrv-equilibrium",
        "initial_speed": 0.0,
        "perturbation_vehicle": 0,
        "perturbation_dv": -0.1,
        "perturbation_time": 0.0,
        "collision_policy": "halt",
        "sample_interval": 0.5,
        "seed": 0,
    },
    "attack": {
        "type": "none",
        "delta": 0.0,
        "r": 0.12,
        "delta1": 0.0,
        "delta2": 0.0,
        "z1": 0.8,
        "z2": 0.7,
        "mode": "destabilize",
        "strategy": "max-lambda",
        "grid_step": 1e-3,
    },
    "metrics": {"thresholds": list(DEFAULT_THRESHOLDS)},
    "sweep": {"lengths": list(DEFAULT_LENGTHS)},
}


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"{key}"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class AttackSection:
    type: str = "none"
    delta: float = 0.0
    r: float = 0.12
    delta1: float = 0.0
    delta2: float = 0.0
    z1: float = 0.8
    z2: float = 0.7
    mode: str = "destabilize"
    strategy: str = "max-lambda"
    grid_step: float = 1e-3

    def spec(self):
        if self.type == "type1":
            return AttackTypeI(self.delta, self.r)
        if self.type == "type2":
            return AttackTypeII(self.delta1, self.delta2, self.z1, self.z2)
        return None

    def synthesis_request(self) -> SynthesisRequest:
        kind = "type2" if self.type == "type2" else "type1"
        return SynthesisRequest(kind, self.mode, self.r, self.z1, self.z2, self.strategy, self.grid_step)


@dataclass(frozen=True)
class RunConfig:
    idm: IdmParams = field(default_factory=IdmParams)
    ovrv: OvrvParams = field(default_factory=OvrvParams)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    attack: AttackSection = field(default_factory=AttackSection)
    thresholds: tuple = DEFAULT_THRESHOLDS
    lengths: tuple = DEFAULT_LENGTHS
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return dump_config(self.raw)

    def echo(self) -> str:
        """Single-line form of the effective config for file headers."""
        return json_line(self.raw)


def json_line(d: dict) -> str:
    import json

    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def dump_config(d: dict) -> str:
    nested: dict = {}
    for path, values in d.items():
        node = nested
        for part in path.split("."):
            node = node.setdefault(part, {})
        node.update(values)
    return tomli_w.dumps(nested)


def _line_of(text: str, key: str) -> Optional[int]:
    leaf = key.rsplit(".", 1)[-1]
    pat = re.compile(rf"^\s*(?:[\w.\"]*\.)?\"?{re.escape(leaf)}\"?\s*=")
    for n, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return n
    return None


def _flatten(doc: dict, text: str) -> dict:
    """Map the parsed TOML tree onto the schema's dotted section paths."""
    out: dict = {path: {} for path in SCHEMA}

    def walk(node: dict, prefix: str):
        for k, val in node.items():
            path = f"{prefix}.{k}" if prefix else k
            if isinstance(val, dict):
                if path in SCHEMA or any(s.startswith(path + ".") for s in SCHEMA):
                    walk(val, path)
                    continue
                raise ConfigError("unknown section", path, _line_of(text, k))
            if prefix not in SCHEMA or k not in SCHEMA[prefix]:
                raise ConfigError("unknown key", path, _line_of(text, k))
            out[prefix][k] = val

    walk(doc, "")
    return out


def _coerce(key: str, default: Any, val: Any, text: str) -> Any:
    line = _line_of(text, key)
    if isinstance(default, bool):
        ok = isinstance(val, bool)
    elif isinstance(default, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(default, float):
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        val = float(val) if ok else val
    elif isinstance(default, str):
        ok = isinstance(val, str)
    elif isinstance(default, list):
        ok = isinstance(val, list) and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)
        val = [float(x) for x in val] if ok else val
    else:  # pragma: no cover - schema only holds the types above
        ok = False
    if not ok:
        raise ConfigError(f"expected {type(default).__name__}, got {val!r}", key, line)
    return val


def _set_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, _, raw = assignment.partition("=")
    key, raw = key.strip(), raw.strip()
    try:
        val = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        val = raw
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError("override path crosses a value", key)
    node[parts[-1]] = val


def parse_config(text: str = "", overrides: tuple = ()) -> RunConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for ov in overrides:
        _set_override(doc, ov)
    given = _flatten(doc, text)

    eff: dict = {}
    for path, defaults in SCHEMA.items():
        eff[path] = {}
        for k, dflt in defaults.items():
            key = f"{path}.{k}"
            eff[path][k] = _coerce(key, dflt, given[path][k], text) if k in given[path] else copy.deepcopy(dflt)
    return _build(eff, text)


def _build(eff: dict, text: str) -> RunConfig:
    def guarded(section: str, fn, *args, **kw):
        try:
            return fn(*args, **kw)
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            key = _guess_key(section, str(exc))
            raise ConfigError(str(exc), key, _line_of(text, key) if key else None) from None

    idm = guarded("model.idm", IdmParams, **eff["model.idm"])
    ovrv = guarded("model.ovrv", OvrvParams, **eff["model.ovrv"])

    a = eff["attack"]
    if a["type"] not in ATTACK_TYPES:
        raise ConfigError(f"expected one of {ATTACK_TYPES}", "attack.type", _line_of(text, "attack.type"))
    if a["strategy"] not in STRATEGIES:
        raise ConfigError(f"expected one of {STRATEGIES}", "attack.strategy", _line_of(text, "attack.strategy"))
    attack = AttackSection(**a)
    spec = guarded("attack", attack.spec)
    guarded("attack", attack.synthesis_request)

    f = eff["fleet"]
    fleet = guarded("fleet", FleetConfig, idm=idm, ovrv=ovrv, attack=spec, **f)

    s = dict(eff["sim"])
    bounds = guarded("sim", AccelBounds, s.pop("a_min"), s.pop("a_max_phys"))
    sim = guarded("sim", SimConfig, accel_bounds=bounds, **s)
    if not 0 <= sim.perturbation_vehicle < fleet.m:
        raise ConfigError(
            f"must index a vehicle in [0, {fleet.m})",
            "sim.perturbation_vehicle",
            _line_of(text, "sim.perturbation_vehicle"),
        )

    thresholds = tuple(eff["metrics"]["thresholds"])
    if not thresholds or list(thresholds) != sorted(thresholds) or thresholds[0] <= 0:
        raise ConfigError("must be a nonempty ascending list of positive values", "metrics.thresholds",
                          _line_of(text, "metrics.thresholds"))
    lengths = tuple(eff["sweep"]["lengths"])
    if not lengths or min(lengths) <= fleet.m * fleet.vehicle_length:
        raise ConfigError(
            f"every ring length must exceed m * vehicle_length = {fleet.m * fleet.vehicle_length:g}",
            "sweep.lengths",
            _line_of(text, "sweep.lengths"),
        )
    return RunConfig(idm, ovrv, fleet, sim, attack, thresholds, lengths, raw=eff)


def _guess_key(section: str, message: str) -> Optional[str]:
    """Best-effort key attribution for validation errors raised by the value types."""
    names = {
        "model.idm": SCHEMA["model.idm"],
        "model.ovrv": SCHEMA["model.ovrv"],
        "fleet": SCHEMA["fleet"],
        "sim": SCHEMA["sim"],
        "attack": SCHEMA["attack"],
    }[section]
    found = [k for k in names if re.search(rf"\b{re.escape(k)}\b", message)]
    if found:
        return f"{section}.{found[0]}"
    if section == "fleet" and "vehicles" in message:
        return "fleet.m" if "more than one" in message else "fleet.ring_length"
    return section


def load_config(path: Optional[str], overrides: tuple = ()) -> RunConfig:
    text = ""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return parse_config(text, overrides)


def version_line() -> str:
    return f"accattack {__version__}"

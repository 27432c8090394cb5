"""Typed experiment configuration.

Values come from a flat ``key = value`` file and ``--key value`` overrides,
in that order. Lists are comma-separated. Unknown keys and unparsable
values raise :class:`ConfigError` naming the key.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

COMMANDS = ("field", "gmc", "smalldev", "shg", "decomp")


class ConfigError(ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _float(s):
    s = str(s).strip().lower()
    if s in ("inf", "infinity"):
        return math.inf
    return float(s)


def _int(s):
    return int(str(s).strip(), 0)


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(v) for v in s]
    return [_float(v) for v in str(s).split(",") if v.strip()]


def _opt(parse):
    def inner(s):
        if s is None or str(s).strip().lower() in ("", "none"):
            return None
        return parse(s)
    return inner


def _float_or_auto(s):
    s = str(s).strip().lower()
    return s if s in ("auto", "default") else _float(s)


def _str(s):
    return str(s).strip()


def _choice(*options):
    def inner(s):
        s = str(s).strip().lower()
        if s not in options:
            raise ValueError(f"expected one of {options}")
        return s
    return inner


@dataclass(frozen=True)
class Key:
    parse: Callable
    default: Any
    check: Optional[Callable] = None  # returns an error message or None


def _positive(v):
    return None if v > 0 else "must be positive"


def _at_least_one(v):
    return None if v >= 1 else "must be >= 1"


def _grid_n(v):
    return None if v >= 2 and v & (v - 1) == 0 else "must be a power of two >= 2"


def _all_positive(vs):
    return None if vs and all(v > 0 for v in vs) else "must be a non-empty list of positive numbers"


COMMON = {
    "master_seed": Key(_int, 0, lambda v: None if 0 <= v < 2 ** 64 else "must fit in 64 bits"),
    "workers": Key(_int, 1, _at_least_one),
    "checkpoint_path": Key(_opt(_str), None),
    "samples": Key(_int, 1000, _at_least_one),
    "n": Key(_int, 64, _grid_n),
}

FIELD_KEYS = {
    "kind": Key(_choice("gff", "star"), "gff"),
    "dim": Key(_int, 2, lambda v: None if v in (1, 2) else "must be 1 or 2"),
    "xi": Key(_float, math.inf, _positive),
    "t_low": Key(_float, 0.0, lambda v: None if v >= 0 else "must be nonnegative"),
    "R": Key(_float, 1.0, _positive),
}

SCHEMAS: Dict[str, Dict[str, Key]] = {
    "field": dict(FIELD_KEYS),
    "gmc": {
        **FIELD_KEYS,
        "gammas": Key(_floats, [0.5, 1.0, 1.5]),
        "convention": Key(_choice("self", "tilde"), "self"),
    },
    "smalldev": {
        "gamma": Key(_float, 1.0, _positive),
        "eps": Key(_floats, [1.0, 0.7], _all_positive),
        "method": Key(_choice("is", "naive"), "is"),
        "R_tilt": Key(_float_or_auto, "auto"),
        "pilot_samples": Key(_int, 1000, _at_least_one),
    },
    "shg": {
        "gamma": Key(_float, 1.0),
        "mu": Key(_float, 1.0, _positive),
        "R_list": Key(_floats, [4.0, 8.0, 16.0], _all_positive),
    },
    "decomp": {
        "xi": Key(_opt(_float), None),
        "N": Key(_opt(_int), None),
        "t": Key(_float, 0.0),
        "eps": Key(_float, 0.5),
        "K_max": Key(_int, 256, _at_least_one),
    },
}


def parse_config_text(text):
    """Flat ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", key=line)
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_overrides(tokens):
    """``--key value`` or ``--key=value`` pairs."""
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}", key=tok)
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"missing value for --{key}", key=key)
        out[key.replace("-", "_")] = value
    return out


@dataclass
class ExperimentConfig:
    command: str
    values: Dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def echo(self):
        """JSON-safe copy of every resolved value."""
        def safe(v):
            if isinstance(v, float) and not math.isfinite(v):
                return repr(v)
            if isinstance(v, list):
                return [safe(x) for x in v]
            return v
        return {"command": self.command, **{k: safe(v) for k, v in sorted(self.values.items())}}

    def fingerprint(self, ignore=("samples", "workers", "checkpoint_path")):
        return {k: v for k, v in self.echo().items() if k not in ignore}


def resolve(command, raw):
    """Validate raw string values against the command schema, filling defaults."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}", key="command")
    schema = {**COMMON, **SCHEMAS[command]}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for {command}", key=key)
    values = {}
    for key, spec in schema.items():
        if key in raw:
            try:
                v = spec.parse(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {raw[key]!r} ({exc})", key=key) from None
        else:
            v = spec.default
        if spec.check is not None and v is not None:
            msg = spec.check(v)
            if msg:
                raise ConfigError(f"{key} {msg} (got {v!r})", key=key)
        values[key] = v
    return ExperimentConfig(command, values)


def load(command, config_path=None, overrides=()):
    raw = {}
    if config_path is not None:
        with open(config_path) as fh:
            raw.update(parse_config_text(fh.read()))
    raw.update(parse_overrides(list(overrides)))
    return resolve(command, raw)

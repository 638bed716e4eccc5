"""Schema-checked INI run configs.

Every command has a fixed set of sections and keys with defaults. Unknown
sections or keys, bad values and an unsupported ``[run] schema`` are
:class:`ConfigError`\\ s.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any


def _int(lo: Optional[int] = None):
    def parse(text: str) -> int:
        v = int(text)
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}")
        return v
    return parse


def _float(lo: Optional[float] = None, hi: Optional[float] = None, open_lo: bool = False):
    def parse(text: str) -> float:
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if lo is not None and (v < lo or (open_lo and v == lo)):
            raise ValueError(f"must be {'>' if open_lo else '>='} {lo}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}")
        return v
    return parse


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.replace(",", " ").split())
    if not vals:
        raise ValueError("empty list")
    return vals


def _choice(*options: str):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _names(*options: str):
    def parse(text: str) -> tuple[str, ...]:
        vals = tuple(t for t in text.replace(",", " ").split())
        bad = [v for v in vals if v not in options]
        if bad or not vals:
            raise ValueError(f"entries must be drawn from {', '.join(options)}")
        if len(set(vals)) != len(vals):
            raise ValueError("duplicate entries")
        return vals
    return parse


def _str(text: str) -> str:
    return text.strip()


_GRID11 = tuple(i / 10 for i in range(11))

RUN = {"schema": Key(_int(), SCHEMA_VERSION), "seed": Key(_int(0), 0)}

DATA = {
    "source": Key(_choice("synth", "idx"), "synth"),
    "idx_images": Key(_str, ""),
    "idx_labels": Key(_str, ""),
    "num_classes": Key(_int(2), 10),
    "image_size": Key(_int(4), 14),
    "per_class": Key(_int(1), 500),
    "bank_seed": Key(_int(0), 0),
}

SIZES = {"train": Key(_int(1), 8000), "test": Key(_int(1), 2000), "probe_train": Key(_int(1), 8000)}


def _train(optimizer="adam", lr=1e-3, batch_size=64, epochs=5, beta1=0.9, **extra) -> dict:
    keys = {
        "optimizer": Key(_choice("sgd", "adam"), optimizer),
        "lr": Key(_float(0.0), lr),
        "beta1": Key(_float(0.0, 0.999), beta1),
        "batch_size": Key(_int(1), batch_size),
        "epochs": Key(_int(0), epochs),
    }
    keys.update(extra)
    return keys


PROBE = _train("adam", 1e-2, 128, 10)
PHASE1 = _train("sgd", 0.1, 64, 5)

SCHEMAS: dict[str, dict[str, dict[str, Key]]] = {
    "surface": {
        "run": RUN,
        "surface": {
            "rho_l": Key(_floats, _GRID11),
            "rho_r": Key(_floats, _GRID11),
            "num_classes": Key(_int(2), 10),
        },
    },
    "sweep": {
        "run": RUN,
        "data": DATA,
        "sizes": SIZES,
        "grid": {
            "rho_l": Key(_floats, (0.0, 0.25, 0.5, 0.75, 1.0)),
            "rho_r": Key(_floats, (0.25, 0.5, 0.75, 1.0)),
            "replicates": Key(_int(1), 1),
        },
        "phase1": PHASE1,
        "probe": PROBE,
    },
    "table1": {
        "run": RUN,
        "data": DATA,
        "sizes": SIZES,
        "table1": {
            "rho_l": Key(_float(0.0, 1.0), 1.0),
            "rho_r": Key(_float(0.0, 1.0), 0.0),
            "models": Key(_names("supervised", "autoencoder", "gan", "wgan"), ("supervised", "autoencoder", "gan", "wgan")),
        },
        "supervised": PHASE1,
        "autoencoder": _train("adam", 1e-3, 64, 10),
        "gan": _train(
            "adam", 2e-4, 64, 30, 0.5,
            balance=Key(_choice("alternate", "threshold"), "alternate"),
            k_d=Key(_int(1), 1),
            k_g=Key(_int(0), 1),
            tau_d=Key(_float(0.0, open_lo=True), math.log(2.0)),
            noise_dim=Key(_int(1), 64),
        ),
        "wgan": _train(
            "adam", 5e-5, 64, 30, 0.0,
            clip=Key(_float(0.0, open_lo=True), 0.01),
            n_critic=Key(_int(1), 5),
            noise_dim=Key(_int(1), 64),
        ),
        "probe": PROBE,
    },
    "gansim": {
        "run": RUN,
        "gansim": {
            "scenario": Key(_str, "lead"),
            "policy": Key(_choice("strict-alternation", "D-leads-by-l", "G-catchup-until-confusion"),
                          "G-catchup-until-confusion"),
            "lead": Key(_int(1), 2),
            "k": Key(_int(0), 0),
            "l": Key(_int(0), 0),
        },
    },
    "micalc": {
        "run": RUN,
        "micalc": {
            "pmf": Key(_str, ""),
            "measure": Key(_choice("report", "entropy", "conditional-entropy", "mi", "cmi", "signal"), "report"),
            "a": Key(_str, ""),
            "b": Key(_str, ""),
            "given": Key(_str, ""),
        },
    },
}


class RunConfig(dict):
    """``{section: {key: value}}`` with every default filled in."""

    def __getattr__(self, name):
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None


def parse_config(command: str, text: str = "", origin: str = "<config>") -> RunConfig:
    if command not in SCHEMAS:
        raise ConfigError(f"no schema for command {command!r}")
    schema = SCHEMAS[command]
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc
    out = RunConfig({sec: {k: key.default for k, key in keys.items()} for sec, keys in schema.items()})
    for sec in cp.sections():
        if sec not in schema:
            raise ConfigError(f"{origin}: unknown section [{sec}] for '{command}'")
        for k, raw in cp[sec].items():
            if k not in schema[sec]:
                raise ConfigError(f"{origin}: unknown key '{k}' in [{sec}]")
            try:
                out[sec][k] = schema[sec][k].parse(raw)
            except ValueError as exc:
                raise ConfigError(f"{origin}: [{sec}] {k} = {raw!r}: {exc}") from exc
    if out["run"]["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"{origin}: schema {out['run']['schema']} unsupported (expected {SCHEMA_VERSION})")
    return out


def load_config(command: str, path=None) -> RunConfig:
    if path is None:
        return parse_config(command)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(command, text, str(path))


def dumps_config(cfg: RunConfig) -> str:
    """Fully resolved config, as written next to run outputs."""
    lines = []
    for sec, keys in cfg.items():
        lines.append(f"[{sec}]")
        for k, v in keys.items():
            if isinstance(v, tuple):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)

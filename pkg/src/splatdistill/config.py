"""Flat ``key = value`` run-config files.

Keys are the :class:`RunConfig` field names plus the distillation fields,
one per line; ``#`` starts a comment. Unknown keys are an error.
"""

from __future__ import annotations

from dataclasses import fields

from .distill import DistillationConfig
from .optim import RunConfig


class ConfigError(ValueError):
    pass


def _field_types():
    run = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig) if f.name != "distillation"}
    dist = {f.name: type(getattr(DistillationConfig(), f.name)) for f in fields(DistillationConfig)}
    return run, dist


def _coerce(key: str, raw: str, typ):
    try:
        if typ is bool:
            if raw.lower() not in ("true", "false", "1", "0"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    run_types, dist_types = _field_types()
    cfg = base or RunConfig()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in run_types:
            setattr(cfg, key, _coerce(key, raw, run_types[key]))
        elif key in dist_types:
            setattr(cfg.distillation, key, _coerce(key, raw, dist_types[key]))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.flat().items())

"""Run configuration: one YAML file, validated field by field.

Errors name the file and line of the offending key.  Any value can be
overridden from the environment with ``PEGINHOLE_<SECTION>__<FIELD>``
(e.g. ``PEGINHOLE_HP__ALPHA=0.02``) or ``PEGINHOLE_<FIELD>`` for top-level
keys (e.g. ``PEGINHOLE_SEED=3``).  Override values are parsed as YAML
scalars.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .agent import CurriculumConfig, HyperParams
from .contact_sim import HoleSpec, SimConfig
from .env import Phase, PhaseSpec, search_spec

ENV_PREFIX = "PEGINHOLE_"
_RESERVED_ENV = {"PEGINHOLE_BIND"}

# hole fields that are set per episode are not configurable here
_HOLE_FIELDS = ("diameter_mm", "depth_mm", "center_xy_mm", "center_error_xy_mm")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with ``file:line:``."""


def _default_stage1() -> PhaseSpec:
    return search_spec(1.0, 3.0)


def _default_stage2() -> PhaseSpec:
    return search_spec(3.0, 5.0)


def _default_insertion() -> PhaseSpec:
    return CurriculumConfig().insertion


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "runs/default"
    transport: str = "in-process"
    threaded: bool = False
    skip_gate: bool = False
    sim: SimConfig = field(default_factory=SimConfig)
    hole: HoleSpec = field(default_factory=HoleSpec)
    stage1: PhaseSpec = field(default_factory=_default_stage1)
    stage2: PhaseSpec = field(default_factory=_default_stage2)
    insertion: PhaseSpec = field(default_factory=_default_insertion)
    hp: HyperParams = field(default_factory=HyperParams)
    insertion_hp: HyperParams | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if not (self.transport == "in-process" or self.transport.startswith("udp:")):
            raise ValueError("transport must be 'in-process' or 'udp:<host>:<port>'")
        for name in ("stage1", "stage2"):
            if getattr(self, name).phase is not Phase.SEARCH:
                raise ValueError(f"{name} must be a search phase")
        if self.insertion.phase is not Phase.INSERTION:
            raise ValueError("insertion must be an insertion phase")

    def curriculum(self) -> CurriculumConfig:
        return CurriculumConfig(hp=self.hp, stage1=self.stage1, stage2=self.stage2, insertion=self.insertion,
                                insertion_hp=self.insertion_hp, seed=self.seed, threaded=self.threaded,
                                skip_gate=self.skip_gate)

    def to_dict(self) -> dict:
        def plain(obj, only=None):
            out = {}
            for f in fields(obj):
                if f.name == "phase" or (only and f.name not in only):
                    continue
                v = getattr(obj, f.name)
                out[f.name] = list(v) if isinstance(v, tuple) else v
            return out
        d = {k: getattr(self, k) for k in ("seed", "out", "transport", "threaded", "skip_gate")}
        d["sim"] = plain(self.sim)
        d["hole"] = plain(self.hole, _HOLE_FIELDS)
        for name in ("stage1", "stage2", "insertion"):
            d[name] = plain(getattr(self, name))
        d["hp"] = plain(self.hp)
        d["insertion_hp"] = None if self.insertion_hp is None else plain(self.insertion_hp)
        return d


# -- loading ----------------------------------------------------------------

_SECTIONS = {
    "sim": (SimConfig, None),
    "hole": (HoleSpec, _HOLE_FIELDS),
    "stage1": (PhaseSpec, None),
    "stage2": (PhaseSpec, None),
    "insertion": (PhaseSpec, None),
    "hp": (HyperParams, None),
    "insertion_hp": (HyperParams, None),
}
_TOP = ("seed", "out", "transport", "threaded", "skip_gate")


def _line_map(text: str) -> dict:
    """Map ``(section, key)`` / ``(key,)`` paths to 1-based line numbers."""
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for k, v in root.value:
        lines[(k.value,)] = k.start_mark.line + 1
        if isinstance(v, yaml.MappingNode):
            for k2, _ in v.value:
                lines[(k.value, k2.value)] = k2.start_mark.line + 1
    return lines


def _check_type(value, default, where: str):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ValueError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number")
        return float(value)
    if isinstance(default, (tuple, list)):
        if not isinstance(value, (list, tuple)) and not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a list of numbers")
        items = value if isinstance(value, (list, tuple)) else [value]
        if any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in items):
            raise ValueError(f"{where} must be a list of numbers")
        return tuple(float(x) for x in items)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{where} must be a string")
    return value


def _env_overrides(data: dict, environ) -> dict:
    data = dict(data)
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX) or key in _RESERVED_ENV:
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        value = yaml.safe_load(raw) if raw != "" else None
        if len(path) == 1:
            data[path[0]] = value
        elif len(path) == 2:
            block = dict(data.get(path[0]) or {})
            block[path[1]] = value
            data[path[0]] = block
    return data


def from_dict(data: dict, source: str = "<config>", lines: dict | None = None) -> RunConfig:
    lines = lines or {}

    def fail(path: tuple, msg: str):
        line = lines.get(path) or lines.get(path[:1])
        anchor = f"{source}:{line}" if line else source
        raise ConfigError(f"{anchor}: {'.'.join(path)}: {msg}")

    if data is None:
        data = {}
    if not isinstance(data, dict):
        fail(("<root>",), "top level must be a mapping")
    for key in data:
        if key not in _TOP and key not in _SECTIONS:
            fail((key,), "unknown key")

    base = RunConfig()
    kw = {}
    for key in _TOP:
        if key in data:
            try:
                kw[key] = _check_type(data[key], getattr(base, key), key)
            except ValueError as exc:
                fail((key,), str(exc))

    for name, (cls, allowed) in _SECTIONS.items():
        block = data.get(name)
        if block is None:
            continue
        if not isinstance(block, dict):
            fail((name,), "must be a mapping")
        if name == "insertion_hp":
            default = dataclasses.replace(kw.get("hp", base.hp))
        else:
            default = getattr(base, name)
        names = {f.name for f in fields(cls) if f.name != "phase"}
        if allowed:
            names &= set(allowed)
        values = {}
        for key, value in block.items():
            if key not in names:
                fail((name, key), "unknown key")
            try:
                values[key] = _check_type(value, getattr(default, key), f"{name}.{key}")
            except ValueError as exc:
                fail((name, key), str(exc))
        try:
            kw[name] = dataclasses.replace(default, **values)
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            culprit = next((k for k in sorted(values, key=len, reverse=True) if k in msg), None)
            fail((name, culprit) if culprit else (name,), msg)

    try:
        return dataclasses.replace(base, **kw)
    except ValueError as exc:
        msg = str(exc)
        culprit = next((k for k in list(_TOP) + list(_SECTIONS) if msg.startswith(k)), "<root>")
        fail((culprit,), msg)


def load(path=None, environ=None) -> RunConfig:
    """Read a config file (or the defaults when ``path`` is None) and apply env overrides."""
    environ = os.environ if environ is None else environ
    text, source = "", "<defaults>"
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"{path}: no such config file")
        text, source = p.read_text(), str(path)
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: not valid YAML ({getattr(exc, 'problem', exc)})") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    return from_dict(_env_overrides(data or {}, environ), source, _line_map(text))


def dump(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def save(cfg: RunConfig, path) -> None:
    Path(path).write_text(dump(cfg))

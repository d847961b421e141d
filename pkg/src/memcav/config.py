"""YAML presets and dotted-key overrides.

A preset is a nested mapping (see ``data/presets/*.yaml``).  Every leaf key
carries its unit as a suffix (``_nm``, ``_ns``, ``_ppm``, ...).  Overrides are
``section.key=value`` strings whose values are parsed as YAML scalars.
"""
from __future__ import annotations

import copy
import difflib
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml

from .cavity import CavityConfig
from .errors import DataError, UsageError
from .materials import VACUUM, Layer, Medium, StackSpec, medium_from_mapping, quarter_wave_stack

SCHEMA_VERSION = 1
PRESET_NAMES = ("SA", "SB", "bare")


def _preset_root():
    return resources.files("memcav") / "data" / "presets"


def list_presets() -> list[str]:
    return sorted(p.name[:-5] for p in _preset_root().iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    """Raw YAML of a shipped preset."""
    path = _preset_root() / f"{name}.yaml"
    if not path.is_file():
        names = {n.lower(): n for n in list_presets()}
        hint = [names[h] for h in difflib.get_close_matches(name.lower(), list(names), n=1)]
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise UsageError(f"unknown preset {name!r}{extra} (available: {', '.join(list_presets())})")
    return path.read_text()


def _check_schema(cfg: Mapping, origin: str) -> None:
    version = cfg.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{origin}: schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")


def load_preset(name_or_path: str | Path) -> dict:
    """Preset by shipped name or by file path."""
    p = Path(name_or_path)
    if p.suffix in (".yaml", ".yml") and p.exists():
        text, origin = p.read_text(), str(p)
    else:
        text, origin = preset_text(str(name_or_path)), f"preset {name_or_path}"
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise DataError(f"{origin}: top level must be a mapping")
    _check_schema(cfg, origin)
    return cfg


def flatten(cfg: Mapping, prefix: str = "") -> dict[str, Any]:
    """Dotted-key view of a nested mapping (the ``media`` tables stay whole)."""
    out = {}
    for k, v in cfg.items():
        key = f"{prefix}{k}"
        if isinstance(v, Mapping) and prefix != "media.":
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _unknown_key(key: str, valid: Iterable[str]) -> UsageError:
    hint = difflib.get_close_matches(key, list(valid), n=1, cutoff=0.6)
    extra = f"; nearest valid key is {hint[0]!r}" if hint else ""
    return UsageError(f"unknown config key {key!r}{extra}")


def set_key(cfg: dict, key: str, value: Any) -> None:
    valid = flatten(cfg)
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise _unknown_key(key, valid)
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise _unknown_key(key, valid)
    node[parts[-1]] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise UsageError(f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise UsageError(f"override {key}: cannot parse value {raw!r}: {exc}") from None
    return key.strip(), value


def apply_overrides(cfg: Mapping, overrides: Mapping[str, Any] | Iterable[str]) -> dict:
    """Copy of ``cfg`` with dotted-key overrides applied; unknown keys raise."""
    out = copy.deepcopy(dict(cfg))
    items = overrides.items() if isinstance(overrides, Mapping) else (parse_override(o) for o in overrides)
    for key, value in items:
        if key == "schema_version":
            raise UsageError("schema_version cannot be overridden")
        set_key(out, key, value)
    return out


def merge_file(cfg: Mapping, file_cfg: Mapping) -> dict:
    """Layer a user config file (nested, same schema) onto ``cfg``."""
    flat = {k: v for k, v in flatten(file_cfg).items() if k not in ("schema_version", "preset")}
    return apply_overrides(cfg, flat)


def dump(cfg: Mapping) -> str:
    return yaml.safe_dump(dict(cfg), sort_keys=False, default_flow_style=None)


# --------------------------------------------------------------------------
# object builders


def build_media(cfg: Mapping) -> dict[str, Medium]:
    media = {}
    for name, spec in (cfg.get("media") or {}).items():
        if not isinstance(spec, Mapping):
            raise DataError(f"media.{name} must be a mapping")
        media[name] = medium_from_mapping(name, spec)
    return media


def _medium(media: Mapping[str, Medium], name: str, where: str) -> Medium:
    try:
        return media[name]
    except KeyError:
        raise DataError(f"{where}: medium {name!r} is not defined under 'media'") from None


def build_mirror(cfg: Mapping, section: str, media: Mapping[str, Medium] | None = None) -> StackSpec:
    """Standalone quarter-wave mirror: vacuum ambient, coating, substrate."""
    media = build_media(cfg) if media is None else media
    m = cfg.get(section)
    if not isinstance(m, Mapping):
        raise DataError(f"config has no {section!r} section")
    return quarter_wave_stack(
        float(m["center_wavelength_nm"]),
        _medium(media, m["high"], section),
        _medium(media, m["low"], section),
        int(m["pairs"]),
        terminate_with=str(m["terminate_with"]),
        ambient=media.get("vacuum", VACUUM),
        substrate=_medium(media, m["substrate"], section),
    )


def build_cavity(cfg: Mapping) -> CavityConfig:
    media = build_media(cfg)
    fiber = build_mirror(cfg, "fiber_mirror", media)
    planar = build_mirror(cfg, "planar_mirror", media)
    mem = cfg.get("membrane") or {}
    thickness = float(mem.get("thickness_nm", 0.0) or 0.0)
    if thickness < 0:
        raise DataError("membrane.thickness_nm must be >= 0")
    membrane = Layer(_medium(media, mem["medium"], "membrane"), thickness) if thickness > 0 else None
    cav = cfg.get("cavity") or {}
    return CavityConfig(
        fiber,
        float(cav.get("air_gap_nm", 0.0)),
        membrane,
        planar,
        float(cav.get("excess_loss_ppm", 0.0)),
        gap_medium=media.get("vacuum", VACUUM),
    )

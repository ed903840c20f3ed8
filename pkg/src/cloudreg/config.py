"""Plain-text realization configuration files.

The format is INI-style sections of key = value lines; every pipeline default
can be overridden, unknown sections or keys are rejected so typos surface
immediately. A file may start from one of the canonical realization names via
[realization] name = SHOT and override only what it needs.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import fields, replace

import numpy as np

from .errors import CloudRegError, ConfigError
from .estimation import FgrParams, RansacParams
from .pipeline import (
    ConsistencyParams,
    DescriptorParams,
    GroundRemovalParams,
    IcpParams,
    IssParams,
    MatchParams,
    PreprocessParams,
    RealizationConfig,
    SegmentationParams,
    realization_by_name,
)

_TOP_KEYS = {
    "name": str,
    "feature": str,
    "descriptor": str,
    "estimator": str,
    "ground_removal": bool,
}

# section -> (config attribute, parameter dataclass)
_SECTIONS = {
    "preprocess": ("preprocess", PreprocessParams),
    "iss": ("iss", IssParams),
    "segmentation": ("segmentation", SegmentationParams),
    "descriptor": ("descriptor_params", DescriptorParams),
    "matching": ("matching", MatchParams),
    "consistency": ("consistency", ConsistencyParams),
    "ground_removal": ("ground", GroundRemovalParams),
    "ransac": ("ransac", RansacParams),
    "fgr": ("fgr", FgrParams),
    "icp": ("icp", IcpParams),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _convert(raw: str, annotation, context: str):
    raw = raw.strip()
    if annotation is bool:
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ConfigError(f"{context}: expected a boolean, got '{raw}'")
    if annotation is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{context}: expected an integer, got '{raw}'") from None
    if annotation is float:
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError(f"{context}: expected a number, got '{raw}'") from None
        if not np.isfinite(value):
            raise ConfigError(f"{context}: value must be finite")
        return value
    if annotation is str:
        return raw
    # Optional[float] fields (fpfh_spfh_radius, mu_init)
    if raw.lower() in ("none", "auto"):
        return None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{context}: expected a number or 'none', got '{raw}'") from None


def _field_types(dc_type) -> dict[str, object]:
    out = {}
    for f in fields(dc_type):
        t = f.type
        if t in ("float", float):
            out[f.name] = float
        elif t in ("int", int):
            out[f.name] = int
        elif t in ("bool", bool):
            out[f.name] = bool
        elif t in ("str", str):
            out[f.name] = str
        else:
            out[f.name] = None  # optional numeric
    return out


def parse_realization_config(text: str) -> RealizationConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    base = RealizationConfig(name="custom")
    top: dict = {}
    if parser.has_section("realization"):
        for key, raw in parser.items("realization"):
            if key not in _TOP_KEYS:
                raise ConfigError(f"[realization]: unknown key '{key}'")
            top[key] = _convert(raw, _TOP_KEYS[key], f"[realization] {key}")
        if "name" in top and len(top) == 1:
            # A bare canonical name pulls in that realization's defaults.
            try:
                base = realization_by_name(top["name"])
            except CloudRegError:
                base = replace(base, name=top["name"])
            top = {}

    updates: dict = dict(top)
    for section in parser.sections():
        if section == "realization":
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section '[{section}]'")
        attr, dc_type = _SECTIONS[section]
        types = _field_types(dc_type)
        block_updates = {}
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"[{section}]: unknown key '{key}'")
            block_updates[key] = _convert(raw, types[key], f"[{section}] {key}")
        if block_updates:
            updates[attr] = replace(getattr(base, attr), **block_updates)

    try:
        return replace(base, **updates)
    except Exception as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_realization_config(path: str | os.PathLike) -> RealizationConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_realization_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc}") from exc

"""Bundled experiment configurations shipped as config files."""

from __future__ import annotations

from importlib import resources

from .io import RunConfig, parse_config_text

__all__ = ["PRESET_NAMES", "preset_text", "preset_config"]

PRESET_NAMES = ("two-domain", "three-domain", "burgers-1d")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise KeyError(f"unknown preset {name!r}; "
                       f"choose from {', '.join(PRESET_NAMES)}")
    ref = resources.files(__package__).joinpath("presets", f"{name}.cfg")
    return ref.read_text()


def preset_config(name: str) -> RunConfig:
    return parse_config_text(preset_text(name))

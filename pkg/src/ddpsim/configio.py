"""TOML loading shared by the config-file interfaces."""

from __future__ import annotations

from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def load_toml(path) -> dict:
    """Parse a TOML document, surfacing the offending line on bad input."""
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        # TOMLDecodeError messages carry "(at line N, column M)"
        raise ValueError(f"{Path(path)}: parse error: {exc}") from None

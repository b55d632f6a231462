"""Unit-suffixed scalar parsing for configuration files.

Values are written as ``"<number> <unit>"``, e.g. ``"30 pH_per_sq"``,
``"220 uA"`` or ``"0.9 fF_per_um2"``. ``_per_`` stands for division and a
trailing digit on a unit token for a power. Conversion is delegated to pint;
every quantity is checked against the expected target unit so a current can
never be read where a length was meant.
"""

from __future__ import annotations

import math
import re
from decimal import Decimal
from functools import lru_cache

import pint

from kitsim.errors import ConfigError

_TOKEN_POWER = re.compile(r"([A-Za-zµΩ]+)(\d)\b")


@lru_cache(maxsize=1)
def registry() -> pint.UnitRegistry:
    ureg = pint.UnitRegistry()
    ureg.define("square = [] = sq")
    return ureg


def _normalise(unit: str) -> str:
    unit = unit.strip().replace("Ω", "ohm").replace("µ", "u")
    unit = unit.replace("_per_", "/")
    return _TOKEN_POWER.sub(r"\1**\2", unit)


def parse_quantity(text, target: str, *, name: str = "value") -> float:
    """Magnitude of ``text`` expressed in ``target`` units (SI float).

    Bare numbers are rejected unless ``target`` is dimensionless.
    """
    ureg = registry()
    tgt = ureg.Unit(_normalise(target))
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if tgt.dimensionless:
            return float(text)
        raise ConfigError(f"{name}: missing unit (expected something convertible to {target})")
    if not isinstance(text, str) or not text.strip():
        raise ConfigError(f"{name}: expected a unit-suffixed string, got {text!r}")
    parts = text.strip().split(None, 1)
    try:
        magnitude = float(parts[0])
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot read a number from {text!r}") from exc
    if len(parts) == 1:
        if tgt.dimensionless:
            return magnitude
        raise ConfigError(f"{name}: missing unit in {text!r} (expected {target})")
    try:
        unit = ureg.Unit(_normalise(parts[1]))
    except (pint.errors.UndefinedUnitError, pint.errors.DefinitionSyntaxError,
            AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: unknown unit {parts[1]!r}") from exc
    try:
        factor = ureg.Quantity(1.0, unit).to(tgt).magnitude
        if ureg.Quantity(0.0, unit).to(tgt).magnitude != 0.0:
            # offset scales (degC, degF) do not convert by a factor
            return float(ureg.Quantity(magnitude, unit).to(tgt).magnitude)
    except pint.errors.DimensionalityError as exc:
        raise ConfigError(f"{name}: {text!r} is not convertible to {target}") from exc
    return _scale(parts[0], magnitude, factor)


def _scale(literal: str, magnitude: float, factor: float) -> float:
    # decimal prefixes are applied on the literal so "220 uA" gives 220e-6 exactly
    if factor > 0:
        k = round(math.log10(factor))
        if abs(factor / 10.0**k - 1.0) < 1e-12:
            return float(f"{literal}e{k}") if "e" not in literal.lower() else float(
                Decimal(literal).scaleb(k)
            )
    return float(magnitude * factor)


def format_quantity(value: float, unit: str) -> str:
    """Inverse of :func:`parse_quantity` for round trips (``repr`` precision)."""
    return f"{value!r} {unit}"

"""Constitutive laws: in-vivo blood viscosity and hydraulic conductance."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError


@dataclass
class RheologyParameters:
    plasma_viscosity: float = 1.0e-3  # Pa*s
    hematocrit: float = 0.45  # discharge hematocrit, dimensionless

    def __post_init__(self):
        if self.plasma_viscosity <= 0.0:
            raise ValidationError("plasma viscosity must be positive")
        if not 0.0 <= self.hematocrit < 1.0:
            raise ValidationError("hematocrit must lie in [0, 1)")


def apparent_viscosity_45(d: float) -> float:
    """Relative apparent viscosity at 45% hematocrit as a function of the
    dimensionless diameter d (physical diameter / 1 um)."""
    return 6.0 * math.exp(-0.085 * d) + 3.2 - 2.44 * math.exp(-0.06 * d**0.645)


def _shape_coefficient(d: float) -> float:
    w = 1.0 / (1.0 + 1.0e-11 * d**12)
    return (0.8 + math.exp(-0.075 * d)) * (-1.0 + w) + w


def in_vivo_viscosity(diameter_um: float, params: RheologyParameters) -> float:
    """Blood viscosity [Pa*s] for a vessel of dimensionless diameter d.

    Empirical in-vivo law: the relative viscosity at reference hematocrit
    is rescaled by the hematocrit-dependent factor ((1-H)^C - 1) /
    ((1-0.45)^C - 1), with a wall-layer correction (d/(d-1.1))^2 that
    diverges as d -> 1.1.
    """
    d = float(diameter_um)
    if d <= 1.1:
        raise ValidationError(
            f"viscosity law is singular for d <= 1.1 (got d = {d})"
        )
    mu45 = apparent_viscosity_45(d)
    c = _shape_coefficient(d)
    wall = (d / (d - 1.1)) ** 2
    h = params.hematocrit
    ratio = ((1.0 - h) ** c - 1.0) / ((1.0 - 0.45) ** c - 1.0)
    return params.plasma_viscosity * (1.0 + (mu45 - 1.0) * ratio * wall) * wall


def vessel_conductance(radius: float, length: float, viscosity: float) -> float:
    """Poiseuille conductance pi R^4 / (8 mu l) in m^3/(Pa*s)."""
    if radius <= 0.0 or length <= 0.0 or viscosity <= 0.0:
        raise ValidationError("conductance inputs must be positive")
    return math.pi * radius**4 / (8.0 * viscosity * length)


def segment_viscosity(radius: float, params: RheologyParameters) -> float:
    """Viscosity of a segment of the given radius [m]."""
    return in_vivo_viscosity(2.0 * radius / 1.0e-6, params)

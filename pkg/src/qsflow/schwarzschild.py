"""The fixed Schwarzschild background: lapse, coordinate-sphere mean
curvature, and horizon/mass conversions.

Geometric units throughout (G = c = 1), so masses carry length units and the
horizon relation reads 2m = R_H.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["SchwarzschildBackground", "mass_from_horizon_area"]

# keeps the lapse bounded away from 0 in flow initial data
_R0_MARGIN = 1e-9


@dataclass(frozen=True)
class SchwarzschildBackground:
    """Spatial Schwarzschild exterior of mass m, truncated at inner radius r0.

    For m >= 0 the inner radius must sit strictly outside the horizon,
    r0 > 2m (enforced with relative margin 1e-9); for m < 0 any r0 > 0 works.
    """

    m: float
    r0: float

    def __post_init__(self):
        if self.m >= 0.0:
            if self.r0 <= 2.0 * self.m * (1.0 + _R0_MARGIN):
                raise ValueError(
                    f"r0={self.r0} must exceed the horizon radius 2m={2 * self.m} "
                    f"by a relative margin of at least {_R0_MARGIN}"
                )
        elif self.r0 <= 0.0:
            raise ValueError(f"r0={self.r0} must be positive")

    def _check_radius(self, r: float) -> None:
        if r < self.r0:
            raise ValueError(f"radius r={r} is outside the domain [r0={self.r0}, inf)")

    def lapse(self, r: float) -> float:
        """N(r) = sqrt(1 - 2m/r); satisfies N^2 + 2rN dN/dr = 1."""
        self._check_radius(r)
        return math.sqrt(1.0 - 2.0 * self.m / r)

    def lapse_derivative(self, r: float) -> float:
        """dN/dr = m / (r^2 N)."""
        self._check_radius(r)
        return self.m / (r * r * self.lapse(r))

    def mean_curvature(self, r: float) -> float:
        """Mean curvature (2/r) N(r) of the coordinate sphere of radius r."""
        self._check_radius(r)
        return 2.0 / r * self.lapse(r)


def mass_from_horizon_area(area_H: float) -> float:
    """Mass of the Schwarzschild manifold whose horizon has the given area,
    sqrt(area_H / 16*pi)."""
    if area_H <= 0.0:
        raise ValueError(f"horizon area must be positive, got {area_H}")
    return math.sqrt(area_H / (16.0 * math.pi))

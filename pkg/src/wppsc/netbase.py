"""Per-unit impedance algebra shared by the network model and SCR studies.

All quantities are per-unit on the single plant MVA base. An impedance is
stored as a rectangular (r, x) pair; grid strength is expressed through the
short-circuit ratio (SCR) and X/R ratio of the Thevenin equivalent seen at
the connection bus. Two combination conventions coexist on purpose: exact
complex arithmetic and the scalar magnitude convention used by the standard
SCR formulas, which treats every branch as |Z|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ComplexPair:
    """A two-component quantity: (re, im) for phasors, (d, q) for frame vectors."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"ComplexPair components must be finite, got ({self.a}, {self.b})")

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexPair":
        return cls(z.real, z.imag)

    @property
    def as_complex(self) -> complex:
        return complex(self.a, self.b)

    def __add__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(self.a + other.a, self.b + other.b)

    def __sub__(self, other: "ComplexPair") -> "ComplexPair":
        return ComplexPair(self.a - other.a, self.b - other.b)

    def __abs__(self) -> float:
        return math.hypot(self.a, self.b)


@dataclass(frozen=True)
class Impedance:
    """Series R-X branch impedance in pu.

    Resistance must be non-negative and the magnitude strictly positive;
    a zero-magnitude branch is not a usable circuit element.
    """

    r: float
    x: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.r) and math.isfinite(self.x)):
            raise ValueError(f"impedance components must be finite, got ({self.r}, {self.x})")
        if self.r < 0.0:
            raise ValueError(f"impedance resistance must be >= 0, got {self.r}")
        if self.magnitude == 0.0:
            raise ValueError("impedance magnitude must be > 0")

    @property
    def magnitude(self) -> float:
        return math.hypot(self.r, self.x)

    @property
    def angle(self) -> float:
        return math.atan2(self.x, self.r)

    @property
    def as_complex(self) -> complex:
        return complex(self.r, self.x)

    def __add__(self, other: "Impedance") -> "Impedance":
        return Impedance(self.r + other.r, self.x + other.x)


@dataclass(frozen=True)
class GridCase:
    """External grid strength: short-circuit ratio and X/R of the Thevenin branch."""

    scr: float
    x_r: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scr) and self.scr > 0.0):
            raise ValueError(f"grid case scr must be > 0, got {self.scr}")
        if not (math.isfinite(self.x_r) and self.x_r >= 0.0):
            raise ValueError(f"grid case x_r must be >= 0, got {self.x_r}")


def impedance_from_scr_xr(case: GridCase) -> Impedance:
    """Rectangular Thevenin impedance for a grid case.

    |Z| = 1/SCR at 1 pu voltage on the plant base, split so that x/r equals
    the requested X/R ratio.
    """
    mag = 1.0 / case.scr
    r = mag / math.sqrt(1.0 + case.x_r * case.x_r)
    return Impedance(r, case.x_r * r)


def parallel_magnitude(z1: float, z2: float) -> float:
    """Scalar-parallel combination z1*z2/(z1+z2) on magnitudes.

    This is the convention of the closed-form SCR expressions, which combine
    branch magnitudes as if they were aligned.
    """
    if not (z1 > 0.0 and z2 > 0.0) or not (math.isfinite(z1) and math.isfinite(z2)):
        raise ValueError(f"parallel_magnitude requires positive finite magnitudes, got ({z1}, {z2})")
    return z1 * z2 / (z1 + z2)


def parallel_complex(z1: Impedance, z2: Impedance) -> Impedance:
    """Exact complex parallel combination of two branch impedances."""
    s = z1.as_complex + z2.as_complex
    if abs(s) < 1e-12 * (z1.magnitude + z2.magnitude):
        raise ValueError("parallel_complex is singular: z1 + z2 is (near) zero")
    z = z1.as_complex * z2.as_complex / s
    return Impedance(z.real, z.imag)

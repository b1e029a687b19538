"""Laguerre-Gauss mode bookkeeping: indices, truncation, physical parameters.

Modes are labelled by an azimuthal index ``l`` and a radial index ``r``.  A
truncation ``L_cut`` keeps ``-L_cut <= l <= L_cut`` and ``0 <= r <= L_cut`` and
linearises the pairs l-major, r-minor, so that index 0 is ``(l=-L_cut, r=0)``
and index ``N-1`` is ``(l=L_cut, r=L_cut)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gammaln


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True, order=True)
class ModeIndex:
    l: int
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise DomainError(f"radial index must be non-negative, got r={self.r}")


@dataclass(frozen=True)
class Truncation:
    L_cut: int

    def __post_init__(self):
        if self.L_cut < 1:
            raise DomainError(f"L_cut must be >= 1, got {self.L_cut}")

    @property
    def N(self) -> int:
        return dimension(self)

    def contains(self, mode: ModeIndex) -> bool:
        return abs(mode.l) <= self.L_cut and 0 <= mode.r <= self.L_cut

    def modes(self) -> Iterator[ModeIndex]:
        for l in range(-self.L_cut, self.L_cut + 1):
            for r in range(self.L_cut + 1):
                yield ModeIndex(l, r)

    def l_values(self) -> np.ndarray:
        """Azimuthal index of every linear index, as an int array of length N."""
        return np.repeat(np.arange(-self.L_cut, self.L_cut + 1), self.L_cut + 1)

    def r_values(self) -> np.ndarray:
        return np.tile(np.arange(self.L_cut + 1), 2 * self.L_cut + 1)


@dataclass(frozen=True)
class PhysicalParams:
    """Beam and turbulence parameters (SI units).

    wavelength : m
    waist : beam waist omega_0, m
    cn2 : refractive-index structure constant C_n^2, m^(-2/3)
    """

    wavelength: float = 1.0e-6
    waist: float = 0.01
    cn2: float = 1.0e-14

    def __post_init__(self):
        for name in ("wavelength", "waist"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise DomainError(f"{name} must be positive and finite, got {val}")
        if not (math.isfinite(self.cn2) and self.cn2 >= 0):
            raise DomainError(f"cn2 must be non-negative and finite, got {self.cn2}")

    @property
    def k(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def z_R(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @property
    def eta(self) -> float:
        return self.wavelength / self.waist

    def t_of_z(self, z):
        """Dimensionless propagation distance t = z*lambda/(pi*omega_0^2)."""
        return z / self.z_R

    def z_of_t(self, t):
        return t * self.z_R

    def as_dict(self) -> dict:
        return {"wavelength": self.wavelength, "waist": self.waist, "cn2": self.cn2}


def dimension(trunc: Truncation) -> int:
    return (2 * trunc.L_cut + 1) * (trunc.L_cut + 1)


def to_index(mode: ModeIndex, trunc: Truncation) -> int:
    if not trunc.contains(mode):
        raise DomainError(f"{mode} outside truncation L_cut={trunc.L_cut}")
    return (mode.l + trunc.L_cut) * (trunc.L_cut + 1) + mode.r


def from_index(i: int, trunc: Truncation) -> ModeIndex:
    n = dimension(trunc)
    if not 0 <= i < n:
        raise DomainError(f"index {i} outside [0, {n})")
    q, r = divmod(int(i), trunc.L_cut + 1)
    return ModeIndex(q - trunc.L_cut, r)


def log_normalization(l: int, r: int) -> float:
    a = abs(l)
    return 0.5 * (gammaln(r + 1) + (a + 1) * math.log(2) - math.log(math.pi) - gammaln(r + a + 1))


def normalization(mode: ModeIndex) -> float:
    """sqrt(r! 2^(|l|+1) / (pi (r+|l|)!)), the L2 norm constant in waist units."""
    return math.exp(log_normalization(mode.l, mode.r))

"""Mixed discrete/continuous laws on the real line.

A ``DiscreteDistribution`` is a sum of three parts, each tracked exactly where
possible:

* cell masses on a uniform value grid (mass spread evenly over each cell),
* atoms (location, mass),
* normal components (weight, mean, variance).

Convolving with a normal law turns atoms into normal components, shifts and
widens the components, and convolves the cell masses with the normal cell
masses on the same spacing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.signal import fftconvolve
from scipy.stats import norm

from .errors import ValidationError

_LOG = logging.getLogger(__name__)

DIRECT_CONVOLVE_TERMS = 32
NORMAL_SDS = 8.0
MASS_TOL = 1e-6


def _empty() -> NDArray[np.float64]:
    return np.zeros(0)


@dataclass(frozen=True)
class ValueGrid:
    """``cells`` cells of width h, cell k centred at lo + k h."""

    lo: float
    h: float
    cells: int

    def __post_init__(self) -> None:
        """Validate."""
        if self.h <= 0 or self.cells < 0 or not math.isfinite(self.lo):
            raise ValidationError(f"Invalid value grid {self}")

    @classmethod
    def spanning(cls, lo: float, hi: float, cells: int) -> ValueGrid:
        """Grid whose cells exactly cover [lo, hi]."""
        if not lo < hi or cells < 1:
            raise ValidationError(f"Value grid needs lo < hi and cells >= 1, got {lo}, {hi}")
        h = (hi - lo) / cells
        return cls(lo + 0.5 * h, h, cells)

    @classmethod
    def around(cls, mean: float, sd: float, pad: float, cells: int) -> ValueGrid:
        """mean +- (8 sd + pad)."""
        half = NORMAL_SDS * sd + pad
        if half <= 0:
            half = 1.0
        return cls.spanning(mean - half, mean + half, cells)

    @property
    def centres(self) -> NDArray[np.float64]:
        """Cell centres."""
        return self.lo + self.h * np.arange(self.cells)

    @property
    def edges(self) -> NDArray[np.float64]:
        """Cell edges."""
        return self.lo - 0.5 * self.h + self.h * np.arange(self.cells + 1)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Cell masses, atoms and normal components; see the module docstring."""

    grid: ValueGrid = field(default_factory=lambda: ValueGrid(0.0, 1.0, 0))
    masses: NDArray[np.float64] = field(default_factory=_empty)
    atoms_x: NDArray[np.float64] = field(default_factory=_empty)
    atoms_p: NDArray[np.float64] = field(default_factory=_empty)
    comp_w: NDArray[np.float64] = field(default_factory=_empty)
    comp_mean: NDArray[np.float64] = field(default_factory=_empty)
    comp_var: NDArray[np.float64] = field(default_factory=_empty)

    def __post_init__(self) -> None:
        """Validate shapes and signs."""
        if self.masses.shape != (self.grid.cells,):
            raise ValidationError("Cell masses must match the value grid")
        if self.atoms_x.shape != self.atoms_p.shape:
            raise ValidationError("Atom locations and masses differ in length")
        if not self.comp_w.shape == self.comp_mean.shape == self.comp_var.shape:
            raise ValidationError("Normal component arrays differ in length")
        for arr in (self.masses, self.atoms_p, self.comp_w):
            if np.any(arr < 0):
                raise ValidationError("Masses must be non-negative")
        if np.any(self.comp_var <= 0):
            raise ValidationError("Normal component variances must be positive")

    @classmethod
    def atom(cls, x: float, p: float = 1.0) -> DiscreteDistribution:
        """A single atom."""
        return cls(atoms_x=np.array([x]), atoms_p=np.array([p]))

    @classmethod
    def normal(cls, mean: float, var: float) -> DiscreteDistribution:
        """N(mean, var), or an atom at ``mean`` when var is 0."""
        if var <= 0:
            return cls.atom(mean)
        return cls(
            comp_w=np.array([1.0]), comp_mean=np.array([mean]), comp_var=np.array([var])
        )

    @property
    def mass(self) -> float:
        """Total mass."""
        return float(self.masses.sum() + self.atoms_p.sum() + self.comp_w.sum())

    @property
    def mass_defect(self) -> float:
        """|1 - total mass|."""
        return abs(1.0 - self.mass)

    def mean(self) -> float:
        """First moment (normalised by the total mass)."""
        first = (
            self.masses @ self.grid.centres
            + self.atoms_p @ self.atoms_x
            + self.comp_w @ self.comp_mean
        )
        return float(first / self.mass)

    def variance(self) -> float:
        """Central second moment; cell masses count as uniform on their cell."""
        m = self.mean()
        second = (
            self.masses @ ((self.grid.centres - m) ** 2 + self.grid.h**2 / 12)
            + self.atoms_p @ (self.atoms_x - m) ** 2
            + self.comp_w @ (self.comp_var + (self.comp_mean - m) ** 2)
        )
        return float(second / self.mass)

    def atom_mass(self, x: ArrayLike) -> NDArray[np.float64]:
        """Total atom mass located exactly at x."""
        xa = np.asarray(x, dtype=float)
        if self.atoms_x.size == 0:
            return np.zeros_like(xa)
        return (xa[..., None] == self.atoms_x) @ self.atoms_p

    def cdf(self, x: ArrayLike, *, left: bool = False) -> NDArray[np.float64]:
        """P(Y <= x), or P(Y < x) with ``left``."""
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        if self.grid.cells:
            cum = np.concatenate(([0.0], np.cumsum(self.masses)))
            pos = (xa - self.grid.edges[0]) / self.grid.h
            k = np.clip(np.floor(pos).astype(int), 0, self.grid.cells - 1)
            frac = np.clip(pos - k, 0.0, 1.0)
            out = out + np.where(pos >= self.grid.cells, cum[-1], cum[k] + self.masses[k] * frac)
        if self.atoms_x.size:
            hit = xa[..., None] > self.atoms_x if left else xa[..., None] >= self.atoms_x
            out = out + hit @ self.atoms_p
        if self.comp_w.size:
            z = (xa[..., None] - self.comp_mean) / np.sqrt(self.comp_var)
            out = out + norm.cdf(z) @ self.comp_w
        return out

    def discretise(self, grid: ValueGrid) -> NDArray[np.float64]:
        """Masses of the cells of ``grid``, from CDF differences at its edges."""
        edges = grid.edges
        upper = self.cdf(edges[1:])
        lower = self.cdf(edges[:-1])
        return np.clip(upper - lower, 0.0, None)

    def shifted(self, dx: float) -> DiscreteDistribution:
        """Law of Y + dx."""
        return DiscreteDistribution(
            grid=ValueGrid(self.grid.lo + dx, self.grid.h, self.grid.cells),
            masses=self.masses,
            atoms_x=self.atoms_x + dx,
            atoms_p=self.atoms_p,
            comp_w=self.comp_w,
            comp_mean=self.comp_mean + dx,
            comp_var=self.comp_var,
        )

    def convolve_normal(self, mean: float, var: float) -> DiscreteDistribution:
        """Law of Y + Z with Z ~ N(mean, var) independent of Y."""
        if var <= 0:
            return self.shifted(mean)
        moved = self.shifted(mean)
        grid, masses = moved.grid, moved.masses
        if grid.cells:
            half = math.ceil(NORMAL_SDS * math.sqrt(var) / grid.h)
            offs = grid.h * np.arange(-half - 0.5, half + 1.0)
            kernel = np.diff(norm.cdf(offs / math.sqrt(var)))
            masses = np.clip(fftconvolve(masses, kernel), 0.0, None)
            grid = ValueGrid(grid.lo - half * grid.h, grid.h, masses.size)
        return DiscreteDistribution(
            grid=grid,
            masses=masses,
            comp_w=np.concatenate((moved.comp_w, moved.atoms_p)),
            comp_mean=np.concatenate((moved.comp_mean, moved.atoms_x)),
            comp_var=np.concatenate((moved.comp_var + var, np.full(moved.atoms_x.size, var))),
        )


def convolve_power(
    masses: NDArray[np.float64], previous: NDArray[np.float64], n: int
) -> NDArray[np.float64]:
    """Next grid convolution power; direct sums up to 32 terms, FFT beyond."""
    if n <= DIRECT_CONVOLVE_TERMS:
        return np.convolve(previous, masses)
    return np.clip(fftconvolve(previous, masses), 0.0, None)


def grid_compound_sum(
    base_first: int,
    base: NDArray[np.float64],
    weights: NDArray[np.float64],
    h: float,
    origin: float,
) -> DiscreteDistribution:
    """sum_{n >= 1} weights[n-1] base^{*n} on cells of width h centred at origin + k h.

    ``base`` holds the masses of the cells k = base_first, base_first + 1, ...
    """
    n_max = weights.size
    base_last = base_first + base.size - 1
    first = min(base_first, n_max * base_first)
    span = max(base_last, n_max * base_last) - first + 1
    total = np.zeros(span)
    power = np.array([1.0])
    for n in range(1, n_max + 1):
        power = convolve_power(base, power, n)
        start = n * base_first - first
        total[start : start + power.size] += weights[n - 1] * power
    _LOG.debug("grid_compound_sum: %d powers on %d cells", n_max, span)
    return DiscreteDistribution(grid=ValueGrid(origin + first * h, h, span), masses=total)


def merge(*parts: DiscreteDistribution) -> DiscreteDistribution:
    """Sum of laws with at most one cell-mass part."""
    gridded = [p for p in parts if p.grid.cells]
    if len(gridded) > 1:
        raise ValidationError("Cannot merge two gridded parts")
    base = gridded[0] if gridded else DiscreteDistribution()
    return DiscreteDistribution(
        grid=base.grid,
        masses=base.masses,
        atoms_x=np.concatenate([p.atoms_x for p in parts]),
        atoms_p=np.concatenate([p.atoms_p for p in parts]),
        comp_w=np.concatenate([p.comp_w for p in parts]),
        comp_mean=np.concatenate([p.comp_mean for p in parts]),
        comp_var=np.concatenate([p.comp_var for p in parts]),
    )

"""Time grids and sample paths."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ValidationError

GRID_RTOL = 1e-12


def _frozen(values: ArrayLike) -> NDArray[np.float64]:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing observation times in (0, T].

    The grid splits (0, T] into cells (tau_j, tau_{j+1}] with tau_0 = 0 and
    tau_j = times[j-1]; cell j is identified with its left endpoint tau_j.
    """

    times: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Validate."""
        times = _frozen(self.times)
        if times.ndim != 1 or times.size == 0:
            raise ValidationError("TimeGrid needs a non-empty 1-d array of times")
        if not np.all(np.isfinite(times)) or times[0] <= 0:
            raise ValidationError(f"TimeGrid times must be positive, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("TimeGrid times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, T: float, n: int) -> TimeGrid:
        """Grid T/n, 2T/n, ..., T."""
        if T <= 0:
            raise ValidationError(f"Horizon T must be positive, got {T}")
        if n < 1:
            raise ValidationError(f"Grid size n must be at least 1, got {n}")
        return cls(T * np.arange(1, n + 1) / n)

    def __len__(self) -> int:
        """Number of grid times (and cells)."""
        return int(self.times.size)

    def __eq__(self, other: object) -> bool:
        """Equal when the times are identical."""
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return bool(np.array_equal(self.times, other.times))

    def __hash__(self) -> int:
        """Hash of the raw times."""
        return hash(self.times.tobytes())

    @property
    def T(self) -> float:
        """Horizon."""
        return float(self.times[-1])

    @property
    def edges(self) -> NDArray[np.float64]:
        """Cell edges tau_0 = 0, tau_1, ..., tau_n = T."""
        return np.concatenate(([0.0], self.times))

    @property
    def widths(self) -> NDArray[np.float64]:
        """Cell widths."""
        return np.diff(self.edges)

    def index(self, t: float) -> int:
        """Number of cells in (0, t]; ``t`` must be 0 or a grid time."""
        if t == 0:
            return 0
        pos = int(np.searchsorted(self.times, t - GRID_RTOL * self.T))
        if pos >= self.times.size or abs(self.times[pos] - t) > GRID_RTOL * self.T:
            raise ValidationError(f"Time {t} is not on the grid")
        return pos + 1

    def restrict(self, m: int) -> TimeGrid:
        """Grid of the first ``m`` times."""
        if not 1 <= m <= len(self):
            raise ValidationError(f"Cannot restrict a grid of {len(self)} to {m}")
        return TimeGrid(self.times[:m])


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Process values at the grid times, with implicit value 0 at time 0."""

    grid: TimeGrid
    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        """Validate."""
        values = _frozen(self.values)
        if values.shape != self.grid.times.shape:
            raise ValidationError(
                f"Path has {values.size} values for {len(self.grid)} grid times"
            )
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        """Number of values."""
        return int(self.values.size)

    def increments(self) -> NDArray[np.float64]:
        """Increment over each cell."""
        return np.diff(self.values, prepend=0.0)

    def at(self, t: float) -> float:
        """Value at a grid time (0 at time 0)."""
        m = self.grid.index(t)
        return 0.0 if m == 0 else float(self.values[m - 1])

    def restrict(self, u: float) -> SamplePath:
        """The path observed on (0, u]."""
        m = self.grid.index(u)
        return SamplePath(self.grid.restrict(m), self.values[:m])

    @classmethod
    def from_increments(cls, grid: TimeGrid, increments: ArrayLike) -> SamplePath:
        """Path with the given cell increments."""
        return cls(grid, np.cumsum(np.asarray(increments, dtype=float)))

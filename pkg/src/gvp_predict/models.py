"""Gaussian Volterra model descriptors.

A model exposes its covariance R(t,s), its Volterra kernel K(t,s) and the
bracket v of the driving martingale. All families here have v(t) = t.

On a grid the kernel is the lower-triangular A with A diag(dv) A^T equal to
R at the grid times, memoised once per grid.
"""

from __future__ import annotations

import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ValidationError
from .grid import TimeGrid
from .kernels import (
    check_ccm,
    check_hurst,
    fbm_brownian_cross,
    fbm_covariance,
    fbm_kernel_values,
    fbm_psi_values,
)
from .quadrature import integrate_graded
from .simulation import cholesky_factor

if TYPE_CHECKING:
    from .wiener_hopf import WhSolution

_LOG = logging.getLogger(__name__)

@dataclass(eq=False)
class VolterraModel(ABC):
    """Kernel, covariance and bracket of a Gaussian Volterra process."""

    tol: float = field(default=1e-10, kw_only=True)
    """Absolute tolerance of kernel quadratures."""
    _cells: dict[TimeGrid, NDArray[np.float64]] = field(
        default_factory=dict, init=False, repr=False
    )
    _lock: threading.Lock = field(
        default_factory=threading.Lock, init=False, repr=False
    )

    name = "volterra"
    closed_form = True
    """Kernel available at arbitrary (t, s)."""
    origin_exponent = 0.0
    """K(t,s) ~ s^e as s -> 0."""
    diagonal_exponent = 0.0
    """K(t,s) ~ (t-s)^e as s -> t."""

    @abstractmethod
    def covariance(self, t: ArrayLike, s: ArrayLike) -> NDArray[np.float64] | float:
        """R(t,s)."""

    @abstractmethod
    def kernel_values(self, t: float, s: ArrayLike) -> NDArray[np.float64]:
        """K(t, s) for an array of s; zero where s >= t."""

    def bracket(self, t: ArrayLike) -> NDArray[np.float64]:
        """v(t)."""
        return np.asarray(t, dtype=float)

    def dv(self, grid: TimeGrid) -> NDArray[np.float64]:
        """Bracket increments over the grid cells."""
        return np.diff(self.bracket(grid.edges))

    def variance_scale(self) -> float:
        """Multiplier of the Gaussian part (1 = unchanged)."""
        return 1.0

    def describe(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"family": self.name}

    def cell_kernel(self, grid: TimeGrid) -> NDArray[np.float64]:
        """Lower-triangular A with A diag(dv) A^T = R on the grid."""
        with self._lock:
            cached = self._cells.get(grid)
            if cached is None:
                cached = self._build_cells(grid)
                cached.setflags(write=False)
                self._cells[grid] = cached
        return cached

    def _build_cells(self, grid: TimeGrid) -> NDArray[np.float64]:
        factor = cholesky_factor(self.grid_covariance(grid), f"{self.name} covariance")
        _LOG.debug("%s: grid kernel on %d cells", self.name, len(grid))
        return factor / np.sqrt(self.dv(grid))

    def grid_covariance(self, grid: TimeGrid) -> NDArray[np.float64]:
        """R(t_i, t_k) over the grid."""
        t = grid.times
        return np.asarray(self.covariance(t[:, None], t[None, :]), dtype=float)

    def kernel_product_integral(self, t: float, s: float, u: float) -> float:
        """int_0^u K(t,x) K(s,x) dv(x) by graded singular quadrature."""
        if u <= 0:
            return 0.0

        def integrand(x: NDArray[np.float64]) -> NDArray[np.float64]:
            return self.kernel_values(t, x) * self.kernel_values(s, x)

        beta = self.diagonal_exponent * ((t <= u) + (s <= u))
        res = integrate_graded(
            integrand, 0.0, u, 2 * self.origin_exponent, beta, self.tol
        )
        return res.value

    def psi_values(self, t: float, s: ArrayLike, u: float) -> NDArray[np.float64]:
        """Closed-form prediction kernel, where the family has one."""
        raise ValidationError(f"No closed-form prediction kernel for {self.name}")

    @property
    def has_psi(self) -> bool:
        """True if psi_values is available."""
        return False


@dataclass(eq=False)
class FbmModel(VolterraModel):
    """Fractional Brownian motion; H = 1/2 is Brownian motion."""

    H: float = 0.5
    scale: float = field(default=1.0, kw_only=True)
    """Multiplier of the process (0 gives the zero process)."""

    name = "fbm"

    def __post_init__(self) -> None:
        """Validate."""
        check_hurst(self.H)

    @property
    def origin_exponent(self) -> float:  # type: ignore[override]
        """Origin singularity of the Molchan kernel."""
        return -abs(self.H - 0.5)

    @property
    def diagonal_exponent(self) -> float:  # type: ignore[override]
        """Diagonal behaviour of the Molchan kernel."""
        return self.H - 0.5

    def covariance(self, t: ArrayLike, s: ArrayLike) -> NDArray[np.float64] | float:
        """R_H(t,s)."""
        return self.scale**2 * fbm_covariance(t, s, self.H)

    def kernel_values(self, t: float, s: ArrayLike) -> NDArray[np.float64]:
        """Scaled K_H."""
        return self.scale * fbm_kernel_values(t, s, self.H, self.tol)

    def variance_scale(self) -> float:
        """Process multiplier."""
        return self.scale

    def describe(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"family": self.name, "H": self.H}

    def psi_values(self, t: float, s: ArrayLike, u: float) -> NDArray[np.float64]:
        """Psi_H(t, s|u); independent of the scale."""
        return fbm_psi_values(t, s, u, self.H, self.tol)

    @property
    def has_psi(self) -> bool:
        """Closed form available."""
        return True


@dataclass(eq=False)
class CcmFbmModel(VolterraModel):
    """Completely correlated mixed fBm a W + b B^H."""

    a: float = 1.0
    b: float = 0.0
    H: float = 0.75

    name = "ccmfbm"

    def __post_init__(self) -> None:
        """Validate."""
        check_ccm(self.a, self.H)

    @property
    def origin_exponent(self) -> float:  # type: ignore[override]
        """The b K_H part dominates at the origin."""
        return 0.0 if self.b == 0 else 0.5 - self.H

    def kernel_values(self, t: float, s: ArrayLike) -> NDArray[np.float64]:
        """a 1_t(s) + b K_H(t,s)."""
        sa = np.asarray(s, dtype=float)
        out = np.where(sa < t, self.a, 0.0)
        if self.b != 0:
            out = out + self.b * fbm_kernel_values(t, sa, self.H, self.tol)
        return out

    def covariance(self, t: ArrayLike, s: ArrayLike) -> NDArray[np.float64] | float:
        """a^2 (t^s) + ab (E[W_t B_s] + E[B_t W_s]) + b^2 R_H(t,s)."""
        ta, sa = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
        low = np.minimum(ta, sa)
        cross = self._cross(ta, low) + self._cross(sa, low)
        out = (
            self.a**2 * low
            + self.a * self.b * cross
            + self.b**2 * np.asarray(fbm_covariance(ta, sa, self.H))
        )
        return float(out) if out.ndim == 0 else out

    def _cross(self, t: ArrayLike, upper: ArrayLike) -> NDArray[np.float64]:
        """int_0^upper K_H(t,x) dx = E[B^H_t W_upper]."""
        if self.b == 0:
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(upper)).shape)
        return fbm_brownian_cross(t, upper, self.H, self.tol)

    def describe(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"family": self.name, "a": self.a, "b": self.b, "H": self.H}


@dataclass(eq=False)
class MfbmModel(VolterraModel):
    """Mixed fBm W + B^H, backed by a Wiener-Hopf solution on one grid."""

    solution: WhSolution | None = None

    name = "mfbm"
    closed_form = False

    def __post_init__(self) -> None:
        """Validate."""
        if self.solution is None:
            raise ValidationError("mfBm model needs a Wiener-Hopf solution")
        check_ccm(1.0, self.solution.H)

    @property
    def H(self) -> float:
        """Hurst index of the fBm component."""
        assert self.solution is not None
        return self.solution.H

    @property
    def grid(self) -> TimeGrid:
        """The grid the kernel lives on."""
        assert self.solution is not None
        return self.solution.grid

    def covariance(self, t: ArrayLike, s: ArrayLike) -> NDArray[np.float64] | float:
        """min(t,s) + R_H(t,s)."""
        return np.minimum(t, s) + fbm_covariance(t, s, self.H)

    def kernel_values(self, t: float, s: ArrayLike) -> NDArray[np.float64]:
        """Cell value of Ktilde(t, .) at the cells containing s; t on the grid."""
        i = self.grid.index(t) - 1
        if i < 0:
            return np.zeros_like(np.asarray(s, dtype=float))
        sa = np.asarray(s, dtype=float)
        j = np.searchsorted(self.grid.edges, sa, side="right") - 1
        j = np.clip(j, 0, len(self.grid) - 1)
        return np.where(sa < t, self.cell_kernel(self.grid)[i, j], 0.0)

    def _build_cells(self, grid: TimeGrid) -> NDArray[np.float64]:
        if grid != self.grid:
            raise ValidationError(
                "mfBm kernel is only known on its Wiener-Hopf grid "
                f"(n={len(self.grid)}, T={self.grid.T})"
            )
        assert self.solution is not None
        return np.array(self.solution.ktilde)

    def kernel_product_integral(self, t: float, s: float, u: float) -> float:
        """Cell sum of Ktilde(t,.) Ktilde(s,.) dv over (0, u]."""
        grid = self.grid
        m = grid.index(u)
        A = self.cell_kernel(grid)
        i, k = grid.index(t) - 1, grid.index(s) - 1
        return float(np.sum(A[i, :m] * A[k, :m] * self.dv(grid)[:m]))

    def describe(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"family": self.name, "H": self.H, "wh_grid_n": len(self.grid)}

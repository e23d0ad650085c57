"""Path generation for X = G + J.

The Gaussian part is drawn either exactly from its covariance (Cholesky) or
through the discrete Volterra representation G = A dM. Jumps come from an
independent stream: one user seed is split into two child seeds, so the
Gaussian and jump draws never share random numbers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cholesky

from .errors import FactorizationError, ValidationError
from .grid import SamplePath, TimeGrid
from .jumps import JumpSpec
from .operators import DiscreteOperator, build_operator, forward_map

if TYPE_CHECKING:
    from .models import VolterraModel

_LOG = logging.getLogger(__name__)

JITTER = 1e-12

Seed = int | np.random.SeedSequence | np.random.Generator


def rng_from(seed: Seed) -> np.random.Generator:
    """Generator for an int seed, a SeedSequence or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_seed(seed: int | np.random.SeedSequence) -> tuple[np.random.SeedSequence, ...]:
    """Child seeds of the Gaussian and the jump stream."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    gauss, jumps = ss.spawn(2)
    return gauss, jumps


def cholesky_factor(cov: ArrayLike, what: str = "covariance") -> NDArray[np.float64]:
    """Lower Cholesky factor, retrying once with 1e-12 trace/n on the diagonal.

    The zero matrix factors as itself.
    """
    mat = np.array(cov, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"{what} must be a square matrix, got {mat.shape}")
    if mat.size == 0 or not np.any(mat):
        return np.zeros_like(mat)
    try:
        return cholesky(mat, lower=True)
    except LinAlgError:
        pass
    jitter = JITTER * float(np.trace(mat)) / mat.shape[0]
    _LOG.warning("%s not positive definite, adding jitter %.3g", what, jitter)
    try:
        return cholesky(mat + jitter * np.eye(mat.shape[0]), lower=True)
    except LinAlgError as err:
        raise FactorizationError(
            f"{what} is not positive semi-definite within jitter {jitter:.3g}"
        ) from err


def covariance_matrix(model: VolterraModel, grid: TimeGrid) -> NDArray[np.float64]:
    """R(t_i, t_j) over the grid."""
    return model.grid_covariance(grid)


def sample_gaussian_cholesky(
    model: VolterraModel, grid: TimeGrid, rng: Seed, n_paths: int
) -> NDArray[np.float64]:
    """``n_paths`` exact samples of (G_{t_i}), one per row."""
    factor = cholesky_factor(covariance_matrix(model, grid))
    z = rng_from(rng).standard_normal((n_paths, len(grid)))
    return z @ factor.T


def simulate_gaussian_cholesky(
    model: VolterraModel, grid: TimeGrid, seed: Seed
) -> SamplePath:
    """One exact sample of G on the grid."""
    return SamplePath(grid, sample_gaussian_cholesky(model, grid, seed, 1)[0])


def sample_martingale(op: DiscreteOperator, rng: Seed, n_paths: int) -> NDArray[np.float64]:
    """Independent N(0, dv_j) increments, one row per path."""
    return rng_from(rng).standard_normal((n_paths, len(op))) * np.sqrt(op.dv)


def simulate_gaussian_volterra(
    op: DiscreteOperator, seed: Seed, *, dM: ArrayLike | None = None
) -> tuple[SamplePath, NDArray[np.float64]]:
    """G(t_i) = sum_j A[i, j] dM_j with fresh increments unless ``dM`` is given."""
    inc = sample_martingale(op, seed, 1)[0] if dM is None else np.asarray(dM, float)
    return forward_map(op, inc), inc


def simulate_compound_poisson(
    spec: JumpSpec, horizon: float, seed: Seed
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Jump times on (0, horizon] from exponential inter-arrivals, and sizes."""
    if horizon <= 0:
        raise ValidationError(f"Jump horizon must be positive, got {horizon}")
    rng = rng_from(seed)
    times: list[float] = []
    if spec.intensity > 0:
        scale = 1.0 / spec.intensity
        now = rng.exponential(scale)
        while now <= horizon:
            times.append(now)
            now += rng.exponential(scale)
    sizes = spec.dist.sample(rng, len(times))
    return np.asarray(times, dtype=float), sizes


def jump_path(
    grid: TimeGrid, jump_times: ArrayLike, jump_sizes: ArrayLike
) -> SamplePath:
    """Right-continuous running sum of the jumps at the grid times."""
    times = np.asarray(jump_times, dtype=float)
    sizes = np.asarray(jump_sizes, dtype=float)
    counts = np.searchsorted(times, grid.times, side="right")
    running = np.concatenate(([0.0], np.cumsum(sizes)))
    return SamplePath(grid, running[counts])


@dataclass(frozen=True, eq=False)
class MixedPath:
    """A simulated decomposition X = G + J."""

    G: SamplePath
    J: SamplePath
    X: SamplePath
    jump_times: NDArray[np.float64]
    jump_sizes: NDArray[np.float64]
    M_increments: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        """Check the construction identity."""
        if not self.G.grid == self.J.grid == self.X.grid:
            raise ValidationError("G, J and X must share one grid")
        if not np.array_equal(self.X.values, self.G.values + self.J.values):
            raise ValidationError("X must equal G + J")

    @property
    def grid(self) -> TimeGrid:
        """The common grid."""
        return self.X.grid

    @classmethod
    def combine(
        cls,
        G: SamplePath,
        jump_times: NDArray[np.float64],
        jump_sizes: NDArray[np.float64],
        M_increments: NDArray[np.float64] | None = None,
    ) -> MixedPath:
        """Sample the jumps onto the grid of G and add them."""
        J = jump_path(G.grid, jump_times, jump_sizes)
        X = SamplePath(G.grid, G.values + J.values)
        return cls(G, J, X, jump_times, jump_sizes, M_increments)


def simulate_mixed(
    model: VolterraModel,
    spec: JumpSpec,
    grid: TimeGrid,
    seed: int | np.random.SeedSequence,
    *,
    method: str = "volterra",
    jump_seed: int | np.random.SeedSequence | None = None,
) -> MixedPath:
    """X = G + J with independent Gaussian and jump streams.

    ``jump_seed`` replaces the jump child seed and leaves G untouched.
    """
    gauss_ss, jump_ss = split_seed(seed)
    if jump_seed is not None:
        _, jump_ss = split_seed(jump_seed)
    dM = None
    if method == "volterra":
        G, dM = simulate_gaussian_volterra(build_operator(model, grid), gauss_ss)
    elif method == "cholesky":
        G = simulate_gaussian_cholesky(model, grid, gauss_ss)
    else:
        raise ValidationError(f"Unknown simulation method {method!r}")
    times, sizes = simulate_compound_poisson(spec, grid.T, jump_ss)
    _LOG.debug("simulate_mixed: %s, %d jumps", method, times.size)
    return MixedPath.combine(G, times, sizes, dM)


def detect_jumps(
    X: SamplePath, threshold: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Grid increments with |dX| > threshold, reported at the right cell end.

    A heuristic: a jump and a large Gaussian increment in the same cell are
    indistinguishable.
    """
    if threshold <= 0:
        raise ValidationError(f"Jump threshold must be positive, got {threshold}")
    inc = X.increments()
    hit = np.abs(inc) > threshold
    return X.grid.times[hit].copy(), inc[hit]

"""Grid solver for the mixed fBm Wiener-Hopf equations.

For H > 1/2 and c = H(2H-1):

    L(t,s) + c int_0^t L(t,x) |s-x|^(2H-2) dx = -c |t-s|^(2H-2)
    phi(t) = 1 - int_0^t L(t,x) dx
    q(t,s) + c int_0^t q(t,x) |s-x|^(2H-2) dx = phi(s)

Each row t = t_i is solved with piecewise-constant unknowns on the cells of
(0, t_i]; the equations are averaged over each cell so that every weight is an
exact double integral of |s-x|^(2H-2). The representation
Wtilde(t) = int_0^t q(t,s) dMtilde_s is inverted on the grid to give the
Volterra kernel Ktilde of the mixed fBm.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, solve, solve_triangular

from .errors import ResidualError, SingularOperatorError, ValidationError
from .grid import TimeGrid
from .kernels import fbm_covariance
from .log import LogBase
from .quadrature import power_cell_integrals, power_cell_weights

_LOG = logging.getLogger(__name__)

RESIDUAL_LIMIT = 1e-8
BRACKET_WARN = 0.02

RowRhs = Callable[[int], NDArray[np.float64]]


@dataclass(frozen=True, eq=False)
class WhSolution:
    """Solved L, phi, q and the kernel Ktilde on one grid."""

    grid: TimeGrid
    H: float
    L: NDArray[np.float64]
    """L[i, j]: cell value of L(t_i, .) on cell j (j <= i)."""
    phi: NDArray[np.float64]
    q: NDArray[np.float64]
    ktilde: NDArray[np.float64]
    dv: NDArray[np.float64]
    """Realised bracket increments of Wtilde."""
    residuals: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate shapes."""
        n = len(self.grid)
        for name in ("L", "q", "ktilde"):
            if getattr(self, name).shape != (n, n):
                raise ValidationError(f"WhSolution.{name} must be {n}x{n}")
        for name in ("phi", "dv"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"WhSolution.{name} must have {n} entries")
        if np.any(self.dv <= 0):
            raise ValidationError("WhSolution bracket increments must be positive")

    @property
    def bracket_defect(self) -> float:
        """max |v(t_i) - t_i| / t_i of the realised bracket."""
        v = np.cumsum(self.dv)
        return float(np.max(np.abs(v - self.grid.times) / self.grid.times))


def _check(grid: TimeGrid, H: float) -> None:
    if not 0.5 < H < 1:
        raise ValidationError(f"mfBm Wiener-Hopf equations need H in (1/2, 1), got {H}")
    if len(grid) > 4096:
        raise ValidationError(f"Wiener-Hopf grid too large: n={len(grid)}")


def increment_covariance(grid: TimeGrid, H: float) -> NDArray[np.float64]:
    """c int_cell_k int_cell_j |s-x|^(2H-2) dx ds, the fBm increment covariance."""
    return H * (2 * H - 1) * power_cell_weights(grid.edges, 2 * H - 2)


def _solve_rows(
    grid: TimeGrid,
    H: float,
    rhs: RowRhs,
    kernel_scale: float,
    threads: int,
    what: str,
) -> tuple[NDArray[np.float64], float]:
    """Solve x + (kernel_scale/h) Sigma x = rhs on every row; return matrix, residual."""
    sigma = kernel_scale * increment_covariance(grid, H)
    h = grid.widths
    n = len(grid)

    def row(i: int) -> tuple[NDArray[np.float64], float]:
        m = i + 1
        b = rhs(i)
        mat = np.diag(h[:m]) + sigma[:m, :m]
        try:
            x = solve(mat, h[:m] * b, assume_a="pos")
        except LinAlgError as err:
            raise SingularOperatorError(i, float(mat[i, i])) from err
        res = x + sigma[:m, :m] @ x / h[:m] - b
        return x, float(np.max(np.abs(res)))

    out = np.zeros((n, n))
    worst = 0.0
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    for i, (x, res) in enumerate(rows):
        out[i, : i + 1] = x
        worst = max(worst, res)
    _LOG.debug("%s: %d rows solved, residual %.3g", what, n, worst)
    return out, worst


def _solve_L(
    grid: TimeGrid,
    H: float,
    forcing_scale: float = 1.0,
    kernel_scale: float = 1.0,
    threads: int = 1,
) -> tuple[NDArray[np.float64], float]:
    _check(grid, H)
    edges = grid.edges
    h = grid.widths
    c = H * (2 * H - 1)

    def rhs(i: int) -> NDArray[np.float64]:
        t = edges[i + 1]
        force = power_cell_integrals(edges[: i + 2], t, 2 * H - 2)
        return -forcing_scale * c * force / h[: i + 1]

    return _solve_rows(grid, H, rhs, kernel_scale, threads, "L")


def solve_L(
    grid: TimeGrid,
    H: float,
    *,
    forcing_scale: float = 1.0,
    kernel_scale: float = 1.0,
    threads: int = 1,
) -> NDArray[np.float64]:
    """Row-wise solution of the L equation; L[i, j] on cell j of (0, t_i]."""
    mat, res = _solve_L(grid, H, forcing_scale, kernel_scale, threads)
    if res > RESIDUAL_LIMIT:
        raise ResidualError("L equation", res, RESIDUAL_LIMIT)
    return mat


def compute_phi(L: ArrayLike, grid: TimeGrid) -> NDArray[np.float64]:
    """phi(t_i) = 1 - int_0^t_i L(t_i, x) dx."""
    La = np.asarray(L, dtype=float)
    n = len(grid)
    if La.shape != (n, n):
        raise ValidationError(f"L is {La.shape}, grid has {n} times")
    return 1.0 - np.tril(La) @ grid.widths


def _cell_phi(phi: NDArray[np.float64], grid: TimeGrid, at_zero: float | None) -> NDArray[np.float64]:
    """Trapezoidal cell averages of phi; phi(0) is extrapolated unless given."""
    if at_zero is None:
        if phi.size > 1:
            slope = (phi[1] - phi[0]) / grid.widths[1]
            at_zero = float(phi[0] - slope * grid.widths[0])
        else:
            at_zero = float(phi[0])
    nodes = np.concatenate(([at_zero], phi))
    return 0.5 * (nodes[:-1] + nodes[1:])


def _solve_q(  # noqa: PLR0913
    grid: TimeGrid,
    H: float,
    phi: ArrayLike,
    *,
    phi_at_zero: float | None = None,
    kernel_scale: float = 1.0,
    threads: int = 1,
) -> tuple[NDArray[np.float64], float]:
    _check(grid, H)
    pa = np.asarray(phi, dtype=float)
    if pa.shape != (len(grid),):
        raise ValidationError(f"phi has {pa.size} values for {len(grid)} grid times")
    avg = _cell_phi(pa, grid, phi_at_zero)
    return _solve_rows(grid, H, lambda i: avg[: i + 1], kernel_scale, threads, "q")


def solve_q(  # noqa: PLR0913
    grid: TimeGrid,
    H: float,
    phi: ArrayLike,
    *,
    phi_at_zero: float | None = None,
    kernel_scale: float = 1.0,
    threads: int = 1,
) -> NDArray[np.float64]:
    """Row-wise solution of the q equation with right-hand side phi.

    ``phi_at_zero`` is phi(0); by default it is extrapolated from the first
    two grid values.
    """
    mat, res = _solve_q(
        grid, H, phi, phi_at_zero=phi_at_zero, kernel_scale=kernel_scale, threads=threads
    )
    if res > RESIDUAL_LIMIT:
        raise ResidualError("q equation", res, RESIDUAL_LIMIT)
    return mat


def _representation_weights(q: NDArray[np.float64], grid: TimeGrid) -> NDArray[np.float64]:
    """w[i, j] = -(I(t_i, tau_{j+1}) - I(t_i, tau_j)) / h_j, I(t,s) = int_s^t q(t,x) dx."""
    h = grid.widths
    cells = np.tril(q) * h
    # I(t_i, tau_j) as a reverse cumulative sum over the cells of row i
    tail = np.cumsum(cells[:, ::-1], axis=1)[:, ::-1]
    upper = np.concatenate((tail[:, 1:], np.zeros((len(grid), 1))), axis=1)
    return np.tril(-(upper - tail) / h)


def mfbm_kernel(q: ArrayLike, grid: TimeGrid) -> NDArray[np.float64]:
    """Kernel of Mtilde against Wtilde = int q dMtilde, inverted on the grid.

    Row i of the result holds the cell values of the kernel at t_i; the
    bracket of Wtilde is not normalised here (see ``normalise_kernel``).
    """
    qa = np.asarray(q, dtype=float)
    n = len(grid)
    if qa.shape != (n, n):
        raise ValidationError(f"q is {qa.shape}, grid has {n} times")
    w = _representation_weights(qa, grid)
    incr = np.diff(w, axis=0, prepend=0.0)
    diag = np.diag(incr)
    bad = np.flatnonzero(np.abs(diag) < 1e-12)
    if bad.size:
        raise SingularOperatorError(int(bad[0]), float(diag[bad[0]]))
    inv = solve_triangular(incr, np.eye(n), lower=True)
    return np.tril(np.cumsum(inv, axis=0))


def realised_bracket(q: ArrayLike, grid: TimeGrid, H: float) -> NDArray[np.float64]:
    """Variance increments of Wtilde(t_i) = sum_j w[i,j] dMtilde_j."""
    w = _representation_weights(np.asarray(q, dtype=float), grid)
    cov = np.diag(grid.widths) + increment_covariance(grid, H)
    var = np.einsum("ij,jk,ik->i", w, cov, w)
    return np.diff(var, prepend=0.0)


def normalise_kernel(
    kernel: ArrayLike, dv: ArrayLike, grid: TimeGrid
) -> NDArray[np.float64]:
    """Kernel against the Brownian motion int sqrt(dt / dv) dWtilde, so v(t) = t."""
    dva = np.asarray(dv, dtype=float)
    if np.any(dva <= 0):
        raise ValidationError("Bracket increments must be positive")
    return np.asarray(kernel, dtype=float) * np.sqrt(dva / grid.widths)


def reconstruction_error(
    ktilde: ArrayLike, grid: TimeGrid, H: float, *, start: int = 0
) -> float:
    """max |sum Ktilde Ktilde dt - min(t,s) - R_H(t,s)| / R(t,s) over rows >= start."""
    A = np.asarray(ktilde, dtype=float)
    t = grid.times
    ref = np.minimum(t[:, None], t[None, :]) + np.asarray(
        fbm_covariance(t[:, None], t[None, :], H)
    )
    cov = (A * grid.widths) @ A.T
    rel = np.abs(cov - ref) / ref
    return float(np.max(rel[start:, start:]))


@dataclass
class WhSolver(LogBase):
    """Solve the full chain L -> phi -> q -> Ktilde on one grid."""

    grid: TimeGrid = field(default_factory=lambda: TimeGrid.uniform(1.0, 64))
    H: float = 0.75
    threads: int = 1

    _log_prefix = "WH: "

    def solve(self) -> WhSolution:
        """Run the solver chain and check residuals."""
        self.log_info("solving n=%d, H=%s", len(self.grid), self.H)
        L, res_l = _solve_L(self.grid, self.H, threads=self.threads)
        if res_l > RESIDUAL_LIMIT:
            raise ResidualError("L equation", res_l, RESIDUAL_LIMIT)
        phi = compute_phi(L, self.grid)
        q, res_q = _solve_q(self.grid, self.H, phi, phi_at_zero=1.0, threads=self.threads)
        if res_q > RESIDUAL_LIMIT:
            raise ResidualError("q equation", res_q, RESIDUAL_LIMIT)
        dv = realised_bracket(q, self.grid, self.H)
        ktilde = normalise_kernel(mfbm_kernel(q, self.grid), dv, self.grid)
        sol = WhSolution(
            grid=self.grid,
            H=self.H,
            L=L,
            phi=phi,
            q=q,
            ktilde=ktilde,
            dv=dv,
            residuals={"L": res_l, "q": res_q},
        )
        self.log_debug("residuals L=%.3g q=%.3g", res_l, res_q)
        if sol.bracket_defect > BRACKET_WARN:
            self.log_warn(
                "bracket of Wtilde differs from t by %.2f%%, kernel rescaled to v(t)=t",
                100 * sol.bracket_defect,
            )
        return sol


def solve_wh(grid: TimeGrid, H: float, threads: int = 1) -> WhSolution:
    """Solve the Wiener-Hopf chain on ``grid``."""
    return WhSolver(grid=grid, H=H, threads=threads).solve()

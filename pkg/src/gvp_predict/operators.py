"""Grid realisation of K, K* and (K*)^-1 for a Volterra model.

Cell ``j`` of the grid is (tau_j, tau_{j+1}]. With ``A[i, j]`` the kernel of
row t_i averaged over cell j, the increment-of-kernel matrix is

    B[j, i] = A[i, j] - A[i-1, j]        (B[j, i] = 0 for j > i)

so that ``dG_i = sum_j B[j, i] dM_j`` and the adjoint applied to the indicator
of [0, t_k) telescopes to row k of ``A``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import solve_triangular

from .errors import SingularOperatorError, ValidationError
from .grid import SamplePath, TimeGrid
from .quadrature import fixed_rule_average

if TYPE_CHECKING:
    from .models import VolterraModel

_LOG = logging.getLogger(__name__)

DIAGONAL_THRESHOLD = 1e-12
PSI_NODES = 16


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Kernel-increment matrix of one model on one grid."""

    grid: TimeGrid
    kernel: NDArray[np.float64]
    """A[i, j]: cell value of K(t_i, .) on cell j."""
    B: NDArray[np.float64]
    dv: NDArray[np.float64]
    model: VolterraModel | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        """Validate triangularity and the bracket."""
        n = len(self.grid)
        if self.B.shape != (n, n) or self.kernel.shape != (n, n):
            raise ValidationError(f"Operator matrices must be {n}x{n}")
        if np.any(np.tril(self.B, -1)):
            raise ValidationError("B must vanish below the diagonal")
        if self.dv.shape != (n,) or np.any(self.dv <= 0):
            raise ValidationError("Bracket increments must be positive")

    def __len__(self) -> int:
        """Grid size."""
        return len(self.grid)


def kernel_increments(kernel: NDArray[np.float64]) -> NDArray[np.float64]:
    """B[j, i] = A[i, j] - A[i-1, j]."""
    return np.triu(np.diff(kernel, axis=0, prepend=0.0).T)


def build_operator(model: VolterraModel, grid: TimeGrid) -> DiscreteOperator:
    """Assemble B and dv from the memoised cell kernel of ``model``."""
    A = np.array(model.cell_kernel(grid))
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{model.name} kernel is not finite on the grid")
    B = kernel_increments(A)
    for arr in (A, B):
        arr.setflags(write=False)
    dv = np.array(model.dv(grid))
    dv.setflags(write=False)
    _LOG.debug("operator %s n=%d built", model.name, len(grid))
    return DiscreteOperator(grid=grid, kernel=A, B=B, dv=dv, model=model)


def _vector(op: DiscreteOperator, f: ArrayLike, what: str) -> NDArray[np.float64]:
    fa = np.asarray(f, dtype=float)
    if fa.shape != (len(op),):
        raise ValidationError(f"{what} has {fa.size} samples for {len(op)} grid cells")
    return fa


def _check_diagonal(B: NDArray[np.float64]) -> None:
    diag = np.diag(B)
    bad = np.flatnonzero(np.abs(diag) < DIAGONAL_THRESHOLD)
    if bad.size:
        raise SingularOperatorError(int(bad[0]), float(diag[bad[0]]))


def adjoint_apply(op: DiscreteOperator, f: ArrayLike) -> NDArray[np.float64]:
    """(K* f)_j = sum_{i >= j} f_i B[j, i]."""
    return op.B @ _vector(op, f, "f")


def adjoint_invert(op: DiscreteOperator, g: ArrayLike) -> NDArray[np.float64]:
    """Solve adjoint_apply(op, f) = g for f (back substitution)."""
    ga = _vector(op, g, "g")
    _check_diagonal(op.B)
    return solve_triangular(op.B, ga, lower=False)


def indicator(grid: TimeGrid, t: float) -> NDArray[np.float64]:
    """Cell values of 1_[0, t)."""
    out = np.zeros(len(grid))
    out[: grid.index(t)] = 1.0
    return out


def kernel_row(op: DiscreteOperator, t: float) -> NDArray[np.float64]:
    """Cell values of K(t, .); zero for t = 0."""
    m = op.grid.index(t)
    return np.zeros(len(op)) if m == 0 else np.array(op.kernel[m - 1])


def _closed_form_psi(
    op: DiscreteOperator, t: float, u: float, m: int
) -> NDArray[np.float64]:
    model = op.model
    if model is None or not model.has_psi:
        raise ValidationError("Closed-form psi needs a model with a closed form")
    edges = op.grid.edges
    d = getattr(model, "H", 0.5) - 0.5
    lo, hi = edges[:m], edges[1 : m + 1]

    def psi(x: NDArray[np.float64]) -> NDArray[np.float64]:
        return model.psi_values(t, x, u)

    # psi ~ s^-d at 0 and (u-s)^-d at u
    out = np.zeros(len(op))
    out[1 : m - 1] = fixed_rule_average(psi, lo[1:-1], hi[1:-1], nodes=PSI_NODES)
    if m == 1:
        out[0] = fixed_rule_average(psi, lo, hi, -d, -d, PSI_NODES)[0]
    else:
        out[0] = fixed_rule_average(psi, lo[:1], hi[:1], -d, 0.0, PSI_NODES)[0]
        out[m - 1] = fixed_rule_average(psi, lo[-1:], hi[-1:], 0.0, -d, PSI_NODES)[0]
    return out


def discrete_psi(
    op: DiscreteOperator, t: float, u: float, *, closed_form: bool = False
) -> NDArray[np.float64]:
    """Psi(t, . | u) on the cells left of u, zero beyond.

    ``closed_form`` averages the analytic kernel of the model over the cells
    instead of solving (K*_u) psi = K(t, .) - K(u, .).
    """
    if not 0 <= u <= t:
        raise ValidationError(f"discrete_psi needs 0 <= u <= t, got u={u}, t={t}")
    m = op.grid.index(u)
    op.grid.index(t)
    out = np.zeros(len(op))
    if m == 0 or t == u:
        return out
    if closed_form:
        return _closed_form_psi(op, t, u, m)
    rhs = kernel_row(op, t)[:m] - kernel_row(op, u)[:m]
    Bu = op.B[:m, :m]
    _check_diagonal(Bu)
    out[:m] = solve_triangular(Bu, rhs, lower=False)
    return out


def recover_martingale(op: DiscreteOperator, G: SamplePath) -> SamplePath:
    """Martingale path M with sum_j A[i, j] dM_j = G(t_i).

    Forward substitution: M at t_i only uses G at t_1, ..., t_i.
    """
    if G.grid != op.grid:
        raise ValidationError("Path and operator live on different grids")
    _check_diagonal(op.kernel)
    dM = solve_triangular(op.kernel, G.values, lower=True)
    return SamplePath.from_increments(op.grid, dM)


def forward_map(op: DiscreteOperator, dM: ArrayLike) -> SamplePath:
    """G(t_i) = sum_j A[i, j] dM_j."""
    return SamplePath(op.grid, op.kernel @ _vector(op, dM, "dM"))

"""Gauss-Jacobi quadrature for weakly singular integrands, and Stieltjes sums."""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import roots_jacobi

from .errors import QuadratureError, ValidationError

if TYPE_CHECKING:
    from .grid import SamplePath

_LOG = logging.getLogger(__name__)

MIN_NODES = 8
MAX_NODES = 2**14
END_FLOOR = 1e-4

Smooth = Callable[[NDArray[np.float64]], NDArray[np.float64]]


@dataclass(frozen=True)
class SingularIntegrand:
    """Smooth factor ``g`` with explicit algebraic endpoint exponents."""

    g: Smooth
    lo: float
    hi: float
    alpha: float = 0.0
    """Exponent of (x - lo)."""
    beta: float = 0.0
    """Exponent of (hi - x)."""

    def __post_init__(self) -> None:
        """Check integrability."""
        if not self.lo < self.hi:
            raise ValidationError(f"Empty interval [{self.lo}, {self.hi}]")
        if self.alpha <= -1 or self.beta <= -1:
            raise ValidationError(
                f"Endpoint exponents must exceed -1: alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True)
class QuadratureResult:
    """Value, estimated absolute error and nodes of the accepted rule."""

    value: float
    error_estimate: float
    nodes_used: int


@lru_cache(maxsize=512)
def jacobi_rule(
    n: int, alpha: float, beta: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Nodes on [-1, 1] and weights for the weight (1 + y)^alpha (1 - y)^beta."""
    y, w = roots_jacobi(n, beta, alpha)
    y.setflags(write=False)
    w.setflags(write=False)
    return y, w


def integrate_batch(  # noqa: PLR0913
    g: Smooth,
    lo: ArrayLike,
    hi: ArrayLike,
    alpha: float,
    beta: float,
    tol: float,
    *,
    rtol: float = 0.0,
    min_nodes: int = MIN_NODES,
    max_nodes: int = MAX_NODES,
) -> tuple[NDArray[np.float64], float, int]:
    """Integrate over many intervals at once, doubling nodes until the batch settles.

    ``g`` maps an array of shape ``lo.shape + (nodes,)`` to the same shape.
    """
    if tol <= 0:
        raise ValidationError(f"Quadrature tolerance must be positive, got {tol}")
    lo_a, hi_a = np.broadcast_arrays(
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    )
    width = hi_a - lo_a
    if np.any(width < 0):
        raise ValidationError("Quadrature interval with hi < lo")
    scale = (0.5 * width) ** (alpha + beta + 1.0)

    prev: NDArray[np.float64] | None = None
    err = np.inf
    n = min_nodes
    while True:
        y, w = jacobi_rule(n, alpha, beta)
        x = lo_a[..., None] + width[..., None] * (0.5 * (1.0 + y))
        val = scale * (g(x) @ w)
        if prev is not None:
            err = float(np.max(np.abs(val - prev))) if val.size else 0.0
            limit = max(tol, rtol * float(np.max(np.abs(val)))) if val.size else tol
            if err <= limit:
                return val, err, n
        if n >= max_nodes:
            break
        prev = val
        n *= 2

    best = float(np.max(np.abs(val))) if val.size else 0.0
    raise QuadratureError("Gauss-Jacobi node doubling did not converge", best, err, n)


def integrate_singular(f: SingularIntegrand, tol: float) -> QuadratureResult:
    """Integrate ``(x-lo)^alpha (hi-x)^beta g(x)`` over [lo, hi]."""
    val, err, nodes = integrate_batch(f.g, f.lo, f.hi, f.alpha, f.beta, tol)
    _LOG.debug("integrate_singular: %d nodes, error %.3g", nodes, err)
    return QuadratureResult(value=float(val), error_estimate=err, nodes_used=nodes)


def _end_steps(half: float, end: float, levels: int, ratio: float) -> NDArray[np.float64]:
    """Distances from ``end`` of the graded mesh points, largest first."""
    steps = half * ratio ** np.arange(levels + 1)
    keep = steps >= END_FLOOR * abs(end)
    keep[0] = True
    return steps[keep]


def integrate_graded(  # noqa: PLR0913
    F: Smooth,
    lo: float,
    hi: float,
    alpha: float,
    beta: float,
    tol: float,
    *,
    levels: int = 24,
    ratio: float = 0.25,
) -> QuadratureResult:
    """Integrate the full integrand ``F`` over [lo, hi] on a geometric mesh.

    ``F`` behaves like (x-lo)^alpha at lo and (hi-x)^beta at hi. The end
    pieces are integrated in the distance to their endpoint with Gauss-Jacobi
    rules, all other pieces with Gauss-Legendre rules.
    """
    if not lo < hi:
        return QuadratureResult(0.0, 0.0, 0)
    half = 0.5 * (hi - lo)
    left = _end_steps(half, lo, levels, ratio)
    right = _end_steps(half, hi, levels, ratio)
    pieces_lo = np.concatenate((lo + left[1:], hi - right[:-1]))
    pieces_hi = np.concatenate((lo + left[:-1], hi - right[1:]))
    share = tol / (pieces_lo.size + 2)

    mid, err_mid, nodes = integrate_batch(F, pieces_lo, pieces_hi, 0.0, 0.0, share)
    lo_end, err_lo, n_lo = integrate_batch(
        lambda r: F(lo + r) / r**alpha, 0.0, left[-1], alpha, 0.0, share
    )
    hi_end, err_hi, n_hi = integrate_batch(
        lambda r: F(hi - r) / r**beta, 0.0, right[-1], beta, 0.0, share
    )
    value = float(np.sum(mid) + lo_end + hi_end)
    error = err_mid * pieces_lo.size + err_lo + err_hi
    return QuadratureResult(value, error, nodes * pieces_lo.size + n_lo + n_hi)


def fixed_rule_average(
    g: Smooth,
    lo: ArrayLike,
    hi: ArrayLike,
    alpha: float = 0.0,
    beta: float = 0.0,
    nodes: int = 8,
) -> NDArray[np.float64]:
    """Average of ``g`` over each interval; ``g`` behaves like (x-lo)^alpha (hi-x)^beta."""
    lo_a, hi_a = np.broadcast_arrays(
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    )
    width = hi_a - lo_a
    y, w = jacobi_rule(nodes, alpha, beta)
    x = lo_a[..., None] + width[..., None] * (0.5 * (1.0 + y))
    scale = (0.5 * width) ** (alpha + beta + 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        dist = (x - lo_a[..., None]) ** alpha * (hi_a[..., None] - x) ** beta
        avg = scale * ((g(x) / dist) @ w) / width
    return np.where(width > 0, avg, 0.0)


def stieltjes_sum(f: ArrayLike, path: SamplePath) -> float:
    """Left-point Riemann-Stieltjes sum of ``f`` against the path increments."""
    fa = np.asarray(f, dtype=float)
    inc = path.increments()
    if fa.shape != inc.shape:
        raise ValidationError(
            f"Integrand has {fa.size} samples, path has {inc.size} increments"
        )
    return float(fa @ inc)


def power_cell_integrals(
    edges: NDArray[np.float64], point: float, exponent: float
) -> NDArray[np.float64]:
    """Exact ``int_cell |point - s|^exponent ds`` for each cell left of ``point``."""
    if exponent <= -1:
        raise ValidationError(f"Non-integrable exponent {exponent}")
    a, b = edges[:-1], edges[1:]
    if np.any(b > point):
        raise ValidationError("Cells must lie left of the evaluation point")
    e1 = exponent + 1.0
    return ((point - a) ** e1 - (point - b) ** e1) / e1


def power_cell_weights(
    edges: NDArray[np.float64], exponent: float
) -> NDArray[np.float64]:
    """Exact double integrals ``int_cell_k int_cell_j |s - x|^exponent dx ds``."""
    if exponent <= -1:
        raise ValidationError(f"Non-integrable exponent {exponent}")
    e2 = exponent + 2.0
    den = (exponent + 1.0) * e2
    a = edges[:-1][:, None]
    b = edges[1:][:, None]
    c = edges[:-1][None, :]
    d = edges[1:][None, :]

    def anti(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.abs(y) ** e2 / den

    return anti(b - c) - anti(b - d) - anti(a - c) + anti(a - d)

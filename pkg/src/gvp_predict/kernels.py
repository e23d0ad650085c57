"""Covariances and Volterra kernels of the fBm and ccmfBm families."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import betainc, gamma, gammaln

from .errors import SeriesDivergenceError, ValidationError
from .grid import TimeGrid
from .quadrature import integrate_batch

_LOG = logging.getLogger(__name__)

KERNEL_RTOL = 1e-13
SERIES_MAX_TERMS = 1000
SERIES_MONOTONE_TAIL = 3
LOG_WEIGHT_MAX = 700.0


@dataclass(frozen=True)
class HurstParams:
    """Hurst index with the optional ccmfBm mixing weights a, b."""

    H: float
    a: float | None = None
    b: float | None = None

    def __post_init__(self) -> None:
        """Validate."""
        check_hurst(self.H)
        if self.ccm:
            check_ccm(self.a or 0.0, self.H)

    @property
    def ccm(self) -> bool:
        """True for the completely correlated mixed fBm."""
        return self.a is not None or self.b is not None


@dataclass(frozen=True)
class KernelEval:
    """Kernel value with evaluation diagnostics."""

    value: float
    error_estimate: float = 0.0
    nodes_used: int = 0
    terms: int = 0
    """Series terms used (inverse kernel only)."""


def check_hurst(H: float) -> None:
    """Raise unless 0 < H < 1."""
    if not 0 < H < 1:
        raise ValidationError(f"Hurst index H must lie in (0, 1), got {H}")


def check_ccm(a: float, H: float) -> None:
    """Raise unless a != 0 and H > 1/2."""
    if a == 0:
        raise ValidationError("ccmfBm weight a must be non-zero")
    if not 0.5 < H < 1:
        raise ValidationError(f"ccmfBm needs H in (1/2, 1), got {H}")


def fbm_covariance(t: ArrayLike, s: ArrayLike, H: float) -> NDArray[np.float64] | float:
    """R_H(t,s) = (t^2H + s^2H - |t-s|^2H) / 2."""
    check_hurst(H)
    ta = np.asarray(t, dtype=float)
    sa = np.asarray(s, dtype=float)
    if np.any(ta < 0) or np.any(sa < 0):
        raise ValidationError("fBm covariance needs non-negative times")
    h2 = 2.0 * H
    res = 0.5 * (ta**h2 + sa**h2 - np.abs(ta - sa) ** h2)
    return float(res) if res.ndim == 0 else res


def fbm_normalizer(H: float) -> float:
    """c_H = sqrt(2H Gamma(3/2-H) / (Gamma(H+1/2) Gamma(2-2H)))."""
    check_hurst(H)
    return math.sqrt(2 * H * gamma(1.5 - H) / (gamma(H + 0.5) * gamma(2 - 2 * H)))


def _log_integral(
    L: NDArray[np.float64], expo: float, tol: float, extra: float = 0.0
) -> tuple[NDArray[np.float64], float, int]:
    """int_0^L y^expo e^(extra y) (expm1(y)/y)^expo dy, vectorised over L.

    Logarithmic substitution of an integral with an algebraic singularity at
    its lower end; the smooth factor is analytic in a strip of width 2 pi.
    """

    def smooth(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.exp(extra * y) * (np.expm1(y) / y) ** expo

    return integrate_batch(smooth, 0.0, L, expo, 0.0, tol, rtol=KERNEL_RTOL)


def fbm_kernel_values(
    t: float, s: ArrayLike, H: float, tol: float = 1e-12
) -> NDArray[np.float64]:
    """Vectorised K_H(t, s); zero where s >= t."""
    check_hurst(H)
    sa = np.asarray(s, dtype=float)
    out = np.zeros_like(sa)
    live = (sa < t) & (sa > 0)
    if H == 0.5:
        out[live] = 1.0
        return out
    if not np.any(live):
        return out
    sl = sa[live]
    d = H - 0.5
    # u = s e^y turns the inner integral into s^(2H-1) int_0^log(t/s) ...
    J, _, _ = _log_integral(np.log(t / sl), d, tol, extra=d)
    first = (t / sl) ** d * (t - sl) ** d
    out[live] = fbm_normalizer(H) * (first - d * sl**d * J)
    return out


def fbm_kernel(t: float, s: float, H: float, tol: float = 1e-10) -> KernelEval:
    """K_H(t,s) with the inner integral by singular quadrature."""
    check_hurst(H)
    if tol <= 0:
        raise ValidationError(f"Tolerance must be positive, got {tol}")
    if s >= t:
        return KernelEval(0.0)
    if s <= 0:
        raise ValidationError(f"fBm kernel needs s > 0, got s={s}")
    if H == 0.5:
        return KernelEval(1.0)
    d = H - 0.5
    scale = fbm_normalizer(H) * abs(d) * s**d
    J, err, nodes = _log_integral(np.asarray(math.log(t / s)), d, tol / scale, d)
    first = (t / s) ** d * (t - s) ** d
    value = fbm_normalizer(H) * (first - d * s**d * float(J))
    return KernelEval(value, err * scale, nodes)


def fbm_brownian_cross(
    t: ArrayLike, u: ArrayLike, H: float, tol: float = 1e-12
) -> NDArray[np.float64]:
    """int_0^u K_H(t,x) dx = E[B^H_t W_u] for 0 <= u <= t and H > 1/2.

    Swapping the order of integration leaves
    c_H Gamma(1-d) Gamma(1+d) (t^(1+d)/(1+d) - int_u^t x^d I_{1-u/x}(d, 1-d) dx)
    with d = H - 1/2; x = u e^y regularises the remainder.
    """
    check_ccm(1.0, H)
    ta, ua = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
    if np.any(ua < 0) or np.any(ua > ta):
        raise ValidationError("Cross covariance needs 0 <= u <= t")
    d = H - 0.5
    out = ta ** (1.0 + d) / (1.0 + d)
    live = (ua > 0) & (ua < ta)
    if np.any(live):
        ul = ua[live]

        def smooth(y: NDArray[np.float64]) -> NDArray[np.float64]:
            return np.exp((1.0 + d) * y) * betainc(d, 1.0 - d, -np.expm1(-y)) / y**d

        rest, _, _ = integrate_batch(
            smooth, 0.0, np.log(ta[live] / ul), d, 0.0, tol, rtol=KERNEL_RTOL
        )
        out[live] -= ul ** (1.0 + d) * rest
    out[ua == 0] = 0.0
    return fbm_normalizer(H) * gamma(1.0 - d) * gamma(1.0 + d) * out


def fbm_psi_values(
    t: float, s: ArrayLike, u: float, H: float, tol: float = 1e-12
) -> NDArray[np.float64]:
    """Vectorised Psi_H(t, s|u) for 0 < s < u <= t; zero elsewhere."""
    check_hurst(H)
    sa = np.asarray(s, dtype=float)
    out = np.zeros_like(sa)
    live = (sa > 0) & (sa < u)
    if H == 0.5 or t <= u or not np.any(live):
        return out
    sl = sa[live]
    d = H - 0.5
    dist = u - sl

    # z = u + (u-s)(e^y - 1) removes the pole at z = s and the endpoint power
    def smooth(y: NDArray[np.float64]) -> NDArray[np.float64]:
        z = u + dist[..., None] * np.expm1(y)
        return (np.expm1(y) / y) ** d * z**d

    L = np.log1p((t - u) / dist)
    integral, _, _ = integrate_batch(smooth, 0.0, L, d, 0.0, tol, rtol=KERNEL_RTOL)
    out[live] = math.sin(math.pi * d) / math.pi * sl ** (-d) * integral
    return out


def fbm_psi(t: float, s: float, u: float, H: float, tol: float = 1e-10) -> KernelEval:
    """Psi_H(t,s|u), the fBm prediction kernel."""
    check_hurst(H)
    if tol <= 0:
        raise ValidationError(f"Tolerance must be positive, got {tol}")
    if not 0 < s < u <= t:
        raise ValidationError(f"Psi_H needs 0 < s < u <= t, got s={s}, u={u}, t={t}")
    return KernelEval(float(fbm_psi_values(t, np.array([s]), u, H, tol)[0]))


def ccm_kernel(
    t: float, s: float, a: float, b: float, H: float, tol: float = 1e-10
) -> KernelEval:
    """K_{a,b,H}(t,s) = a 1_t(s) + b K_H(t,s)."""
    check_ccm(a, H)
    if s >= t:
        return KernelEval(0.0)
    if b == 0:
        return KernelEval(a)
    k = fbm_kernel(t, s, H, tol / abs(b))
    return KernelEval(a + b * k.value, abs(b) * k.error_estimate, k.nodes_used)


def _gamma_prefactor(k: int, H: float) -> float:
    log_pref = k * math.log(fbm_normalizer(H)) + k * gammaln(H + 0.5)
    return math.exp(log_pref - gammaln(k * (H - 0.5)))


def ccm_gamma_values(
    k: int, t: float, s: ArrayLike, H: float, tol: float = 1e-12
) -> NDArray[np.float64]:
    """Vectorised gamma_k(t, s); zero where s >= t."""
    if k < 1:
        raise ValidationError(f"gamma_k needs k >= 1, got {k}")
    check_ccm(1.0, H)
    sa = np.asarray(s, dtype=float)
    out = np.zeros_like(sa)
    live = (sa > 0) & (sa < t)
    if not np.any(live):
        return out
    sl = sa[live]
    d = H - 0.5
    expo = k * d - 1.0
    # x = s e^y: s^-d int_s^t x^d (x-s)^(kd-1) dx = s^(kd) int_0^log(t/s) ...
    scale = _gamma_prefactor(k, H) * sl ** (k * d)

    def smooth(y: NDArray[np.float64]) -> NDArray[np.float64]:
        return scale[..., None] * np.exp((1.0 + d) * y) * (np.expm1(y) / y) ** expo

    out[live], _, _ = integrate_batch(
        smooth, 0.0, np.log(t / sl), expo, 0.0, tol, rtol=KERNEL_RTOL
    )
    return out


def ccm_gamma(k: int, t: float, s: float, H: float, tol: float = 1e-12) -> float:
    """gamma_k(t,s) of the ccmfBm inverse-kernel series."""
    if s >= t:
        return 0.0
    if s <= 0:
        raise ValidationError(f"gamma_k needs s > 0, got s={s}")
    return float(ccm_gamma_values(k, t, np.array([s]), H, tol)[0])


def ccm_inverse_values(
    t: float,
    s: ArrayLike,
    a: float,
    b: float,
    H: float,
    series_tol: float = 1e-12,
) -> tuple[NDArray[np.float64], int, float]:
    """Vectorised K^{-1}_{a,b,H}(t, s); returns values, terms and the last |term|."""
    check_ccm(a, H)
    if series_tol <= 0:
        raise ValidationError(f"series_tol must be positive, got {series_tol}")
    sa = np.asarray(s, dtype=float)
    live = (sa > 0) & (sa < t)
    total = np.where(live, 1.0 / a, 0.0)
    if b == 0 or not np.any(live):
        return total, 0, 0.0

    ratio = -b / a
    mags: list[float] = []
    for k in range(1, SERIES_MAX_TERMS + 1):
        log_weight = k * math.log(abs(ratio)) - math.log(abs(a))
        if log_weight > LOG_WEIGHT_MAX:
            raise SeriesDivergenceError("Inverse-kernel series overflowed", k, math.inf)
        sign = -1.0 if (ratio < 0 and k % 2 == 1) != (a < 0) else 1.0
        weight = sign * math.exp(log_weight)
        gamma_tol = 0.1 * series_tol / max(abs(weight), 1e-300)
        term = weight * ccm_gamma_values(k, t, sa, H, gamma_tol)
        mag = float(np.max(np.abs(term)))
        if not math.isfinite(mag):
            raise SeriesDivergenceError("Inverse-kernel series overflowed", k, mag)
        mags.append(mag)
        if mag < series_tol:
            tail = mags[-(SERIES_MONOTONE_TAIL + 1) :]
            if any(x <= y for x, y in zip(tail, tail[1:], strict=False)):
                raise SeriesDivergenceError(
                    "Inverse-kernel series tail is not monotone", k, mag
                )
            _LOG.debug("ccm_inverse_values(t=%s): %d terms", t, k)
            return total, k, mag
        total = total + term
    raise SeriesDivergenceError(
        "Inverse-kernel series did not reach series_tol", SERIES_MAX_TERMS, mags[-1]
    )


def ccm_inverse_kernel(
    t: float, s: float, a: float, b: float, H: float, series_tol: float = 1e-12
) -> KernelEval:
    """K^{-1}_{a,b,H}(t,s) = (1 + sum_k (-b/a)^k gamma_k(t,s)) / a."""
    check_ccm(a, H)
    if s >= t:
        return KernelEval(0.0)
    if s <= 0:
        raise ValidationError(f"Inverse kernel needs s > 0, got s={s}")
    values, terms, last = ccm_inverse_values(t, np.array([s]), a, b, H, series_tol)
    return KernelEval(float(values[0]), last, terms=terms)


def ccm_adjoint_apply(
    f: ArrayLike, grid: TimeGrid, a: float, b: float, H: float, tol: float = 1e-10
) -> NDArray[np.float64]:
    """Adjoint K*_{a,b,H} of a step function (f[p] on [t_p, t_{p+1})) at the grid times."""
    check_ccm(a, H)
    fa = np.asarray(f, dtype=float)
    times = grid.times
    if fa.shape != times.shape:
        raise ValidationError(f"f has {fa.size} samples for {len(grid)} grid times")
    out = a * fa
    n = len(grid)
    if b == 0 or n == 1:
        return out
    d = H - 0.5

    # cell q = [t_q, t_{q+1}); the cell starting at t_p carries the singularity
    own, _, _ = integrate_batch(
        lambda x: x**d, times[:-1], times[1:], d - 1.0, 0.0, tol, rtol=KERNEL_RTOL
    )
    weights = np.diag(own)
    rows, cols = np.triu_indices(n - 1, k=1)
    if rows.size:
        tp = times[rows][:, None]

        def smooth(x: NDArray[np.float64]) -> NDArray[np.float64]:
            return x**d * (x - tp) ** (d - 1.0)

        far, _, _ = integrate_batch(
            smooth, times[cols], times[cols + 1], 0.0, 0.0, tol, rtol=KERNEL_RTOL
        )
        weights[rows, cols] = far

    integral = np.zeros(n)
    integral[:-1] = weights @ fa[:-1]
    out = out + b * fbm_normalizer(H) * d * times ** (-d) * integral
    return out

"""Brute-force oracles and the verification suite.

The oracles share no code with the prediction formulas: conditioning works on
process values with plain Gaussian linear algebra, and the Monte Carlo
sampler continues the driving martingale beyond u.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.integrate import quad
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import gammaln
from scipy.stats import kstest, poisson

from .errors import FactorizationError, GvpError, ValidationError
from .grid import TimeGrid
from .jumps import JumpSpec
from .kernels import ccm_inverse_kernel, ccm_inverse_values, fbm_normalizer
from .log import LogBase
from .models import CcmFbmModel, MfbmModel, VolterraModel
from .operators import (
    DiscreteOperator,
    adjoint_apply,
    adjoint_invert,
    build_operator,
    forward_map,
    recover_martingale,
)
from .prediction import (
    gvp_conditional_cov,
    gvp_conditional_mean,
    mixed_conditional_cov,
    mixed_conditional_density,
    mixed_conditional_mean,
)
from .quadrature import fixed_rule_average
from .simulation import JITTER, MixedPath, simulate_mixed
from .wiener_hopf import reconstruction_error

_LOG = logging.getLogger(__name__)

MC_CHUNK = 10_000

Covariance = Callable[[ArrayLike, ArrayLike], "NDArray[np.float64] | float"]


@dataclass(frozen=True)
class OracleResult:
    """Conditional mean and variance with the regression weights."""

    mean: float
    variance: float
    weights: NDArray[np.float64]


def conditioning_oracle(
    R: Covariance, obs_times: ArrayLike, obs_values: ArrayLike, t: float
) -> OracleResult:
    """Condition a centred Gaussian process on its values at ``obs_times``."""
    times = np.asarray(obs_times, dtype=float)
    values = np.asarray(obs_values, dtype=float)
    if times.shape != values.shape or times.ndim != 1:
        raise ValidationError("obs_times and obs_values must be 1-d of equal length")
    if times.size and t < times.max():
        raise ValidationError(f"Oracle time t={t} precedes an observation")
    var_t = float(R(t, t))
    if times.size == 0:
        return OracleResult(0.0, var_t, np.zeros(0))

    sigma = np.asarray(R(times[:, None], times[None, :]), dtype=float)
    cross = np.asarray(R(t, times), dtype=float)
    try:
        factor = cho_factor(sigma, lower=True)
    except LinAlgError:
        jitter = JITTER * float(np.trace(sigma)) / times.size
        _LOG.warning("oracle covariance not positive definite, adding jitter %.3g", jitter)
        try:
            factor = cho_factor(sigma + jitter * np.eye(times.size), lower=True)
        except LinAlgError as err:
            raise FactorizationError(
                f"Oracle covariance is singular (condition {np.linalg.cond(sigma):.3g})"
            ) from err
    weights = cho_solve(factor, cross)
    variance = max(var_t - float(cross @ weights), 0.0)
    return OracleResult(float(weights @ values), variance, weights)


def _fresh_jumps(
    spec: JumpSpec, tau: float, rng: np.random.Generator, size: int
) -> NDArray[np.float64]:
    counts = rng.poisson(spec.intensity * tau, size) if tau > 0 else np.zeros(size, int)
    sizes = spec.dist.sample(rng, int(counts.sum()))
    owner = np.repeat(np.arange(size), counts)
    return np.bincount(owner, weights=sizes, minlength=size)


def mc_conditional_sample(  # noqa: PLR0913
    op: DiscreteOperator,
    spec: JumpSpec,
    path: MixedPath,
    u: float,
    t: float,
    n_paths: int,
    seed: int,
    *,
    threads: int = 1,
) -> NDArray[np.float64]:
    """Samples of X_t keeping the driving increments observed up to u.

    Work is split into chunks with their own child seeds, so the samples do not
    depend on ``threads``.
    """
    if n_paths < 1:
        raise ValidationError(f"n_paths must be >= 1, got {n_paths}")
    if not 0 <= u <= t:
        raise ValidationError(f"Sampling needs 0 <= u <= t, got u={u}, t={t}")
    if path.grid != op.grid:
        raise ValidationError("Path and operator live on different grids")
    m = op.grid.index(u)
    i = op.grid.index(t) - 1
    dM = path.M_increments
    if dM is None:
        dM = recover_martingale(op, path.G).increments()
    row = op.kernel[i] if i >= 0 else np.zeros(len(op))
    known = float(row[:m] @ dM[:m]) + (path.J.at(u) if m else 0.0)
    fresh_k = row[m : i + 1]
    fresh_sd = np.sqrt(op.dv[m : i + 1])
    tau = t - u

    def chunk(args: tuple[np.random.SeedSequence, int]) -> NDArray[np.float64]:
        ss, size = args
        rng = np.random.default_rng(ss)
        gauss = rng.standard_normal((size, fresh_k.size)) @ (fresh_k * fresh_sd)
        return known + gauss + _fresh_jumps(spec, tau, rng, size)

    sizes = [min(MC_CHUNK, n_paths - start) for start in range(0, n_paths, MC_CHUNK)]
    work = list(zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes, strict=True))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(chunk, work))
    else:
        parts = [chunk(w) for w in work]
    return np.concatenate(parts)


def ks_distance(
    samples: ArrayLike,
    cdf: Callable[[NDArray[np.float64]], NDArray[np.float64]],
    cdf_left: Callable[[NDArray[np.float64]], NDArray[np.float64]] | None = None,
) -> float:
    """Kolmogorov-Smirnov distance between the samples and ``cdf``.

    ``cdf_left`` gives P(Y < x) for laws with atoms; without it the law is
    taken as continuous.
    """
    xs = np.asarray(samples, dtype=float)
    if xs.size == 0:
        raise ValidationError("ks_distance needs at least one sample")
    if cdf_left is None:
        return float(kstest(xs, cdf).statistic)
    uniq, counts = np.unique(xs, return_counts=True)
    upper = np.cumsum(counts) / xs.size
    lower = upper - counts / xs.size
    d_hi = np.abs(upper - cdf(uniq))
    d_lo = np.abs(lower - cdf_left(uniq))
    return float(max(d_hi.max(), d_lo.max()))


def ccm_inverse_operator(
    grid: TimeGrid,
    a: float,
    b: float,
    H: float,
    series_tol: float = 1e-10,
    nodes: int = 8,
) -> NDArray[np.float64]:
    """Cell averages of the series inverse kernel K^{-1}_{a,b,H}(t_i, .)."""
    n = len(grid)
    edges = grid.edges
    out = np.zeros((n, n))
    for i, t in enumerate(grid.times):

        def inv(x: NDArray[np.float64], t: float = t) -> NDArray[np.float64]:
            flat = x.ravel()
            return ccm_inverse_values(t, flat, a, b, H, series_tol)[0].reshape(x.shape)

        lo, hi = edges[: i + 1], edges[1 : i + 2]
        out[i, 1 : i + 1] = fixed_rule_average(inv, lo[1:], hi[1:], nodes=nodes)
        out[i, 0] = fixed_rule_average(inv, lo[:1], hi[:1], 0.5 - H, 0.0, nodes)[0]
    return out


def grid_inverse_kernel(op: DiscreteOperator) -> NDArray[np.float64]:
    """Coefficients of dG_j in M(t_i) for the triangular-solve inverse."""
    n = len(op)
    cums = np.tril(np.ones((n, n)))
    inv = np.linalg.solve(op.kernel, cums)
    return cums @ inv


def ccm_inverse_agreement(model: CcmFbmModel, grid: TimeGrid) -> float:
    """sup |series - grid inverse| / sup |series| over the grid cells."""
    series = ccm_inverse_operator(grid, model.a, model.b, model.H)
    grid_inv = grid_inverse_kernel(build_operator(model, grid))
    lower = np.tril_indices(len(grid))
    return float(
        np.max(np.abs(series[lower] - grid_inv[lower])) / np.max(np.abs(series[lower]))
    )


def ccm_inverse_composition(
    a: float, b: float, H: float, t: float, points: ArrayLike, series_tol: float = 1e-12
) -> float:
    """sup |(K o K^{-1})(t, s) - 1| over ``points`` in (0, t).

    The kernel acts on f = K^{-1}(t, .) as a f(s) + b c_H Gamma(H+1/2)/Gamma(H-1/2)
    s^(1/2-H) int_s^t (r-s)^(H-3/2) r^(H-1/2) f(r) dr.
    """
    d = H - 0.5
    scale = b * fbm_normalizer(H) * math.exp(gammaln(H + 0.5) - gammaln(d))
    def f(r: float) -> float:
        if r >= t:
            return t**d / a
        return r**d * ccm_inverse_kernel(t, r, a, b, H, series_tol).value

    worst = 0.0
    for s in np.asarray(points, dtype=float):
        if not 0 < s < t:
            raise ValidationError(f"Composition points must lie in (0, {t}), got {s}")
        tail, _ = quad(f, s, t, weight="alg", wvar=(d - 1.0, 0.0), epsabs=1e-11, limit=200)
        own = ccm_inverse_kernel(t, s, a, b, H, series_tol).value
        worst = max(worst, abs(a * own + scale * s ** (-d) * tail - 1.0))
    return worst


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check."""

    check: str
    value: float
    reference: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationSuite(LogBase):
    """Invariant and oracle checks for one model, jump spec and grid."""

    model: VolterraModel
    spec: JumpSpec
    grid: TimeGrid
    u: float = 0.5
    times: Sequence[float] = (0.625, 0.75, 1.0)
    tolerance: float = 0.02
    n_paths: int = 100_000
    seed: int = 0
    closed_form: bool = False
    threads: int = 1
    results: list[CheckResult] = field(default_factory=list, init=False)

    _log_prefix = "verify: "

    def record(  # noqa: PLR0913
        self,
        check: str,
        value: float,
        reference: float,
        tolerance: float,
        detail: str = "",
        *,
        relative: bool = False,
    ) -> CheckResult:
        """Compare value and reference and store the result."""
        err = abs(value - reference)
        if relative:
            err /= max(abs(reference), 1e-300)
        res = CheckResult(check, value, reference, tolerance, bool(err <= tolerance), detail)
        self.results.append(res)
        log = self.log_info if res.passed else self.log_warn
        log("%s %s: %.6g vs %.6g (tol %.3g)", "ok  " if res.passed else "FAIL", check, value, reference, tolerance)
        return res

    @property
    def passed(self) -> bool:
        """True if every check passed."""
        return all(r.passed for r in self.results)

    def run(self) -> list[CheckResult]:
        """Run every check; numerical failures become failed entries."""
        self.results.clear()
        op = build_operator(self.model, self.grid)
        path = simulate_mixed(self.model, self.spec, self.grid, self.seed)
        for name, step in (
            ("oracle_self", lambda: self.check_oracle_self(path)),
            ("round_trip", lambda: self.check_round_trip(op, path)),
            ("oracle", lambda: self.check_oracle(op, path)),
            ("monte_carlo", lambda: self.check_monte_carlo(op, path)),
            ("model", lambda: self.check_model()),
        ):
            try:
                step()
            except GvpError as err:
                self.results.append(CheckResult(name, math.nan, math.nan, 0.0, False, str(err)))
                self.log_error("%s failed: %s", name, err)
        return self.results

    def check_oracle_self(self, path: MixedPath) -> None:
        """Conditioning on the target time itself returns the observed value."""
        t = self.grid.times[-1]
        res = conditioning_oracle(self.model.covariance, [t], [path.G.values[-1]], t)
        self.record("oracle_self_variance", res.variance, 0.0, 1e-12)
        self.record("oracle_self_mean", res.mean, float(path.G.values[-1]), 1e-10)

    def check_round_trip(self, op: DiscreteOperator, path: MixedPath) -> None:
        """Adjoint inverse and martingale recovery invert their forward maps."""
        rng = np.random.default_rng(self.seed)
        f = rng.standard_normal(len(op))
        back = adjoint_invert(op, adjoint_apply(op, f))
        self.record("adjoint_round_trip", float(np.max(np.abs(back - f))), 0.0, 1e-10 * np.max(np.abs(f)))
        rebuilt = forward_map(op, recover_martingale(op, path.G).increments())
        scale = max(float(np.max(np.abs(path.G.values))), 1e-300)
        err = float(np.max(np.abs(rebuilt.values - path.G.values))) / scale
        self.record("martingale_round_trip", err, 0.0, 1e-10)

    def check_oracle(self, op: DiscreteOperator, path: MixedPath) -> None:
        """Prediction formulas against exact conditioning on the grid values."""
        m = self.grid.index(self.u)
        obs_t = self.grid.times[:m]
        obs_v = path.G.values[:m]
        for t in self.times:
            oracle = conditioning_oracle(self.model.covariance, obs_t, obs_v, t)
            mean = gvp_conditional_mean(op, path.G, self.u, t, closed_form=self.closed_form)
            var = gvp_conditional_cov(self.model, self.grid, t, t, self.u)
            sd = math.sqrt(oracle.variance)
            self.record(f"mean_vs_oracle[t={t}]", mean, oracle.mean, self.tolerance * sd)
            self.record(
                f"variance_vs_oracle[t={t}]", var, oracle.variance, self.tolerance, relative=True
            )

    def check_monte_carlo(self, op: DiscreteOperator, path: MixedPath) -> None:
        """Mixed mean, variance and law against conditional continuations."""
        t = self.times[len(self.times) // 2]
        samples = mc_conditional_sample(
            op, self.spec, path, self.u, t, self.n_paths, self.seed + 1, threads=self.threads
        )
        mean = mixed_conditional_mean(op, path, self.u, t, self.spec)
        var = mixed_conditional_cov(self.model, self.grid, self.spec, t, t, self.u, discrete=True)
        se_mean = math.sqrt(var / self.n_paths)
        self.record("mc_mean", float(samples.mean()), mean, 3 * se_mean)
        fourth = float(np.mean((samples - samples.mean()) ** 4))
        se_var = math.sqrt(max(fourth - var**2, 0.0) / self.n_paths)
        self.record("mc_variance", float(samples.var(ddof=1)), var, 3 * se_var)
        law = mixed_conditional_density(op, self.spec, path, self.u, t, discrete=True)
        ks = ks_distance(
            samples,
            law.density.cdf,
            lambda x: law.density.cdf(x, left=True),
        )
        ks_tol = max(0.01, 1.63 / math.sqrt(self.n_paths))
        self.record("mc_ks", ks, 0.0, ks_tol, f"n_max={law.meta['n_max']}")
        rate = self.spec.intensity * (t - self.u)
        if rate > 0:
            self.record("poisson_tail", float(poisson.sf(law.meta["n_max"], rate)), 0.0, 1e-8)

    def check_model(self) -> None:
        """Family-specific checks."""
        if isinstance(self.model, CcmFbmModel) and self.model.b != 0:
            m = self.model
            t = self.grid.T
            comp = ccm_inverse_composition(m.a, m.b, m.H, t, t * np.array([0.05, 0.5, 0.9]))
            self.record("ccm_inverse_composition", comp, 0.0, 1e-6)
            if len(self.grid) >= 4:
                dev = ccm_inverse_agreement(m, self.grid)
                coarse = ccm_inverse_agreement(m, TimeGrid(self.grid.times[1::2]))
                self.record("ccm_inverse_agreement", dev, 0.0, coarse, f"coarse={coarse:.3g}")
        if isinstance(self.model, MfbmModel):
            assert self.model.solution is not None
            sol = self.model.solution
            for name, res in sol.residuals.items():
                self.record(f"wh_residual_{name}", res, 0.0, 1e-8)
            err = reconstruction_error(sol.ktilde, sol.grid, sol.H)
            self.record("wh_reconstruction", err, 0.0, 0.02, f"bracket_defect={sol.bracket_defect:.3g}")

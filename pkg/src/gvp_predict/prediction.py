"""Conditional laws of G and of X = G + J given the observations up to u.

Gaussian part:

    m^G_t(u)  = G_u + sum_j Psi(t, tau_j | u) dG_j
    R^G(t,s|u) = R(t,s) - int_0^u K(t,x) K(s,x) dv(x)

Mixed process: the jumps after u are independent of everything observed, so
the mean gains lambda (t-u) mu1, the covariance lambda (min(t,s)-u) mu2, and
the law of X_t is the normal law of G_t convolved with J_u plus a compound
Poisson sum over (u, t].
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import NDArray
from scipy.stats import binom, poisson

from .distribution import (
    DiscreteDistribution,
    ValueGrid,
    grid_compound_sum,
    merge,
)
from .errors import ValidationError
from .grid import SamplePath, TimeGrid
from .jumps import JumpSpec, NormalJumps, TwoPointJumps, UniformJumps
from .operators import DiscreteOperator, discrete_psi
from .quadrature import stieltjes_sum

if TYPE_CHECKING:
    from .models import VolterraModel
    from .simulation import MixedPath

_LOG = logging.getLogger(__name__)

DEFAULT_CELLS = 2001
DEGENERATE_VARIANCE = 1e-14
POISSON_MAX_TERMS = 10_000


@dataclass(frozen=True, eq=False)
class PredictionLaw:
    """Conditional mean, covariance evaluator and law of one marginal."""

    m_hat: float
    r_hat: Callable[[float, float], float]
    density: DiscreteDistribution
    vgrid: ValueGrid
    """Value grid for tabulating the law."""
    meta: dict[str, float] = field(default_factory=dict)

    @property
    def variance(self) -> float:
        """r_hat(t, t)."""
        t = self.meta["t"]
        return self.r_hat(t, t)

    def table(self) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
        """Cell centres, cell masses and CDF at the right cell edges."""
        masses = self.density.discretise(self.vgrid)
        cdf = self.density.cdf(self.vgrid.edges[1:])
        return self.vgrid.centres, masses, cdf


def _check_times(grid: TimeGrid, u: float, t: float) -> None:
    if not 0 <= u <= t:
        raise ValidationError(f"Prediction needs 0 <= u <= t, got u={u}, t={t}")
    grid.index(u)
    grid.index(t)


def _observed(op: DiscreteOperator, G: SamplePath, u: float) -> SamplePath:
    m = op.grid.index(u)
    if len(G) < m or not np.array_equal(G.grid.times[:m], op.grid.times[:m]):
        raise ValidationError(
            f"Observed path covers {len(G)} grid times, prediction needs {m} up to u={u}"
        )
    if m == 0:
        return G
    return SamplePath(op.grid.restrict(m), G.values[:m])


def gvp_conditional_mean(
    op: DiscreteOperator,
    G: SamplePath,
    u: float,
    t: float,
    *,
    closed_form: bool = False,
) -> float:
    """m^G_t(u) from the path of G observed up to u."""
    _check_times(op.grid, u, t)
    m = op.grid.index(u)
    if m == 0:
        return 0.0
    obs = _observed(op, G, u)
    psi = discrete_psi(op, t, u, closed_form=closed_form)[:m]
    return float(obs.values[-1]) + stieltjes_sum(psi, obs)


def gvp_conditional_cov(
    model: VolterraModel,
    grid: TimeGrid,
    t: float,
    s: float,
    u: float,
    *,
    discrete: bool = False,
) -> float:
    """R^G(t, s | u).

    ``discrete`` evaluates the covariance of the grid model G = A dM exactly
    instead of the continuum formula.
    """
    if not 0 <= u <= min(t, s):
        raise ValidationError(f"Conditional covariance needs u <= min(t, s), got u={u}")
    if u > 0 and u == min(t, s):
        return 0.0
    if discrete or not model.closed_form:
        A = model.cell_kernel(grid)
        dv = model.dv(grid)
        i, k, m = grid.index(t) - 1, grid.index(s) - 1, grid.index(u)
        tail = A[i, m:] * A[k, m:] * dv[m:]
        return float(np.sum(tail))
    if u == 0:
        return float(model.covariance(t, s))
    value = float(model.covariance(t, s)) - model.kernel_product_integral(t, s, u)
    return max(value, 0.0) if t == s else value


def conditional_cov_matrix(
    model: VolterraModel,
    grid: TimeGrid,
    times: Sequence[float],
    u: float,
    *,
    discrete: bool = False,
) -> NDArray[np.float64]:
    """R^G(t_a, t_b | u) over a list of future times."""
    n = len(times)
    out = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            out[a, b] = out[b, a] = gvp_conditional_cov(
                model, grid, times[a], times[b], u, discrete=discrete
            )
    return out


def _value_grid(mean: float, sd: float, pad: float, cells: int, width: float) -> ValueGrid:
    return ValueGrid.around(mean, width * sd / 8.0 if sd > 0 else 0.0, pad, cells)


def gvp_conditional_law(  # noqa: PLR0913
    op: DiscreteOperator,
    G: SamplePath,
    u: float,
    t: float,
    *,
    closed_form: bool = False,
    discrete: bool = False,
    cells: int = DEFAULT_CELLS,
    width: float = 8.0,
) -> PredictionLaw:
    """N(m^G_t(u), R^G(t,t|u)) as a prediction law."""
    if op.model is None:
        raise ValidationError("Conditional law needs an operator built from a model")
    model = op.model
    mean = gvp_conditional_mean(op, G, u, t, closed_form=closed_form)
    var = gvp_conditional_cov(model, op.grid, t, t, u, discrete=discrete)
    law = DiscreteDistribution.normal(mean, var)
    return PredictionLaw(
        m_hat=mean,
        r_hat=lambda a, b: gvp_conditional_cov(model, op.grid, a, b, u, discrete=discrete),
        density=law,
        vgrid=_value_grid(mean, math.sqrt(var), 0.0, cells, width),
        meta={"u": u, "t": t, "n_max": 0, "tail_mass": 0.0, "mass_defect": law.mass_defect},
    )


def poisson_truncation(rate: float, tail_tol: float) -> int:
    """Smallest N with P(Poisson(rate) > N) <= tail_tol."""
    if tail_tol <= 0:
        raise ValidationError(f"tail_tol must be positive, got {tail_tol}")
    n = 0
    while poisson.sf(n, rate) > tail_tol:
        n += 1
        if n > POISSON_MAX_TERMS:
            raise ValidationError(f"Poisson rate {rate} too large for tail_tol {tail_tol}")
    return n


def _jump_terms(
    spec: JumpSpec, weights: NDArray[np.float64], J_u: float, h: float
) -> DiscreteDistribution:
    """sum_{n>=1} weights[n-1] F^{*n}(. - J_u)."""
    dist = spec.dist
    n = np.arange(1, weights.size + 1)
    if isinstance(dist, NormalJumps):
        if dist.s2 == 0:
            return DiscreteDistribution(atoms_x=J_u + n * dist.m, atoms_p=weights)
        return DiscreteDistribution(
            comp_w=weights, comp_mean=J_u + n * dist.m, comp_var=n * dist.s2
        )
    if isinstance(dist, TwoPointJumps):
        xs: list[NDArray[np.float64]] = []
        ps: list[NDArray[np.float64]] = []
        for count, w in zip(n, weights, strict=True):
            k = np.arange(count + 1)
            xs.append(J_u + k * dist.x1 + (count - k) * dist.x2)
            ps.append(w * binom.pmf(k, count, dist.p))
        return DiscreteDistribution(atoms_x=np.concatenate(xs), atoms_p=np.concatenate(ps))
    if isinstance(dist, UniformJumps):
        first, base = dist.cell_masses(h)
        return grid_compound_sum(first, base, weights, h, J_u)
    raise ValidationError(f"Unsupported jump distribution {dist.kind!r}")


def compound_poisson_law(
    spec: JumpSpec,
    tau: float,
    J_u: float,
    vgrid: ValueGrid | None = None,
    tail_tol: float = 1e-8,
) -> DiscreteDistribution:
    """Law of J_u + (J_{u+tau} - J_u), truncated at N_max jumps.

    ``vgrid`` sets the cell width of gridded convolution powers and the range
    checked for lost mass.
    """
    if tau < 0:
        raise ValidationError(f"Prediction horizon must be >= 0, got {tau}")
    rate = spec.intensity * tau
    if rate == 0:
        return DiscreteDistribution.atom(J_u)
    n_max = poisson_truncation(rate, tail_tol)
    weights = poisson.pmf(np.arange(n_max + 1), rate)
    h = vgrid.h if vgrid is not None else _jump_cell(spec)
    zero = DiscreteDistribution.atom(J_u, float(weights[0]))
    law = merge(zero, _jump_terms(spec, weights[1:], J_u, h)) if n_max else zero
    _LOG.debug("compound_poisson_law: rate %.4g, N_max=%d, mass %.12f", rate, n_max, law.mass)
    if vgrid is not None:
        edges = vgrid.edges
        inside = float(law.cdf(edges[-1]) - law.cdf(edges[0], left=True))
        if law.mass - inside > 1e-6:
            _LOG.warning("value grid too narrow: %.3g of the mass outside", law.mass - inside)
    return law


def _jump_cell(spec: JumpSpec) -> float:
    return max(spec.dist.spread, 1e-12) / 256.0


def mixed_conditional_mean(
    op: DiscreteOperator,
    X: MixedPath,
    u: float,
    t: float,
    spec: JumpSpec,
    *,
    closed_form: bool = False,
) -> float:
    """X_u + sum Psi dG + lambda (t-u) mu1."""
    if X.grid != op.grid:
        raise ValidationError("Observed path and operator live on different grids")
    m = op.grid.index(u)
    x_u = X.X.at(u) if m else 0.0
    g_u = X.G.at(u) if m else 0.0
    m_g = gvp_conditional_mean(op, X.G, u, t, closed_form=closed_form)
    return x_u + (m_g - g_u) + spec.drift(t - u)


def mixed_conditional_cov(
    model: VolterraModel,
    grid: TimeGrid,
    spec: JumpSpec,
    t: float,
    s: float,
    u: float,
    *,
    discrete: bool = False,
) -> float:
    """R^G(t,s|u) + lambda (min(t,s) - u) mu2."""
    gauss = gvp_conditional_cov(model, grid, t, s, u, discrete=discrete)
    return gauss + spec.variance(min(t, s) - u)


def mixed_conditional_density(  # noqa: PLR0913
    op: DiscreteOperator,
    spec: JumpSpec,
    X: MixedPath,
    u: float,
    t: float,
    vgrid: ValueGrid | None = None,
    tail_tol: float = 1e-8,
    *,
    closed_form: bool = False,
    discrete: bool = False,
    cells: int = DEFAULT_CELLS,
    width: float = 8.0,
) -> PredictionLaw:
    """Law of X_t given the decomposed observation up to u."""
    if op.model is None:
        raise ValidationError("Conditional law needs an operator built from a model")
    model = op.model
    grid = op.grid
    m = grid.index(u)
    m_g = gvp_conditional_mean(op, X.G, u, t, closed_form=closed_form)
    var_g = gvp_conditional_cov(model, grid, t, t, u, discrete=discrete)
    J_u = X.J.at(u) if m else 0.0
    tau = t - u

    rate = spec.intensity * tau
    n_max = poisson_truncation(rate, tail_tol) if rate > 0 else 0
    sd = math.sqrt(var_g + spec.variance(tau))
    mean = m_g + J_u + spec.drift(tau)
    if vgrid is None:
        vgrid = _value_grid(mean, sd, n_max * spec.dist.spread, cells, width)
    jumps = compound_poisson_law(spec, tau, J_u, vgrid, tail_tol)
    if var_g <= DEGENERATE_VARIANCE:
        _LOG.debug("degenerate Gaussian variance %.3g, shifting the jump law", var_g)
        law = jumps.shifted(m_g)
    else:
        law = jumps.convolve_normal(m_g, var_g)
    tail = float(poisson.sf(n_max, rate)) if rate > 0 else 0.0
    if law.mass_defect > 1e-6:
        _LOG.warning("prediction law mass defect %.3g", law.mass_defect)
    return PredictionLaw(
        m_hat=mean,
        r_hat=lambda a, b: mixed_conditional_cov(
            model, grid, spec, a, b, u, discrete=discrete
        ),
        density=law,
        vgrid=vgrid,
        meta={
            "u": u,
            "t": t,
            "n_max": n_max,
            "tail_mass": tail,
            "mass_defect": law.mass_defect,
        },
    )

"""Closed-form kernels of the fBm and ccmfBm families."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from gvp_predict.errors import SeriesDivergenceError, ValidationError
from gvp_predict.grid import TimeGrid
from gvp_predict.kernels import (
    HurstParams,
    ccm_adjoint_apply,
    ccm_gamma,
    ccm_inverse_kernel,
    ccm_inverse_values,
    ccm_kernel,
    fbm_brownian_cross,
    fbm_covariance,
    fbm_kernel,
    fbm_kernel_values,
    fbm_normalizer,
    fbm_psi,
    fbm_psi_values,
)
from gvp_predict.models import FbmModel


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_normalizer_gamma_form(H: float) -> None:
    """c_H agrees with the reflection form through Gamma(2-2H) = (1-2H) Gamma(1-2H)."""
    alt = math.sqrt(
        2 * H * gamma(1.5 - H) / ((1 - 2 * H) * gamma(1 - 2 * H) * gamma(H + 0.5))
    )
    assert fbm_normalizer(H) == pytest.approx(alt, rel=1e-13)


def test_brownian_degeneracy() -> None:
    """H = 1/2: K = 1, c_H = 1, Psi = 0 and R = min."""
    assert fbm_normalizer(0.5) == pytest.approx(1.0, abs=1e-12)
    assert fbm_kernel(1.0, 0.3, 0.5).value == 1.0
    assert fbm_kernel_values(1.0, np.array([0.1, 0.5, 1.0, 1.5]), 0.5) == pytest.approx(
        [1.0, 1.0, 0.0, 0.0]
    )
    assert fbm_psi(1.0, 0.2, 0.5, 0.5).value == 0.0
    assert fbm_covariance(0.3, 0.7, 0.5) == pytest.approx(0.3, abs=1e-12)


def test_covariance() -> None:
    """R_H(t,t) = t^2H, symmetric, vectorised."""
    assert fbm_covariance(0.5, 0.5, 0.75) == pytest.approx(0.5**1.5)
    assert fbm_covariance(0.2, 0.9, 0.3) == fbm_covariance(0.9, 0.2, 0.3)
    t = np.array([0.25, 0.5, 1.0])
    mat = fbm_covariance(t[:, None], t[None, :], 0.75)
    assert isinstance(mat, np.ndarray)
    assert mat.shape == (3, 3)
    with pytest.raises(ValidationError):
        fbm_covariance(-1.0, 0.5, 0.75)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_kernel_scalar_matches_vector(H: float) -> None:
    """Scalar and vectorised kernels agree; zero on and beyond the diagonal."""
    s = np.array([0.05, 0.3, 0.7, 1.0, 1.2])
    vec = fbm_kernel_values(1.0, s, H)
    for si, vi in zip(s[:3], vec[:3], strict=True):
        assert fbm_kernel(1.0, float(si), H).value == pytest.approx(vi, rel=1e-9)
    assert vec[3:] == pytest.approx([0.0, 0.0])
    assert fbm_kernel(1.0, 1.0, H).value == 0.0


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_kernel_factorisation_at_one_pair(H: float) -> None:
    """int_0^s K(t,x) K(s,x) dx = R_H(t, s) at (t, s) = (1, 0.5)."""
    model = FbmModel(H)
    value = model.kernel_product_integral(1.0, 0.5, 0.5)
    assert value == pytest.approx(fbm_covariance(1.0, 0.5, H), rel=1e-6)


@pytest.mark.slow
@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_kernel_factorisation_grid(H: float) -> None:
    """|int K K - R| <= max(1e-3, 1e-3 R) on an 8x8 grid in (0, 1]."""
    model = FbmModel(H)
    times = np.arange(1, 9) / 8
    for i, t in enumerate(times):
        for s in times[: i + 1]:
            ref = fbm_covariance(t, s, H)
            value = model.kernel_product_integral(t, s, s)
            assert abs(value - ref) <= max(1e-3, 1e-3 * ref), (t, s)


def test_psi_support_and_sign() -> None:
    """Psi vanishes outside (0, u) and is positive for H > 1/2."""
    vals = fbm_psi_values(0.75, np.array([-0.1, 0.1, 0.25, 0.49, 0.5, 0.6]), 0.5, 0.75)
    assert vals[0] == 0.0
    assert np.all(vals[1:4] > 0)
    assert vals[4:] == pytest.approx([0.0, 0.0])
    assert fbm_psi_values(0.5, np.array([0.1, 0.2]), 0.5, 0.75) == pytest.approx([0, 0])
    with pytest.raises(ValidationError):
        fbm_psi(0.75, 0.6, 0.5, 0.75)


def test_ccm_kernel_additivity() -> None:
    """K_{a,b,H} = a + b K_H below the diagonal."""
    k = fbm_kernel(1.0, 0.5, 0.75).value
    assert ccm_kernel(1.0, 0.5, 1.0, 1.0, 0.75).value == pytest.approx(1.0 + k, rel=1e-10)
    assert ccm_kernel(1.0, 0.5, 2.0, 0.0, 0.75).value == 2.0
    assert ccm_kernel(0.5, 1.0, 1.0, 1.0, 0.75).value == 0.0


def test_ccm_gamma_positive() -> None:
    """gamma_k are positive kernels that vanish on the diagonal side."""
    g1 = ccm_gamma(1, 1.0, 0.5, 0.75)
    g2 = ccm_gamma(2, 1.0, 0.5, 0.75)
    assert g1 > 0
    assert g2 > 0
    assert ccm_gamma(1, 0.5, 1.0, 0.75) == 0.0
    with pytest.raises(ValidationError):
        ccm_gamma(0, 1.0, 0.5, 0.75)


def test_ccm_inverse_series() -> None:
    """b = 0 gives 1/a; the series converges for a=1, b=0.5."""
    assert ccm_inverse_kernel(1.0, 0.5, 2.0, 0.0, 0.75).value == 0.5
    inv = ccm_inverse_kernel(1.0, 0.5, 1.0, 0.5, 0.75, series_tol=1e-12)
    assert inv.terms > 0
    assert inv.error_estimate < 1e-12
    # the first correction is negative for b/a > 0
    assert inv.value < 1.0
    vals, terms, _ = ccm_inverse_values(1.0, np.array([0.25, 0.5, 1.0]), 1.0, 0.5, 0.75)
    assert vals[1] == pytest.approx(inv.value, abs=1e-10)
    assert vals[2] == 0.0
    assert terms > 0


def test_ccm_adjoint_apply() -> None:
    """Adjoint of an indicator is the kernel column; b = 0 scales by a."""
    grid = TimeGrid.uniform(1.0, 8)
    f = np.linspace(1.0, 2.0, 8)
    assert np.array_equal(ccm_adjoint_apply(f, grid, 2.0, 0.0, 0.75), 2.0 * f)
    assert np.all(ccm_adjoint_apply(np.zeros(8), grid, 1.0, 0.5, 0.75) == 0.0)
    k = 5
    ind = (np.arange(8) < k).astype(float)
    got = ccm_adjoint_apply(ind, grid, 1.0, 0.5, 0.75)
    t_k = grid.times[k]
    want = [ccm_kernel(t_k, s, 1.0, 0.5, 0.75).value for s in grid.times]
    assert got == pytest.approx(want, rel=1e-6, abs=1e-9)
    with pytest.raises(ValidationError):
        ccm_adjoint_apply(np.ones(3), grid, 1.0, 0.5, 0.75)


@pytest.mark.parametrize(
    ("H", "a", "b"), [(0.0, None, None), (1.0, None, None), (0.75, 0.0, 1.0), (0.4, 1.0, 1.0)]
)
def test_invalid_parameters(H: float, a: float | None, b: float | None) -> None:
    """H outside (0, 1), a = 0 and ccmfBm with H <= 1/2 are rejected."""
    with pytest.raises(ValidationError):
        HurstParams(H, a, b)


def _gamma_by_quad(k: int, t: float, s: float, H: float) -> float:
    d = H - 0.5
    pref = (fbm_normalizer(H) * math.gamma(H + 0.5)) ** k / math.gamma(k * d)
    val, _ = quad(lambda x: x**d, s, t, weight="alg", wvar=(k * d - 1.0, 0.0), epsabs=1e-15, epsrel=1e-13)
    return pref * s ** (-d) * val


def test_normalizer_closed_forms() -> None:
    """c_H at H = 3/4 and H = 1/4 through Gamma(1/4)."""
    g = math.gamma(0.25)
    assert fbm_normalizer(0.75) ** 2 == pytest.approx(6 * math.sqrt(2 * math.pi) / g**2, rel=1e-14)
    assert fbm_normalizer(0.25) ** 2 == pytest.approx(
        g**2 / (4 * math.sqrt(2) * math.pi**1.5), rel=1e-14
    )


@pytest.mark.parametrize(("k", "s"), [(1, 0.5), (2, 0.5), (2, 1e-3), (5, 0.1)])
def test_ccm_gamma_against_quad(k: int, s: float) -> None:
    """gamma_k(1, s) at H = 3/4 against adaptive algebraic-weight quadrature."""
    assert ccm_gamma(k, 1.0, s, 0.75) == pytest.approx(_gamma_by_quad(k, 1.0, s, 0.75), rel=1e-10)


def test_ccm_inverse_against_series() -> None:
    """K^{-1}_{1,1/2,3/4}(1, 1/2) against the series summed from quadrature terms."""
    total = 1.0
    for k in range(1, 80):
        term = (-0.5) ** k * _gamma_by_quad(k, 1.0, 0.5, 0.75)
        total += term
        if abs(term) < 1e-16:
            break
    inv = ccm_inverse_kernel(1.0, 0.5, 1.0, 0.5, 0.75, series_tol=1e-13)
    assert inv.value == pytest.approx(total, rel=1e-9)


def test_ccm_inverse_near_origin() -> None:
    """The series converges at series_tol 1e-12 for points close to zero."""
    s = np.array([1e-3, 0.01, 0.5])
    vals, terms, last = ccm_inverse_values(1.0, s, 1.0, 0.5, 0.75, 1e-12)
    assert np.all(np.isfinite(vals))
    assert last < 1e-12
    assert terms > 1
    assert vals[2] == pytest.approx(ccm_inverse_kernel(1.0, 0.5, 1.0, 0.5, 0.75).value, abs=1e-10)


def test_ccm_inverse_overflow() -> None:
    """A ratio b/a far outside the convergence range raises."""
    with pytest.raises(SeriesDivergenceError) as err:
        ccm_inverse_values(1.0, np.array([0.5]), 1.0, 1e6, 0.75)
    assert err.value.terms > 1


def test_brownian_cross_at_the_diagonal() -> None:
    """E[B^H_t W_t] in closed form; zero at u = 0; validated range."""
    H, d = 0.75, 0.25
    want = fbm_normalizer(H) * gamma(1 - d) * gamma(1 + d) / (1 + d)
    got = fbm_brownian_cross(np.array([1.0, 0.5, 1.0]), np.array([1.0, 0.0, 0.5]), H)
    assert got[0] == pytest.approx(want, rel=1e-13)
    assert got[1] == 0.0
    assert 0 < got[2] < got[0]
    with pytest.raises(ValidationError):
        fbm_brownian_cross(0.5, 1.0, H)

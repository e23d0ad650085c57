"""Oracles and the verification suite."""

import logging

import numpy as np
import pytest

from gvp_predict.errors import ValidationError
from gvp_predict.grid import SamplePath, TimeGrid
from gvp_predict.jumps import JumpSpec, NormalJumps
from gvp_predict.kernels import fbm_covariance
from gvp_predict.models import CcmFbmModel, FbmModel
from gvp_predict.operators import build_operator
from gvp_predict.simulation import MixedPath, simulate_mixed
from gvp_predict.verification import (
    VerificationSuite,
    ccm_inverse_agreement,
    ccm_inverse_composition,
    conditioning_oracle,
    grid_inverse_kernel,
    ks_distance,
    mc_conditional_sample,
)


def _brownian(t: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.minimum(t, s)


def test_oracle_self_consistency() -> None:
    """Conditioning on t itself returns the observation with zero variance."""
    res = conditioning_oracle(
        lambda t, s: fbm_covariance(t, s, 0.75), [0.25, 0.5], [0.3, -0.1], 0.5
    )
    assert res.mean == pytest.approx(-0.1)
    assert res.variance == pytest.approx(0.0, abs=1e-12)


def test_oracle_brownian() -> None:
    """Brownian motion: mean is the last value, variance the time gap."""
    res = conditioning_oracle(_brownian, [0.25, 0.5], [0.3, -0.1], 0.75)
    assert res.mean == pytest.approx(-0.1)
    assert res.variance == pytest.approx(0.25)
    assert res.weights == pytest.approx([0.0, 1.0], abs=1e-12)
    empty = conditioning_oracle(_brownian, [], [], 0.75)
    assert empty.mean == 0.0
    assert empty.variance == 0.75
    with pytest.raises(ValidationError):
        conditioning_oracle(_brownian, [0.5], [0.1], 0.25)


def test_ks_distance() -> None:
    """Continuous and tie-aware distances."""
    rng = np.random.default_rng(0)
    x = rng.uniform(size=20_000)
    assert ks_distance(x, lambda v: np.clip(v, 0, 1)) < 0.02
    coin = rng.integers(0, 2, 20_000).astype(float)

    def cdf(v: np.ndarray) -> np.ndarray:
        return np.where(v >= 1, 1.0, np.where(v >= 0, 0.5, 0.0))

    def cdf_left(v: np.ndarray) -> np.ndarray:
        return np.where(v > 1, 1.0, np.where(v > 0, 0.5, 0.0))

    assert ks_distance(coin, cdf, cdf_left) < 0.02
    assert ks_distance(np.zeros(10), cdf, cdf_left) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        ks_distance([], cdf)


def test_mc_sampler_brownian() -> None:
    """No jumps, H = 1/2: samples are G_u + N(0, t - u)."""
    grid = TimeGrid.uniform(1.0, 16)
    model = FbmModel(0.5)
    spec = JumpSpec(0.0)
    op = build_operator(model, grid)
    path = simulate_mixed(model, spec, grid, 3)
    samples = mc_conditional_sample(op, spec, path, 0.5, 1.0, 10_000, 4)
    n = samples.size
    assert abs(samples.mean() - path.G.at(0.5)) <= 3 * np.sqrt(0.5 / n)
    assert abs(samples.var() - 0.5) <= 3 * 0.5 * np.sqrt(2 / n)


def test_mc_sampler_is_thread_independent() -> None:
    """Chunks carry their own seeds."""
    grid = TimeGrid.uniform(1.0, 16)
    model = FbmModel(0.75)
    spec = JumpSpec(5.0, NormalJumps(0.1, 0.04))
    op = build_operator(model, grid)
    path = simulate_mixed(model, spec, grid, 3, method="cholesky")
    one = mc_conditional_sample(op, spec, path, 0.5, 0.75, 25_000, 8)
    four = mc_conditional_sample(op, spec, path, 0.5, 0.75, 25_000, 8, threads=4)
    assert np.array_equal(one, four)
    with pytest.raises(ValidationError):
        mc_conditional_sample(op, spec, path, 0.75, 0.5, 10, 8)


def test_grid_inverse_kernel_inverts() -> None:
    """The grid inverse maps G back to the martingale values."""
    grid = TimeGrid.uniform(1.0, 16)
    op = build_operator(CcmFbmModel(1.0, 0.5, 0.75), grid)
    inv = grid_inverse_kernel(op)
    dM = np.random.default_rng(1).standard_normal(16)
    G = op.kernel @ dM
    dG = np.diff(G, prepend=0.0)
    assert inv @ dG == pytest.approx(np.cumsum(dM))


@pytest.mark.slow
def test_ccm_inverse_agreement() -> None:
    """The cell-wise gap to the triangular-solve inverse shrinks with n."""
    model = CcmFbmModel(1.0, 0.5, 0.75)
    devs = [ccm_inverse_agreement(model, TimeGrid.uniform(1.0, n)) for n in (16, 32, 64)]
    assert devs[0] > devs[1] > devs[2]


@pytest.mark.slow
@pytest.mark.parametrize(("a", "b", "H"), [(1.0, 0.5, 0.75), (1.0, -0.8, 0.6), (2.0, 1.0, 0.9)])
def test_ccm_inverse_composition(a: float, b: float, H: float) -> None:
    """The kernel applied to the series inverse is the identity."""
    assert ccm_inverse_composition(a, b, H, 1.0, [1e-3, 0.05, 0.5, 0.9]) <= 1e-6


def test_ccm_inverse_composition_rejects_points() -> None:
    with pytest.raises(ValidationError):
        ccm_inverse_composition(1.0, 0.5, 0.75, 1.0, [1.0])


def test_suite_records_failures(caplog: pytest.LogCaptureFixture) -> None:
    """Numerical errors become failed entries instead of aborting the run."""
    caplog.set_level(logging.INFO)
    grid = TimeGrid.uniform(1.0, 16)
    suite = VerificationSuite(
        model=FbmModel(0.75),
        spec=JumpSpec(5.0, NormalJumps(0.1, 0.04)),
        grid=grid,
        times=(0.75, 1.0),
        n_paths=20_000,
        tolerance=0.1,
    )
    results = suite.run()
    names = {r.check for r in results}
    assert {"adjoint_round_trip", "martingale_round_trip", "mc_mean", "mc_ks"} <= names
    assert all(r.passed for r in results if r.check.endswith("round_trip"))
    assert "verify: " in caplog.text

    suite.record("forced", 1.0, 0.0, 0.5)
    assert not suite.passed


def test_mixed_path_needs_same_grid() -> None:
    """Sampling rejects a path from another grid."""
    grid = TimeGrid.uniform(1.0, 16)
    other = TimeGrid.uniform(1.0, 8)
    zero = SamplePath(other, np.zeros(8))
    path = MixedPath(zero, zero, zero, np.zeros(0), np.zeros(0))
    op = build_operator(FbmModel(0.75), grid)
    with pytest.raises(ValidationError):
        mc_conditional_sample(op, JumpSpec(0.0), path, 0.5, 0.75, 10, 0)

"""Grid realisation of K, its adjoint and their inverses."""

import numpy as np
import pytest

from gvp_predict.errors import SingularOperatorError, ValidationError
from gvp_predict.grid import SamplePath, TimeGrid
from gvp_predict.models import CcmFbmModel, FbmModel, MfbmModel, VolterraModel
from gvp_predict.operators import (
    DiscreteOperator,
    adjoint_apply,
    adjoint_invert,
    build_operator,
    discrete_psi,
    forward_map,
    indicator,
    kernel_increments,
    kernel_row,
    recover_martingale,
)
from gvp_predict.wiener_hopf import solve_wh


def test_kernel_increments() -> None:
    """B[j, i] = A[i, j] - A[i-1, j]."""
    A = np.array([[1.0, 0.0], [2.0, 3.0]])
    assert kernel_increments(A) == pytest.approx(np.array([[1.0, 1.0], [0.0, 3.0]]))


def test_adjoint_of_indicator_is_kernel_row() -> None:
    """K* 1_[0,t) telescopes to K(t, .)."""
    grid = TimeGrid.uniform(1.0, 16)
    op = build_operator(FbmModel(0.75), grid)
    for t in (0.25, 0.5, 1.0):
        assert adjoint_apply(op, indicator(grid, t)) == pytest.approx(kernel_row(op, t))
    assert not np.any(kernel_row(op, 0))


def _models(n: int) -> list[VolterraModel]:
    grid = TimeGrid.uniform(1.0, n)
    return [FbmModel(0.75), CcmFbmModel(1.0, 0.5, 0.75), MfbmModel(solve_wh(grid, 0.75))]


@pytest.mark.parametrize("n", [32, 128, pytest.param(512, marks=pytest.mark.slow)])
def test_round_trips(n: int) -> None:
    """adjoint_invert(adjoint_apply(f)) = f and forward(recover(G)) = G."""
    grid = TimeGrid.uniform(1.0, n)
    tol = 1e-10 if n <= 128 else 1e-9
    rng = np.random.default_rng(7)
    for model in _models(n):
        op = build_operator(model, grid)
        f = rng.standard_normal(n)
        assert np.max(np.abs(adjoint_invert(op, adjoint_apply(op, f)) - f)) <= tol
        G = forward_map(op, rng.standard_normal(n) * np.sqrt(op.dv))
        back = forward_map(op, recover_martingale(op, G).increments())
        assert np.max(np.abs(back.values - G.values)) <= tol * max(1.0, float(np.max(np.abs(G.values))))


def test_recovered_increments_have_bracket_variance() -> None:
    """Var dM_j = dv_j over simulated paths."""
    grid = TimeGrid.uniform(1.0, 8)
    op = build_operator(FbmModel(0.75), grid)
    rng = np.random.default_rng(3)
    n_paths = 1000
    dM = np.empty((n_paths, 8))
    for k in range(n_paths):
        G = forward_map(op, rng.standard_normal(8) * np.sqrt(op.dv))
        dM[k] = recover_martingale(op, G).increments()
    se = op.dv * np.sqrt(2 / n_paths)
    assert np.all(np.abs(dM.var(axis=0) - op.dv) <= 4 * se)


def test_gram_identity() -> None:
    """B^T diag(dv) B gives the covariance of the grid increments of G."""
    grid = TimeGrid.uniform(1.0, 8)
    op = build_operator(FbmModel(0.75), grid)
    inc = np.diff(np.eye(8), axis=0, prepend=0.0)
    cov = (op.kernel * op.dv) @ op.kernel.T
    assert op.B.T @ np.diag(op.dv) @ op.B == pytest.approx(inc @ cov @ inc.T)


def test_brownian_psi_vanishes() -> None:
    """H = 1/2 has no memory."""
    op = build_operator(FbmModel(0.5), TimeGrid.uniform(1.0, 8))
    assert discrete_psi(op, 1.0, 0.5) == pytest.approx(np.zeros(8), abs=1e-12)
    assert discrete_psi(op, 1.0, 0.5, closed_form=True) == pytest.approx(np.zeros(8))


def test_psi_edge_cases() -> None:
    """u = 0 and u = t give zero weights; u > t is rejected."""
    op = build_operator(FbmModel(0.75), TimeGrid.uniform(1.0, 8))
    assert not np.any(discrete_psi(op, 0.5, 0))
    assert not np.any(discrete_psi(op, 0.5, 0.5))
    with pytest.raises(ValidationError):
        discrete_psi(op, 0.5, 0.75)


def test_closed_form_psi_close_to_discrete() -> None:
    """Both routes give nearly the same prediction of a simulated path."""
    grid = TimeGrid.uniform(1.0, 128)
    op = build_operator(FbmModel(0.75), grid)
    rng = np.random.default_rng(11)
    G = forward_map(op, rng.standard_normal(128) * np.sqrt(op.dv))
    inc = G.increments()
    disc = discrete_psi(op, 0.75, 0.5) @ inc
    exact = discrete_psi(op, 0.75, 0.5, closed_form=True) @ inc
    sd = np.sqrt(0.25**1.5)
    assert abs(disc - exact) <= 0.05 * sd
    with pytest.raises(ValidationError):
        discrete_psi(build_operator(CcmFbmModel(1.0, 0.5, 0.75), grid), 0.75, 0.5, closed_form=True)


def test_singular_operator() -> None:
    """A zero diagonal entry cannot be inverted."""
    grid = TimeGrid.uniform(1.0, 2)
    B = np.array([[1.0, 0.5], [0.0, 0.0]])
    op = DiscreteOperator(grid, np.array([[1.0, 0.0], [1.5, 0.0]]), B, np.ones(2))
    with pytest.raises(SingularOperatorError) as info:
        adjoint_invert(op, np.ones(2))
    assert info.value.index == 1
    with pytest.raises(SingularOperatorError):
        recover_martingale(op, SamplePath(grid, np.ones(2)))


def test_operator_validation() -> None:
    """B must be upper triangular and dv positive."""
    grid = TimeGrid.uniform(1.0, 2)
    with pytest.raises(ValidationError):
        DiscreteOperator(grid, np.eye(2), np.ones((2, 2)), np.ones(2))
    with pytest.raises(ValidationError):
        DiscreteOperator(grid, np.eye(2), np.eye(2), np.zeros(2))
    op = build_operator(FbmModel(0.75), grid)
    with pytest.raises(ValidationError):
        adjoint_apply(op, np.ones(3))

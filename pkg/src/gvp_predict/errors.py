"""Errors raised by gvp_predict, each mapped to a CLI exit code."""

from __future__ import annotations


class GvpError(Exception):
    """Base error."""

    exit_code = 2


class ValidationError(GvpError, ValueError):
    """Invalid input or violated precondition."""

    exit_code = 1


class NumericalError(GvpError, ArithmeticError):
    """A numerical method failed."""

    exit_code = 2


class QuadratureError(NumericalError):
    """Node doubling reached the cap without meeting the tolerance."""

    def __init__(
        self, msg: str, value: float, error_estimate: float, nodes_used: int
    ) -> None:
        """Init."""
        super().__init__(
            f"{msg} (value={value:.6g}, error={error_estimate:.3g}, nodes={nodes_used})"
        )
        self.value = value
        self.error_estimate = error_estimate
        self.nodes_used = nodes_used


class SeriesDivergenceError(NumericalError):
    """Series did not reach its tolerance or its tail is not monotone."""

    def __init__(self, msg: str, terms: int, last_term: float) -> None:
        """Init."""
        super().__init__(f"{msg} (terms={terms}, last term={last_term:.3g})")
        self.terms = terms
        self.last_term = last_term


class SingularOperatorError(NumericalError):
    """Discrete operator has a (numerically) zero diagonal entry."""

    def __init__(self, index: int, diagonal: float) -> None:
        """Init."""
        super().__init__(
            f"Discrete operator not invertible: diagonal[{index}]={diagonal:.3g}"
        )
        self.index = index
        self.diagonal = diagonal


class FactorizationError(NumericalError):
    """Covariance matrix is not positive semi-definite within jitter."""


class ResidualError(NumericalError):
    """Residual of a discrete equation exceeds its limit."""

    def __init__(self, msg: str, residual: float, limit: float) -> None:
        """Init."""
        super().__init__(f"{msg}: residual {residual:.3g} > {limit:.3g}")
        self.residual = residual
        self.limit = limit


class StorageError(GvpError, OSError):
    """Reading or writing an output file failed."""

    exit_code = 3

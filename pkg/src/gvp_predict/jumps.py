"""Jump size distributions and compound Poisson jump parameters."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ValidationError

QUANTILE_SDS = 8.0


class JumpDist(ABC):
    """Square-integrable jump size distribution."""

    kind = ""

    @property
    @abstractmethod
    def mu1(self) -> float:
        """E[xi]."""

    @property
    @abstractmethod
    def mu2(self) -> float:
        """E[xi^2]."""

    @property
    @abstractmethod
    def spread(self) -> float:
        """Largest |x| over the (quantile-truncated) support."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Draw ``size`` jump sizes."""

    def params(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"dist": self.kind}


@dataclass(frozen=True)
class NormalJumps(JumpDist):
    """Normal(m, s2) jumps."""

    m: float = 0.0
    s2: float = 1.0

    kind = "normal"

    def __post_init__(self) -> None:
        """Validate."""
        if not math.isfinite(self.m) or not 0 <= self.s2 < math.inf:
            raise ValidationError(f"normal jumps need finite m and s2 >= 0, got {self}")

    @property
    def mu1(self) -> float:
        """m."""
        return self.m

    @property
    def mu2(self) -> float:
        """m^2 + s2."""
        return self.m**2 + self.s2

    @property
    def spread(self) -> float:
        """|m| + 8 sd."""
        return abs(self.m) + QUANTILE_SDS * math.sqrt(self.s2)

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Normal draws."""
        return rng.normal(self.m, math.sqrt(self.s2), size)

    def params(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"dist": self.kind, "m": self.m, "s2": self.s2}


@dataclass(frozen=True)
class TwoPointJumps(JumpDist):
    """x1 with probability p, x2 otherwise."""

    x1: float = 1.0
    p: float = 0.5
    x2: float = -1.0

    kind = "two_point"

    def __post_init__(self) -> None:
        """Validate."""
        if not 0 <= self.p <= 1:
            raise ValidationError(f"two_point jumps need p in [0, 1], got {self.p}")
        if not (math.isfinite(self.x1) and math.isfinite(self.x2)):
            raise ValidationError("two_point jump sizes must be finite")

    @property
    def mu1(self) -> float:
        """p x1 + (1-p) x2."""
        return self.p * self.x1 + (1 - self.p) * self.x2

    @property
    def mu2(self) -> float:
        """p x1^2 + (1-p) x2^2."""
        return self.p * self.x1**2 + (1 - self.p) * self.x2**2

    @property
    def spread(self) -> float:
        """max(|x1|, |x2|)."""
        return max(abs(self.x1), abs(self.x2))

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Bernoulli choice between x1 and x2."""
        return np.where(rng.random(size) < self.p, self.x1, self.x2)

    def params(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"dist": self.kind, "x1": self.x1, "p": self.p, "x2": self.x2}


@dataclass(frozen=True)
class UniformJumps(JumpDist):
    """Uniform(lo, hi) jumps."""

    lo: float = 0.0
    hi: float = 1.0

    kind = "uniform"

    def __post_init__(self) -> None:
        """Validate."""
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo >= self.hi:
            raise ValidationError(f"uniform jumps need lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def mu1(self) -> float:
        """(lo + hi) / 2."""
        return 0.5 * (self.lo + self.hi)

    @property
    def mu2(self) -> float:
        """(lo^2 + lo hi + hi^2) / 3."""
        return (self.lo**2 + self.lo * self.hi + self.hi**2) / 3.0

    @property
    def spread(self) -> float:
        """max(|lo|, |hi|)."""
        return max(abs(self.lo), abs(self.hi))

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Uniform draws."""
        return rng.uniform(self.lo, self.hi, size)

    def cell_masses(self, h: float) -> tuple[int, NDArray[np.float64]]:
        """Masses on cells of width h centred at k h; returns (first k, masses)."""
        k_lo = math.floor(self.lo / h + 0.5)
        k_hi = math.ceil(self.hi / h - 0.5)
        centres = h * np.arange(k_lo, k_hi + 1)
        left = np.maximum(centres - 0.5 * h, self.lo)
        right = np.minimum(centres + 0.5 * h, self.hi)
        masses = np.clip(right - left, 0.0, None) / (self.hi - self.lo)
        return k_lo, masses / masses.sum()

    def params(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"dist": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class JumpSpec:
    """Compound Poisson jumps: intensity and jump size distribution."""

    intensity: float = 0.0
    dist: JumpDist = field(default_factory=NormalJumps)

    def __post_init__(self) -> None:
        """Validate."""
        if not 0 <= self.intensity < math.inf:
            raise ValidationError(f"Jump intensity must be >= 0, got {self.intensity}")

    @property
    def mu1(self) -> float:
        """First moment of a jump."""
        return self.dist.mu1

    @property
    def mu2(self) -> float:
        """Second moment of a jump."""
        return self.dist.mu2

    def drift(self, tau: float) -> float:
        """E[J_{u+tau} - J_u] = lambda tau mu1."""
        return self.intensity * tau * self.mu1

    def variance(self, tau: float) -> float:
        """Var[J_{u+tau} - J_u] = lambda tau mu2."""
        return self.intensity * tau * self.mu2

    def params(self) -> dict[str, float | str]:
        """Parameters for manifests."""
        return {"intensity": self.intensity, **self.dist.params()}

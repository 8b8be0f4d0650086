from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True)
class CovarianceSpec:
    """Exponential covariance ``sigma2 * exp(-phi * d)`` plus nugget ``tau2``."""

    sigma2: float
    phi: float
    tau2: float = 0.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InvalidInputError("sigma2 must be positive")
        if not self.phi > 0:
            raise InvalidInputError("phi must be positive")
        if not self.tau2 >= 0:
            raise InvalidInputError("tau2 must be non-negative")

    @property
    def alpha(self) -> float:
        return self.tau2 / self.sigma2

    @classmethod
    def from_alpha(cls, alpha: float, phi: float) -> "CovarianceSpec":
        """Unit-sill spec with nugget ratio ``alpha``."""
        return cls(1.0, phi, alpha)

    def correlation(self, d):
        return np.exp(-self.phi * np.asarray(d, dtype=float))

    def covariance(self, d):
        return self.sigma2 * self.correlation(d)

"""Sinc (Colbert-Miller) discrete variable representation on a uniform grid.

The grid basis makes any function of position exactly diagonal, while the
second-derivative operator has a closed form:

    T[n, n] = pi^2 / (3 dx^2)
    T[m, n] = 2 (-1)^(m-n) / (dx^2 (m-n)^2),   m != n

for -d^2/dx^2 on points x_n = x_0 + n*dx.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidGridError


@dataclass(frozen=True)
class DvrBasis:
    """Uniform grid with the analytic kinetic matrix for -d^2/dx^2."""

    points: np.ndarray
    spacing: float
    kinetic: np.ndarray

    @property
    def n(self) -> int:
        return self.points.shape[0]


def build_uniform_dvr(n_points: int, x_max: float) -> DvrBasis:
    """Grid of ``n_points`` values symmetric about 0 on [-x_max, x_max].

    Raises
    ------
    InvalidGridError
        For fewer than 3 points or a non-positive/non-finite extent.
    """
    if n_points < 3:
        raise InvalidGridError(f"need at least 3 grid points, got {n_points}")
    if not np.isfinite(x_max) or x_max <= 0.0:
        raise InvalidGridError(f"x_max must be finite and positive, got {x_max}")
    points = np.linspace(-x_max, x_max, n_points)
    spacing = points[1] - points[0]

    idx = np.arange(n_points)
    diff = idx[:, None] - idx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        kinetic = 2.0 * (-1.0) ** diff / (spacing**2 * diff.astype(float) ** 2)
    np.fill_diagonal(kinetic, np.pi**2 / (3.0 * spacing**2))
    return DvrBasis(points=points, spacing=float(spacing), kinetic=kinetic)

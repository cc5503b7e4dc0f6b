"""Dense Hermitian eigendecomposition and energy-ordered truncation.

Every diagonalization in the package funnels through this module so that
validation, ordering and tie-breaking conventions are fixed in one place.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    InvalidCountError,
    NonFiniteError,
    NonHermitianError,
)

# relative tolerance deciding whether a matrix counts as Hermitian
HERMITICITY_RTOL = 1e-10

# gap below which neighbouring eigenvalues count as one degenerate multiplet
DEGENERACY_GAP = 1e-9

# above this dimension, partial spectra use the subset LAPACK driver
_SUBSET_DRIVER_MIN_DIM = 1024


@dataclass(frozen=True)
class EigenPairs:
    """Ascending eigenvalues paired with orthonormal column eigenvectors.

    Column k of ``vectors`` belongs to ``values[k]``.
    """

    values: np.ndarray
    vectors: np.ndarray

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.size


def _checked_hermitian(matrix, rtol):
    h = np.asarray(matrix)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {h.shape}")
    if h.size and not np.all(np.isfinite(h)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    scale = max(1.0, np.abs(h).max()) if h.size else 1.0
    asym = np.abs(h - h.conj().T).max() if h.size else 0.0
    if asym > rtol * scale:
        raise NonHermitianError(
            f"asymmetry {asym:.3e} exceeds {rtol:.1e} * scale {scale:.3e}"
        )
    # symmetrize so LAPACK sees an exactly Hermitian matrix
    return 0.5 * (h + h.conj().T)


def eig_hermitian(matrix, rtol=HERMITICITY_RTOL) -> EigenPairs:
    """Full eigendecomposition of a Hermitian matrix.

    Eigenvalues come back ascending; eigenvectors are column-orthonormal.
    The output is deterministic for bit-identical input (LAPACK fixes the
    basis inside degenerate multiplets in a reproducible way).

    Raises
    ------
    NonHermitianError
        If the asymmetry exceeds ``rtol`` relative to the largest entry.
    NonFiniteError
        If the matrix contains NaN or Inf.
    """
    h = _checked_hermitian(matrix, rtol)
    values, vectors = np.linalg.eigh(h)
    return EigenPairs(values, vectors)


def eig_hermitian_lowest(matrix, k, rtol=HERMITICITY_RTOL) -> EigenPairs:
    """Lowest ``k`` eigenpairs of a Hermitian matrix.

    Same contract as :func:`eig_hermitian` restricted to the bottom of the
    spectrum.  Small matrices (or full requests) go through the ordinary
    solver; large partial requests use the LAPACK subset driver, which is
    still a dense method.
    """
    h = _checked_hermitian(matrix, rtol)
    n = h.shape[0]
    if not 1 <= k <= n:
        raise InvalidCountError(f"k={k} out of range for dimension {n}")
    if k == n or n <= _SUBSET_DRIVER_MIN_DIM:
        values, vectors = np.linalg.eigh(h)
        return EigenPairs(values[:k], vectors[:, :k])
    values, vectors = scipy.linalg.eigh(h, subset_by_index=(0, k - 1), driver="evr")
    return EigenPairs(values, vectors)


def truncate_low(
    pairs: EigenPairs,
    d_retain: int,
    close_multiplets: bool = False,
    gap: float = DEGENERACY_GAP,
) -> EigenPairs:
    """Keep the ``d_retain`` lowest-energy pairs.

    Ties exactly at the cutoff are broken by original column index (the
    lower index wins), which is deterministic because the input is already
    sorted ascending.  With ``close_multiplets=True`` the cut is pushed past
    any degenerate multiplet it would otherwise split: the retained count
    grows while the gap at the boundary stays below ``gap``.
    """
    n = pairs.size
    if not 1 <= d_retain <= n:
        raise InvalidCountError(f"d_retain={d_retain} out of range for {n} pairs")
    d = d_retain
    if close_multiplets:
        while d < n and pairs.values[d] - pairs.values[d - 1] < gap:
            d += 1
    return EigenPairs(pairs.values[:d], pairs.vectors[:, :d])

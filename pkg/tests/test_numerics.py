import numpy as np
import pytest

from narg.errors import InvalidCountError, NonFiniteError, NonHermitianError
from narg.numerics import (
    EigenPairs,
    eig_hermitian,
    eig_hermitian_lowest,
    truncate_low,
)


def test_diagonal_input():
    pairs = eig_hermitian(np.diag([1.0, 3.0]))
    np.testing.assert_allclose(pairs.values, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(pairs.vectors), np.eye(2), atol=1e-14)


def test_pauli_x_spectrum():
    pairs = eig_hermitian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(pairs.values, [-1.0, 1.0], atol=1e-14)


def test_reconstruction_identity():
    rng = np.random.default_rng(11)
    h = rng.standard_normal((6, 6))
    h = h + h.T
    pairs = eig_hermitian(h)
    rebuilt = pairs.vectors @ np.diag(pairs.values) @ pairs.vectors.T
    assert np.abs(rebuilt - h).max() < 1e-10


def test_reconstruction_property_random_draws():
    # involution up to 1e-10 for matrices of norm <= 1e3
    rng = np.random.default_rng(5)
    for n in (2, 5, 17, 40):
        h = rng.standard_normal((n, n))
        h = 0.5 * (h + h.T) * 1e3 / n
        pairs = eig_hermitian(h)
        rebuilt = pairs.vectors @ np.diag(pairs.values) @ pairs.vectors.T
        assert np.abs(rebuilt - h).max() < 1e-10
        ortho = pairs.vectors.T @ pairs.vectors
        assert np.abs(ortho - np.eye(n)).max() < 1e-10
        assert np.all(np.diff(pairs.values) >= 0)


def test_complex_hermitian_supported():
    h = np.array([[1.0, 1j], [-1j, 2.0]])
    pairs = eig_hermitian(h)
    rebuilt = pairs.vectors @ np.diag(pairs.values) @ pairs.vectors.conj().T
    assert np.abs(rebuilt - h).max() < 1e-12


def test_non_hermitian_rejected():
    with pytest.raises(NonHermitianError):
        eig_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_non_finite_rejected():
    with pytest.raises(NonFiniteError):
        eig_hermitian(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_deterministic_repeat():
    rng = np.random.default_rng(2)
    h = rng.standard_normal((8, 8))
    h = h + h.T
    first = eig_hermitian(h)
    second = eig_hermitian(h.copy())
    assert np.array_equal(first.values, second.values)
    assert np.array_equal(first.vectors, second.vectors)


def _pairs(values):
    n = len(values)
    return EigenPairs(np.asarray(values, dtype=float), np.eye(n))


def test_truncate_keeps_lowest():
    kept = truncate_low(_pairs([0.0, 1.0, 2.0, 3.0]), 2)
    np.testing.assert_allclose(kept.values, [0.0, 1.0])


def test_truncate_full_is_identity():
    pairs = _pairs([0.0, 1.0, 2.0])
    kept = truncate_low(pairs, 3)
    assert np.array_equal(kept.values, pairs.values)
    assert np.array_equal(kept.vectors, pairs.vectors)


def test_truncate_degenerate_tiebreak_keeps_lower_index():
    kept = truncate_low(_pairs([0.0, 1.0, 1.0, 2.0]), 2)
    np.testing.assert_allclose(kept.values, [0.0, 1.0])
    # the retained degenerate partner is the one with the lower column index
    np.testing.assert_allclose(kept.vectors[:, 1], np.eye(4)[:, 1])


def test_truncate_close_multiplets_extends_cut():
    pairs = _pairs([0.0, 1.0, 1.0 + 1e-12, 2.0])
    kept = truncate_low(pairs, 2, close_multiplets=True)
    assert kept.size == 3


def test_truncate_count_validation():
    with pytest.raises(InvalidCountError):
        truncate_low(_pairs([0.0, 1.0]), 0)
    with pytest.raises(InvalidCountError):
        truncate_low(_pairs([0.0, 1.0]), 3)


def test_lowest_matches_full_small():
    rng = np.random.default_rng(3)
    h = rng.standard_normal((30, 30))
    h = h + h.T
    full = eig_hermitian(h)
    low = eig_hermitian_lowest(h, 4)
    np.testing.assert_allclose(low.values, full.values[:4], atol=1e-12)


def test_lowest_subset_driver_path():
    # large enough to exercise the partial LAPACK driver
    rng = np.random.default_rng(4)
    h = rng.standard_normal((1100, 1100))
    h = h + h.T
    low = eig_hermitian_lowest(h, 3)
    full = np.linalg.eigvalsh(h)
    np.testing.assert_allclose(low.values, full[:3], atol=1e-8)
    residual = h @ low.vectors - low.vectors * low.values
    assert np.abs(residual).max() < 1e-8 * np.abs(full).max()

import numpy as np
import pytest

from narg.dvr import build_uniform_dvr
from narg.errors import InvalidGridError


def test_three_point_grid_closed_form():
    basis = build_uniform_dvr(3, 1.0)
    np.testing.assert_allclose(basis.points, [-1.0, 0.0, 1.0])
    assert basis.spacing == pytest.approx(1.0)
    np.testing.assert_allclose(np.diag(basis.kinetic), np.pi**2 / 3.0, atol=1e-12)
    assert basis.kinetic[0, 1] == pytest.approx(-2.0)
    assert basis.kinetic[0, 2] == pytest.approx(0.5)


def test_kinetic_matrix_invariants():
    basis = build_uniform_dvr(17, 5.0)
    d = np.diff(basis.points)
    assert np.abs(d - d[0]).max() < 1e-12
    assert np.abs(basis.kinetic - basis.kinetic.T).max() < 1e-12
    m, n = np.meshgrid(np.arange(17), np.arange(17), indexing="ij")
    off = 2.0 * (-1.0) ** (m - n) / (basis.spacing**2 * (m - n) ** 2 + np.eye(17))
    mask = m != n
    assert np.abs(basis.kinetic[mask] - off[mask]).max() < 1e-12


def test_kinetic_positive_semidefinite():
    basis = build_uniform_dvr(31, 6.0)
    assert np.linalg.eigvalsh(basis.kinetic).min() > -1e-10


def test_harmonic_oscillator_spectrum():
    basis = build_uniform_dvr(40, 8.0)
    h = 0.5 * basis.kinetic + 0.5 * np.diag(basis.points**2)
    values = np.linalg.eigvalsh(h)
    np.testing.assert_allclose(values[:3], [0.5, 1.5, 2.5], atol=1e-6)


def test_grid_convergence():
    def lowest(n):
        basis = build_uniform_dvr(n, 8.0)
        h = 0.5 * basis.kinetic + 0.5 * np.diag(basis.points**2)
        return np.linalg.eigvalsh(h)[:5]

    assert np.abs(lowest(40) - lowest(60)).max() < 1e-8


def test_position_functions_are_diagonal_by_construction():
    basis = build_uniform_dvr(9, 3.0)
    # any f(x) is represented by its grid values; check the quartic used by
    # the boson model stays exactly diagonal
    quartic = np.diag(basis.points**4)
    assert np.count_nonzero(quartic - np.diag(np.diag(quartic))) == 0


def test_invalid_grids_rejected():
    with pytest.raises(InvalidGridError):
        build_uniform_dvr(2, 1.0)
    with pytest.raises(InvalidGridError):
        build_uniform_dvr(5, 0.0)
    with pytest.raises(InvalidGridError):
        build_uniform_dvr(5, np.inf)

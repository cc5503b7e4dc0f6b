import itertools

import numpy as np
import pytest

from narg import boson
from narg.core import expectation_diag
from narg.errors import InvalidCountError, TooLargeError


def test_model_validation():
    with pytest.raises(ValueError):
        boson.make_model([1.0, -2.0])
    g = np.array([[0.0, 0.1], [0.2, 0.0]])
    with pytest.raises(Exception):
        boson.make_model([1.0, 2.0], couplings=g)
    g = np.array([[0.3, 0.1], [0.1, 0.0]])
    with pytest.raises(ValueError):
        boson.make_model([1.0, 2.0], couplings=g)


def test_mode_hamiltonian_harmonic():
    model = boson.make_model([1.0], dvr_points=60)
    h, _ = boson.mode_hamiltonian(model, 0)
    np.testing.assert_allclose(np.linalg.eigvalsh(h)[:3], [0.5, 1.5, 2.5], atol=1e-6)


def test_mode_hamiltonian_frequency_scaling():
    one = boson.make_model([1.0], dvr_points=60)
    two = boson.make_model([2.0], dvr_points=60)
    h1, _ = boson.mode_hamiltonian(one, 0)
    h2, _ = boson.mode_hamiltonian(two, 0)
    np.testing.assert_allclose(
        np.linalg.eigvalsh(h2)[:5], 2.0 * np.linalg.eigvalsh(h1)[:5], atol=1e-6
    )


def test_mode_hamiltonian_quartic_raises_ground_energy():
    model = boson.make_model([1.0], lambdas=0.2, dvr_points=60)
    h, _ = boson.mode_hamiltonian(model, 0)
    ground = np.linalg.eigvalsh(h)[0]
    assert ground > 0.5
    assert ground < 0.7


def test_mode_index_out_of_range():
    model = boson.make_model([1.0])
    with pytest.raises(IndexError):
        boson.mode_hamiltonian(model, 1)


def test_make_site_uncoupled_mode_has_no_block_terms():
    g = np.zeros((3, 3))
    g[0, 1] = g[1, 0] = 0.1  # the third mode stays uncoupled
    model = boson.make_model([3.0, 2.0, 1.0], couplings=g, dvr_points=6)
    order = boson.processing_order(model)
    site = boson.make_site(model, order, 2)
    assert site.diagonal_block_terms == []


def test_make_site_term_bookkeeping():
    model = boson.make_model([3.0, 2.0, 1.0], couplings=0.1, dvr_points=6)
    order = boson.processing_order(model)
    basis = boson.mode_basis(model, int(order[2]))
    site = boson.make_site(model, order, 2, basis)
    assert len(site.diagonal_block_terms) == 2
    names = [name for _, name in site.diagonal_block_terms]
    assert names == [f"x2_{order[0]}", f"x2_{order[1]}"]
    for (g_vec, _), earlier in zip(site.diagonal_block_terms, order[:2]):
        coeff = 0.1 * np.sqrt(
            model.frequencies[int(earlier)] * model.frequencies[int(order[2])]
        )
        np.testing.assert_allclose(g_vec, coeff * basis.points**2, atol=1e-14)


def test_solve_decoupled_harmonic_sums():
    w = np.array([3.1, 2.0, 1.3])
    model = boson.make_model(w, lambdas=0.0, couplings=0.0, dvr_points=32)
    res = boson.solve_narg(model, d_retain=20, n_levels=12)
    sums = sorted(
        float(w @ (np.array(n) + 0.5))
        for n in itertools.product(range(8), repeat=3)
    )
    np.testing.assert_allclose(res.energies, sums[:12], atol=1e-6)


def test_solve_full_d_matches_oracle():
    model = boson.three_mode_model(dvr_points=8)
    res = boson.solve_narg(model, d_retain=None, n_levels=16)
    ref = boson.exact_diag_oracle(model, n_levels=16, dvr_points=8)
    np.testing.assert_allclose(res.energies, ref, atol=1e-9)


def test_truncation_error_non_increasing_with_d():
    model = boson.three_mode_model(dvr_points=8)
    ref = boson.exact_diag_oracle(model, n_levels=8, dvr_points=8)
    errors = {}
    for d in (8, 16):
        res = boson.solve_narg(model, d_retain=d, n_levels=8)
        errors[d] = np.abs(res.energies - ref).max()
    assert errors[16] <= errors[8]


def test_variational_bound_level_by_level():
    model = boson.three_mode_model(dvr_points=8)
    ref = boson.exact_diag_oracle(model, n_levels=12, dvr_points=8)
    for d in (4, 8, 16):
        res = boson.solve_narg(model, d_retain=d, n_levels=12)
        assert np.all(res.energies - ref >= -1e-10)


def test_levels_capped_by_final_superblock():
    model = boson.make_model([2.0, 1.0], dvr_points=5)
    with pytest.raises(InvalidCountError):
        boson.solve_narg(model, d_retain=4, n_levels=100)


def test_oracle_single_mode_matches_mode_hamiltonian():
    model = boson.make_model([1.7], lambdas=0.3, dvr_points=20)
    h, _ = boson.mode_hamiltonian(model, 0)
    ref = boson.exact_diag_oracle(model, n_levels=6, dvr_points=20)
    np.testing.assert_allclose(ref, np.linalg.eigvalsh(h)[:6], atol=1e-12)


def test_oracle_two_decoupled_modes_pairwise_sums():
    model = boson.make_model([2.0, 1.0], lambdas=0.3, couplings=0.0, dvr_points=14)
    ref = boson.exact_diag_oracle(model, n_levels=8, dvr_points=14)
    spectra = [
        np.linalg.eigvalsh(boson.mode_hamiltonian(model, i)[0]) for i in (0, 1)
    ]
    sums = np.sort((spectra[0][:, None] + spectra[1][None, :]).ravel())
    np.testing.assert_allclose(ref, sums[:8], atol=1e-10)


def test_oracle_mode_permutation_invariance():
    model = boson.make_model([2.2, 1.4, 1.0], lambdas=0.15, couplings=0.12, dvr_points=7)
    base = boson.exact_diag_oracle(model, n_levels=6, dvr_points=7)
    perm = [2, 0, 1]
    permuted = boson.make_model(
        model.frequencies[perm],
        lambdas=model.lambdas[perm],
        couplings=model.couplings[np.ix_(perm, perm)],
        dvr_points=7,
    )
    other = boson.exact_diag_oracle(permuted, n_levels=6, dvr_points=7)
    np.testing.assert_allclose(base, other, atol=1e-10)


def test_oracle_sparse_path_matches_dense():
    model = boson.three_mode_model(dvr_points=12)  # dim 1728 uses Lanczos
    sparse_vals = boson.exact_diag_oracle(model, n_levels=5, dvr_points=12)
    h, _ = boson.product_hamiltonian(model, dvr_points=12)
    dense_vals = np.linalg.eigvalsh(h.toarray())[:5]
    np.testing.assert_allclose(sparse_vals, dense_vals, atol=1e-9)


def test_oracle_size_limit():
    model = boson.make_model([3.0, 2.0, 1.5, 1.0], dvr_points=25)
    with pytest.raises(TooLargeError):
        boson.exact_diag_oracle(model, n_levels=4, dvr_points=25)


def test_parity_definite_in_untruncated_run():
    model = boson.three_mode_model(dvr_points=7)
    res = boson.solve_narg(model, d_retain=None, n_levels=16)
    parity = expectation_diag(res.block, "parity")
    np.testing.assert_allclose(np.abs(parity[:16]), 1.0, atol=1e-8)


def test_load_model_roundtrip(tmp_path):
    cfg = {
        "schema_version": 1,
        "frequencies": [2.0, 1.0],
        "lambdas": 0.1,
        "coupling": 0.2,
        "dvr_points": 9,
        "n_levels": 4,
    }
    path = tmp_path / "model.json"
    import json

    path.write_text(json.dumps(cfg))
    model, raw = boson.load_model(path)
    assert model.n_modes == 2
    assert raw["n_levels"] == 4
    np.testing.assert_allclose(model.couplings, [[0.0, 0.2], [0.2, 0.0]])


def test_load_model_requires_schema_version():
    with pytest.raises(ValueError):
        boson.load_model({"frequencies": [1.0]})


def test_adiabatic_pretruncation_knob_is_independent_and_variational():
    model = boson.three_mode_model(dvr_points=8)
    ref = boson.exact_diag_oracle(model, n_levels=8, dvr_points=8)
    errs = []
    for d_a in (4, 8, None):
        res = boson.solve_narg(model, d_retain=16, d_adiabatic=d_a, n_levels=8)
        assert np.all(res.energies - ref >= -1e-10)
        errs.append(abs(res.energies[0] - ref[0]))
    # loosening the per-configuration cut cannot hurt the ground state
    assert errs[2] <= errs[1] <= errs[0]

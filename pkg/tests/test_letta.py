import numpy as np
import pytest

from narg import boson, letta
from narg.core import StepRecord
from narg.errors import IncompleteLogError, TooLargeError


def _two_mode_run(d_retain=None, dvr_points=8):
    model = boson.make_model(
        [2.0, 1.3], lambdas=0.2, couplings=0.1, dvr_points=dvr_points
    )
    res = boson.solve_narg(model, d_retain=d_retain, n_levels=4)
    return model, res


def test_two_scale_network_shapes():
    model, res = _two_mode_run()
    net = letta.extract_letta(res.log)
    assert len(net.tensors) == 2
    assert net.tensors[0].shape == (8, 8, 8)
    assert net.tensors[1].shape[:2] == (8, 8)
    assert net.physical_dims == (8, 8)


def test_contract_full_d_matches_exact_ground_state():
    model, res = _two_mode_run()
    net = letta.extract_letta(res.log)
    psi = letta.contract_state(net, terminal=0)
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-10
    h, _ = boson.product_hamiltonian(model, order=res.order)
    w, v = np.linalg.eigh(h.toarray())
    overlap = abs(np.vdot(v[:, 0], psi.ravel()))
    assert overlap > 1.0 - 1e-10
    np.testing.assert_allclose(np.abs(psi.ravel()), np.abs(v[:, 0]), atol=1e-8)


def test_contract_truncated_run_round_trip():
    model, res = _two_mode_run(d_retain=6)
    net = letta.extract_letta(res.log)
    psi = letta.contract_state(net, terminal=0).ravel()
    assert abs(np.linalg.norm(psi) - 1.0) < 1e-10
    direct = letta.product_state_vector(res.log, terminal=0)
    assert abs(abs(np.vdot(psi, direct)) - 1.0) < 1e-12
    h, _ = boson.product_hamiltonian(model, order=res.order)
    energy = psi @ (h @ psi)
    assert abs(energy - res.energies[0]) < 1e-8


def test_decoupled_model_gives_product_state():
    model = boson.make_model(
        [3.0, 2.0, 1.0], lambdas=0.0, couplings=0.0, dvr_points=7
    )
    res = boson.solve_narg(model, d_retain=5, n_levels=2)
    net = letta.extract_letta(res.log)
    psi = letta.contract_state(net, terminal=0)
    for cut in (7, 49):  # both bipartitions of the product grid
        s = np.linalg.svd(psi.reshape(cut, -1), compute_uv=False)
        assert s[1] < 1e-10
    # with identity rotations every fixed-virtual slice of the middle tensor
    # is a rank-1 physical matrix: no cross-scale entanglement is carried
    mid = net.tensors[1]
    for a in range(mid.shape[2]):
        for b in range(mid.shape[3]):
            sv = np.linalg.svd(mid[:, :, a, b], compute_uv=False)
            if sv[0] > 1e-12:
                assert sv[1] / sv[0] < 1e-10


def test_product_state_amplitudes_factorize():
    model = boson.make_model([2.0, 1.0], lambdas=0.0, couplings=0.0, dvr_points=7)
    res = boson.solve_narg(model, d_retain=5, n_levels=1)
    net = letta.extract_letta(res.log)
    psi = letta.contract_state(net, terminal=0)
    # rank-1: psi[j0, j1] = a[j0] * b[j1]
    u, s, vt = np.linalg.svd(psi)
    a, b = u[:, 0] * s[0], vt[0]
    np.testing.assert_allclose(np.abs(psi), np.abs(np.outer(a, b)), atol=1e-10)
    for cfg in ((0, 0), (3, 2), (6, 6)):
        amp = letta.amplitude(net, cfg, terminal=0)
        assert abs(amp - psi[cfg]) < 1e-12


def test_amplitude_matches_contract_entries_and_is_bounded():
    model = boson.three_mode_model(dvr_points=6)
    res = boson.solve_narg(model, d_retain=8, n_levels=2)
    net = letta.extract_letta(res.log)
    psi = letta.contract_state(net, terminal=1)
    rng = np.random.default_rng(9)
    for _ in range(10):
        cfg = tuple(int(rng.integers(0, d)) for d in net.physical_dims)
        amp = letta.amplitude(net, cfg, terminal=1)
        assert abs(amp - psi[cfg]) < 1e-12
        assert abs(amp) <= 1.0 + 1e-12


def test_amplitude_norm_sums_to_one():
    model, res = _two_mode_run(d_retain=5, dvr_points=6)
    net = letta.extract_letta(res.log)
    total = 0.0
    for j0 in range(6):
        for j1 in range(6):
            total += letta.amplitude(net, (j0, j1), terminal=0) ** 2
    assert abs(total - 1.0) < 1e-8


def test_amplitude_index_validation():
    _, res = _two_mode_run(d_retain=4, dvr_points=6)
    net = letta.extract_letta(res.log)
    with pytest.raises(IndexError):
        letta.amplitude(net, (0,), terminal=0)
    with pytest.raises(IndexError):
        letta.amplitude(net, (0, 99), terminal=0)
    with pytest.raises(IndexError):
        letta.amplitude(net, (0, 0), terminal=99)


def test_incomplete_log_rejected():
    _, res = _two_mode_run(d_retain=4, dvr_points=6)
    with pytest.raises(IncompleteLogError):
        letta.extract_letta(res.log[1:])
    broken = (res.log[0], StepRecord(n_config=6, vectors=res.log[1].vectors))
    with pytest.raises(IncompleteLogError):
        letta.extract_letta(broken)


def test_contract_size_guard():
    net = letta.LettaNetwork(
        tensors=[np.zeros((101, 101, 1)), np.zeros((101, 101, 1, 1)),
                 np.zeros((101, 1, 1))],
        physical_dims=(101, 101, 101),
        terminal_dim=1,
    )
    with pytest.raises(TooLargeError):
        letta.contract_state(net, 0)


def test_cut_rank_exceeds_virtual_dimension_on_constructed_fixture():
    # the shared physical leg lets the pair demand a Schmidt rank above the
    # virtual dimension; the rank oracle is a dense SVD of the tied join
    rng = np.random.default_rng(0)
    d = 2
    net = letta.LettaNetwork(
        tensors=[
            rng.standard_normal((4, 4, d)),
            rng.standard_normal((4, 4, d, d)),
            rng.standard_normal((4, d, d)),
        ],
        physical_dims=(4, 4, 4),
        terminal_dim=d,
    )
    assert letta.cut_rank(net, 0) > d


def test_cut_rank_recorded_on_real_run():
    _, res = _two_mode_run(d_retain=6, dvr_points=6)
    net = letta.extract_letta(res.log)
    rank = letta.cut_rank(net, 0)
    assert 1 <= rank <= 36


def test_serialization_round_trip(tmp_path):
    _, res = _two_mode_run(d_retain=5, dvr_points=6)
    net = letta.extract_letta(res.log)
    path = tmp_path / "net.json"
    letta.save_network(net, path)
    loaded = letta.load_network(path)
    assert loaded.physical_dims == net.physical_dims
    assert loaded.terminal_dim == net.terminal_dim
    for a, b in zip(net.tensors, loaded.tensors):
        np.testing.assert_allclose(a, b, atol=0)
    psi_a = letta.contract_state(net, 0)
    psi_b = letta.contract_state(loaded, 0)
    np.testing.assert_allclose(psi_a, psi_b, atol=0)

"""Energy/gradient engine vs Fock-space oracle and closed forms."""

import numpy as np
import pytest

from sbvar.ansatz import (
    SingleSpinState,
    TwoSpinState,
    coherent_overlap,
    gauge_fix,
    overlap_matrix,
    pack,
    pad_branches,
    parity_flip,
    random_state,
    state_from_dict,
    state_norm,
    state_to_dict,
    unpack,
)
from sbvar.bath import BathSpec, discretize
from sbvar.energy import ModelParams, energy, energy_and_gradient, spin_expectations, weight_matrices
from sbvar.exceptions import DegenerateNormError

import oracles


def diag_bath():
    # s = 1, Lambda = 2, M = 3, alpha = 0.5: all bin integrals exact rationals
    return discretize(BathSpec(s=1.0, alpha=0.5, Lambda=2.0, M=3))


def test_coherent_overlap_closed_form():
    assert coherent_overlap([0.3], [0.3]) == 1.0
    # exp(-0.5 * (0.3 + 0.2)^2) = exp(-0.125)
    assert abs(coherent_overlap([0.3], [-0.2]) - 0.8824969025845955) < 1e-15
    u = [0.1, -0.4, 0.7]
    v = [0.5, 0.2, -0.1]
    assert coherent_overlap(u, v) == pytest.approx(coherent_overlap(v, u), rel=1e-16)
    with pytest.raises(ValueError):
        coherent_overlap([0.1, 0.2], [0.1])


def test_coherent_overlap_vs_fock():
    rng = np.random.default_rng(7)
    for _ in range(5):
        u = rng.uniform(-1.0, 1.0, 3)
        v = rng.uniform(-1.0, 1.0, 3)
        vu = oracles.multimode_coherent(u, 40)
        vv = oracles.multimode_coherent(v, 40)
        assert abs(coherent_overlap(u, v) - float(vu @ vv)) < 1e-10


def test_overlap_matrix_consistency():
    rng = np.random.default_rng(3)
    u = rng.uniform(-1, 1, (3, 4))
    v = rng.uniform(-1, 1, (2, 4))
    smat = overlap_matrix(u, v)
    for i in range(3):
        for j in range(2):
            assert smat[i, j] == pytest.approx(coherent_overlap(u[i], v[j]), rel=1e-14)


def test_decoupled_energy_single():
    bath = discretize(BathSpec(s=0.2, alpha=0.0, Lambda=2.0, M=5))
    params = ModelParams(bath=bath, Delta=0.4)
    n = 1
    state = SingleSpinState(
        np.full((2, n), 1.0 / np.sqrt(2.0)), np.zeros((2, n, bath.M))
    )
    assert abs(energy(state, params) - (-0.2)) < 1e-14
    sz, sx = spin_expectations(state, params)
    assert abs(sz) < 1e-14
    assert abs(sx - 1.0) < 1e-14


def test_decoupled_energy_two_spin():
    bath = discretize(BathSpec(s=1.0, alpha=0.0, Lambda=2.0, M=4))
    params = ModelParams(bath=bath, Delta=0.4, kind="two_spin")
    state = TwoSpinState(np.full((4, 1), 0.5), np.zeros((4, 1, bath.M)))
    assert abs(energy(state, params) - (-0.4)) < 1e-14
    sz, sx = spin_expectations(state, params)
    assert abs(sz) < 1e-14
    assert abs(sx - 1.0) < 1e-14


def test_bell_sector_energy_two_spin():
    # weights only on ud/du sectors, no displacement: E = -K/4
    bath = discretize(BathSpec(s=1.0, alpha=0.3, Lambda=2.0, M=4))
    params = ModelParams(bath=bath, Delta=0.0, K=3.0, kind="two_spin")
    w = np.zeros((4, 1))
    w[1, 0] = w[2, 0] = 1.0 / np.sqrt(2.0)
    state = TwoSpinState(w, np.zeros((4, 1, bath.M)))
    assert abs(energy(state, params) - (-0.75)) < 1e-14


def test_classical_displaced_energy():
    # Delta = 0, fully polarized, classical displacement -lam/(2 omega):
    # E = -sum lam^2/(4 omega) = -0.2109375 for the rational test bath
    bath = diag_bath()
    params = ModelParams(bath=bath, Delta=0.0)
    w = np.array([[1.0], [0.0]])
    d = np.zeros((2, 1, 3))
    d[0, 0] = -bath.lam / (2.0 * bath.omega)
    state = SingleSpinState(w, d)
    assert abs(energy(state, params) - (-0.2109375)) < 1e-13


def test_energy_vs_fock_oracle_single():
    bath = discretize(BathSpec(s=1.0, alpha=0.4, Lambda=2.0, M=2))
    params = ModelParams(bath=bath, Delta=0.3, epsilon=0.15)
    rng = np.random.default_rng(11)
    h = oracles.fock_hamiltonian_single(bath.omega, bath.lam, 0.3, 0.15, 30)
    for _ in range(4):
        state = SingleSpinState(
            rng.uniform(-1, 1, (2, 3)), rng.uniform(-0.8, 0.8, (2, 3, 2))
        )
        psi = oracles.fock_state_single(state, 30)
        e_ref = oracles.fock_expectation(psi, h)
        assert abs(energy(state, params) - e_ref) < 1e-10 * max(1.0, abs(e_ref))


def test_energy_vs_fock_oracle_two_spin():
    bath = discretize(BathSpec(s=0.7, alpha=0.3, Lambda=2.0, M=2))
    params = ModelParams(bath=bath, Delta=0.25, epsilon=0.1, K=0.8, kind="two_spin")
    rng = np.random.default_rng(13)
    h = oracles.fock_hamiltonian_two_spin(bath.omega, bath.lam, 0.25, 0.1, 0.8, 25)
    for _ in range(3):
        state = TwoSpinState(
            rng.uniform(-1, 1, (4, 2)), rng.uniform(-0.8, 0.8, (4, 2, 2))
        )
        psi = oracles.fock_state_two_spin(state, 25)
        e_ref = oracles.fock_expectation(psi, h)
        assert abs(energy(state, params) - e_ref) < 1e-10 * max(1.0, abs(e_ref))


@pytest.mark.parametrize("kind", ["single", "two_spin"])
def test_gradient_vs_finite_differences(kind):
    bath = discretize(BathSpec(s=0.2, alpha=0.05, Lambda=2.0, M=4))
    params = ModelParams(bath=bath, Delta=0.2, epsilon=0.05, K=0.5, kind=kind)
    rng = np.random.default_rng(17)
    template = random_state(kind, 3, bath, rng)
    # keep weights away from zero so the random state is generic
    template.weights += 0.3 * np.sign(template.weights)
    template.disp += rng.uniform(-0.3, 0.3, template.disp.shape)

    def func(x):
        return energy(unpack(x, template), params)

    e0, gw, gd = energy_and_gradient(template, params)
    g_analytic = np.concatenate([gw.ravel(), gd.ravel()])
    g_fd = oracles.fd_gradient(func, pack(template), h=1e-6)
    scale = max(1.0, np.max(np.abs(g_analytic)))
    assert np.max(np.abs(g_analytic - g_fd)) / scale < 1e-5
    assert e0 == pytest.approx(func(pack(template)), rel=1e-15)


@pytest.mark.parametrize("kind", ["single", "two_spin"])
def test_parity_flip_energy_symmetry(kind):
    bath = discretize(BathSpec(s=0.4, alpha=0.08, Lambda=1.8, M=5))
    params = ModelParams(bath=bath, Delta=0.3, epsilon=0.0, K=0.7, kind=kind)
    rng = np.random.default_rng(23)
    state = random_state(kind, 3, bath, rng)
    e1 = energy(state, params)
    e2 = energy(parity_flip(state), params)
    assert abs(e1 - e2) < 1e-12 * max(1.0, abs(e1))


def test_weight_scale_invariance_and_euler():
    bath = diag_bath()
    params = ModelParams(bath=bath, Delta=0.2)
    rng = np.random.default_rng(29)
    state = random_state("single", 3, bath, rng)
    e0, gw, _ = energy_and_gradient(state, params)
    # E homogeneous of degree 0 in the weights: w . grad_w E = 0
    assert abs(np.sum(state.weights * gw)) < 1e-12 * max(1.0, np.max(np.abs(gw)))
    scaled = state.copy()
    scaled.weights *= 3.7
    assert energy(scaled, params) == pytest.approx(e0, rel=1e-14)


def test_weight_matrices_rayleigh_quotient():
    bath = diag_bath()
    params = ModelParams(bath=bath, Delta=0.35, epsilon=0.1)
    rng = np.random.default_rng(31)
    state = random_state("single", 3, bath, rng)
    hmat, smat = weight_matrices(state, params)
    wvec = state.weights.ravel()
    e_rq = (wvec @ hmat @ wvec) / (wvec @ smat @ wvec)
    assert e_rq == pytest.approx(energy(state, params), rel=1e-13)
    assert np.allclose(hmat, hmat.T, atol=1e-15)
    assert np.allclose(smat, smat.T, atol=1e-15)
    assert np.all(np.linalg.eigvalsh(smat) > -1e-12)


def test_pad_branches_preserves_state():
    bath = diag_bath()
    params = ModelParams(bath=bath, Delta=0.2)
    rng = np.random.default_rng(37)
    state = random_state("single", 2, bath, rng)
    padded = pad_branches(state, 2)
    assert padded.n_branches == 4
    assert energy(padded, params) == pytest.approx(energy(state, params), rel=1e-14)
    assert state_norm(padded) == pytest.approx(state_norm(state), rel=1e-14)


def test_gauge_fix_and_degenerate_norm():
    bath = diag_bath()
    rng = np.random.default_rng(41)
    state = random_state("single", 2, bath, rng)
    gauge_fix(state)
    assert state_norm(state) == pytest.approx(1.0, abs=1e-13)
    flat = state.weights.ravel()
    assert flat[np.argmax(np.abs(flat))] > 0
    dead = SingleSpinState(np.zeros((2, 1)), np.zeros((2, 1, 3)))
    with pytest.raises(DegenerateNormError):
        gauge_fix(dead)
    with pytest.raises(DegenerateNormError):
        energy(dead, ModelParams(bath=bath, Delta=0.1))


def test_state_serialization_round_trip():
    bath = diag_bath()
    rng = np.random.default_rng(43)
    for kind in ("single", "two_spin"):
        state = random_state(kind, 3, bath, rng)
        doc = state_to_dict(state)
        back = state_from_dict(doc)
        assert back.kind == kind
        assert np.array_equal(back.weights, state.weights)
        assert np.array_equal(back.disp, state.disp)
    with pytest.raises(ValueError):
        state_from_dict({"version": 99, "kind": "single", "weights": [], "disp": []})


def test_shape_and_kind_errors():
    bath = diag_bath()
    params = ModelParams(bath=bath, Delta=0.1)
    rng = np.random.default_rng(47)
    two = random_state("two_spin", 2, bath, rng)
    with pytest.raises(ValueError):
        energy(two, params)
    short = random_state("single", 2, discretize(BathSpec(s=1.0, alpha=0.1, Lambda=2.0, M=2)), rng)
    with pytest.raises(ValueError):
        energy(short, params)
    with pytest.raises(ValueError):
        ModelParams(bath=bath, Delta=0.1, kind="triple")
    with pytest.raises(ValueError):
        SingleSpinState(np.zeros((3, 2)), np.zeros((3, 2, 3)))

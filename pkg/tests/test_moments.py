"""Phase-space moments vs Fock-space oracle and closed forms."""

import io

import numpy as np
import pytest

from sbvar.ansatz import SingleSpinState, TwoSpinState, random_state
from sbvar.bath import BathSpec, discretize
from sbvar.energy import ModelParams
from sbvar.moments import (
    displacement_profile,
    mode_moments,
    moment_tables,
    symplectic_pair,
    two_mode_covariance,
    write_profile_csv,
)
from sbvar.optimize import MinimizeOptions, minimize

import oracles


def random_two_mode_state(rng, kind="single", n_branches=3):
    sectors = 2 if kind == "single" else 4
    cls = SingleSpinState if kind == "single" else TwoSpinState
    w = rng.uniform(-1.0, 1.0, (sectors, n_branches))
    d = rng.uniform(-0.9, 0.9, (sectors, n_branches, 2))
    return cls(w, d)


def test_vacuum_moments():
    st = SingleSpinState(np.array([[1.0], [0.0]]), np.zeros((2, 1, 3)))
    for k in range(3):
        m = mode_moments(st, k)
        assert m.x == 0.0
        assert abs(m.p) < 1e-15
        assert abs(m.dx - 0.5) < 1e-14
        assert abs(m.dp - 0.5) < 1e-14
    cov = two_mode_covariance(st, 0, 2)
    assert cov.cor_x == 0.0 and cov.cor_p == 0.0
    assert abs(cov.det_sigma - 1.0 / 16.0) < 1e-14
    assert cov.physical


def test_single_coherent_branch():
    d = np.array([[[0.7, -0.3]], [[0.7, -0.3]]])
    st = SingleSpinState(np.array([[0.6], [0.8]]), d)
    m0 = mode_moments(st, 0)
    assert abs(m0.x - np.sqrt(2.0) * 0.7) < 1e-12
    assert abs(m0.dx - 0.5) < 1e-12
    assert abs(m0.dp - 0.5) < 1e-12
    cov = two_mode_covariance(st, 0, 1)
    assert abs(cov.cor_x) < 1e-12  # product coherent state factorizes
    assert abs(cov.cor_p) < 1e-12


@pytest.mark.parametrize("kind", ["single", "two_spin"])
def test_moments_vs_fock_oracle(kind):
    rng = np.random.default_rng(11)
    n_max = 28
    n_spin = 2 if kind == "single" else 4
    for trial in range(4):
        st = random_two_mode_state(rng, kind)
        psi = (
            oracles.fock_state_single(st, n_max)
            if kind == "single"
            else oracles.fock_state_two_spin(st, n_max)
        )
        psi_b = psi.reshape(n_spin, -1)
        norm = float(psi @ psi)
        t = moment_tables(st)
        for k in range(2):
            x_op, p_op = oracles.fock_quadrature_ops(k, 2, n_max)
            x1 = sum(float(row @ x_op @ row) for row in psi_b) / norm
            x2 = sum(float(row @ x_op @ x_op @ row) for row in psi_b) / norm
            p2 = sum(float(np.real(row @ p_op @ p_op @ row)) for row in psi_b) / norm
            m = mode_moments(st, k, tables=t)
            assert abs(m.x - x1) < 1e-9
            assert abs(m.dx - (x2 - x1**2)) < 1e-9
            assert abs(m.dp - p2) < 1e-9
            assert abs(m.p) < 1e-10
        x0, _ = oracles.fock_quadrature_ops(0, 2, n_max)
        x1_op, p1_op = oracles.fock_quadrature_ops(1, 2, n_max)
        p0_op = oracles.fock_quadrature_ops(0, 2, n_max)[1]
        xx = sum(float(row @ x0 @ x1_op @ row) for row in psi_b) / norm
        pp = sum(float(np.real(row @ p0_op @ p1_op @ row)) for row in psi_b) / norm
        cov = two_mode_covariance(st, 0, 1, tables=t)
        mk, ml = mode_moments(st, 0, tables=t), mode_moments(st, 1, tables=t)
        assert abs(cov.cor_x - (xx - mk.x * ml.x)) < 1e-9
        assert abs(cov.cor_p - pp) < 1e-9


def test_covariance_swap_symmetry():
    rng = np.random.default_rng(3)
    st = random_two_mode_state(rng)
    c01 = two_mode_covariance(st, 0, 1)
    c10 = two_mode_covariance(st, 1, 0)
    sw = c01.swapped()
    assert c10.dx_k == sw.dx_k and c10.dp_l == sw.dp_l
    assert c10.det_a == c01.det_b and c10.det_b == c01.det_a
    assert c10.det_sigma == pytest.approx(c01.det_sigma, rel=1e-14)


def test_det_sigma_matches_dense_determinant():
    rng = np.random.default_rng(17)
    for _ in range(6):
        st = random_two_mode_state(rng)
        cov = two_mode_covariance(st, 0, 1, warn=False)
        dense = np.linalg.det(cov.matrix())
        assert cov.det_sigma == pytest.approx(dense, rel=1e-12, abs=1e-14)


def test_symplectic_pair_vs_dense_oracle():
    rng = np.random.default_rng(23)
    for _ in range(20):
        blocks = oracles.random_blocked_covariance(rng)
        cov = oracles.covariance_matrix_from_blocks(blocks)
        dx1, dp1, dx2, dp2, cx, cp = blocks
        det_a = dx1 * dp1
        det_b = dx2 * dp2
        det_c = cx * cp
        n_minus, n_plus = symplectic_pair(det_a, det_b, det_c, np.linalg.det(cov))
        ref_minus, ref_plus = oracles.symplectic_eigenvalues_4x4(cov)
        assert n_minus == pytest.approx(ref_minus, rel=1e-9)
        assert n_plus == pytest.approx(ref_plus, rel=1e-9)
        assert n_minus >= 0.5 - 1e-8


def test_mode_index_errors():
    st = SingleSpinState(np.array([[1.0], [0.0]]), np.zeros((2, 1, 3)))
    with pytest.raises(IndexError):
        mode_moments(st, 3)
    with pytest.raises(ValueError):
        two_mode_covariance(st, 1, 1)


def test_profile_decoupled_is_zero():
    bath = discretize(BathSpec(s=0.4, alpha=0.0, Lambda=2.0, M=4))
    params = ModelParams(bath=bath, Delta=0.1, kind="single")
    res = minimize(params, MinimizeOptions(n_branches=2, restarts=4, seed=0))
    prof = displacement_profile(res.state)
    assert np.max(np.abs(prof.fbar)) < 1e-7
    assert np.max(np.abs(prof.gbar)) < 1e-7
    assert np.max(np.abs(prof.fluct)) < 1e-9


def test_profile_antisymmetry_delocalized():
    # symmetric phase: the up- and down-conditioned displacement averages
    # must be exact mirrors
    bath = discretize(BathSpec(s=0.2, alpha=0.01, Lambda=2.0, M=12))
    params = ModelParams(bath=bath, Delta=0.1, kind="single")
    res = minimize(params, MinimizeOptions(n_branches=3, restarts=6, seed=0))
    prof = displacement_profile(res.state)
    scale = np.max(np.abs(prof.fbar))
    assert scale > 0
    assert np.max(np.abs(prof.fbar + prof.gbar)) / scale < 1e-4


def test_momentum_zero_at_minimum():
    bath = discretize(BathSpec(s=0.4, alpha=0.3, Lambda=2.0, M=6))
    params = ModelParams(bath=bath, Delta=0.1, kind="single")
    res = minimize(params, MinimizeOptions(n_branches=3, restarts=6, seed=1))
    t = moment_tables(res.state)
    for k in range(bath.M):
        assert abs(mode_moments(res.state, k, tables=t).p) < 1e-10


def test_uncertainty_relation_random_states():
    rng = np.random.default_rng(29)
    for _ in range(10):
        st = random_two_mode_state(rng)
        t = moment_tables(st)
        for k in range(2):
            m = mode_moments(st, k, tables=t)
            assert m.dx > 0 and m.dp > 0
            assert m.dx * m.dp >= 0.25 - 1e-9


def test_profile_csv_round_trip():
    bath = discretize(BathSpec(s=0.4, alpha=0.2, Lambda=2.0, M=4))
    rng = np.random.default_rng(2)
    st = random_state("single", 2, bath, rng)
    buf = io.StringIO()
    write_profile_csv(buf, bath, st, header_lines=("config: test",))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# config: test"
    assert lines[1] == "k,omega_k,xbar,dX,dP,fbar,gbar,fluct"
    assert len(lines) == 2 + bath.M
    row = lines[2].split(",")
    assert int(row[0]) == 1
    assert float(row[1]) == pytest.approx(bath.omega[0], rel=1e-15)
    t = moment_tables(st)
    assert float(row[2]) == pytest.approx(t.xbar[0], rel=1e-15, abs=1e-300)

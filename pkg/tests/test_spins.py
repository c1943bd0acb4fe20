"""Two-spin reduced density matrix and measure suite."""

import io
import math

import numpy as np
import pytest

from sbvar.ansatz import TwoSpinState, random_state
from sbvar.bath import BathSpec, discretize
from sbvar.energy import ModelParams
from sbvar.exceptions import UnphysicalStateError
from sbvar.optimize import MinimizeOptions, minimize
from sbvar.spins import (
    DiscordOptions,
    concurrence,
    density_from_matrix,
    entanglement_of_formation,
    negativity_measures,
    reduced_density,
    spin_discord,
    spin_measures,
    spin_mutual_information,
    system_entropies,
    vn_entropy,
    write_density_csv,
)

import oracles

CLASSICAL_MIX = np.diag([0.5, 0.0, 0.0, 0.5])
PRODUCT_X = 0.25 * np.ones((4, 4))  # |++_x> projector


def test_decoupled_ground_state_is_product():
    bath = discretize(BathSpec(s=0.4, alpha=0.0, Lambda=2.0, M=4))
    params = ModelParams(bath=bath, Delta=0.2, K=0.0, kind="two_spin")
    res = minimize(params, MinimizeOptions(n_branches=2, restarts=4, seed=0))
    dens = reduced_density(res.state)
    assert np.trace(dens.rho).real == pytest.approx(1.0, abs=1e-10)
    purity = np.real(np.trace(dens.rho @ dens.rho))
    assert purity == pytest.approx(1.0, abs=1e-8)
    # ground state of -Delta/2 (sx1 + sx2): both spins along +x
    assert np.max(np.abs(dens.rho - PRODUCT_X)) < 1e-6


def test_reduced_density_vs_fock_oracle():
    rng = np.random.default_rng(5)
    n_max = 30
    for _ in range(4):
        w = rng.uniform(-1.0, 1.0, (4, 2))
        d = rng.uniform(-0.8, 0.8, (4, 2, 1))
        st = TwoSpinState(w, d)
        psi = oracles.fock_state_two_spin(st, n_max)
        ref = oracles.fock_reduced_spin_density(psi, 4, n_max)
        dens = reduced_density(st)
        assert np.max(np.abs(dens.rho - ref)) < 1e-9


def test_system_entropies_closed_forms():
    s_vn, s_lin = system_entropies(PRODUCT_X)
    assert s_vn == pytest.approx(0.0, abs=1e-12)
    assert s_lin == pytest.approx(0.0, abs=1e-12)
    s_vn, s_lin = system_entropies(np.eye(4) / 4.0)
    assert s_vn == pytest.approx(2.0, abs=1e-12)
    assert s_lin == pytest.approx(0.75, abs=1e-12)
    s_vn, s_lin = system_entropies(CLASSICAL_MIX)
    assert s_vn == pytest.approx(1.0, abs=1e-12)
    assert s_lin == pytest.approx(0.5, abs=1e-12)


def test_concurrence_closed_forms():
    assert concurrence(oracles.bell_phi_plus()) == pytest.approx(1.0, abs=1e-12)
    assert concurrence(PRODUCT_X) == pytest.approx(0.0, abs=1e-12)
    assert concurrence(oracles.werner(0.5)) == pytest.approx(0.25, abs=1e-12)
    assert concurrence(oracles.werner(1.0 / 3.0)) == pytest.approx(0.0, abs=1e-10)


def test_entanglement_of_formation_curve():
    assert entanglement_of_formation(0.0) == 0.0
    assert entanglement_of_formation(1.0) == pytest.approx(1.0, abs=1e-12)
    x = 0.5 * (1.0 + math.sqrt(1.0 - 0.0625))
    expected = -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)
    got = entanglement_of_formation(0.25)
    assert got == pytest.approx(expected, abs=1e-14)
    assert got == pytest.approx(0.1176189, abs=1e-6)
    with pytest.raises(ValueError):
        entanglement_of_formation(1.5)


def test_negativity_closed_forms():
    n, en = negativity_measures(oracles.bell_phi_plus())
    assert n == pytest.approx(0.5, abs=1e-12)
    assert en == pytest.approx(1.0, abs=1e-12)
    n, en = negativity_measures(PRODUCT_X)
    assert n == pytest.approx(0.0, abs=1e-12)
    assert en == pytest.approx(0.0, abs=1e-12)
    n, en = negativity_measures(oracles.werner(0.5))
    assert n == pytest.approx(0.125, abs=1e-12)
    assert en == pytest.approx(math.log2(1.25), abs=1e-12)


def test_mutual_information_closed_forms():
    assert spin_mutual_information(PRODUCT_X) == pytest.approx(0.0, abs=1e-10)
    assert spin_mutual_information(oracles.bell_phi_plus()) == pytest.approx(
        2.0, abs=1e-10
    )
    assert spin_mutual_information(CLASSICAL_MIX) == pytest.approx(
        1.0, abs=1e-10
    )


def test_discord_closed_forms():
    d, c, _ = spin_discord(oracles.bell_phi_plus())
    assert d == pytest.approx(1.0, abs=1e-8)
    assert c == pytest.approx(1.0, abs=1e-8)
    d, c, _ = spin_discord(PRODUCT_X)
    assert d == pytest.approx(0.0, abs=1e-8)
    d, c, _ = spin_discord(CLASSICAL_MIX)
    assert d == pytest.approx(0.0, abs=1e-8)
    assert c == pytest.approx(1.0, abs=1e-8)


def test_discord_grid_matches_dense_oracle():
    rng = np.random.default_rng(13)
    for _ in range(100):
        rho = oracles.random_density_matrix(rng, rank=int(rng.integers(1, 5)))
        d, _, _ = spin_discord(rho)
        ref = oracles.dense_grid_discord(rho, 512, 1024)
        assert d <= ref + 1e-9  # refinement can only improve on a grid
        assert abs(d - ref) < 1e-6


def test_discord_refinement_improves_on_coarse_grid():
    rng = np.random.default_rng(2)
    rho = oracles.random_density_matrix(rng)
    coarse = spin_discord(rho, DiscordOptions(theta_points=16, phi_points=32, refine=False))
    refined = spin_discord(rho, DiscordOptions(theta_points=16, phi_points=32, refine=True))
    assert refined.discord <= coarse.discord + 1e-12


def test_measure_ranges_on_random_states():
    rng = np.random.default_rng(41)
    for _ in range(40):
        rho = oracles.random_density_matrix(rng)
        m = spin_measures(rho)
        assert 0.0 <= m.s_vn <= 2.0 + 1e-12
        assert 0.0 <= m.concurrence <= 1.0
        assert m.discord >= 0.0
        assert m.mutual_information >= m.discord - 1e-9
        assert m.classical_correlation >= -1e-9
        assert m.negativity >= 0.0


def test_local_unitary_invariance():
    rng = np.random.default_rng(53)
    for _ in range(5):
        rho = oracles.random_density_matrix(rng)
        m_ref = spin_measures(rho)
        u1, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        u2, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        u = np.kron(u1, u2)
        m_rot = spin_measures(u @ rho @ u.conj().T)
        assert m_rot.concurrence == pytest.approx(m_ref.concurrence, abs=1e-8)
        assert m_rot.negativity == pytest.approx(m_ref.negativity, abs=1e-8)
        assert m_rot.mutual_information == pytest.approx(
            m_ref.mutual_information, abs=1e-8
        )
        assert m_rot.discord == pytest.approx(m_ref.discord, abs=1e-8)


def test_bell_regime_variational_state():
    # strong antiferromagnetic coupling with a weak bath: the pair locks
    # into (|+-> + |-+>)/sqrt(2)
    bath = discretize(BathSpec(s=1.0, alpha=0.3, Lambda=1.2, M=11, omega_c=1.0))
    params = ModelParams(bath=bath, Delta=0.025, K=3.0, kind="two_spin")
    res = minimize(params, MinimizeOptions(n_branches=4, restarts=8, seed=0))
    m = spin_measures(res.state)
    assert m.discord == pytest.approx(1.0, abs=0.02)
    assert m.concurrence > 0.95
    bell = oracles.bell_psi_plus()
    dens = reduced_density(res.state)
    assert np.max(np.abs(dens.rho - bell)) < 0.02


def test_invalid_density_inputs():
    with pytest.raises(UnphysicalStateError):
        density_from_matrix(np.diag([0.9, 0.4, -0.3, 0.0]))
    with pytest.raises(UnphysicalStateError):
        vn_entropy(np.diag([1.1, -0.1, 0.0, 0.0]))
    with pytest.raises(TypeError):
        reduced_density("not a state")


def test_density_csv_export():
    dens = density_from_matrix(oracles.bell_phi_plus())
    buf = io.StringIO()
    write_density_csv(buf, dens, header_lines=("alpha=0.1",))
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# alpha=0.1"
    assert len(lines) == 2 + 8
    first = [float(v) for v in lines[2].split(",")]
    assert len(first) == 4
    assert first[0] == pytest.approx(0.5)

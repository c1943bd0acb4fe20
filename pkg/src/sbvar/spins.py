"""Reduced two-spin density matrix and its correlation/entanglement measures.

All spin-side quantities use base-2 logarithms (bits).  The reduced matrix
lives in the basis {++, +-, -+, --}, ordered like the sectors of the
two-spin ansatz; the first label is spin 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .ansatz import TwoSpinState
from .exceptions import DegenerateNormError, UnphysicalStateError

_EIG_FLOOR = 1e-10

PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


@dataclass(frozen=True)
class ReducedSpinDensity:
    """4x4 reduced density matrix with its Bloch decomposition."""

    rho: np.ndarray
    a: np.ndarray  # Bloch vector of spin 1
    b: np.ndarray  # Bloch vector of spin 2
    t: np.ndarray  # correlation tensor T_ij = <sigma_i x sigma_j>

    @property
    def rho1(self):
        r = self.rho.reshape(2, 2, 2, 2)
        return np.einsum("ukvk->uv", r)

    @property
    def rho2(self):
        r = self.rho.reshape(2, 2, 2, 2)
        return np.einsum("kukv->uv", r)


def _bloch_decomposition(rho):
    a = np.empty(3)
    b = np.empty(3)
    t = np.empty((3, 3))
    for i, si in enumerate(PAULI):
        a[i] = np.real(np.trace(np.kron(si, np.eye(2)) @ rho))
        b[i] = np.real(np.trace(np.kron(np.eye(2), si) @ rho))
        for j, sj in enumerate(PAULI):
            t[i, j] = np.real(np.trace(np.kron(si, sj) @ rho))
    return a, b, t


def density_from_matrix(rho):
    """Wrap an explicit 4x4 density matrix, validating its invariants."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a 4x4 matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise UnphysicalStateError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > 1e-10:
        raise UnphysicalStateError(
            f"density matrix trace {np.trace(rho)!r} != 1"
        )
    if np.min(np.linalg.eigvalsh(rho)) < -_EIG_FLOOR:
        raise UnphysicalStateError("density matrix has a negative eigenvalue")
    a, b, t = _bloch_decomposition(rho)
    return ReducedSpinDensity(rho=rho, a=a, b=b, t=t)


def reduced_density(state):
    """Trace the bath out of a two-spin variational state.

    rho[s, s'] = sum_{n,m} w^s_n w^{s'}_m <d^{s'}_m | d^s_n> / N with the
    real-coherent-state overlap <u|v> = exp(-|u - v|^2 / 2).
    """
    if not isinstance(state, TwoSpinState):
        raise TypeError("reduced_density requires a two-spin state")
    w = state.weights
    d = state.disp
    sq = np.einsum("snk,snk->sn", d, d)
    rho = np.empty((4, 4))
    for s in range(4):
        for sp in range(s, 4):
            d2 = (
                sq[s][:, None]
                + sq[sp][None, :]
                - 2.0 * d[s] @ d[sp].T
            )
            overlap = np.exp(-0.5 * np.maximum(d2, 0.0))
            rho[s, sp] = w[s] @ overlap @ w[sp]
            rho[sp, s] = rho[s, sp]
    norm = np.trace(rho)
    if not norm > 1e-300:
        raise DegenerateNormError(f"state norm collapsed: trace={norm!r}")
    rho = rho / norm
    a, b, t = _bloch_decomposition(rho)
    return ReducedSpinDensity(rho=rho.astype(complex), a=a, b=b, t=t)


def _clamped_spectrum(rho):
    eig = np.linalg.eigvalsh(rho)
    if eig.min() < -_EIG_FLOOR:
        raise UnphysicalStateError(
            f"density eigenvalue {eig.min()!r} below -{_EIG_FLOOR:g}"
        )
    return np.clip(eig, 0.0, None)


def vn_entropy(rho):
    """von Neumann entropy in bits."""
    eig = _clamped_spectrum(np.asarray(rho))
    nz = eig[eig > 0.0]
    return float(-(nz @ np.log2(nz)))


def system_entropies(rho):
    """(S_vN, S_L) of the spin pair; equal to the bath entropies for a pure total state."""
    rho = np.asarray(getattr(rho, "rho", rho))
    s_vn = vn_entropy(rho)
    s_lin = 1.0 - float(np.real(np.trace(rho @ rho)))
    return s_vn, s_lin


def concurrence(rho):
    rho = np.asarray(getattr(rho, "rho", rho), dtype=complex)
    syy = np.kron(PAULI[1], PAULI[1])
    rho_tilde = syy @ rho.conj() @ syy
    eig = np.linalg.eigvals(rho @ rho_tilde)
    lam = np.sqrt(np.clip(np.real(eig), 0.0, None))
    lam = np.sort(lam)[::-1]
    return float(max(lam[0] - lam[1] - lam[2] - lam[3], 0.0))


def _binary_entropy(x):
    x = np.clip(x, 0.0, 1.0)
    out = np.zeros_like(np.asarray(x, dtype=float))
    inner = (x > 0.0) & (x < 1.0)
    xi = np.asarray(x, dtype=float)[inner]
    out[inner] = -xi * np.log2(xi) - (1.0 - xi) * np.log2(1.0 - xi)
    return out if out.ndim else float(out)


def entanglement_of_formation(c):
    """Entanglement of formation from the concurrence, in bits."""
    c = float(c)
    if not 0.0 <= c <= 1.0 + 1e-12:
        raise ValueError(f"concurrence {c!r} outside [0, 1]")
    x = 0.5 * (1.0 + np.sqrt(max(1.0 - min(c, 1.0) ** 2, 0.0)))
    return float(_binary_entropy(x))


def negativity_measures(rho):
    """(N, E_N): negativity from the partial transpose over spin 1, and its log form."""
    rho = np.asarray(getattr(rho, "rho", rho), dtype=complex)
    pt = rho.reshape(2, 2, 2, 2).transpose(2, 1, 0, 3).reshape(4, 4)
    trace_norm = float(np.sum(np.abs(np.linalg.eigvalsh(pt))))
    n_neg = max((trace_norm - 1.0) / 2.0, 0.0)
    return n_neg, float(np.log2(2.0 * n_neg + 1.0))


def spin_mutual_information(rho):
    dens = rho if isinstance(rho, ReducedSpinDensity) else density_from_matrix(rho)
    return vn_entropy(dens.rho1) + vn_entropy(dens.rho2) - vn_entropy(dens.rho)


@dataclass(frozen=True)
class DiscordOptions:
    """Resolution of the measurement-direction search."""

    theta_points: int = 64
    phi_points: int = 128
    refine: bool = True


class SpinDiscordResult(NamedTuple):
    discord: float
    classical: float
    direction: tuple


def _conditional_entropy_grid(a, b, t, theta, phi):
    """Average post-measurement entropy of spin 2 for directions n(theta, phi).

    Measurement on spin 1 with the orthogonal projector pair (1 +- n.sigma)/2;
    works on broadcastable theta/phi arrays.
    """
    st, ct = np.sin(theta), np.cos(theta)
    n = np.stack(
        np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), ct + 0.0 * phi)
    )
    p_plus = 0.5 * (1.0 + np.tensordot(a, n, axes=1))
    p_minus = 1.0 - p_plus
    tn = np.tensordot(t.T, n, axes=1)
    total = np.zeros_like(p_plus)
    for sign, p in ((1.0, p_plus), (-1.0, p_minus)):
        u = 0.5 * (b.reshape((3,) + (1,) * (n.ndim - 1)) + sign * tn)
        length = np.sqrt(np.sum(u * u, axis=0))
        # p below the measure-zero floor contributes nothing
        live = p > 1e-12
        m = np.zeros_like(p)
        np.divide(length, p, out=m, where=live)
        m = np.minimum(m, 1.0)
        total += np.where(live, p * _binary_entropy(0.5 * (1.0 + m)), 0.0)
    return total


def spin_discord(rho, opts=None):
    """Projective-measurement discord D(2|1) with measurement on spin 1.

    Coarse grid over the measurement direction followed by simplex
    refinement; returns (discord, classical correlation, argmin direction).
    """
    opts = opts or DiscordOptions()
    dens = rho if isinstance(rho, ReducedSpinDensity) else density_from_matrix(rho)
    a, b, t = dens.a, dens.b, dens.t
    theta = np.linspace(0.0, np.pi, opts.theta_points)
    phi = np.linspace(0.0, 2.0 * np.pi, opts.phi_points, endpoint=False)
    grid = _conditional_entropy_grid(
        a, b, t, theta[:, None], phi[None, :]
    )
    i, j = np.unravel_index(np.argmin(grid), grid.shape)
    best = (float(theta[i]), float(phi[j]))
    best_val = float(grid[i, j])
    if opts.refine:
        res = scipy_minimize(
            lambda x: float(_conditional_entropy_grid(a, b, t, x[0], x[1])),
            np.array(best),
            method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 400},
        )
        if res.fun <= best_val:
            best_val = float(res.fun)
            best = (float(res.x[0]), float(res.x[1]))
    s1 = vn_entropy(dens.rho1)
    s2 = vn_entropy(dens.rho2)
    s12 = vn_entropy(dens.rho)
    discord = max(s1 - s12 + best_val, 0.0)
    classical = s2 - best_val
    return SpinDiscordResult(discord, classical, best)


@dataclass(frozen=True)
class SpinMeasures:
    """Everything the sweep reports about the spin pair."""

    s_vn: float
    s_lin: float
    cor_zz: float
    mutual_information: float
    concurrence: float
    entanglement_of_formation: float
    negativity: float
    log_negativity: float
    discord: float
    classical_correlation: float


def spin_measures(state_or_rho, opts=None):
    dens = (
        state_or_rho
        if isinstance(state_or_rho, ReducedSpinDensity)
        else reduced_density(state_or_rho)
        if isinstance(state_or_rho, TwoSpinState)
        else density_from_matrix(state_or_rho)
    )
    s_vn, s_lin = system_entropies(dens)
    conc = concurrence(dens)
    n_neg, e_n = negativity_measures(dens)
    disc = spin_discord(dens, opts)
    return SpinMeasures(
        s_vn=s_vn,
        s_lin=s_lin,
        cor_zz=float(dens.t[2, 2] - dens.a[2] * dens.b[2]),
        mutual_information=spin_mutual_information(dens),
        concurrence=conc,
        entanglement_of_formation=entanglement_of_formation(conc),
        negativity=n_neg,
        log_negativity=e_n,
        discord=disc.discord,
        classical_correlation=disc.classical,
    )


def write_density_csv(path_or_file, dens, header_lines=()):
    """Debug export: real part rows then imaginary part rows, row-major."""
    rho = np.asarray(getattr(dens, "rho", dens), dtype=complex)
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("# rows 1-4: Re(rho); rows 5-8: Im(rho); basis ++,+-,-+,--\n")
        for block in (rho.real, rho.imag):
            for row in block:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    finally:
        if own:
            fh.close()

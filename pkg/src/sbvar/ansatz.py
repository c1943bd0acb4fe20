"""Multi coherent-state trial wavefunctions for one or two spins in a bath.

A state is a superposition, per spin sector, of displaced bath vacua with
real weights and real per-mode displacements:

    |Psi> = sum_sector |sector> sum_n w[sector, n] |d[sector, n]>,

where |d> is the product coherent state with displacement d_k in mode k.
Single-spin states carry 2 sectors (spin up/down along z); two-spin states
carry 4 (uu, ud, du, dd).  All parameters are real: the ground states
targeted here can be chosen real, and real parameters make every overlap
a Gaussian of the displacement distance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bath import DiscretizedBath
from .exceptions import DegenerateNormError

STATE_FORMAT_VERSION = 1

# sector labels, index order fixed by construction
SINGLE_SECTORS = ("up", "down")
TWO_SPIN_SECTORS = ("uu", "ud", "du", "dd")


def coherent_overlap(u, v):
    """<u|v> for real displacement vectors: exp(u.v - |u|^2/2 - |v|^2/2).

    Evaluated as exp(-|u - v|^2 / 2), which is the same quantity written
    in a cancellation-free, overflow-free form.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    if u.shape != v.shape:
        raise ValueError(f"displacement shapes differ: {u.shape} vs {v.shape}")
    return float(np.exp(-0.5 * np.sum((u - v) ** 2)))


def overlap_matrix(u, v):
    """Gram matrix S[n, m] = <u_n|v_m> between two stacks of displacements."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    d2 = (
        np.sum(u * u, axis=1)[:, None]
        + np.sum(v * v, axis=1)[None, :]
        - 2.0 * u @ v.T
    )
    return np.exp(-0.5 * np.maximum(d2, 0.0))


@dataclass
class SingleSpinState:
    """weights: (2, N) real; disp: (2, N, M) real. Sector 0 is spin-up."""

    weights: np.ndarray
    disp: np.ndarray

    kind = "single"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, float)
        self.disp = np.asarray(self.disp, float)
        _check_shapes(self, 2)

    @property
    def n_branches(self):
        return self.weights.shape[1]

    @property
    def n_modes(self):
        return self.disp.shape[2]

    def copy(self):
        return SingleSpinState(self.weights.copy(), self.disp.copy())


@dataclass
class TwoSpinState:
    """weights: (4, N); disp: (4, N, M). Sector order: uu, ud, du, dd."""

    weights: np.ndarray
    disp: np.ndarray

    kind = "two_spin"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, float)
        self.disp = np.asarray(self.disp, float)
        _check_shapes(self, 4)

    @property
    def n_branches(self):
        return self.weights.shape[1]

    @property
    def n_modes(self):
        return self.disp.shape[2]

    def copy(self):
        return TwoSpinState(self.weights.copy(), self.disp.copy())


def _check_shapes(state, sectors):
    if state.weights.ndim != 2 or state.weights.shape[0] != sectors:
        raise ValueError(f"weights must have shape ({sectors}, N), got {state.weights.shape}")
    if state.disp.ndim != 3 or state.disp.shape[:2] != state.weights.shape:
        raise ValueError(
            f"disp must have shape ({sectors}, N, M) matching weights, got {state.disp.shape}"
        )


def state_class(kind):
    if kind == "single":
        return SingleSpinState
    if kind == "two_spin":
        return TwoSpinState
    raise ValueError(f"unknown state kind {kind!r}")


def random_state(kind, n_branches, bath: DiscretizedBath, rng):
    """Random initial guess: weights uniform in [-1, 1]; displacements drawn
    as xi * (-lam_k / (2 omega_k)) with xi uniform in [-1.5, 1.5] per branch
    and mode, spanning de-excited, classically displaced, and
    counter-displaced seeds.

    The scale factor xi is shared across spin sectors, so every sector
    starts at the same displacement.  Low-frequency modes carry classical
    displacements lam/(2 omega) that grow without bound as omega -> 0;
    sector-independent draws would start the sectors exponentially far
    apart, the inter-sector overlaps would underflow, and the tunneling
    term could never act.  Coincident sectors keep it alive, and the first
    relaxation sweeps split the sectors toward the energetically preferred
    structure.
    """
    cls = state_class(kind)
    sectors = 2 if kind == "single" else 4
    base = -bath.lam / (2.0 * bath.omega)
    weights = rng.uniform(-1.0, 1.0, size=(sectors, n_branches))
    xi = rng.uniform(-1.5, 1.5, size=(n_branches, bath.M))
    disp = np.broadcast_to(xi * base[None, :], (sectors, n_branches, bath.M)).copy()
    return cls(weights, disp)


def state_norm(state) -> float:
    """<Psi|Psi> for the (unnormalized) trial state."""
    total = 0.0
    for s in range(state.weights.shape[0]):
        smat = overlap_matrix(state.disp[s], state.disp[s])
        total += float(state.weights[s] @ smat @ state.weights[s])
    return total


def gauge_fix(state):
    """Normalize to <Psi|Psi> = 1 and make the largest-magnitude weight positive.

    Returns the same state object, modified in place.
    """
    norm = state_norm(state)
    if not norm > 1e-300:
        raise DegenerateNormError(f"state norm {norm:g} below representable range")
    state.weights /= np.sqrt(norm)
    flat = state.weights.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        state.weights *= -1.0
    return state


def parity_flip(state):
    """Global spin-flip combined with bath parity (all displacements negated).

    For the single spin this swaps the up/down sectors; for two spins it maps
    uu<->dd and ud<->du.  At zero bias the Hamiltonian commutes with this
    operation, so the flipped state has identical energy.
    """
    if state.kind == "single":
        order = [1, 0]
        return SingleSpinState(state.weights[order].copy(), -state.disp[order])
    order = [3, 2, 1, 0]
    return TwoSpinState(state.weights[order].copy(), -state.disp[order])


def pad_branches(state, n_extra=1, scale=0.9):
    """Append zero-weight branches (displacements scaled copies of the last
    branch, kept distinct to avoid a singular overlap matrix).  The padded
    state represents exactly the same wavefunction.
    """
    cls = type(state)
    sectors, n, m = state.disp.shape
    w = np.concatenate([state.weights, np.zeros((sectors, n_extra))], axis=1)
    extra = np.stack(
        [state.disp[:, -1, :] * scale**j for j in range(1, n_extra + 1)], axis=1
    )
    d = np.concatenate([state.disp, extra], axis=1)
    return cls(w, d)


# ----------------------------------------------------------------------
# flat parameter vector <-> state (for quasi-Newton optimization)
# ----------------------------------------------------------------------

def pack(state):
    return np.concatenate([state.weights.ravel(), state.disp.ravel()])


def unpack(x, template):
    cls = type(template)
    nw = template.weights.size
    w = x[:nw].reshape(template.weights.shape)
    d = x[nw:].reshape(template.disp.shape)
    return cls(w.copy(), d.copy())


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def state_to_dict(state):
    return {
        "version": STATE_FORMAT_VERSION,
        "kind": state.kind,
        "n_branches": state.n_branches,
        "n_modes": state.n_modes,
        "weights": state.weights.tolist(),
        "disp": state.disp.tolist(),
    }


def state_from_dict(doc):
    version = doc.get("version")
    if version != STATE_FORMAT_VERSION:
        raise ValueError(f"unsupported state format version {version!r}")
    cls = state_class(doc["kind"])
    return cls(np.array(doc["weights"], float), np.array(doc["disp"], float))


def save_state(state, path, extra=None):
    doc = state_to_dict(state)
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_state(path):
    with open(path) as fh:
        doc = json.load(fh)
    return state_from_dict(doc), doc

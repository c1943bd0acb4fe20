"""Phase-space moments of bath modes in a multi coherent-state trial state.

All expectation values are evaluated in closed form from the Gaussian
overlaps of the coherent branches; nothing is sampled.  Quadratures follow
the convention x = (b + b^dag)/sqrt(2), p = i(b^dag - b)/sqrt(2), so a
vacuum mode has variance 1/2 in both.  A mode of the trial state is not
exactly Gaussian once several branches carry weight; the covariance data
extracted here feeds the Gaussian measures downstream, and a physicality
flag records when that approximation is violated (n_minus < 1/2).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .ansatz import overlap_matrix
from .exceptions import DegenerateNormError

_NORM_FLOOR = 1e-300
_PHYS_TOL = 1e-8


class UnphysicalCovarianceWarning(UserWarning):
    """A two-mode covariance came out with n_minus < 1/2 beyond tolerance."""


@dataclass
class ModeMoments:
    """First and second moments of one bath mode (index k, 0-based)."""

    k: int
    x: float
    p: float
    dx: float
    dp: float


@dataclass
class TwoModeCovariance:
    """Covariance data of the mode pair (k, l) in x/p block-diagonal form.

    The 4x4 covariance over (x_k, p_k, x_l, p_l) is
        [[dx_k, 0, cor_x, 0], [0, dp_k, 0, cor_p],
         [cor_x, 0, dx_l, 0], [0, cor_p, 0, dp_l]];
    x-p cross moments vanish identically for real branch parameters.
    """

    k: int
    l: int
    dx_k: float
    dp_k: float
    dx_l: float
    dp_l: float
    cor_x: float
    cor_p: float
    det_a: float
    det_b: float
    det_c: float
    det_sigma: float
    n_minus: float
    n_plus: float
    physical: bool

    def matrix(self):
        return np.array(
            [
                [self.dx_k, 0.0, self.cor_x, 0.0],
                [0.0, self.dp_k, 0.0, self.cor_p],
                [self.cor_x, 0.0, self.dx_l, 0.0],
                [0.0, self.cor_p, 0.0, self.dp_l],
            ]
        )

    def blocks(self):
        """(det_a, det_b, det_c, det_sigma) in the order used downstream."""
        return self.det_a, self.det_b, self.det_c, self.det_sigma

    def swapped(self):
        """The same pair viewed as (l, k): A and B exchange roles."""
        return TwoModeCovariance(
            k=self.l,
            l=self.k,
            dx_k=self.dx_l,
            dp_k=self.dp_l,
            dx_l=self.dx_k,
            dp_l=self.dp_k,
            cor_x=self.cor_x,
            cor_p=self.cor_p,
            det_a=self.det_b,
            det_b=self.det_a,
            det_c=self.det_c,
            det_sigma=self.det_sigma,
            n_minus=self.n_minus,
            n_plus=self.n_plus,
            physical=self.physical,
        )


@dataclass
class DisplacementProfile:
    """Spin-conditioned displacement averages and quadrature fluctuations.

    ``conditional[s, k]`` is the average of (b_k + b_k^dag) weighted by the
    projector on spin sector s (not renormalized by the sector weight), so
    the entries sum to 2 <x_k> / sqrt(2).  For the single-spin state the
    two rows are the up- and down-conditioned averages; ``fbar``/``gbar``
    expose them under those names.  ``fluct`` is dX_k - 1/2 per mode.
    """

    conditional: np.ndarray  # (n_sectors, M)
    fluct: np.ndarray  # (M,)
    kind: str

    @property
    def fbar(self):
        return self.conditional[0]

    @property
    def gbar(self):
        return self.conditional[-1]


class _MomentTables:
    """Per-state sums shared by all moment evaluations.

    For each sector s with branch weights w and displacements d (N, M):
        row_d[s]  = sum_nm w_n w_m S_nm (d_nk + d_mk) / 2      (N-summed, per k)
        x2[k]    += sum_nm w_n w_m S_nm ((d_nk + d_mk)^2 + 1) / 2
        p2[k]    += sum_nm w_n w_m S_nm (1 - (d_nk - d_mk)^2) / 2
    plus the raw pair sums needed for cross-mode correlators.
    """

    def __init__(self, state):
        self.state = state
        w = state.weights
        d = state.disp
        n_sec, _, n_modes = d.shape
        self.norm = 0.0
        self.wmats = []
        for s in range(n_sec):
            smat = overlap_matrix(d[s], d[s])
            wmat = np.outer(w[s], w[s]) * smat
            self.wmats.append(wmat)
            self.norm += float(wmat.sum())
        if not self.norm > _NORM_FLOOR:
            raise DegenerateNormError(f"state norm {self.norm:g} below representable range")

        self.cond = np.zeros((n_sec, n_modes))  # sector-projected (b + b^dag)
        self.x2 = np.zeros(n_modes)
        self.p2 = np.zeros(n_modes)
        self.p1 = np.zeros(n_modes)
        for s in range(n_sec):
            wmat = self.wmats[s]
            row_w = wmat.sum(axis=1)
            ds = d[s]
            plus_sq = np.einsum("nm,nk,mk->k", wmat, ds, ds)  # sum wmat d_nk d_mk
            diag_sq = row_w @ (ds * ds)  # sum wmat d_nk^2 (= d_mk^2 term by symmetry)
            self.cond[s] = 2.0 * row_w @ ds
            # (d_n + d_m)^2 = d_n^2 + d_m^2 + 2 d_n d_m ; (d_n - d_m)^2 likewise
            self.x2 += 0.5 * (2.0 * diag_sq + 2.0 * plus_sq + wmat.sum())
            self.p2 += 0.5 * (wmat.sum() - (2.0 * diag_sq - 2.0 * plus_sq))
            self.p1 += np.einsum("nm,nk->k", wmat, ds) - row_w @ ds
        self.cond /= self.norm
        self.x2 /= self.norm
        self.p2 /= self.norm
        self.p1 /= np.sqrt(2.0) * self.norm
        self.xbar = self.cond.sum(axis=0) / np.sqrt(2.0)
        self.dx = self.x2 - self.xbar**2
        self.dp = self.p2

    def cross(self, k, l):
        """(<x_k x_l>, <p_k p_l>) raw second moments for k != l."""
        d = self.state.disp
        xx = 0.0
        pp = 0.0
        for s, wmat in enumerate(self.wmats):
            dk = d[s][:, k]
            dl = d[s][:, l]
            plus_k = dk[:, None] + dk[None, :]
            plus_l = dl[:, None] + dl[None, :]
            minus_k = dk[:, None] - dk[None, :]
            minus_l = dl[:, None] - dl[None, :]
            xx += 0.5 * float((wmat * plus_k * plus_l).sum())
            pp -= 0.5 * float((wmat * minus_k * minus_l).sum())
        return xx / self.norm, pp / self.norm


def moment_tables(state) -> _MomentTables:
    """Precompute the overlap sums once when many modes are queried."""
    return _MomentTables(state)


def _check_mode(state, k):
    if not 0 <= k < state.n_modes:
        raise IndexError(f"mode index {k} out of range for M={state.n_modes}")


def mode_moments(state, k, tables=None) -> ModeMoments:
    """Exact first/second moments of mode k (0-based index)."""
    _check_mode(state, k)
    t = tables or _MomentTables(state)
    return ModeMoments(
        k=k, x=float(t.xbar[k]), p=float(t.p1[k]), dx=float(t.dx[k]), dp=float(t.dp[k])
    )


def symplectic_pair(det_a, det_b, det_c, det_sigma):
    """(n_minus, n_plus) from the symplectic invariant of the block form."""
    inv = det_a + det_b + 2.0 * det_c
    disc = max(inv * inv - 4.0 * det_sigma, 0.0)
    root = np.sqrt(disc)
    n_minus = np.sqrt(max((inv - root) / 2.0, 0.0))
    n_plus = np.sqrt(max((inv + root) / 2.0, 0.0))
    return float(n_minus), float(n_plus)


def two_mode_covariance(state, k, l, tables=None, warn=True) -> TwoModeCovariance:
    """Covariance data of the ordered mode pair (k, l), k != l."""
    _check_mode(state, k)
    _check_mode(state, l)
    if k == l:
        raise ValueError("two_mode_covariance requires two distinct modes")
    t = tables or _MomentTables(state)
    xx, pp = t.cross(k, l)
    cor_x = xx - t.xbar[k] * t.xbar[l]
    cor_p = pp
    dx_k, dp_k = float(t.dx[k]), float(t.dp[k])
    dx_l, dp_l = float(t.dx[l]), float(t.dp[l])
    det_a = dx_k * dp_k
    det_b = dx_l * dp_l
    det_c = cor_x * cor_p
    det_sigma = (
        dx_k * dp_k * dx_l * dp_l
        + cor_x * cor_x * cor_p * cor_p
        - dx_k * dx_l * cor_p * cor_p
        - dp_k * dp_l * cor_x * cor_x
    )
    n_minus, n_plus = symplectic_pair(det_a, det_b, det_c, det_sigma)
    physical = n_minus >= 0.5 - _PHYS_TOL
    if warn and not physical:
        warnings.warn(
            f"mode pair ({k}, {l}): n_minus = {n_minus:.6g} < 1/2, the Gaussian "
            "reduction of this state is not a physical covariance",
            UnphysicalCovarianceWarning,
            stacklevel=2,
        )
    return TwoModeCovariance(
        k=k,
        l=l,
        dx_k=dx_k,
        dp_k=dp_k,
        dx_l=dx_l,
        dp_l=dp_l,
        cor_x=float(cor_x),
        cor_p=float(cor_p),
        det_a=det_a,
        det_b=det_b,
        det_c=det_c,
        det_sigma=det_sigma,
        n_minus=n_minus,
        n_plus=n_plus,
        physical=physical,
    )


def displacement_profile(state, tables=None) -> DisplacementProfile:
    """Spin-conditioned displacement averages over all modes."""
    t = tables or _MomentTables(state)
    return DisplacementProfile(
        conditional=t.cond.copy(), fluct=t.dx - 0.5, kind=state.kind
    )


def write_profile_csv(path_or_file, bath, state, header_lines=()):
    """Per-mode table: k,omega_k,xbar,dX,dP,fbar,gbar,fluct (k 1-based)."""
    t = _MomentTables(state)
    prof = displacement_profile(state, tables=t)
    close = False
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        fh = open(path_or_file, "w")
        close = True
    else:
        fh = path_or_file
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("k,omega_k,xbar,dX,dP,fbar,gbar,fluct\n")
        for k in range(bath.M):
            fh.write(
                f"{k + 1},{bath.omega[k]:.17g},{t.xbar[k]:.17g},{t.dx[k]:.17g},"
                f"{t.dp[k]:.17g},{prof.fbar[k]:.17g},{prof.gbar[k]:.17g},"
                f"{prof.fluct[k]:.17g}\n"
            )
    finally:
        if close:
            fh.close()

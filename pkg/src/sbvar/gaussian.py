"""Correlation and entanglement measures of two-mode Gaussian states.

All functions accept the covariance data in any of three forms:

* a ``TwoModeCovariance`` from :mod:`sbvar.moments`,
* a 6-tuple of raw block values ``(dX_k, dP_k, dX_l, dP_l, Cor_X, Cor_P)``
  for the x/p-block-diagonal covariance produced by the real-parameter
  ansatz,
* a 4-tuple of local symplectic invariants
  ``(det_a, det_b, det_c, det_sigma)``.

Convention: vacuum quadrature variance is 1/2, so a physical symplectic
eigenvalue satisfies ``n >= 1/2``.  Entropy-like quantities (von Neumann
entropy, mutual information, discord, classical correlation) are in nats;
logarithmic negativity is in bits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DiscordBranchError, UnphysicalStateError

# Everything below 1/2 - _EIGEN_TOL is treated as a genuine physicality
# violation rather than roundoff; silent clamping there would mask solver
# bugs upstream.
_EIGEN_TOL = 1e-9
_PAIR_TOL = 1e-8  # guard band used when combining several eigenvalues


def covariance_blocks(cov):
    """Normalize covariance input to ``(det_a, det_b, det_c, det_sigma)``."""
    if hasattr(cov, "blocks"):
        return tuple(float(v) for v in cov.blocks())
    values = tuple(float(v) for v in cov)
    if len(values) == 4:
        return values
    if len(values) == 6:
        dx_k, dp_k, dx_l, dp_l, cor_x, cor_p = values
        det_a = dx_k * dp_k
        det_b = dx_l * dp_l
        det_c = cor_x * cor_p
        det_sigma = (
            det_a * det_b
            + cor_x * cor_x * cor_p * cor_p
            - dx_k * dx_l * cor_p * cor_p
            - dp_k * dp_l * cor_x * cor_x
        )
        return det_a, det_b, det_c, det_sigma
    raise TypeError(
        "expected TwoModeCovariance, 6 raw block values, or 4 invariants; "
        f"got {len(values)} values"
    )


def entropy_f(x, tol=_EIGEN_TOL):
    """Bosonic entropy kernel f(x) = (x+1/2)ln(x+1/2) - (x-1/2)ln(x-1/2).

    ``x`` is a symplectic eigenvalue in the vacuum-1/2 convention.  Values
    in ``[1/2 - tol, 1/2]`` clamp to the vacuum point, where f = 0 by
    continuity.
    """
    x = float(x)
    if x < 0.5 - tol:
        raise UnphysicalStateError(
            f"symplectic eigenvalue {x!r} below vacuum floor 1/2 "
            f"(tolerance {tol:g})"
        )
    if x <= 0.5:
        return 0.0
    plus = x + 0.5
    minus = x - 0.5
    return plus * math.log(plus) - minus * math.log(minus)


@dataclass(frozen=True)
class SymplecticSpectrum:
    """Symplectic eigenvalues of a two-mode covariance and its partial transpose."""

    n_minus: float
    n_plus: float
    nu_tilde_minus: float
    nu_tilde_plus: float
    delta_sigma: float
    delta_tilde: float


def _eigen_pair(delta, det_sigma):
    disc = delta * delta - 4.0 * det_sigma
    if disc < -1e-12:
        raise UnphysicalStateError(
            f"negative symplectic discriminant {disc!r} "
            f"(delta={delta!r}, det_sigma={det_sigma!r})"
        )
    # a discriminant below the cancellation noise of its inputs is
    # indistinguishable from an exactly degenerate pair; taking its square
    # root would fabricate an O(sqrt(eps)) splitting
    noise_floor = 4e-15 * (delta * delta + 4.0 * abs(det_sigma))
    root = math.sqrt(disc) if disc > noise_floor else 0.0
    hi = (delta + root) / 2.0
    if hi <= 0.0 or det_sigma < 0.0:
        raise UnphysicalStateError(
            f"non-positive symplectic spectrum (delta={delta!r}, "
            f"det_sigma={det_sigma!r})"
        )
    # small root from the product of roots: avoids the catastrophic
    # cancellation of (delta - root)/2 near the vacuum floor
    lo = det_sigma / hi
    return math.sqrt(lo), math.sqrt(hi)


def symplectic_spectrum(cov):
    det_a, det_b, det_c, det_sigma = covariance_blocks(cov)
    delta = det_a + det_b + 2.0 * det_c
    delta_tilde = det_a + det_b - 2.0 * det_c
    n_minus, n_plus = _eigen_pair(delta, det_sigma)
    nu_minus, nu_plus = _eigen_pair(delta_tilde, det_sigma)
    return SymplecticSpectrum(
        n_minus=n_minus,
        n_plus=n_plus,
        nu_tilde_minus=nu_minus,
        nu_tilde_plus=nu_plus,
        delta_sigma=delta,
        delta_tilde=delta_tilde,
    )


def von_neumann_entropy(cov):
    """Entropy of the two-mode state, f(n_-) + f(n_+), in nats."""
    spec = symplectic_spectrum(cov)
    return entropy_f(spec.n_minus, tol=_PAIR_TOL) + entropy_f(
        spec.n_plus, tol=_PAIR_TOL
    )


def purity(cov):
    det_a, det_b, det_c, det_sigma = covariance_blocks(cov)
    if det_sigma < 1.0 / 16.0 - 1e-10:
        raise UnphysicalStateError(
            f"covariance determinant {det_sigma!r} below pure-state floor 1/16"
        )
    return 1.0 / (4.0 * math.sqrt(max(det_sigma, 1.0 / 16.0)))


def linear_entropy(cov):
    """1 - purity of the two-mode state; 0 for pure states."""
    return 1.0 - purity(cov)


def mutual_information(cov):
    """Total correlation f(a) + f(b) - f(n_-) - f(n_+), in nats."""
    det_a, det_b, det_c, det_sigma = covariance_blocks(cov)
    spec = symplectic_spectrum(cov)
    a = math.sqrt(max(det_a, 0.0))
    b = math.sqrt(max(det_b, 0.0))
    return (
        entropy_f(a, tol=_PAIR_TOL)
        + entropy_f(b, tol=_PAIR_TOL)
        - entropy_f(spec.n_minus, tol=_PAIR_TOL)
        - entropy_f(spec.n_plus, tol=_PAIR_TOL)
    )


def log_negativity(cov):
    """max{0, -log2(2 nu_tilde_-)} in bits."""
    spec = symplectic_spectrum(cov)
    if spec.nu_tilde_minus <= 0.0:
        raise UnphysicalStateError(
            f"vanishing partial-transpose eigenvalue {spec.nu_tilde_minus!r}"
        )
    return max(0.0, -math.log2(2.0 * spec.nu_tilde_minus))


@dataclass(frozen=True)
class GaussianDiscordParams:
    """Intermediate quantities of the closed-form Gaussian discord."""

    a: float
    b: float
    alpha_g: float
    beta_g: float
    gamma_g: float
    delta_g: float
    Gamma: float
    det_eps: float
    e: float


def discord_params(cov):
    """Evaluate the optimal conditional determinant for measurement on mode l.

    The heterodyne/homodyne minimization has a closed form with two
    branches selected by the sign of the discriminant Gamma.
    """
    det_a, det_b, det_c, det_sigma = covariance_blocks(cov)
    a = math.sqrt(max(det_a, 0.0))
    b = math.sqrt(max(det_b, 0.0))
    al = 4.0 * det_a
    be = 4.0 * det_b
    ga = 4.0 * det_c
    de = 16.0 * det_sigma
    gamma_disc = (1.0 + be) * ga * ga * (al + de) - (de - al * be) ** 2
    denom = 4.0 * (be - 1.0) ** 2
    if gamma_disc >= 0.0 and denom > 1e-24:
        root_arg = ga * ga + (be - 1.0) * (de - al)
        det_eps = (
            2.0 * ga * ga
            + (be - 1.0) * (de - al)
            + 2.0 * abs(ga) * math.sqrt(max(root_arg, 0.0))
        ) / denom
    else:
        # Gamma < 0 branch; also covers the degenerate be -> 1 limit where
        # both branches coincide.
        inner = (
            ga**4 + (de - al * be) ** 2 - 2.0 * ga * ga * (al * be + de)
        )
        det_eps = (
            al * be - ga * ga + de - math.sqrt(max(inner, 0.0))
        ) / (8.0 * be)
    if det_eps < 0.25 - _PAIR_TOL:
        raise DiscordBranchError(
            "conditional-state determinant below vacuum floor: "
            f"det_eps={det_eps!r}, Gamma={gamma_disc!r}, "
            f"alpha={al!r}, beta={be!r}, gamma={ga!r}, delta={de!r}"
        )
    e = math.sqrt(max(det_eps, 0.25))
    return GaussianDiscordParams(
        a=a,
        b=b,
        alpha_g=al,
        beta_g=be,
        gamma_g=ga,
        delta_g=de,
        Gamma=gamma_disc,
        det_eps=det_eps,
        e=e,
    )


def gaussian_discord(cov):
    """Quantum discord f(b) + f(e) - f(n_-) - f(n_+), nats; measurement on mode l."""
    params = discord_params(cov)
    spec = symplectic_spectrum(cov)
    value = (
        entropy_f(params.b, tol=_PAIR_TOL)
        + entropy_f(params.e, tol=_PAIR_TOL)
        - entropy_f(spec.n_minus, tol=_PAIR_TOL)
        - entropy_f(spec.n_plus, tol=_PAIR_TOL)
    )
    return value


def classical_correlation(cov):
    """Classical correlation f(a) - f(e); equals I - D."""
    params = discord_params(cov)
    return entropy_f(params.a, tol=_PAIR_TOL) - entropy_f(
        params.e, tol=_PAIR_TOL
    )


@dataclass(frozen=True)
class GaussianMeasures:
    """All pairwise measures of one mode pair, evaluated in a single pass."""

    entropy: float
    linear_entropy: float
    mutual_information: float
    log_negativity: float
    discord: float
    classical_correlation: float


def gaussian_measures(cov):
    blocks = covariance_blocks(cov)
    spec = symplectic_spectrum(blocks)
    params = discord_params(blocks)
    s_minus = entropy_f(spec.n_minus, tol=_PAIR_TOL)
    s_plus = entropy_f(spec.n_plus, tol=_PAIR_TOL)
    f_a = entropy_f(params.a, tol=_PAIR_TOL)
    f_b = entropy_f(params.b, tol=_PAIR_TOL)
    f_e = entropy_f(params.e, tol=_PAIR_TOL)
    return GaussianMeasures(
        entropy=s_minus + s_plus,
        linear_entropy=linear_entropy(blocks),
        mutual_information=f_a + f_b - s_minus - s_plus,
        log_negativity=log_negativity(blocks),
        discord=f_b + f_e - s_minus - s_plus,
        classical_correlation=f_a - f_e,
    )

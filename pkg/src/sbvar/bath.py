"""Logarithmic discretization of power-law bosonic baths.

A continuum bath with spectral density

    J(w) = 2 * alpha * omega_c**(1 - s) * w**s,   0 < w <= omega_c,

is replaced by M discrete modes.  The interval [omega_min, omega_c] is cut
into M bins with logarithmically spaced edges e_k = Lambda**(k - M) * omega_c
(k = 0 .. M), so omega_min = Lambda**(-M) * omega_c.  Each bin contributes one
mode carrying the full bin weight,

    g_k**2 = int_bin J(t) dt,
    w_k    = int_bin J(t) t dt / g_k**2,

i.e. the representative frequency is the J-weighted centroid of the bin.  Both
integrals are powers of t and are evaluated in closed form; the centroid is
independent of alpha, so alpha = 0 is well defined.  Modes are indexed by
ascending frequency.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigurationError

# Relative mismatch between a requested omega_min and the nearest
# Lambda**(-M) grid value above which a warning is emitted.
_OMEGA_MIN_WARN = 0.01


@dataclass(frozen=True)
class BathSpec:
    """Continuum bath parameters plus the discretization grid.

    s        : spectral exponent (0 < s < 1 sub-Ohmic, s = 1 Ohmic)
    alpha    : dimensionless coupling strength, >= 0
    Lambda   : logarithmic grid ratio, > 1
    M        : number of modes, >= 1
    omega_c  : cutoff frequency (default 1.0, the unit of energy)

    omega_min is always Lambda**(-M) * omega_c; use :func:`make_bath_spec`
    to build a spec from omega_min instead of M.
    """

    s: float
    alpha: float
    Lambda: float
    M: int
    omega_c: float = 1.0

    def __post_init__(self):
        if self.s <= 0:
            raise ConfigurationError(f"spectral exponent s must be > 0, got {self.s}")
        if self.alpha < 0:
            raise ConfigurationError(f"coupling alpha must be >= 0, got {self.alpha}")
        if self.Lambda <= 1:
            raise ConfigurationError(f"grid ratio Lambda must be > 1, got {self.Lambda}")
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"mode count M must be an integer >= 1, got {self.M}")
        if self.omega_c <= 0:
            raise ConfigurationError(f"cutoff omega_c must be > 0, got {self.omega_c}")
        if self.s > 1:
            warnings.warn(
                f"s = {self.s} > 1 (super-Ohmic): no coupling-driven transition expected",
                stacklevel=2,
            )

    @property
    def omega_min(self) -> float:
        return self.Lambda ** (-self.M) * self.omega_c

    def with_alpha(self, alpha: float) -> "BathSpec":
        """Same grid, different coupling (discrete frequencies are unchanged)."""
        return replace(self, alpha=alpha)


def make_bath_spec(s, alpha, Lambda, M=None, omega_min=None, omega_c=1.0) -> BathSpec:
    """Build a BathSpec from either a mode count or a target omega_min.

    Exactly one of M / omega_min must be given.  When omega_min is given, M is
    rounded to the nearest integer solving Lambda**(-M) = omega_min / omega_c;
    if the realized omega_min then deviates by more than 1% a warning reports
    the actual value.
    """
    if (M is None) == (omega_min is None):
        raise ConfigurationError("give exactly one of M or omega_min")
    if M is None:
        if not 0 < omega_min < omega_c:
            raise ConfigurationError(
                f"omega_min must lie in (0, omega_c), got {omega_min}"
            )
        if Lambda <= 1:
            raise ConfigurationError(f"grid ratio Lambda must be > 1, got {Lambda}")
        m_exact = -np.log(omega_min / omega_c) / np.log(Lambda)
        M = max(1, round(m_exact))
        realized = Lambda ** (-M) * omega_c
        if abs(realized - omega_min) / omega_min > _OMEGA_MIN_WARN:
            warnings.warn(
                f"requested omega_min={omega_min:g} realized as "
                f"Lambda**(-{M})*omega_c={realized:g} "
                f"({abs(realized - omega_min) / omega_min:.1%} off)",
                stacklevel=2,
            )
    return BathSpec(s=s, alpha=alpha, Lambda=Lambda, M=int(M), omega_c=omega_c)


def spectral_density(omega, spec: BathSpec):
    """J(omega) = 2 alpha omega_c**(1-s) omega**s for omega >= 0.

    Accepts scalars or arrays.  Negative frequencies are a domain error.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("spectral density is defined for omega >= 0 only")
    out = 2.0 * spec.alpha * spec.omega_c ** (1.0 - spec.s) * omega**spec.s
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DiscretizedBath:
    """Discrete modes: frequencies ``omega`` and couplings ``lam``, ascending in omega.

    lam[k]**2 carries the integrated spectral weight of bin k.  ``edges`` holds
    the M+1 bin edges.
    """

    spec: BathSpec
    omega: np.ndarray
    lam: np.ndarray
    edges: np.ndarray

    @property
    def M(self) -> int:
        return self.omega.size

    @property
    def modes(self):
        """Ordered list of (lambda_k, omega_k) pairs."""
        return list(zip(self.lam.tolist(), self.omega.tolist()))

    def total_weight(self) -> float:
        """Sum of lam_k**2; equals the integral of J over [omega_min, omega_c]."""
        return float(np.sum(self.lam**2))

    def to_csv(self, path_or_file, header_lines=()) -> None:
        """Write 'k,omega_k,lambda_k' rows (k is 1-based, ascending omega)."""
        close = False
        if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
            fh = open(path_or_file, "w")
            close = True
        else:
            fh = path_or_file
        try:
            for line in header_lines:
                fh.write(f"# {line}\n")
            fh.write("k,omega_k,lambda_k\n")
            for k in range(self.M):
                fh.write(f"{k + 1},{self.omega[k]:.17g},{self.lam[k]:.17g}\n")
        finally:
            if close:
                fh.close()

    def to_csv_string(self, header_lines=()) -> str:
        buf = io.StringIO()
        self.to_csv(buf, header_lines)
        return buf.getvalue()


def discretize(spec: BathSpec) -> DiscretizedBath:
    """Discretize the bath of ``spec`` into M modes (closed-form bin integrals).

    For each bin [a, b]:

        lam**2 = 2 alpha omega_c**(1-s) * (b**(s+1) - a**(s+1)) / (s+1)
        omega  = (s+1)/(s+2) * (b**(s+2) - a**(s+2)) / (b**(s+1) - a**(s+1))

    omega is the alpha-independent bin centroid and always lies strictly
    inside its bin.
    """
    s, alpha, L, M, wc = spec.s, spec.alpha, spec.Lambda, spec.M, spec.omega_c
    k = np.arange(M + 1)
    edges = L ** (k - M).astype(float) * wc
    a, b = edges[:-1], edges[1:]
    p1 = b ** (s + 1.0) - a ** (s + 1.0)
    p2 = b ** (s + 2.0) - a ** (s + 2.0)
    lam2 = 2.0 * alpha * wc ** (1.0 - s) * p1 / (s + 1.0)
    omega = (s + 1.0) / (s + 2.0) * p2 / p1
    return DiscretizedBath(spec=spec, omega=omega, lam=np.sqrt(lam2), edges=edges)

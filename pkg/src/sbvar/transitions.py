"""Transition location, signature classification, scaling fits, data collapse.

Inputs are either lists of SweepRecord (with a field name selecting the
indicator column) or plain ``(x, y)`` array pairs.  All locators quote an
uncertainty of half the local grid spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import CollapseError, SignatureNotFoundError

SIGNATURES = ("peak", "jump", "kink", "delta")


@dataclass(frozen=True)
class ScalingFit:
    """A fitted scaling law with its residual and fit window."""

    kind: str  # power_law | exponential | exp_with_power_correction
    params: dict
    residual: float
    window: tuple

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": {k: float(v) for k, v in self.params.items()},
            "residual": float(self.residual),
            "window": [float(v) for v in self.window],
        }


def _extract(records, field_name):
    if (
        isinstance(records, (tuple, list))
        and len(records) == 2
        and np.ndim(records[0]) == 1
        and not hasattr(records[0], "alpha")
    ):
        x = np.asarray(records[0], dtype=float)
        y = np.asarray(records[1], dtype=float)
    else:
        from .sweep import record_value

        x = np.array([r.alpha for r in records], dtype=float)
        y = np.array(
            [float(record_value(r, field_name)) for r in records], dtype=float
        )
    order = np.argsort(x)
    x, y = x[order], y[order]
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        keep = np.isfinite(x) & np.isfinite(y)
        x, y = x[keep], y[keep]
    return x, y


def _parabolic_vertex(x3, y3):
    coeffs = np.polyfit(x3, y3, 2)
    if coeffs[0] >= 0.0:  # flat or upward: no interior maximum of the fit
        return None
    vertex = -coeffs[1] / (2.0 * coeffs[0])
    return float(np.clip(vertex, x3[0], x3[2]))


def _line(x, y):
    return np.polyfit(x, y, 1)  # (slope, intercept)


def _two_segment_split(x, y):
    """Split index minimizing the summed SSR of independent side fits."""
    n = x.size
    best = (np.inf, None)
    for j in range(1, n - 2):  # left = [0..j], right = [j+1..n-1]
        ssr = 0.0
        for xs, ys in ((x[: j + 1], y[: j + 1]), (x[j + 1 :], y[j + 1 :])):
            slope, icept = _line(xs, ys)
            ssr += float(np.sum((ys - (slope * xs + icept)) ** 2))
        if ssr < best[0]:
            best = (ssr, j)
    return best


def locate_transition(records, signature, field="sum_discord", floor_ratio=0.25):
    """Transition coupling from one singularity signature.

    peak  -> parabolic interpolation through the 3 points around the maximum
    jump  -> dominant single-step change; side lines intersected, clamped to
             the bracketing step
    kink  -> best two-segment linear fit; intersection of the segments
    delta -> isolated maximum with both neighbors below floor_ratio * peak

    Returns (alpha_c, uncertainty) with uncertainty half the local spacing.
    """
    if signature not in SIGNATURES:
        raise ValueError(f"unknown signature {signature!r}; use one of {SIGNATURES}")
    x, y = _extract(records, field)
    if x.size < 4:
        raise SignatureNotFoundError("need at least 4 points")

    if signature == "peak":
        i = int(np.argmax(y))
        if i == 0 or i == x.size - 1:
            raise SignatureNotFoundError("maximum sits on the grid boundary")
        vertex = _parabolic_vertex(x[i - 1 : i + 2], y[i - 1 : i + 2])
        alpha_c = x[i] if vertex is None else vertex
        return alpha_c, (x[i + 1] - x[i - 1]) / 4.0

    if signature == "jump":
        dy = np.abs(np.diff(y))
        i = int(np.argmax(dy))
        spread = np.max(y) - np.min(y)
        typical = np.median(dy)
        if not (dy[i] > 3.0 * typical or dy[i] >= 0.4 * spread) or spread == 0.0:
            raise SignatureNotFoundError("no dominant step in the indicator")
        left = slice(max(0, i - 3), i + 1)
        right = slice(i + 1, min(x.size, i + 5))
        alpha_c = 0.5 * (x[i] + x[i + 1])
        if x[left].size >= 2 and x[right].size >= 2:
            sl, il = _line(x[left], y[left])
            sr, ir = _line(x[right], y[right])
            if abs(sl - sr) > 1e-300:
                cross = (ir - il) / (sl - sr)
                if x[i] <= cross <= x[i + 1]:
                    alpha_c = float(cross)
        return alpha_c, (x[i + 1] - x[i]) / 2.0

    if signature == "kink":
        if x.size < 5:
            raise SignatureNotFoundError("need at least 5 points for a kink")
        ssr_two, j = _two_segment_split(x, y)
        slope, icept = _line(x, y)
        ssr_one = float(np.sum((y - (slope * x + icept)) ** 2))
        if not ssr_two < 0.5 * ssr_one:
            raise SignatureNotFoundError("two-segment fit does not beat a line")
        sl, il = _line(x[: j + 1], y[: j + 1])
        sr, ir = _line(x[j + 1 :], y[j + 1 :])
        if abs(sl - sr) < 1e-300:
            raise SignatureNotFoundError("segments are parallel")
        cross = float((ir - il) / (sl - sr))
        lo = x[max(j - 1, 0)]
        hi = x[min(j + 2, x.size - 1)]
        alpha_c = float(np.clip(cross, lo, hi))
        return alpha_c, (x[j + 1] - x[j]) / 2.0

    # delta
    i = int(np.argmax(y))
    if i == 0 or i == x.size - 1:
        raise SignatureNotFoundError("spike sits on the grid boundary")
    base = float(np.median(y))
    height = y[i] - base
    if height <= 0.0:
        raise SignatureNotFoundError("no spike above the baseline")
    for nb in (y[i - 1], y[i + 1]):
        if nb - base >= floor_ratio * height:
            raise SignatureNotFoundError("maximum is not isolated")
    return float(x[i]), (x[i + 1] - x[i - 1]) / 4.0


def classify_signature(records, field="sum_discord"):
    """One of cusp | jump | delta | smooth for an indicator curve."""
    x, y = _extract(records, field)
    if x.size < 4:
        return "smooth"
    spread = np.max(y) - np.min(y)
    if not spread > 0.0:
        return "smooth"
    u = (y - np.min(y)) / spread
    i = int(np.argmax(u))
    if 0 < i < u.size - 1:
        if u[i - 1] < 0.25 and u[i + 1] < 0.25:
            return "delta"
        if min(u[i - 1], u[i + 1]) >= 0.25:
            return "cusp"
    if np.max(np.abs(np.diff(u))) >= 0.5:
        return "jump"
    return "smooth"


def fit_shift_scaling(x, shifts):
    """Power law shift = A * x**p by least squares on log-log axes."""
    x = np.asarray(x, dtype=float)
    shifts = np.asarray(shifts, dtype=float)
    keep = (x > 0.0) & (shifts > 0.0)
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least 2 positive points for a power-law fit")
    lx, ly = np.log(x[keep]), np.log(shifts[keep])
    exponent, log_amp = np.polyfit(lx, ly, 1)
    resid = float(np.mean((ly - (exponent * lx + log_amp)) ** 2))
    return ScalingFit(
        kind="power_law",
        params={"amplitude": float(np.exp(log_amp)), "exponent": float(exponent)},
        residual=resid,
        window=(float(np.min(x[keep])), float(np.max(x[keep]))),
    )


def nu_from_shift_exponent(exponent, series, d_eff=2.0):
    """Critical-exponent bookkeeping for the two finite-size series.

    The discretization-coarseness series (x = ln Lambda ~ 1/M) scales with
    exponent d - 1/nu; the infrared-cutoff series (x = omega_min) scales
    with exponent 1/nu directly.
    """
    if series == "lambda":
        return {"d_minus_inv_nu": float(exponent), "inv_nu": float(d_eff - exponent)}
    if series == "omega_min":
        return {"inv_nu": float(exponent)}
    raise ValueError(f"unknown series {series!r}; use 'lambda' or 'omega_min'")


def extrapolate_power_law(x, values):
    """Fit values = limit + A * x**p and return (limit, fit).

    Deterministic: exponent scanned on a fixed grid, then refined; the
    linear parameters are solved exactly at each exponent.
    """
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points to extrapolate")
    if np.any(x <= 0.0):
        raise ValueError("abscissa must be positive")

    def ssr_at(p):
        design = np.column_stack([np.ones_like(x), x**p])
        coef, *_ = np.linalg.lstsq(design, values, rcond=None)
        r = values - design @ coef
        return float(r @ r), coef

    grid = np.linspace(0.05, 6.0, 400)
    ssrs = np.array([ssr_at(p)[0] for p in grid])
    p0 = grid[int(np.argmin(ssrs))]
    res = minimize_scalar(
        lambda p: ssr_at(p)[0],
        bounds=(max(p0 - 0.2, 0.01), p0 + 0.2),
        method="bounded",
        options={"xatol": 1e-10},
    )
    p_best = float(res.x) if res.fun <= ssr_at(p0)[0] else float(p0)
    ssr, coef = ssr_at(p_best)
    fit = ScalingFit(
        kind="power_law",
        params={
            "limit": float(coef[0]),
            "amplitude": float(coef[1]),
            "exponent": p_best,
        },
        residual=ssr,
        window=(float(np.min(x)), float(np.max(x))),
    )
    return float(coef[0]), fit


def derivative_tail_fit(
    records, field="denergy_dalpha", plateau_points=None, power_correction=False
):
    """Exponential approach of dE/dalpha to its large-coupling plateau.

    The asymptote is the average over the last points; the shift away from
    it is fitted as A * exp(-rate * alpha) on linear-log axes.  With
    power_correction an extra alpha**c prefactor is fitted as well (kind
    exp_with_power_correction), for tails where a pure exponential leaves
    structured residuals.
    """
    x, y = _extract(records, field)
    if x.size < 6:
        raise ValueError("need at least 6 points")
    n_plat = plateau_points or max(3, x.size // 5)
    asym = float(np.mean(y[-n_plat:]))
    delta = np.abs(y - asym)
    floor = max(1e-12, 1e-3 * float(np.max(delta)))
    keep = np.ones(x.size, dtype=bool)
    keep[-n_plat:] = False
    keep &= delta > floor
    min_points = 4 if power_correction else 3
    if np.count_nonzero(keep) < min_points:
        raise ValueError("too few points above the plateau noise floor")
    lx, ly = x[keep], np.log(delta[keep])
    if power_correction:
        if np.any(lx <= 0.0):
            raise ValueError("power correction needs positive couplings")
        design = np.column_stack([np.ones_like(lx), lx, np.log(lx)])
        coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
        resid = float(np.mean((ly - design @ coef) ** 2))
        return ScalingFit(
            kind="exp_with_power_correction",
            params={
                "amplitude": float(np.exp(coef[0])),
                "rate": float(-coef[1]),
                "correction_exponent": float(coef[2]),
                "asymptote": asym,
            },
            residual=resid,
            window=(float(lx.min()), float(lx.max())),
        )
    slope, icept = np.polyfit(lx, ly, 1)
    resid = float(np.mean((ly - (slope * lx + icept)) ** 2))
    return ScalingFit(
        kind="exponential",
        params={
            "amplitude": float(np.exp(icept)),
            "rate": float(-slope),
            "asymptote": asym,
        },
        residual=resid,
        window=(float(lx.min()), float(lx.max())),
    )


def reaction_coordinate_constant(alpha, s, omega_c=1.0):
    """Effective low-frequency coupling constant -4 alpha omega_c / s."""
    if s <= 0.0:
        raise ValueError("spectral exponent must be positive")
    return -4.0 * alpha * omega_c / s


def derivative_signature(
    records, field="denergy_dalpha", plateau_points=None, dip_threshold=0.5
):
    """Kink versus smooth-exponential classification of a derivative curve.

    The shift from the plateau is examined on log axes: any exponential
    decay is a straight line there regardless of its rate, while a slope
    discontinuity makes the log shift dive toward -inf within one grid
    cell.  The discrete second difference of ln|y - asymptote| over cells
    untouched by the noise floor is therefore ~0 for a smooth tail and
    order one or larger at a kink.  Assumes a uniform grid.
    Returns (label, diagnostics).
    """
    x, y = _extract(records, field)
    if x.size < 7:
        raise ValueError("need at least 7 points")
    n_plat = plateau_points or max(3, x.size // 5)
    asym = float(np.mean(y[-n_plat:]))
    delta = np.abs(y - asym)
    floor = max(1e-12, 1e-6 * float(np.max(delta)))
    body = x.size - n_plat
    log_shift = np.log(np.clip(delta[:body], floor, None))
    clipped = delta[:body] <= floor
    spike = 0.0
    spike_alpha = float(x[0])
    for i in range(1, body - 1):
        if clipped[i - 1] or clipped[i] or clipped[i + 1]:
            continue
        bend = abs(log_shift[i + 1] - 2.0 * log_shift[i] + log_shift[i - 1])
        if bend > spike:
            spike, spike_alpha = float(bend), float(x[i])
    label = "kink" if spike > dip_threshold else "exponential_tail"
    diagnostics = {
        "log_dip": spike,
        "spike_alpha": spike_alpha,
        "threshold": float(dip_threshold),
        "asymptote": asym,
        "clipped_cells": int(np.count_nonzero(clipped)),
    }
    return label, diagnostics


@dataclass
class CollapseResult:
    """Per-coupling shift factors and the rescaled curves."""

    alphas: np.ndarray
    omega_s: np.ndarray
    residual: float
    lambda_exp: float
    curves: list = field(repr=False)  # (alpha, r, y) per coupling
    master_r: np.ndarray = field(repr=False, default=None)
    master_y: np.ndarray = field(repr=False, default=None)


def _profile_tuples(profiles):
    out = []
    for item in profiles:
        if hasattr(item, "pair"):
            if item.pair is None:
                continue
            mask = np.isfinite(item.pair.discord)
            out.append(
                (
                    float(item.alpha),
                    item.pair.omega[mask],
                    item.pair.discord[mask],
                )
            )
        else:
            alpha, omega, values = item
            omega = np.asarray(omega, dtype=float)
            values = np.asarray(values, dtype=float)
            mask = np.isfinite(values) & (omega > 0.0)
            out.append((float(alpha), omega[mask], values[mask]))
    return sorted(out, key=lambda t: t[0])


def _best_shift(u_ref, y_ref, u, y, min_overlap):
    """Log-frequency shift of (u, y) aligning it with the reference curve."""
    t_lo = u_ref[0] - u[-1]
    t_hi = u_ref[-1] - u[0]
    if not t_hi > t_lo:
        raise CollapseError("rescaled supports cannot overlap")

    def misfit(t):
        us = u - t
        inside = (us >= u_ref[0]) & (us <= u_ref[-1])
        if np.count_nonzero(inside) < min_overlap:
            return np.inf
        pred = np.interp(us[inside], u_ref, y_ref)
        return float(np.mean((y[inside] - pred) ** 2))

    ts = np.linspace(t_lo, t_hi, 801)
    vals = np.array([misfit(t) for t in ts])
    if not np.any(np.isfinite(vals)):
        raise CollapseError(
            "no shift leaves enough overlap between rescaled supports"
        )
    k = int(np.nanargmin(vals))
    span = ts[1] - ts[0]
    res = minimize_scalar(
        misfit,
        bounds=(ts[k] - span, ts[k] + span),
        method="bounded",
        options={"xatol": 1e-12},
    )
    if np.isfinite(res.fun) and res.fun <= vals[k]:
        return float(res.x), float(res.fun)
    return float(ts[k]), float(vals[k])


def collapse_discord(profiles, lambda_exp=1.0, min_overlap=3):
    """Collapse per-coupling discord profiles onto one master curve.

    Each curve D_b(omega_k; alpha) is rescaled to alpha**-lambda * D_b
    versus omega_k / omega_s(alpha); the shifts omega_s are found by
    aligning every curve with the middle-coupling reference in log
    frequency.  omega_s is anchored to 1 at the smallest coupling; only its
    decay rate is physical.
    """
    tuples = _profile_tuples(profiles)
    if len(tuples) < 3:
        raise ValueError("need at least 3 coupling values to collapse")
    curves_u = []
    for alpha, omega, values in tuples:
        if alpha <= 0.0:
            raise ValueError("collapse requires positive couplings")
        order = np.argsort(omega)
        u = np.log(omega[order])
        y = values[order] * alpha ** (-lambda_exp)
        if u.size < min_overlap:
            raise CollapseError(f"too few usable modes at alpha={alpha}")
        curves_u.append((alpha, u, y))
    mid = len(curves_u) // 2
    u_ref, y_ref = curves_u[mid][1], curves_u[mid][2]
    shifts = np.empty(len(curves_u))
    total_sq = 0.0
    total_n = 0
    for i, (alpha, u, y) in enumerate(curves_u):
        if i == mid:
            shifts[i] = 0.0
            continue
        shifts[i], mean_sq = _best_shift(u_ref, y_ref, u, y, min_overlap)
        inside = ((u - shifts[i]) >= u_ref[0]) & ((u - shifts[i]) <= u_ref[-1])
        total_sq += mean_sq * np.count_nonzero(inside)
        total_n += int(np.count_nonzero(inside))
    shifts -= shifts[0]  # anchor omega_s = 1 at the smallest coupling
    alphas = np.array([c[0] for c in curves_u])
    omega_s = np.exp(shifts)
    curves = [
        (alpha, np.exp(u - shifts[i]), y)
        for i, (alpha, u, y) in enumerate(curves_u)
    ]
    residual = total_sq / max(total_n, 1)
    return CollapseResult(
        alphas=alphas,
        omega_s=omega_s,
        residual=float(residual),
        lambda_exp=float(lambda_exp),
        curves=curves,
        master_r=curves[mid][1],
        master_y=curves[mid][2],
    )


def fit_omega_s_decay(result: CollapseResult):
    """Exponential decay rate of the collapse shift factors."""
    alphas = np.asarray(result.alphas, dtype=float)
    ln_ws = np.log(np.asarray(result.omega_s, dtype=float))
    slope, icept = np.polyfit(alphas, ln_ws, 1)
    resid = float(np.mean((ln_ws - (slope * alphas + icept)) ** 2))
    return ScalingFit(
        kind="exponential",
        params={"amplitude": float(np.exp(icept)), "rate": float(-slope)},
        residual=resid,
        window=(float(alphas.min()), float(alphas.max())),
    )


def fit_master_small_r(result: CollapseResult, r_max=None):
    """Power-law slope of the master curve as r -> 0."""
    r = np.asarray(result.master_r, dtype=float)
    y = np.asarray(result.master_y, dtype=float)
    keep = (r > 0.0) & (y > 0.0)
    r, y = r[keep], y[keep]
    if r_max is None:
        r_max = np.exp(np.quantile(np.log(r), 1.0 / 3.0))
    keep = r <= r_max
    if np.count_nonzero(keep) < 3:
        raise ValueError("too few small-r master points")
    return fit_shift_scaling(r[keep], y[keep])

"""Coupling sweeps: optimize along an alpha grid and tabulate indicators.

Each grid point yields one SweepRecord holding the ground-state scalars,
the energy derivative with respect to the coupling, and bath-pair
indicator sums over all mode pairs (k, l) with the reference mode l fixed
(default: the mode at the cutoff).  Records are sorted ascending in alpha.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .ansatz import state_from_dict, state_to_dict
from .bath import discretize
from .energy import ModelParams
from .exceptions import (
    DiscordBranchError,
    NonConvergenceError,
    SignatureNotFoundError,
    UnphysicalStateError,
)
from .gaussian import gaussian_measures
from .moments import moment_tables, two_mode_covariance
from .optimize import MinimizeOptions, minimize
from .spins import DiscordOptions, SpinMeasures, spin_measures

CHECKPOINT_FORMAT = 1


@dataclass
class SweepOptions:
    """Controls one alpha sweep."""

    n_branches: int = 4
    first_restarts: int = 24
    restarts: int = 8
    seed: int = 0
    warm_start: bool = True
    pair_reference: int | None = None  # 0-based index of the fixed mode l
    discord_options: DiscordOptions | None = None
    compute_spin: bool | None = None  # default: only for two-spin models
    checkpoint_dir: str | None = None
    refine_signature: str | None = None  # peak | jump | kink | delta
    refine_field: str = "sum_discord"
    refine_factor: int = 5
    refine_halfwidth: int = 2
    minimize_overrides: dict = field(default_factory=dict)


@dataclass
class PairProfile:
    """Per-mode pair measures against the fixed reference mode."""

    reference: int  # 0-based index of mode l
    omega: np.ndarray
    cor_x: np.ndarray
    entropy: np.ndarray
    mutual_information: np.ndarray
    linear_entropy: np.ndarray
    log_negativity: np.ndarray
    discord: np.ndarray


@dataclass
class SweepRecord:
    alpha: float
    energy: float
    denergy_dalpha: float
    sigma_z: float
    sigma_x: float
    sum_cor_x: float
    sum_entropy: float
    sum_mutual_information: float
    sum_linear_entropy: float
    sum_log_negativity: float
    sum_discord: float
    converged: bool
    grad_norm: float
    iterations: int
    restarts_used: int
    spin: SpinMeasures | None = None
    pair: PairProfile | None = field(default=None, repr=False)
    state: object = field(default=None, repr=False)
    note: str = ""


SWEEP_COLUMNS = (
    "alpha",
    "E_g",
    "dEg_dalpha",
    "sigma_z",
    "sigma_x",
    "sum_Cor_X",
    "sum_S_b",
    "sum_I_b",
    "sum_S_L_b",
    "sum_E_N_b",
    "sum_D_b",
    "converged",
    "grad_norm",
    "iterations",
)

SPIN_COLUMNS = (
    "spin_S_vN",
    "spin_S_L",
    "spin_Cor_zz",
    "spin_I",
    "spin_C",
    "spin_S_E",
    "spin_N",
    "spin_E_N",
    "spin_D",
    "spin_C_cl",
)


def decoupled_energy_derivative(params: ModelParams) -> float:
    """Exact dE/dalpha at alpha = 0 from second-order perturbation theory.

    At zero coupling the energy responds quadratically in the mode
    couplings, so the derivative is the perturbative sum over one-boson
    intermediate states with every spin eigenstate.
    """
    spec = params.bath.spec
    ref = discretize(spec.with_alpha(1.0))
    u2 = ref.lam**2  # lam_k^2 / alpha evaluated at alpha = 1
    n = params.n_sectors
    hs = np.diag(params.sector_energies())
    for a, b in params.tunneling_pairs():
        hs[a, b] = hs[b, a] = -0.5 * params.Delta
    evals, evecs = np.linalg.eigh(hs)
    v0 = evecs[:, 0]
    elems = evecs.T @ (params.coupling_coeffs() * v0)
    gaps = evals - evals[0]
    denom = gaps[None, :] + ref.omega[:, None]
    return float(-np.sum(u2[:, None] * elems[None, :] ** 2 / denom))


def hellmann_feynman_derivative(state, params: ModelParams, tables=None) -> float:
    """dE/dalpha at the variational minimum.

    The couplings scale as sqrt(alpha), so dH/dalpha =
    C sum_k (lam_k / 2 alpha)(b_k + b_k^dag); the parameter response drops
    out at a stationary point.
    """
    alpha = params.bath.spec.alpha
    if alpha == 0.0:
        return decoupled_energy_derivative(params)
    tables = tables or moment_tables(state)
    sector_avg = params.coupling_coeffs() @ tables.cond
    return float((params.bath.lam / (2.0 * alpha)) @ sector_avg)


def pair_indicators(state, bath, reference=None, tables=None):
    """Measures of every pair (k, l) with l fixed; returns the profile and sums."""
    m_modes = bath.M
    if m_modes < 2:
        raise ValueError("pair indicators require at least two modes")
    ell = m_modes - 1 if reference is None else int(reference)
    if not 0 <= ell < m_modes:
        raise IndexError(f"reference mode {ell} outside 0..{m_modes - 1}")
    tables = tables or moment_tables(state)
    arrays = {
        name: np.full(m_modes, np.nan)
        for name in (
            "cor_x",
            "entropy",
            "mutual_information",
            "linear_entropy",
            "log_negativity",
            "discord",
        )
    }
    for k in range(m_modes):
        if k == ell:
            continue
        cov = two_mode_covariance(state, k, ell, tables=tables, warn=False)
        m = gaussian_measures(cov)
        arrays["cor_x"][k] = cov.cor_x
        arrays["entropy"][k] = m.entropy
        arrays["mutual_information"][k] = m.mutual_information
        arrays["linear_entropy"][k] = m.linear_entropy
        arrays["log_negativity"][k] = m.log_negativity
        arrays["discord"][k] = m.discord
    profile = PairProfile(reference=ell, omega=bath.omega.copy(), **arrays)
    sums = {name: float(np.nansum(vals)) for name, vals in arrays.items()}
    return profile, sums


def _evaluate_record(params, res, opts):
    tables = moment_tables(res.state)
    note = ""
    try:
        profile, sums = pair_indicators(
            res.state, params.bath, reference=opts.pair_reference, tables=tables
        )
    except (UnphysicalStateError, DiscordBranchError) as err:
        profile = None
        sums = {
            name: np.nan
            for name in (
                "cor_x",
                "entropy",
                "mutual_information",
                "linear_entropy",
                "log_negativity",
                "discord",
            )
        }
        note = f"indicator failure: {err}"
    want_spin = (
        opts.compute_spin
        if opts.compute_spin is not None
        else params.kind == "two_spin"
    )
    spin = None
    if want_spin:
        spin = spin_measures(res.state, opts.discord_options)
    return SweepRecord(
        alpha=params.bath.spec.alpha,
        energy=res.energy,
        denergy_dalpha=hellmann_feynman_derivative(res.state, params, tables),
        sigma_z=res.sigma_z,
        sigma_x=res.sigma_x,
        sum_cor_x=sums["cor_x"],
        sum_entropy=sums["entropy"],
        sum_mutual_information=sums["mutual_information"],
        sum_linear_entropy=sums["linear_entropy"],
        sum_log_negativity=sums["log_negativity"],
        sum_discord=sums["discord"],
        converged=res.converged,
        grad_norm=res.grad_norm,
        iterations=res.iterations,
        restarts_used=res.restarts_used,
        spin=spin,
        pair=profile,
        state=res.state,
        note=note,
    )


def _checkpoint_path(directory, alpha):
    return os.path.join(directory, f"alpha_{alpha:.12e}.json")


def _record_to_doc(record):
    doc = {}
    for f in fields(SweepRecord):
        if f.name in ("spin", "pair", "state"):
            continue
        value = getattr(record, f.name)
        doc[f.name] = value if not isinstance(value, (np.floating, np.integer)) else value.item()
    if record.spin is not None:
        doc["spin"] = {
            f.name: float(getattr(record.spin, f.name))
            for f in fields(SpinMeasures)
        }
    if record.pair is not None:
        doc["pair"] = {"reference": record.pair.reference}
        for name in (
            "omega",
            "cor_x",
            "entropy",
            "mutual_information",
            "linear_entropy",
            "log_negativity",
            "discord",
        ):
            doc["pair"][name] = [float(v) for v in getattr(record.pair, name)]
    return doc


def _record_from_doc(doc):
    spin = None
    if doc.get("spin") is not None:
        spin = SpinMeasures(**doc["spin"])
    pair = None
    if doc.get("pair") is not None:
        p = doc["pair"]
        pair = PairProfile(
            reference=int(p["reference"]),
            omega=np.asarray(p["omega"]),
            cor_x=np.asarray(p["cor_x"]),
            entropy=np.asarray(p["entropy"]),
            mutual_information=np.asarray(p["mutual_information"]),
            linear_entropy=np.asarray(p["linear_entropy"]),
            log_negativity=np.asarray(p["log_negativity"]),
            discord=np.asarray(p["discord"]),
        )
    scalar = {
        k: v for k, v in doc.items() if k not in ("spin", "pair", "format")
    }
    return SweepRecord(**scalar, spin=spin, pair=pair)


def _write_checkpoint(directory, record):
    os.makedirs(directory, exist_ok=True)
    doc = {"format": CHECKPOINT_FORMAT, "record": _record_to_doc(record)}
    if record.state is not None:
        doc["state"] = state_to_dict(record.state)
    path = _checkpoint_path(directory, record.alpha)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _load_checkpoint(directory, alpha):
    path = _checkpoint_path(directory, alpha)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        return None
    record = _record_from_doc(doc["record"])
    if doc.get("state") is not None:
        record.state = state_from_dict(doc["state"])
    return record


def _minimize_point(params, alpha, opts, index, warm_state):
    bath = discretize(params.bath.spec.with_alpha(float(alpha)))
    point_params = replace(params, bath=bath)
    extra = ()
    n_restarts = opts.first_restarts
    if warm_state is not None:
        extra = (warm_state,)
        n_restarts = opts.restarts
    m_opts = MinimizeOptions(
        n_branches=opts.n_branches,
        restarts=n_restarts,
        seed=opts.seed + 7919 * index,
        extra_inits=extra,
        **opts.minimize_overrides,
    )
    try:
        res = minimize(point_params, m_opts)
    except NonConvergenceError as err:
        res = err.best
    return point_params, res


def run_sweep(params: ModelParams, alpha_grid, opts: SweepOptions | None = None):
    """Optimize every grid point (ascending, warm-started) and tabulate records.

    Non-converged points are flagged in the record and the sweep continues.
    With a checkpoint directory, finished points are reloaded instead of
    recomputed.
    """
    opts = opts or SweepOptions()
    grid = np.unique(np.asarray(alpha_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty alpha grid")
    if np.any(grid < 0.0):
        raise ValueError("negative coupling in alpha grid")
    records = _sweep_pass(params, grid, opts, index_base=0, states={})
    if opts.refine_signature is not None:
        records = _refinement_pass(params, grid, records, opts)
    return records


def _sweep_pass(params, grid, opts, index_base, states):
    records = []
    prev_state = None
    for i, alpha in enumerate(grid):
        if opts.checkpoint_dir is not None:
            cached = _load_checkpoint(opts.checkpoint_dir, alpha)
            if cached is not None:
                records.append(cached)
                if cached.state is not None:
                    prev_state = cached.state
                    states[alpha] = cached.state
                continue
        warm = prev_state if opts.warm_start else None
        point_params, res = _minimize_point(
            params, alpha, opts, index_base + i, warm
        )
        record = _evaluate_record(point_params, res, opts)
        if opts.checkpoint_dir is not None:
            _write_checkpoint(opts.checkpoint_dir, record)
        records.append(record)
        prev_state = res.state
        states[alpha] = res.state
    return records


def refine_grid(grid, alpha_c, factor=5, halfwidth=2):
    """New grid points on a factor-times-finer mesh around alpha_c."""
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size < 2:
        return np.array([])
    pos = np.searchsorted(grid, alpha_c)
    pos = min(max(pos, 1), grid.size - 1)
    h = grid[pos] - grid[pos - 1]
    lo = max(alpha_c - halfwidth * h, grid[0])
    hi = min(alpha_c + halfwidth * h, grid[-1])
    fine = np.arange(lo, hi + 1e-12 * max(h, 1.0), h / factor)
    keep = [a for a in fine if np.min(np.abs(grid - a)) > h / (4.0 * factor)]
    return np.asarray(keep)


def _refinement_pass(params, grid, records, opts):
    from .transitions import locate_transition

    try:
        alpha_c, _ = locate_transition(
            records, opts.refine_signature, field=opts.refine_field
        )
    except SignatureNotFoundError:
        return records
    extra = refine_grid(
        grid, alpha_c, factor=opts.refine_factor, halfwidth=opts.refine_halfwidth
    )
    if extra.size == 0:
        return records
    by_alpha = {r.alpha: r.state for r in records if r.state is not None}
    coarse_alphas = np.asarray(sorted(by_alpha))
    new_records = []
    for j, alpha in enumerate(np.sort(extra)):
        warm = None
        if opts.warm_start and coarse_alphas.size:
            below = coarse_alphas[coarse_alphas <= alpha]
            pick = below[-1] if below.size else coarse_alphas[0]
            warm = by_alpha[pick]
        if opts.checkpoint_dir is not None:
            cached = _load_checkpoint(opts.checkpoint_dir, alpha)
            if cached is not None:
                new_records.append(cached)
                continue
        point_params, res = _minimize_point(
            params, alpha, opts, 100_000 + j, warm
        )
        record = _evaluate_record(point_params, res, opts)
        if opts.checkpoint_dir is not None:
            _write_checkpoint(opts.checkpoint_dir, record)
        new_records.append(record)
    merged = sorted(records + new_records, key=lambda r: r.alpha)
    return merged


_COLUMN_ALIASES = {
    "E_g": "energy",
    "dEg_dalpha": "denergy_dalpha",
    "sum_Cor_X": "sum_cor_x",
    "sum_S_b": "sum_entropy",
    "sum_I_b": "sum_mutual_information",
    "sum_S_L_b": "sum_linear_entropy",
    "sum_E_N_b": "sum_log_negativity",
    "sum_D_b": "sum_discord",
}


def record_value(record, name):
    """Look up a column either on the record or its nested spin measures."""
    if name in _COLUMN_ALIASES:
        name = _COLUMN_ALIASES[name]
    if hasattr(record, name):
        return getattr(record, name)
    if record.spin is not None and hasattr(record.spin, name):
        return getattr(record.spin, name)
    alias = {
        "spin_S_vN": "s_vn",
        "spin_S_L": "s_lin",
        "spin_Cor_zz": "cor_zz",
        "spin_I": "mutual_information",
        "spin_C": "concurrence",
        "spin_S_E": "entanglement_of_formation",
        "spin_N": "negativity",
        "spin_E_N": "log_negativity",
        "spin_D": "discord",
        "spin_C_cl": "classical_correlation",
    }
    if name in alias and record.spin is not None:
        return getattr(record.spin, alias[name])
    raise KeyError(f"unknown sweep field {name!r}")


def write_sweep_csv(path_or_file, records, header_lines=()):
    """Fixed-column CSV of the sweep table; %.17g floats for reproducibility."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(
        path_or_file, "__fspath__"
    )
    fh = open(path_or_file, "w") if own else path_or_file
    has_spin = any(r.spin is not None for r in records)
    columns = SWEEP_COLUMNS + (SPIN_COLUMNS if has_spin else ())
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for r in sorted(records, key=lambda rec: rec.alpha):
            row = [
                f"{r.alpha:.17g}",
                f"{r.energy:.17g}",
                f"{r.denergy_dalpha:.17g}",
                f"{r.sigma_z:.17g}",
                f"{r.sigma_x:.17g}",
                f"{r.sum_cor_x:.17g}",
                f"{r.sum_entropy:.17g}",
                f"{r.sum_mutual_information:.17g}",
                f"{r.sum_linear_entropy:.17g}",
                f"{r.sum_log_negativity:.17g}",
                f"{r.sum_discord:.17g}",
                "1" if r.converged else "0",
                f"{r.grad_norm:.17g}",
                str(r.iterations),
            ]
            if has_spin:
                if r.spin is None:
                    row.extend(["nan"] * len(SPIN_COLUMNS))
                else:
                    row.extend(
                        f"{record_value(r, name):.17g}" for name in SPIN_COLUMNS
                    )
            fh.write(",".join(row) + "\n")
    finally:
        if own:
            fh.close()


def write_pair_csv(path_or_file, profile, header_lines=()):
    """Per-mode pair measure table; the reference mode's own row is omitted."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(
        path_or_file, "__fspath__"
    )
    fh = open(path_or_file, "w") if own else path_or_file
    try:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"# reference mode l = {profile.reference + 1} (1-based)\n")
        fh.write("k,omega_k,Cor_X,S_b,I_b,S_L_b,E_N_b,D_b\n")
        for k in range(profile.omega.size):
            if k == profile.reference:
                continue
            fh.write(
                ",".join(
                    [
                        str(k + 1),
                        f"{profile.omega[k]:.17g}",
                        f"{profile.cor_x[k]:.17g}",
                        f"{profile.entropy[k]:.17g}",
                        f"{profile.mutual_information[k]:.17g}",
                        f"{profile.linear_entropy[k]:.17g}",
                        f"{profile.log_negativity[k]:.17g}",
                        f"{profile.discord[k]:.17g}",
                    ]
                )
                + "\n"
            )
    finally:
        if own:
            fh.close()


def _read_table_csv(path):
    header = []
    columns = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("# "):
                header.append(line[2:])
                continue
            if not line.strip():
                continue
            if columns is None:
                columns = line.split(",")
                continue
            rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError(f"no column header found in {path}")
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(columns))
    return {name: data[:, i] for i, name in enumerate(columns)}, header


def read_sweep_csv(path):
    """Sweep table back as {column name: array} plus its header lines."""
    return _read_table_csv(path)


def read_pair_csv(path):
    """Pair-measure table back as {column name: array} plus header lines."""
    return _read_table_csv(path)

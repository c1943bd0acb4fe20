"""Command line interface: bath tables, ground states, coupling sweeps,
transition analysis, and discord data collapse.

Runs are configured through key=value files with command-line flags taking
precedence.  Every CSV output embeds the resolved configuration as leading
``# `` comment lines and every JSON output carries it under a ``config``
key; rerunning with the same configuration and seed reproduces the files
byte for byte.

Exit codes: 0 success, 2 configuration error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bath import discretize, make_bath_spec
from .energy import ModelParams
from .exceptions import (
    CollapseError,
    ConfigurationError,
    NonConvergenceError,
    SignatureNotFoundError,
)
from .optimize import MinimizeOptions, minimize
from .sweep import (
    SweepOptions,
    read_pair_csv,
    read_sweep_csv,
    run_sweep,
    write_pair_csv,
    write_sweep_csv,
)
from .transitions import (
    SIGNATURES,
    classify_signature,
    collapse_discord,
    derivative_signature,
    derivative_tail_fit,
    extrapolate_power_law,
    fit_master_small_r,
    fit_omega_s_decay,
    locate_transition,
    nu_from_shift_exponent,
)

_MODEL_KINDS = {"single": "single", "two-spin": "two_spin", "two_spin": "two_spin"}


@dataclass
class RunConfig:
    """Resolved run settings shared by the model-building subcommands."""

    model: str = "single"
    s: float = 1.0
    Delta: float = 0.1
    epsilon: float = 0.0
    K: float = 0.0
    Lambda: float = 2.0
    M: int | None = None
    omega_min: float | None = None
    N: int = 4
    restarts: int = 8
    first_restarts: int = 24
    seed: int = 0
    alpha: float | None = None
    alpha_start: float | None = None
    alpha_stop: float | None = None
    alpha_points: int | None = None
    alpha_list: str | None = None
    field: str = "sum_D_b"
    pair_reference: int | None = None  # 1-based, as in the CSV files
    write_pairs: bool = True
    refine_signature: str | None = None
    out: str | None = None


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def _parse_value(text):
    text = text.strip()
    low = text.lower()
    if low in ("none", ""):
        return None
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def load_config_file(path):
    """key = value lines; blank lines and # comments are ignored."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as err:
        raise ConfigurationError(f"cannot read config file {path}: {err}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(val)
    return values


def resolve_config(args):
    """Defaults, then config file values, then explicit flags."""
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    merged = dict(file_values)
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if getattr(args, "no_pairs", False):
        merged["write_pairs"] = False
    explicit = set(merged)
    try:
        cfg = RunConfig(**merged)
    except TypeError as err:
        raise ConfigurationError(str(err))
    if cfg.model not in _MODEL_KINDS:
        raise ConfigurationError(
            f"model must be one of {sorted(_MODEL_KINDS)}, got {cfg.model!r}"
        )
    return cfg, explicit


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


# the output path says nothing about the run and would break byte-identity
# of artifacts written to different directories
_UNEMBEDDED_KEYS = {"out"}


def config_lines(cfg, spec=None):
    lines = [
        f"{f.name} = {_fmt(getattr(cfg, f.name))}"
        for f in fields(RunConfig)
        if f.name not in _UNEMBEDDED_KEYS
    ]
    if spec is not None:
        lines.append(f"resolved_M = {spec.M}")
        lines.append(f"resolved_omega_min = {spec.omega_min:.17g}")
    return lines


def config_doc(cfg, spec=None):
    doc = {
        f.name: getattr(cfg, f.name)
        for f in fields(RunConfig)
        if f.name not in _UNEMBEDDED_KEYS
    }
    if spec is not None:
        doc["resolved_M"] = spec.M
        doc["resolved_omega_min"] = spec.omega_min
    return doc


def _bath_spec(cfg, alpha):
    return make_bath_spec(
        s=cfg.s,
        alpha=alpha,
        Lambda=cfg.Lambda,
        M=cfg.M,
        omega_min=cfg.omega_min,
    )


def _model_params(cfg, alpha):
    spec = _bath_spec(cfg, alpha)
    return ModelParams(
        bath=discretize(spec),
        Delta=cfg.Delta,
        epsilon=cfg.epsilon,
        K=cfg.K,
        kind=_MODEL_KINDS[cfg.model],
    )


def _alpha_grid(cfg):
    if cfg.alpha_list is not None:
        try:
            vals = [float(t) for t in str(cfg.alpha_list).split(",") if t.strip()]
        except ValueError:
            raise ConfigurationError(f"bad alpha_list {cfg.alpha_list!r}")
        if not vals:
            raise ConfigurationError("alpha_list is empty")
        return np.asarray(vals, dtype=float)
    range_keys = (cfg.alpha_start, cfg.alpha_stop, cfg.alpha_points)
    if any(v is not None for v in range_keys):
        if any(v is None for v in range_keys):
            raise ConfigurationError(
                "alpha_start, alpha_stop, alpha_points must be given together"
            )
        if cfg.alpha_points < 1:
            raise ConfigurationError("alpha_points must be >= 1")
        return np.linspace(cfg.alpha_start, cfg.alpha_stop, cfg.alpha_points)
    if cfg.alpha is not None:
        return np.asarray([cfg.alpha], dtype=float)
    raise ConfigurationError(
        "no coupling grid: give alpha, alpha_list, or alpha_start/stop/points"
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _write_json(path, doc):
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _header_value(header_lines, key):
    # last occurrence wins, so per-file lines override the shared config
    prefix = f"{key} = "
    value = None
    for line in header_lines:
        if line.startswith(prefix):
            value = line[len(prefix) :]
    return value


# ------------------------------------------------------------- subcommands


def cmd_bath(args):
    cfg, _ = resolve_config(args)
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    spec = _bath_spec(cfg, alpha)
    bath = discretize(spec)
    out = Path(cfg.out or "bath.csv")
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        for line in config_lines(cfg, spec):
            fh.write(f"# {line}\n")
        fh.write("k,omega_k,lambda_k\n")
        for k in range(spec.M):
            fh.write(f"{k + 1},{bath.omega[k]:.17g},{bath.lam[k]:.17g}\n")
    print(f"wrote {out} ({spec.M} modes)")
    return 0


def cmd_ground_state(args):
    cfg, explicit = resolve_config(args)
    alpha = cfg.alpha if cfg.alpha is not None else 0.0
    params = _model_params(cfg, alpha)
    # cold start: without an explicit restart count use the sweep's
    # first-point budget rather than the warm-chain one
    restarts = cfg.restarts if "restarts" in explicit else cfg.first_restarts
    opts = MinimizeOptions(n_branches=cfg.N, restarts=restarts, seed=cfg.seed)
    code = 0
    try:
        res = minimize(params, opts)
    except NonConvergenceError as err:
        res = err.best
        code = 3
    doc = res.to_dict(params)
    doc["config"] = config_doc(cfg, params.bath.spec)
    doc["alpha"] = alpha
    out = Path(cfg.out or "ground_state.json")
    _write_json(out, doc)
    status = "converged" if res.converged else "NOT converged"
    print(f"wrote {out} (E = {res.energy:.12g}, {status})")
    return code


def cmd_sweep(args):
    cfg, _ = resolve_config(args)
    grid = _alpha_grid(cfg)
    params = _model_params(cfg, 0.0)
    if cfg.pair_reference is not None and cfg.pair_reference < 1:
        raise ConfigurationError("pair_reference is 1-based and must be >= 1")
    out_dir = Path(cfg.out or "sweep_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    opts = SweepOptions(
        n_branches=cfg.N,
        first_restarts=cfg.first_restarts,
        restarts=cfg.restarts,
        seed=cfg.seed,
        pair_reference=None if cfg.pair_reference is None else cfg.pair_reference - 1,
        checkpoint_dir=str(out_dir / "checkpoints"),
        refine_signature=cfg.refine_signature,
        refine_field=cfg.field,
    )
    records = run_sweep(params, grid, opts)
    header = config_lines(cfg, params.bath.spec)
    write_sweep_csv(out_dir / "sweep.csv", records, header)
    n_pairs = 0
    if cfg.write_pairs:
        for i, rec in enumerate(sorted(records, key=lambda r: r.alpha)):
            if rec.pair is None:
                continue
            write_pair_csv(
                out_dir / f"pair_{i:04d}.csv",
                rec.pair,
                (*header, f"alpha = {rec.alpha:.17g}"),
            )
            n_pairs += 1
    bad = sum(1 for r in records if not r.converged)
    print(
        f"wrote {out_dir / 'sweep.csv'} ({len(records)} points, "
        f"{n_pairs} pair tables, {bad} non-converged)"
    )
    return 3 if bad else 0


def _analyze_one(path, field, signature, want_tail):
    columns, header = read_sweep_csv(path)
    if "alpha" not in columns:
        raise ConfigurationError(f"{path} has no alpha column")
    if field not in columns:
        raise ConfigurationError(
            f"{path} has no column {field!r}; available: {sorted(columns)}"
        )
    x, y = columns["alpha"], columns[field]
    doc = {"input": str(path), "field": field, "n_points": int(x.size)}
    doc["classification"] = classify_signature((x, y))
    if signature is not None:
        try:
            alpha_c, unc = locate_transition((x, y), signature)
            doc["signature"] = signature
            doc["alpha_c"] = alpha_c
            doc["uncertainty"] = unc
        except SignatureNotFoundError as err:
            doc["signature"] = signature
            doc["signature_error"] = str(err)
    if want_tail and "dEg_dalpha" in columns:
        tail = {}
        try:
            label, diag = derivative_signature((x, columns["dEg_dalpha"]))
            tail["label"] = label
            tail["diagnostics"] = diag
        except ValueError as err:
            tail["label_error"] = str(err)
        try:
            fit = derivative_tail_fit((x, columns["dEg_dalpha"]))
            tail["fit"] = fit.to_dict()
        except ValueError as err:
            tail["fit_error"] = str(err)
        doc["derivative"] = tail
    return doc, header


def _series_x(paths, headers, series, override):
    if override is not None:
        vals = [float(t) for t in override.split(",") if t.strip()]
        if len(vals) != len(paths):
            raise ConfigurationError(
                f"--series-x has {len(vals)} values for {len(paths)} sweeps"
            )
        return np.asarray(vals)
    key = "Lambda" if series == "lambda" else "resolved_omega_min"
    vals = []
    for path, header in zip(paths, headers):
        text = _header_value(header, key)
        if text is None:
            raise ConfigurationError(
                f"{path} lacks a '{key}' header line; pass --series-x"
            )
        vals.append(float(text))
    return np.asarray(vals)


def cmd_analyze(args):
    paths = args.sweep
    if args.series is not None and args.signature is None:
        raise ConfigurationError("series analysis needs --signature")
    reports = []
    headers = []
    for path in paths:
        doc, header = _analyze_one(path, args.field, args.signature, not args.no_tail)
        reports.append(doc)
        headers.append(header)
    out_doc = {"sweeps": reports}
    if args.series is not None:
        if len(paths) < 3:
            raise ConfigurationError("series analysis needs at least 3 sweeps")
        if any("alpha_c" not in r for r in reports):
            missing = [r["input"] for r in reports if "alpha_c" not in r]
            raise ConfigurationError(f"no transition located in: {missing}")
        x_raw = _series_x(paths, headers, args.series, args.series_x)
        alpha_c = np.array([r["alpha_c"] for r in reports])
        order = np.argsort(x_raw)
        x_raw, alpha_c = x_raw[order], alpha_c[order]
        # coarseness series extrapolates in the log grid ratio; the
        # infrared series extrapolates in the cutoff itself
        x_fit = np.log(x_raw) if args.series == "lambda" else x_raw
        limit, fit = extrapolate_power_law(x_fit, alpha_c)
        out_doc["series"] = {
            "kind": args.series,
            "x": x_raw,
            "x_fit": x_fit,
            "alpha_c": alpha_c,
            "limit": limit,
            "fit": fit.to_dict(),
            "exponents": nu_from_shift_exponent(
                fit.params["exponent"], args.series, d_eff=args.d_eff
            ),
        }
    out = Path(args.out or "report.json")
    _write_json(out, out_doc)
    print(f"wrote {out}")
    return 0


def cmd_collapse(args):
    profiles = []
    for path in args.pairs:
        columns, header = read_pair_csv(path)
        text = _header_value(header, "alpha")
        if text is None:
            raise ConfigurationError(f"{path} lacks an 'alpha' header line")
        for col in ("omega_k", "D_b"):
            if col not in columns:
                raise ConfigurationError(f"{path} has no column {col!r}")
        profiles.append((float(text), columns["omega_k"], columns["D_b"]))
    result = collapse_discord(
        profiles, lambda_exp=args.lambda_exp, min_overlap=args.min_overlap
    )
    out_dir = Path(args.out or "collapse_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    header = [
        f"lambda_exp = {args.lambda_exp:.17g}",
        f"min_overlap = {args.min_overlap}",
        f"residual = {result.residual:.17g}",
    ]
    with open(out_dir / "collapse.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("alpha,r,scaled_D_b\n")
        for alpha, r, y in result.curves:
            for rv, yv in zip(r, y):
                fh.write(f"{alpha:.17g},{rv:.17g},{yv:.17g}\n")
    with open(out_dir / "omega_s.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("alpha,omega_s\n")
        for alpha, ws in zip(result.alphas, result.omega_s):
            fh.write(f"{alpha:.17g},{ws:.17g}\n")

    doc = {
        "inputs": [str(p) for p in args.pairs],
        "lambda_exp": args.lambda_exp,
        "residual": result.residual,
        "alphas": result.alphas,
        "omega_s": result.omega_s,
        "omega_s_fit": fit_omega_s_decay(result).to_dict(),
    }
    try:
        doc["master_small_r_fit"] = fit_master_small_r(result).to_dict()
    except ValueError as err:
        doc["master_small_r_error"] = str(err)
    _write_json(out_dir / "report.json", doc)
    print(f"wrote {out_dir / 'collapse.csv'} ({len(profiles)} curves)")
    return 0


# ------------------------------------------------------------------ parser


def _add_run_arguments(p, grid=False):
    p.add_argument("--config", metavar="FILE", help="key=value configuration file")
    p.add_argument("--model", choices=["single", "two-spin"])
    p.add_argument("--s", type=float, help="spectral exponent")
    p.add_argument("--Delta", type=float, help="tunneling amplitude")
    p.add_argument("--epsilon", type=float, help="z bias")
    p.add_argument("--K", type=float, help="Ising coupling (two-spin)")
    p.add_argument("--Lambda", type=float, help="log grid ratio (> 1)")
    p.add_argument("--M", type=int, help="number of bath modes")
    p.add_argument(
        "--omega-min", type=float, dest="omega_min", help="infrared cutoff"
    )
    p.add_argument("--N", type=int, help="coherent branches per spin sector")
    p.add_argument("--restarts", type=int, help="random restarts per point")
    p.add_argument(
        "--first-restarts",
        type=int,
        dest="first_restarts",
        help="restarts for the first (cold) sweep point",
    )
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("--alpha", type=float, help="single coupling value")
    p.add_argument("--out", help="output file or directory")
    if grid:
        p.add_argument("--alpha-start", type=float, dest="alpha_start")
        p.add_argument("--alpha-stop", type=float, dest="alpha_stop")
        p.add_argument("--alpha-points", type=int, dest="alpha_points")
        p.add_argument(
            "--alpha-list",
            dest="alpha_list",
            help="comma-separated coupling values",
        )
        p.add_argument("--field", help="indicator column for refinement")
        p.add_argument(
            "--pair-reference",
            type=int,
            dest="pair_reference",
            help="1-based index of the fixed reference mode",
        )
        p.add_argument(
            "--no-pairs",
            action="store_true",
            help="skip per-coupling pair tables",
        )
        p.add_argument(
            "--refine-signature",
            choices=list(SIGNATURES),
            dest="refine_signature",
            help="two-pass sweep: refine the grid around this signature",
        )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sbvar",
        description=(
            "Variational ground states of spin-boson models with "
            "log-discretized baths, quantum-information indicators, and "
            "transition analysis."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bath", help="write the discretized bath table")
    _add_run_arguments(p)
    p.set_defaults(func=cmd_bath)

    p = sub.add_parser("ground-state", help="optimize one ground state")
    _add_run_arguments(p)
    p.set_defaults(func=cmd_ground_state)

    p = sub.add_parser("sweep", help="sweep the coupling grid")
    _add_run_arguments(p, grid=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="locate and classify transitions")
    p.add_argument("--sweep", nargs="+", required=True, metavar="CSV")
    p.add_argument("--field", default="sum_D_b")
    p.add_argument("--signature", choices=list(SIGNATURES))
    p.add_argument(
        "--series",
        choices=["lambda", "omega_min"],
        help="finite-size series across several sweeps",
    )
    p.add_argument(
        "--series-x",
        dest="series_x",
        help="comma-separated series abscissa (default: from sweep headers)",
    )
    p.add_argument("--d-eff", dest="d_eff", type=float, default=2.0)
    p.add_argument("--no-tail", action="store_true", dest="no_tail")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("collapse", help="discord data collapse over couplings")
    p.add_argument("--pairs", nargs="+", required=True, metavar="CSV")
    p.add_argument(
        "--lambda-exp", dest="lambda_exp", type=float, default=1.0
    )
    p.add_argument("--min-overlap", dest="min_overlap", type=int, default=3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_collapse)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValueError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except NonConvergenceError as err:
        print(f"non-convergence: {err}", file=sys.stderr)
        return 3
    except CollapseError as err:
        print(f"collapse failed: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

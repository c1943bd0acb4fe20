"""End-to-end tests of the command line interface, run in-process through
``main`` so exit codes and artifacts can be asserted directly.
"""

import json

import numpy as np
import pytest

from sbvar.bath import discretize, make_bath_spec
from sbvar.cli import main
from sbvar.exceptions import NonConvergenceError


def run_cli(*argv):
    return main([str(a) for a in argv])


def base_flags(**extra):
    flags = {
        "--model": "single",
        "--s": 0.2,
        "--Delta": 0.1,
        "--Lambda": 2,
        "--M": 5,
        "--N": 2,
        "--restarts": 6,
        "--first-restarts": 8,
        "--seed": 1,
    }
    flags.update(extra)
    out = []
    for k, v in flags.items():
        out.extend([k, v])
    return out


# --------------------------------------------------------------- ground state


def test_ground_state_decoupled(tmp_path):
    out = tmp_path / "gs.json"
    code = run_cli(
        "ground-state", *base_flags(), "--alpha", 0, "--out", out
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["energy"] == pytest.approx(-0.05, abs=1e-12)
    assert doc["converged"] is True
    assert doc["config"]["resolved_M"] == 5
    assert doc["config"]["seed"] == 1
    assert doc["alpha"] == 0.0
    assert doc["model"]["kind"] == "single"


def test_ground_state_nonconvergence_exit_code(tmp_path, monkeypatch):
    import sbvar.cli as cli_mod

    real_minimize = cli_mod.minimize

    def failing_minimize(params, opts):
        res = real_minimize(params, opts)
        object.__setattr__(res, "converged", False) if hasattr(
            type(res), "__dataclass_fields__"
        ) else None
        raise NonConvergenceError("forced for test", best=res)

    monkeypatch.setattr(cli_mod, "minimize", failing_minimize)
    out = tmp_path / "gs.json"
    code = run_cli("ground-state", *base_flags(), "--alpha", 0, "--out", out)
    assert code == 3
    assert out.exists()  # partial result still written


# ----------------------------------------------------------------- bath table


def test_bath_table_matches_module(tmp_path):
    out = tmp_path / "bath.csv"
    code = run_cli("bath", *base_flags(), "--alpha", 0.02, "--out", out)
    assert code == 0
    lines = out.read_text().splitlines()
    header = [ln[2:] for ln in lines if ln.startswith("# ")]
    assert "resolved_M = 5" in header
    assert "s = 0.20000000000000001" in header
    body = [ln for ln in lines if not ln.startswith("# ")]
    assert body[0] == "k,omega_k,lambda_k"
    rows = [ln.split(",") for ln in body[1:]]
    assert [r[0] for r in rows] == ["1", "2", "3", "4", "5"]

    bath = discretize(make_bath_spec(s=0.2, alpha=0.02, Lambda=2, M=5))
    for r, w, lam in zip(rows, bath.omega, bath.lam):
        assert float(r[1]) == w
        assert float(r[2]) == lam


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# comment line\n"
        "model = single\n"
        "s = 0.2\n"
        "Delta = 0.1\n"
        "Lambda = 2\n"
        "M = 5\n"
    )
    out = tmp_path / "bath.csv"
    code = run_cli("bath", "--config", cfg, "--Delta", 0.2, "--out", out)
    assert code == 0
    header = [ln for ln in out.read_text().splitlines() if ln.startswith("# ")]
    assert "# Delta = 0.20000000000000001" in header  # flag beat the file


# ---------------------------------------------------------------------- sweep


def sweep_args(outdir, seed=3):
    return [
        "sweep",
        *base_flags(**{"--M": 4, "--seed": seed}),
        "--alpha-list",
        "0,0.03,0.06",
        "--out",
        outdir,
    ]


def test_sweep_artifacts_deterministic(tmp_path):
    run1, run2 = tmp_path / "run1", tmp_path / "run2"
    assert run_cli(*sweep_args(run1)) == 0
    assert run_cli(*sweep_args(run2)) == 0
    assert (run1 / "sweep.csv").read_bytes() == (run2 / "sweep.csv").read_bytes()
    pairs1 = sorted(p.name for p in run1.glob("pair_*.csv"))
    assert pairs1 == ["pair_0000.csv", "pair_0001.csv", "pair_0002.csv"]
    for name in pairs1:
        assert (run1 / name).read_bytes() == (run2 / name).read_bytes()
    assert len(list((run1 / "checkpoints").glob("alpha_*.json"))) == 3
    header = [
        ln
        for ln in (run1 / "sweep.csv").read_text().splitlines()
        if ln.startswith("# ")
    ]
    assert "# seed = 3" in header
    assert "# model = single" in header


def test_sweep_checkpoint_resume_identical(tmp_path):
    run1 = tmp_path / "run1"
    assert run_cli(*sweep_args(run1)) == 0
    first = (run1 / "sweep.csv").read_bytes()
    # second invocation reloads every point from checkpoints
    assert run_cli(*sweep_args(run1)) == 0
    assert (run1 / "sweep.csv").read_bytes() == first


def test_sweep_no_pairs_flag(tmp_path):
    out = tmp_path / "run"
    code = run_cli(*sweep_args(out), "--no-pairs")
    assert code == 0
    assert list(out.glob("pair_*.csv")) == []


# -------------------------------------------------------------------- analyze


def write_sweep_file(path, alpha, dvals, header_extra=(), derivative=None):
    derivative = (
        derivative if derivative is not None else np.zeros_like(np.asarray(alpha))
    )
    with open(path, "w") as fh:
        for line in header_extra:
            fh.write(f"# {line}\n")
        fh.write("alpha,E_g,dEg_dalpha,sum_D_b\n")
        for a, d, g in zip(alpha, dvals, derivative):
            fh.write(f"{a:.17g},0,{g:.17g},{d:.17g}\n")


def test_analyze_delta_signature(tmp_path):
    path = tmp_path / "sweep.csv"
    alpha = np.linspace(0.0, 0.7, 15)
    d = np.full(15, 0.02)
    d[6] = 1.0
    write_sweep_file(path, alpha, d)
    out = tmp_path / "report.json"
    code = run_cli(
        "analyze", "--sweep", path, "--signature", "delta", "--no-tail",
        "--out", out,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    rep = doc["sweeps"][0]
    assert rep["classification"] == "delta"
    assert rep["alpha_c"] == pytest.approx(alpha[6])
    assert rep["uncertainty"] == pytest.approx((alpha[7] - alpha[5]) / 4)


def test_analyze_signature_absent_is_reported_not_fatal(tmp_path):
    path = tmp_path / "sweep.csv"
    alpha = np.linspace(0.0, 0.7, 15)
    write_sweep_file(path, alpha, np.linspace(0, 1, 15))
    out = tmp_path / "report.json"
    assert run_cli(
        "analyze", "--sweep", path, "--signature", "delta", "--no-tail",
        "--out", out,
    ) == 0
    rep = json.loads(out.read_text())["sweeps"][0]
    assert "alpha_c" not in rep
    assert "signature_error" in rep


def test_analyze_unknown_field_is_config_error(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    write_sweep_file(path, np.linspace(0, 1, 8), np.zeros(8))
    assert run_cli("analyze", "--sweep", path, "--field", "bogus") == 2
    assert "bogus" in capsys.readouterr().err


def test_analyze_lambda_series_extrapolation(tmp_path):
    paths = []
    lambdas = [1.5, 2.0, 4.0]
    alpha = np.linspace(0.014, 0.032, 37)
    for lam in lambdas:
        ac = 0.018 + 0.004 * np.log(lam) ** 1.7
        path = tmp_path / f"sweep_L{lam}.csv"
        # parabolic peak: the 3-point interpolation recovers ac exactly
        write_sweep_file(
            path, alpha, 1.0 - ((alpha - ac) / 0.01) ** 2,
            header_extra=(f"Lambda = {lam:.17g}",),
        )
        paths.append(path)
    out = tmp_path / "series.json"
    code = run_cli(
        "analyze", "--sweep", *paths, "--signature", "peak",
        "--series", "lambda", "--no-tail", "--out", out,
    )
    assert code == 0
    doc = json.loads(out.read_text())
    series = doc["series"]
    assert series["x"] == lambdas
    assert series["limit"] == pytest.approx(0.018, abs=1e-6)
    assert series["fit"]["params"]["exponent"] == pytest.approx(1.7, abs=1e-3)
    assert series["exponents"]["inv_nu"] == pytest.approx(2.0 - 1.7, abs=1e-3)


def test_analyze_tail_fit_on_synthetic_derivative(tmp_path):
    path = tmp_path / "sweep.csv"
    alpha = np.linspace(0.5, 2.0, 31)
    deriv = -1.3 + 0.7 * np.exp(-12.0 * alpha)
    write_sweep_file(path, alpha, np.zeros_like(alpha), derivative=deriv)
    out = tmp_path / "report.json"
    assert run_cli("analyze", "--sweep", path, "--out", out) == 0
    tail = json.loads(out.read_text())["sweeps"][0]["derivative"]
    assert tail["label"] == "exponential_tail"
    assert tail["fit"]["params"]["rate"] == pytest.approx(12.0, abs=0.01)


# ------------------------------------------------------------------- collapse


def write_pair_file(path, alpha, omega, discord):
    with open(path, "w") as fh:
        fh.write(f"# alpha = {alpha:.17g}\n")
        fh.write("k,omega_k,Cor_X,S_b,I_b,S_L_b,E_N_b,D_b\n")
        for k, (w, d) in enumerate(zip(omega, discord)):
            fh.write(f"{k + 1},{w:.17g},0,0,0,0,0,{d:.17g}\n")


def _piecewise_master(u):
    return np.where(u < 0.0, 1.0 + 0.5 * u, 1.0 - 0.8 * u)


def test_collapse_recovers_planted_scale(tmp_path):
    du = 0.05
    u = -1.5 + du * np.arange(41)
    omega = np.exp(u)
    alphas = [0.01, 0.02, 0.03, 0.04, 0.05]
    decay = 10.0
    paths = []
    for alpha in alphas:
        d = alpha * _piecewise_master(u + decay * alpha)
        path = tmp_path / f"pair_{alpha:.2f}.csv"
        write_pair_file(path, alpha, omega, d)
        paths.append(path)
    out = tmp_path / "coll"
    code = run_cli("collapse", "--pairs", *paths, "--out", out)
    assert code == 0

    doc = json.loads((out / "report.json").read_text())
    expected = np.exp(-decay * (np.array(alphas) - alphas[0]))
    assert np.allclose(doc["omega_s"], expected, rtol=1e-6)
    assert doc["residual"] < 1e-12
    assert doc["omega_s_fit"]["params"]["rate"] == pytest.approx(decay, rel=1e-5)

    ws_lines = (out / "omega_s.csv").read_text().splitlines()
    body = [ln for ln in ws_lines if not ln.startswith("# ")]
    assert body[0] == "alpha,omega_s"
    assert len(body) == 1 + len(alphas)
    collapse_rows = [
        ln
        for ln in (out / "collapse.csv").read_text().splitlines()
        if not ln.startswith("# ") and not ln.startswith("alpha,")
    ]
    assert len(collapse_rows) == len(alphas) * omega.size


def test_collapse_infeasible_exit_code(tmp_path, capsys):
    u = -1.5 + 0.05 * np.arange(41)
    omega = np.exp(u)
    paths = []
    for alpha in (0.01, 0.02, 0.03):
        path = tmp_path / f"pair_{alpha:.2f}.csv"
        write_pair_file(path, alpha, omega, alpha * _piecewise_master(u))
        paths.append(path)
    code = run_cli(
        "collapse", "--pairs", *paths, "--min-overlap", 1000,
        "--out", tmp_path / "coll",
    )
    assert code == 1
    assert "collapse failed" in capsys.readouterr().err


# ----------------------------------------------------------------- exit codes


def test_bad_configuration_exits_2(tmp_path, capsys):
    assert run_cli("bath", *base_flags(**{"--Lambda": 0.9}), "--alpha", 1) == 2
    assert "Lambda" in capsys.readouterr().err

    cfg = tmp_path / "bad.cfg"
    cfg.write_text("unknown_key = 1\n")
    assert run_cli("bath", "--config", cfg) == 2
    assert "unknown_key" in capsys.readouterr().err

    cfg2 = tmp_path / "bad2.cfg"
    cfg2.write_text("just some text\n")
    assert run_cli("bath", "--config", cfg2) == 2

    assert run_cli("analyze", "--sweep", tmp_path / "missing.csv") == 2

    # M and omega_min together is ambiguous
    assert (
        run_cli(
            "bath", *base_flags(), "--omega-min", 1e-3, "--alpha", 1,
            "--out", tmp_path / "b.csv",
        )
        == 2
    )


def test_sweep_requires_a_grid(capsys):
    assert run_cli("sweep", *base_flags(**{"--M": 4})) == 2
    assert "grid" in capsys.readouterr().err

"""Command-line interface: subcommands, config handling, outputs, exit codes."""

import json

from mci.cli import main
from mci.experiments import CSV_COLUMNS, load


def _write_config(tmp_path, **fields):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(fields))
    return path


def test_solve_prints_summary(tmp_path, capsys):
    cfg = _write_config(tmp_path, d=5, n=12, N_list=[64], seeds=[3])
    code = main(["solve", "--config", str(cfg), "--p", "1.5"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert out["converged"] and out["p"] == 1.5 and out["N"] == 64
    assert out["grad_norm"] <= 1e-6


def test_solve_l1_path(tmp_path, capsys):
    cfg = _write_config(tmp_path, d=5, n=8, N_list=[64], seeds=[1])
    code = main(["solve", "--config", str(cfg), "--p", "1.0"])
    out = json.loads(capsys.readouterr().out)
    assert code == 0
    assert out["support"] <= 8
    assert out["residual"] <= 1e-7


def test_solve_dump_matrices(tmp_path, capsys):
    cfg = _write_config(tmp_path, d=4, n=6, N_list=[32], seeds=[0])
    out_dir = tmp_path / "dump"
    code = main([
        "solve", "--config", str(cfg), "--p", "2.0",
        "--out", str(out_dir), "--dump-matrices",
    ])
    assert code == 0
    for name in ("X.csv", "y.csv", "W.csv", "Phi.csv", "a.csv", "lambda.csv", "solve.json"):
        assert (out_dir / name).exists()
    first = (out_dir / "Phi.csv").read_text().splitlines()[0]
    assert len(first.split(",")) == 32


def test_fig1_writes_rows_and_summary(tmp_path, capsys):
    cfg = _write_config(
        tmp_path, d=5, n=12, p_list=[1.5, 2.0], N_list=[32, 64], seeds=[0, 1], M_test=1_000
    )
    out_dir = tmp_path / "fig1_out"
    code = main(["fig1", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 0
    result = load(out_dir)
    assert len(result.rows) == 2 * 2 * 2
    header = (out_dir / "rows.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["config"]["n"] == 12  # resolved config embedded
    assert summary["aggregates"]


def test_set_overrides(tmp_path, capsys):
    cfg = _write_config(tmp_path, d=5, n=12, p_list=[2.0], N_list=[32, 64], seeds=[0], M_test=1_000)
    out_dir = tmp_path / "ov_out"
    code = main([
        "fig1", "--config", str(cfg), "--out", str(out_dir),
        "--set", "n=10", "--set", "N_list=[16,32]",
    ])
    assert code == 0
    result = load(out_dir)
    assert {r.N for r in result.rows} == {16, 32}
    assert all(r.n == 10 for r in result.rows)


def test_seed_rebases_list(tmp_path, capsys):
    cfg = _write_config(tmp_path, d=5, n=12, p_list=[2.0], N_list=[32], seeds=[0, 1], M_test=1_000)
    out_dir = tmp_path / "seed_out"
    code = main(["fig1", "--config", str(cfg), "--out", str(out_dir), "--seed", "100"])
    assert code == 0
    assert {r.seed for r in load(out_dir).rows} == {100, 101}


def test_row_failure_exit_code(tmp_path, capsys):
    # N < n rows cannot converge: rows still written, exit code 2.
    cfg = _write_config(tmp_path, d=5, n=16, p_list=[2.0], N_list=[8], seeds=[0], M_test=1_000)
    out_dir = tmp_path / "fail_out"
    code = main(["fig1", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 2
    result = load(out_dir)
    assert len(result.rows) == 1 and not result.rows[0].converged


def test_audit_writes_json(tmp_path, capsys):
    cfg = _write_config(
        tmp_path, d=5, n=12, p_list=[1.5], N_list=[128], seeds=[0], gamma=1.0,
        activation="identity", target_activation="identity",
        M_test=1_000, N_ref=512, m_max=8, quad_order=60,
    )
    out_dir = tmp_path / "audit_out"
    code = main(["audit", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 0
    doc = json.loads((out_dir / "audit.json").read_text())
    assert "hermite" in doc and "event_budget" in doc


def test_fatal_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["fig1", "--config", str(bad)])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_scaling_cli(tmp_path, capsys):
    cfg = _write_config(
        tmp_path, d=5, n=12, p_list=[2.0], N_list=[32, 64, 128], seeds=[0],
        M_test=1_000, N_ref=256,
    )
    out_dir = tmp_path / "scaling_out"
    code = main(["scaling", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "slopes" in summary["extras"]


def test_latent_cli(tmp_path, capsys):
    cfg = _write_config(
        tmp_path, d=5, n=12, p_list=[2.0], N_list=[32, 64], seeds=[0], gamma=1.0,
        activation="identity", target_activation="identity", M_test=1_000, N_ref=256,
    )
    out_dir = tmp_path / "latent_out"
    code = main(["latent", "--config", str(cfg), "--out", str(out_dir)])
    assert code == 0
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "noise_residuals" in summary["extras"]

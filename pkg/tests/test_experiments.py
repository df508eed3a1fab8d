"""Experiment configs, runners, aggregation, and persistence."""

import dataclasses
import math

import numpy as np
import pytest

from mci.errors import SchemaMismatch, WrongSpec
from mci.experiments import (
    CSV_COLUMNS,
    ExperimentConfig,
    ExperimentResult,
    Row,
    aggregate,
    load,
    persist,
    run_audit,
    run_fig1,
    run_latent,
    run_scaling,
)


def rows_equal(a: Row, b: Row) -> bool:
    for f in dataclasses.fields(Row):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, float) and math.isnan(va) and math.isnan(vb):
            continue
        if va != vb:
            return False
    return True


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.d == 30 and cfg.n == 150 and len(cfg.seeds) == 20
        assert cfg.p_list == [1.0, 1.25, 1.5, 2.0]
        assert cfg.N_list == [2**k for k in range(6, 14)]

    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(p_list=[])
        with pytest.raises(ValueError):
            ExperimentConfig(N_list=[128, 64])

    def test_from_dict_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"frobnicate": 1})

    def test_overrides(self):
        cfg = ExperimentConfig().with_overrides(
            ["n=40", "p_list=[1.5,2.0]", "solver.max_iters=77", "activation=relu"]
        )
        assert cfg.n == 40
        assert cfg.p_list == [1.5, 2.0]
        assert cfg.solver.max_iters == 77

    def test_resolved_config_dict(self):
        raw = ExperimentConfig().to_dict()
        assert raw["solver"]["tol_grad_rel"] == 1e-8
        again = ExperimentConfig.from_dict(raw)
        assert again.to_dict() == raw


def _synthetic_rows(k: int) -> list[Row]:
    rng = np.random.default_rng(0)
    rows = []
    for i in range(k):
        rows.append(
            Row(
                experiment="fig1",
                p=float(rng.choice([1.0, 1.25, 1.5, 2.0])),
                n=int(rng.integers(10, 200)),
                N=int(2 ** rng.integers(4, 14)),
                seed=i,
                test_error=float(rng.exponential()),
                l2_to_ref=float("nan") if i % 7 == 0 else float(rng.exponential()),
                solver_iters=int(rng.integers(0, 100)),
                converged=bool(rng.integers(0, 2)),
                wall_ms=float(rng.exponential() * 100),
            )
        )
    return rows


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rows = _synthetic_rows(50)
        res = ExperimentResult(rows=rows, aggregates=aggregate(rows), config={"n": 1})
        back = load(persist(res, tmp_path / "out"))
        assert len(back.rows) == len(rows)
        assert all(rows_equal(a, b) for a, b in zip(rows, back.rows))

    def test_empty_result_header_only(self, tmp_path):
        res = ExperimentResult(rows=[], aggregates={}, config={})
        out = persist(res, tmp_path / "empty")
        text = (out / "rows.csv").read_text().strip()
        assert text == ",".join(CSV_COLUMNS)
        assert load(out).rows == []

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text("experiment,p,n,N,seed,test_error\nfig1,2,5,8,0,0.1\n")
        with pytest.raises(SchemaMismatch):
            load(path)

    def test_short_row_rejected(self, tmp_path):
        path = tmp_path / "rows.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\nfig1,2.0,5,8\n")
        with pytest.raises(SchemaMismatch):
            load(path)


FAST_FIG1 = dict(
    experiment="fig1", d=5, n=16, p_list=[1.0, 1.5, 2.0], N_list=[32, 64],
    seeds=[0, 1, 2], M_test=2_000,
)


class TestFig1:
    def test_row_grid(self):
        res = run_fig1(ExperimentConfig(**FAST_FIG1))
        assert len(res.rows) == 3 * 2 * 3
        assert all(r.converged for r in res.rows)
        assert res.config["n"] == 16  # resolved config embedded

    def test_deterministic_rerun(self):
        r1 = run_fig1(ExperimentConfig(**FAST_FIG1))
        r2 = run_fig1(ExperimentConfig(**FAST_FIG1))
        for a, b in zip(r1.rows, r2.rows):
            assert a.test_error == b.test_error and a.solver_iters == b.solver_iters

    def test_threads_do_not_change_values(self):
        r1 = run_fig1(ExperimentConfig(**FAST_FIG1))
        r2 = run_fig1(ExperimentConfig(**{**FAST_FIG1, "threads": 3}))
        for a, b in zip(r1.rows, r2.rows):
            assert a.test_error == b.test_error

    def test_underdetermined_rows_recorded(self):
        # N < n: the dual gradient cannot vanish; rows carry converged=False.
        cfg = ExperimentConfig(
            experiment="fig1", d=5, n=16, p_list=[2.0], N_list=[8],
            seeds=[0], M_test=2_000,
        )
        res = run_fig1(cfg)
        assert len(res.rows) == 1 and not res.rows[0].converged
        assert res.any_row_failed

    def test_ci_shrinks_with_more_seeds(self):
        base = dict(experiment="fig1", d=5, n=16, p_list=[1.5], N_list=[128], M_test=4_000)
        ci5 = list(run_fig1(ExperimentConfig(**base, seeds=list(range(5)))).aggregates.values())[0][
            "test_error_ci95"
        ]
        ci20 = list(
            run_fig1(ExperimentConfig(**base, seeds=list(range(20)))).aggregates.values()
        )[0]["test_error_ci95"]
        # 4x the seeds: CI should shrink roughly like 1/2.
        assert ci20 < ci5
        assert 1.2 <= ci5 / ci20 <= 5.0

    def test_p2_approaches_kernel_interpolant(self):
        # Beyond the flattening width the quadratic-penalty test error sits
        # within 10% of the kernel-interpolant test error.
        from mci import (
            DataSpec,
            FeatureSpec,
            RidgeTarget,
            kernel_interpolant,
            kernel_matrix,
            sample_data,
        )
        from mci.predict import test_error as mse
        from mci.seeding import derive_seed

        cfg = ExperimentConfig(
            experiment="fig1", d=5, n=20, p_list=[2.0], N_list=[4096],
            seeds=[0, 1, 2], M_test=20_000, target_seed=0,
        )
        res = run_fig1(cfg)
        spec = FeatureSpec(activation="relu")
        ds = DataSpec(d=5, target=RidgeTarget.random(5, 0))
        for row in res.rows:
            inst = sample_data(ds, 20, row.seed)
            kp = kernel_interpolant(kernel_matrix(spec, inst.X, method="arc_cosine"), inst, spec)
            kerr = mse(kp, ds, cfg.M_test, derive_seed(row.seed, "test"))
            assert abs(row.test_error - kerr) <= 0.10 * kerr


class TestScaling:
    def test_single_width_rejected(self):
        with pytest.raises(ValueError):
            run_scaling(
                ExperimentConfig(experiment="scaling", d=5, n=16, p_list=[2.0],
                                 N_list=[64], seeds=[0])
            )

    def test_slope_report(self):
        cfg = ExperimentConfig(
            experiment="scaling", d=5, n=16, p_list=[2.0], N_list=[64, 128, 256],
            seeds=[0, 1], M_test=2_000,
        )
        res = run_scaling(cfg)
        rep = res.extras["slopes"]["p=2"]
        assert rep["slope"] < 0
        assert len(rep["mean_l2"]) == 3
        assert all(math.isfinite(r.l2_to_ref) for r in res.rows)


class TestLatent:
    def test_wrong_spec(self):
        with pytest.raises(WrongSpec):
            run_latent(ExperimentConfig(experiment="latent", activation="relu", gamma=1.0,
                                        d=5, n=16, p_list=[2.0], N_list=[32, 64], seeds=[0]))
        with pytest.raises(WrongSpec):
            run_latent(ExperimentConfig(experiment="latent", activation="identity", gamma=0.0,
                                        d=5, n=16, p_list=[2.0], N_list=[32, 64], seeds=[0]))

    def test_latent_run(self):
        cfg = ExperimentConfig(
            experiment="latent", d=5, n=16, p_list=[2.0, 1.5], N_list=[64, 256],
            seeds=[0, 1], gamma=1.0, activation="identity",
            target_activation="identity", M_test=2_000, N_ref=1024,
        )
        res = run_latent(cfg)
        assert "c0" in res.extras and "lemma_gate_ok" in res.extras
        assert all(v["mean"] > 0 for v in res.extras["noise_residuals"].values())
        assert all(math.isfinite(r.l2_to_ref) for r in res.rows)

    def test_latent_distance_decreases_with_width(self):
        cfg = ExperimentConfig(
            experiment="latent", d=5, n=20, p_list=[2.0], N_list=[64, 1024],
            seeds=list(range(4)), gamma=1.0, activation="identity",
            target_activation="identity", M_test=4_000,
        )
        res = run_latent(cfg)
        by_N = {v["N"]: v["l2_to_ref_mean"] for v in res.aggregates.values()}
        assert by_N[1024] < by_N[64]


class TestAudit:
    def test_audit_document(self):
        cfg = ExperimentConfig(
            experiment="audit", d=5, n=16, p_list=[1.5], N_list=[256], seeds=[0],
            gamma=1.0, activation="identity", target_activation="identity",
            M_test=2_000, N_ref=1024, m_max=8, quad_order=60,
        )
        doc = run_audit(cfg)
        assert set(doc) >= {"config", "hermite", "hermite_condition", "assumptions", "event_budget"}
        assert doc["hermite"]["mu"][1] == pytest.approx(1.0, abs=1e-10)
        assert doc["assumptions"]["smallball_prob"] <= 0.12
        assert isinstance(doc["event_budget"]["holds"], bool)

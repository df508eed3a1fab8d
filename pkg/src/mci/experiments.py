"""Experiment orchestration, row persistence, and aggregation.

Each experiment expands a config into rows keyed by (p, N, seed), runs the
appropriate solver per row, and aggregates means with 95% confidence
intervals over seeds.  Rows are persisted as CSV (17-significant-digit
decimals) and aggregates/config/extras as JSON; a persisted run loads back
verbatim.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .audit import (
    SolvedModel,
    as_json_dict,
    assumption_report,
    event_audit,
    hermite_coefficients,
    hermite_condition_check,
    smallball_estimate,
)
from .errors import MciError, ReferenceFailed, SchemaMismatch, WrongSpec
from .features import (
    ARC_COSINE,
    GAUSSIAN_ISOTROPIC,
    IDENTITY,
    LATENT_LINEAR,
    MONTE_CARLO,
    RELU,
    DataSpec,
    FeatureSpec,
    Instance,
    RidgeTarget,
    featurize,
    kernel_matrix,
    sample_data,
    sample_weights,
)
from .penalty import PenaltySpec, link_s
from .predict import Predictor, kernel_interpolant, l2_distance, test_error
from .seeding import derive_seed as derived_seed
from .solver import SolverOptions, solve_dual, solve_l1

CSV_COLUMNS = (
    "experiment",
    "p",
    "n",
    "N",
    "seed",
    "test_error",
    "l2_to_ref",
    "solver_iters",
    "converged",
    "wall_ms",
)

FIG1 = "fig1"
SCALING = "scaling"
LATENT = "latent"
AUDIT = "audit"
SOLVE = "solve"


@dataclass
class ExperimentConfig:
    """Fully-resolved experiment parameters; defaults follow the headline sweep
    (d = 30, n = 150, 20 seeds, p in {1, 1.25, 1.5, 2}, N = 2^6 .. 2^13)."""

    experiment: str = FIG1
    d: int = 30
    n: int = 150
    p_list: list[float] = field(default_factory=lambda: [1.0, 1.25, 1.5, 2.0])
    N_list: list[int] = field(default_factory=lambda: [2**k for k in range(6, 14)])
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    gamma: float = 0.0
    activation: str = RELU
    weight_dist: str = GAUSSIAN_ISOTROPIC
    target_activation: str = RELU
    target_seed: int = 0
    M_test: int = 20_000
    N_ref: int = 2**14
    m_max: int = 20
    quad_order: int = 80
    eta: float = 0.1
    C0: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_path: str = ""
    threads: int = 1

    def __post_init__(self):
        if not self.p_list or not self.N_list or not self.seeds:
            raise ValueError("p_list, N_list, and seeds must be nonempty")
        if list(self.N_list) != sorted(self.N_list):
            raise ValueError("N_list must be sorted ascending")

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(
            activation=self.activation,
            weight_dist=self.weight_dist,
            noise_gamma=self.gamma,
        )

    def data_spec(self) -> DataSpec:
        target = RidgeTarget.random(self.d, self.target_seed, self.target_activation)
        return DataSpec(d=self.d, target=target)

    def to_dict(self) -> dict:
        out = asdict(self)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        raw = dict(raw)
        if "solver" in raw and isinstance(raw["solver"], dict):
            raw["solver"] = SolverOptions(**raw["solver"])
        return cls(**raw)

    def with_overrides(self, assignments: list[str]) -> "ExperimentConfig":
        """Apply `key=value` overrides; values parse as JSON, else strings."""
        raw = self.to_dict()
        for item in assignments:
            key, _, value = item.partition("=")
            if not _:
                raise ValueError(f"override {item!r} is not of the form key=value")
            try:
                parsed = json.loads(value)
            except json.JSONDecodeError:
                parsed = value
            if key.startswith("solver."):
                raw["solver"][key.split(".", 1)[1]] = parsed
            else:
                raw[key] = parsed
        return ExperimentConfig.from_dict(raw)


@dataclass
class Row:
    experiment: str
    p: float
    n: int
    N: int
    seed: int
    test_error: float
    l2_to_ref: float
    solver_iters: int
    converged: bool
    wall_ms: float


@dataclass
class ExperimentResult:
    rows: list[Row]
    aggregates: dict
    config: dict
    extras: dict = field(default_factory=dict)

    @property
    def any_row_failed(self) -> bool:
        return any(not r.converged for r in self.rows)


def aggregate(rows: list[Row]) -> dict:
    """Group rows by (experiment, p, n, N); mean and 1.96 sd / sqrt(k) CIs."""
    groups: dict[tuple, list[Row]] = {}
    for r in rows:
        groups.setdefault((r.experiment, r.p, r.n, r.N), []).append(r)
    out = {}
    for (exp, p, n, N), rs in sorted(groups.items()):
        te = np.array([r.test_error for r in rs])
        l2 = np.array([r.l2_to_ref for r in rs])
        k = len(rs)

        def _ci(vals: np.ndarray) -> float:
            vals = vals[np.isfinite(vals)]
            if vals.size < 2:
                return 0.0
            return float(1.96 * np.std(vals, ddof=1) / math.sqrt(vals.size))

        out[f"{exp}|p={p:g}|n={n}|N={N}"] = {
            "experiment": exp,
            "p": p,
            "n": n,
            "N": N,
            "n_seeds": k,
            "test_error_mean": float(np.nanmean(te)) if np.any(np.isfinite(te)) else math.nan,
            "test_error_ci95": _ci(te),
            "l2_to_ref_mean": float(np.nanmean(l2)) if np.any(np.isfinite(l2)) else math.nan,
            "l2_to_ref_ci95": _ci(l2),
            "all_converged": all(r.converged for r in rs),
        }
    return out


# ---------------------------------------------------------------------------
# Row solvers
# ---------------------------------------------------------------------------

def _fit_coefficients(cfg: ExperimentConfig, p: float, Phi: np.ndarray, y: np.ndarray):
    """Solve one interpolation problem; returns (a, iters, converged)."""
    if p == 1.0:
        prim = solve_l1(Phi, y, cfg.solver)
        return prim.a, 0, True
    pen = PenaltySpec.pnorm(p)
    sol = solve_dual(Phi, y, pen, cfg.solver)
    a = np.asarray(link_s(pen, Phi.T @ sol.lambda_hat))
    return a, sol.iters, sol.converged


def _reference_predictor(cfg: ExperimentConfig, spec, ds, inst: Instance, p: float, seed: int):
    """Width->infinity surrogate: kernel interpolant when p = 2, else a large-N solve."""
    if p == 2.0:
        method = _closed_form_method(spec)
        oracle = kernel_matrix(
            spec, inst.X, method=method, mc_samples=100_000, seed=derived_seed(seed, "kernel")
        )
        return kernel_interpolant(oracle, inst, spec), oracle
    ref_seed = derived_seed(seed, "reference")
    W_ref = sample_weights(spec, cfg.d, cfg.N_ref, ref_seed)
    Phi_ref = featurize(spec, inst.X, W_ref, seed=ref_seed)
    try:
        a_ref, _, ok = _fit_coefficients(cfg, p, Phi_ref, inst.y)
    except MciError as exc:
        raise ReferenceFailed(f"reference solve failed: {exc}") from exc
    if not ok:
        raise ReferenceFailed(f"reference solve did not converge (p={p}, N_ref={cfg.N_ref})")
    return Predictor(W=W_ref, a=a_ref, spec=spec), None


def _closed_form_method(spec: FeatureSpec) -> str:
    if spec.activation == RELU and spec.weight_dist == GAUSSIAN_ISOTROPIC:
        return ARC_COSINE
    if spec.activation == IDENTITY:
        return LATENT_LINEAR
    return MONTE_CARLO


def _map_seeds(fn, seeds: list[int], threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, seeds))
    return [fn(s) for s in seeds]


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_fig1(cfg: ExperimentConfig) -> ExperimentResult:
    """Test error versus width for each penalty exponent; solver failures are
    recorded per row and the sweep continues."""
    spec, ds = cfg.feature_spec(), cfg.data_spec()

    def per_seed(seed: int) -> list[Row]:
        inst = sample_data(ds, cfg.n, seed)
        rows = []
        for N in cfg.N_list:
            W = sample_weights(spec, cfg.d, N, seed)
            Phi = featurize(spec, inst.X, W, seed=seed)
            for p in cfg.p_list:
                t0 = time.perf_counter()
                try:
                    a, iters, ok = _fit_coefficients(cfg, p, Phi, inst.y)
                    pred = Predictor(W=W, a=a, spec=spec)
                    te = test_error(pred, ds, cfg.M_test, derived_seed(seed, "test"))
                except MciError:
                    a, iters, ok, te = None, 0, False, math.nan
                wall = (time.perf_counter() - t0) * 1e3
                rows.append(
                    Row(FIG1, p, cfg.n, N, seed, te, math.nan, iters, ok, wall)
                )
        return rows

    rows = [r for chunk in _map_seeds(per_seed, cfg.seeds, cfg.threads) for r in chunk]
    rows.sort(key=lambda r: (r.p, r.N, r.seed))
    return ExperimentResult(rows=rows, aggregates=aggregate(rows), config=cfg.to_dict())


def _scaling_rows(cfg: ExperimentConfig, experiment: str) -> tuple[list[Row], dict]:
    """Shared machinery of the scaling and latent studies."""
    spec, ds = cfg.feature_spec(), cfg.data_spec()
    extras: dict = {"noise_residuals": {}, "sigma_min": {}}

    def per_seed(seed: int) -> tuple[list[Row], dict]:
        inst = sample_data(ds, cfg.n, seed)
        smin = float(np.linalg.svd(inst.X, compute_uv=False)[-1])
        local: dict = {"sigma_min": smin}
        rows = []
        for p in cfg.p_list:
            ref, oracle = _reference_predictor(cfg, spec, ds, inst, p, seed)
            for N in cfg.N_list:
                W = sample_weights(spec, cfg.d, N, seed)
                Phi, Z = featurize(spec, inst.X, W, seed=seed, return_noise=True)
                t0 = time.perf_counter()
                try:
                    a, iters, ok = _fit_coefficients(cfg, p, Phi, inst.y)
                    pred = Predictor(W=W, a=a, spec=spec)
                    dist, _ = l2_distance(pred, ref, ds, cfg.M_test, derived_seed(seed, "test"))
                    te = test_error(pred, ds, cfg.M_test, derived_seed(seed, "test"))
                except MciError:
                    a, iters, ok, dist, te = None, 0, False, math.nan, math.nan
                wall = (time.perf_counter() - t0) * 1e3
                rows.append(Row(experiment, p, cfg.n, N, seed, te, dist, iters, ok, wall))
                if experiment == LATENT and a is not None and p > 1:
                    local.setdefault("noise_residuals", {})[(p, N)] = _latent_noise_residual(
                        cfg, spec, inst, p, Z, a, ref, oracle, seed
                    )
        return rows, local

    results = _map_seeds(per_seed, cfg.seeds, cfg.threads)
    rows = [r for chunk, _ in results for r in chunk]
    rows.sort(key=lambda r: (r.p, r.N, r.seed))
    for seed, (_, local) in zip(cfg.seeds, results):
        extras["sigma_min"][str(seed)] = local["sigma_min"]
        for key, val in local.get("noise_residuals", {}).items():
            extras["noise_residuals"].setdefault(f"p={key[0]:g}|N={key[1]}", []).append(val)
    return rows, extras


def _latent_noise_residual(cfg, spec, inst, p, Z, a, ref, oracle, seed) -> float:
    """|| (1/N) Z a - E[z s(<phi, lam>)] ||_2, the exact-fit noise identity.

    For p = 2 the population term is gamma^2 K^{-1} y in closed form; otherwise
    it is estimated from the large-width reference solve (whose noise matrix is
    regenerated from the same sub-seed).
    """
    lhs = Z @ a / Z.shape[1]
    if p == 2.0 and oracle is not None:
        pop = cfg.gamma**2 * oracle.inv_apply(inst.y)
    else:
        ref_seed = derived_seed(seed, "reference")
        _, Z_ref = featurize(spec, inst.X, ref.W, seed=ref_seed, return_noise=True)
        pop = Z_ref @ ref.a / cfg.N_ref
    return float(np.linalg.norm(lhs - pop))


def _fit_slopes(rows: list[Row]) -> dict:
    """Least-squares log-log slope of mean distance versus N, per p."""
    slopes = {}
    by_p: dict[float, dict[int, list[float]]] = {}
    for r in rows:
        if math.isfinite(r.l2_to_ref):
            by_p.setdefault(r.p, {}).setdefault(r.N, []).append(r.l2_to_ref)
    for p, groups in by_p.items():
        Ns = sorted(groups)
        if len(Ns) < 2:
            raise ValueError("log-log slope needs at least two widths")
        means = np.array([np.mean(groups[N]) for N in Ns])
        coef = np.polyfit(np.log(Ns), np.log(means), 1)
        slopes[f"p={p:g}"] = {
            "slope": float(coef[0]),
            "intercept": float(coef[1]),
            "N": Ns,
            "mean_l2": means.tolist(),
        }
    return slopes


def run_scaling(cfg: ExperimentConfig) -> ExperimentResult:
    """Distance to the width->infinity reference as a function of N, with a
    fitted log-log slope per penalty exponent."""
    if len(cfg.N_list) < 2:
        raise ValueError("scaling study needs at least two widths (slope undefined)")
    rows, extras = _scaling_rows(cfg, SCALING)
    extras["slopes"] = _fit_slopes(rows)
    return ExperimentResult(rows=rows, aggregates=aggregate(rows), config=cfg.to_dict(), extras=extras)


def run_latent(cfg: ExperimentConfig) -> ExperimentResult:
    """Scaling study for the noisy linear feature map phi = <x, w> + z.

    Requires the identity activation with gamma > 0 (gamma = 0 makes the
    kernel rank deficient whenever n > d).  Also reports the exact-fit noise
    residual and the sigma_min(X) gate for the trend assertion.
    """
    if cfg.activation != IDENTITY or cfg.gamma <= 0:
        raise WrongSpec("latent study needs activation='identity' and gamma > 0")
    if len(cfg.N_list) < 2:
        raise ValueError("latent study needs at least two widths")
    rows, extras = _scaling_rows(cfg, LATENT)
    extras["slopes"] = _fit_slopes(rows)
    smins = np.array(list(extras["sigma_min"].values()))
    c0 = float(np.min(smins) / math.sqrt(cfg.n))
    extras["c0"] = c0
    extras["lemma_gate_ok"] = bool(cfg.n >= 2 * cfg.d / max(c0, 1e-300) ** 2)
    extras["noise_residuals"] = {
        k: {"mean": float(np.mean(v)), "values": v} for k, v in extras["noise_residuals"].items()
    }
    return ExperimentResult(rows=rows, aggregates=aggregate(rows), config=cfg.to_dict(), extras=extras)


def run_audit(cfg: ExperimentConfig) -> dict:
    """One JSON document with the Hermite profile, assumption proxies, and the
    event budget of a finite-vs-reference pair on the configured instance."""
    spec, ds = cfg.feature_spec(), cfg.data_spec()
    seed = cfg.seeds[0]
    inst = sample_data(ds, cfg.n, seed)

    profile = hermite_coefficients(cfg.activation, cfg.m_max, max(cfg.quad_order, 2 * cfg.m_max + 20))
    condition = hermite_condition_check(profile, ell=1, C0=cfg.C0)

    method = _closed_form_method(spec)
    oracle = kernel_matrix(spec, inst.X, method=method, mc_samples=100_000,
                           seed=derived_seed(seed, "kernel"))
    report = assumption_report(spec, inst, oracle, n_samples=20_000, eta=cfg.eta,
                               directions=128, seed=derived_seed(seed, "directions"))

    doc = {
        "config": cfg.to_dict(),
        "hermite": as_json_dict(profile),
        "hermite_condition": as_json_dict(condition),
        "assumptions": as_json_dict(report),
    }

    p_dual = next((p for p in cfg.p_list if p > 1), None)
    if p_dual is not None:
        pen = PenaltySpec.pnorm(p_dual)
        N = cfg.N_list[-1]
        W = sample_weights(spec, cfg.d, N, seed)
        Phi = featurize(spec, inst.X, W, seed=seed)
        sol = solve_dual(Phi, inst.y, pen, cfg.solver)
        ref_seed = derived_seed(seed, "reference")
        W_ref = sample_weights(spec, cfg.d, cfg.N_ref, ref_seed)
        Phi_ref = featurize(spec, inst.X, W_ref, seed=ref_seed)
        sol_ref = solve_dual(Phi_ref, inst.y, pen, cfg.solver)
        if sol.converged and sol_ref.converged:
            budget = event_audit(
                inst, pen, spec,
                SolvedModel(W, Phi, sol),
                SolvedModel(W_ref, Phi_ref, sol_ref),
                oracle, ds, min(cfg.M_test, 8_000), derived_seed(seed, "test"),
            )
            doc["event_budget"] = as_json_dict(budget)
        else:
            doc["event_budget"] = {"error": "finite or reference solve did not converge"}
    return doc


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def persist(result: ExperimentResult, out_dir) -> Path:
    """Write rows.csv and summary.json under `out_dir`; returns the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rows.csv", "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in result.rows:
            fh.write(",".join(_fmt(getattr(r, c)) for c in CSV_COLUMNS) + "\n")
    summary = {
        "config": result.config,
        "aggregates": result.aggregates,
        "extras": result.extras,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, default=str)
    return out


def _parse_row(parts: list[str]) -> Row:
    return Row(
        experiment=parts[0],
        p=float(parts[1]),
        n=int(parts[2]),
        N=int(parts[3]),
        seed=int(parts[4]),
        test_error=float(parts[5]),
        l2_to_ref=float(parts[6]),
        solver_iters=int(parts[7]),
        converged=parts[8] == "true",
        wall_ms=float(parts[9]),
    )


def load(path) -> ExperimentResult:
    """Load a persisted run (a directory with rows.csv, or a bare CSV file)."""
    path = Path(path)
    csv_path = path / "rows.csv" if path.is_dir() else path
    if not csv_path.exists():
        raise FileNotFoundError(csv_path)
    with open(csv_path) as fh:
        header = fh.readline().strip()
        if header.split(",") != list(CSV_COLUMNS):
            raise SchemaMismatch(f"unexpected columns: {header!r}")
        rows = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(CSV_COLUMNS):
                raise SchemaMismatch(f"row has {len(parts)} fields: {line!r}")
            rows.append(_parse_row(parts))
    config: dict = {}
    extras: dict = {}
    aggregates = aggregate(rows)
    summary_path = (path if path.is_dir() else path.parent) / "summary.json"
    if summary_path.exists():
        with open(summary_path) as fh:
            summary = json.load(fh)
        config = summary.get("config", {})
        extras = summary.get("extras", {})
        aggregates = summary.get("aggregates", aggregates)
    return ExperimentResult(rows=rows, aggregates=aggregates, config=config, extras=extras)

"""End-to-end pipeline: simulate/load, fit, average, bootstrap, benchmark.

Stages communicate through plain dataclasses so the CLI can run them
end-to-end or restart from files. All CSV numbers are written with full
``repr`` precision, making outputs byte-reproducible for a fixed config
and seed regardless of worker count.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .basis import DesignMatrix, assemble, build_basis
from .benchmark import BenchmarkResult, bootstrap_glm, fit_true_glm
from .bma import (
    CalibrationError,
    CalibrationResult,
    CandidateModels,
    PosteriorDistribution,
    PosteriorSummary,
    PriorSpec,
    calibrate_lambda_g,
    candidate_models,
    find_extreme_lambda,
    posterior,
    summarize,
)
from .bootstrap import (
    BootstrapMatrix,
    ErrorDecomposition,
    ReplicationContext,
    ReplicationFit,
    ReplicationResult,
    apply_temporary_gates,
    assemble as assemble_bootstrap,
    decompose,
    process_error,
    pseudo_data,
    residuals,
)
from .config import (
    STREAM_BOOT,
    STREAM_CV,
    STREAM_GLM,
    STREAM_PROCESS,
    STREAM_SIM,
    RunConfig,
    spec_from_file,
    stream_int,
    substream,
)
from .dispersion import DispersionEstimate, fit_gamma_glm, phi_mle
from .forecast import ForecastContext, ModelForecast, build_forecast_context, extrapolate
from .gates import GateSet, gate_check, widen
from .lasso import CvResult, PathFit, PenaltyPath, cross_validate, fit_path, lambda_max, make_path
from .simulate import SimulatedTriangle, SimulationSpec, dataset_spec, simulate
from .triangle import Triangle, read_triangle_csv, write_triangle_csv

# Paper-table ordering of prior flavors, simple to complex.
REPORT_ORDER = ("simple", "1se", "mincv", "complex")


def _ordered_flavors(present) -> list[str]:
    return [f for f in REPORT_ORDER if f in present]


@dataclass
class PrimaryResult:
    """Everything produced before (and reused by) the bootstrap."""

    config: RunConfig
    spec: Optional[SimulationSpec]
    sim: Optional[SimulatedTriangle]
    triangle: Triangle
    dm: DesignMatrix
    path: PenaltyPath
    fit: PathFit
    cv: CvResult
    dispersion: DispersionEstimate
    fctx: ForecastContext
    forecasts: list[ModelForecast]
    primary_forecast: ModelForecast
    surviving_ids: np.ndarray
    gate_failures: dict[str, int]
    gates: GateSet
    priors: dict[str, PriorSpec]
    calibrations: dict[str, CalibrationResult]
    flavor_notes: dict[str, str]
    cands_full: CandidateModels
    cands_surviving: CandidateModels
    posteriors: dict[str, PosteriorDistribution]
    summaries: dict[str, PosteriorSummary]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def raw_1se_reserve(self) -> float:
        return self.forecasts[self.cv.q_1se - 1].reserve


@dataclass
class BootstrapStage:
    """Per-gate-level, per-flavor bootstrap matrices and decompositions."""

    process_cov: float
    matrices: dict[str, dict[str, BootstrapMatrix]]  # label -> flavor -> matrix
    decompositions: dict[str, dict[str, ErrorDecomposition]]
    n_replications: int
    timings: dict[str, float] = field(default_factory=dict)


def _load_triangle(config: RunConfig) -> tuple[Optional[SimulationSpec], Optional[SimulatedTriangle], Triangle]:
    if config.triangle_file is not None:
        return None, None, read_triangle_csv(config.triangle_file)
    if config.dataset is not None:
        spec = dataset_spec(config.dataset, config.side)
    else:
        spec = spec_from_file(config.spec_file)
        if spec.I != config.side:
            raise ValueError(
                f"spec file has side {spec.I} but the run requests side {config.side}"
            )
    sim = simulate(spec, stream_int(config.seed, STREAM_SIM))
    return spec, sim, sim.triangle


def run_primary(config: RunConfig) -> PrimaryResult:
    """Simulate or load the triangle, fit the path, select, average."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    spec, sim, triangle = _load_triangle(config)
    side = triangle.I
    y = triangle.as_array()
    timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dm = assemble(build_basis(side), triangle.cells, side)
    lmax = lambda_max(dm, y)
    path = make_path(lmax, config.q_count, config.path_ratio)
    fit = fit_path(dm, y, path)
    timings["path_fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cv_path = PenaltyPath(fit.lambdas)
    cv = cross_validate(dm, y, cv_path, folds=config.folds,
                        seed=substream(config.seed, STREAM_CV),
                        workers=config.resolve_workers())
    timings["cross_validation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    structure = np.union1d([0], fit.active_set(cv.q_1se))
    _, mu_structure = fit_gamma_glm(dm.matrix[:, structure], y)
    dispersion = phi_mle(y, mu_structure, structure=tuple(int(k) for k in structure))
    timings["dispersion"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fctx = build_forecast_context(dm, side)
    forecasts = [extrapolate(fit.betas[k], fctx, model_id=k + 1) for k in range(fit.n_models)]
    primary_forecast = forecasts[cv.q_1se - 1]
    gates = config.resolve_gates()
    gate_failures = {g.aggregate_id: 0 for g in gates}
    surviving = []
    for f in forecasts:
        res = gate_check(f, primary_forecast, gates)
        for gid in res.failed_gates:
            gate_failures[gid] += 1
        if res.passed:
            surviving.append(f.model_id)
    surviving_ids = np.array(surviving, dtype=np.int64)
    timings["forecasts"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reserves = [f.reserve for f in forecasts]
    cands_full = candidate_models(fit, y, dispersion.phi, reserves)
    priors: dict[str, PriorSpec] = {}
    calibrations: dict[str, CalibrationResult] = {}
    notes: dict[str, str] = {}
    for flavor, target in (("1se", cv.q_1se), ("mincv", cv.q_min)):
        if flavor not in config.flavors:
            continue
        try:
            cal = calibrate_lambda_g(cands_full, target)
        except CalibrationError as err:
            cal = _nearest_calibration(cands_full, target, err)
            notes[flavor] = f"target model {target} unattainable; {err}"
        calibrations[flavor] = cal
        priors[flavor] = PriorSpec(flavor=flavor, lambda_g=cal.lambda_g)
    for flavor, side_name in (("simple", "simple"), ("complex", "complex")):
        if flavor not in config.flavors:
            continue
        lam = find_extreme_lambda(cands_full, cv.q_1se, cv.q_min, side_name, config.epsilon)
        if lam is None:
            notes[flavor] = "no dispersion attains the requested tail mass"
        else:
            priors[flavor] = PriorSpec(flavor=flavor, lambda_g=lam)

    keep = np.isin(cands_full.model_ids, surviving_ids)
    cands_surviving = cands_full.subset(keep)
    posteriors = {fl: posterior(cands_surviving, pr) for fl, pr in priors.items()}
    summaries = {
        fl: summarize(po, cands_surviving.reserves) for fl, po in posteriors.items()
    }
    timings["averaging"] = time.perf_counter() - t0

    return PrimaryResult(
        config=config, spec=spec, sim=sim, triangle=triangle, dm=dm, path=path, fit=fit,
        cv=cv, dispersion=dispersion, fctx=fctx, forecasts=forecasts,
        primary_forecast=primary_forecast, surviving_ids=surviving_ids,
        gate_failures=gate_failures, gates=gates, priors=priors,
        calibrations=calibrations, flavor_notes=notes, cands_full=cands_full,
        cands_surviving=cands_surviving, posteriors=posteriors, summaries=summaries,
        timings=timings,
    )


def _nearest_calibration(cands: CandidateModels, target: int,
                         err: CalibrationError) -> CalibrationResult:
    """Fall back to the attainable mode closest in penalized-L1 norm."""
    l1_t = float(cands.l1_norms[np.flatnonzero(cands.model_ids == target)[0]])
    best: Optional[CalibrationResult] = None
    best_gap = np.inf
    for q in cands.model_ids:
        try:
            cal = calibrate_lambda_g(cands, int(q))
        except CalibrationError:
            continue
        gap = abs(float(cands.l1_norms[np.flatnonzero(cands.model_ids == q)[0]]) - l1_t)
        if gap < best_gap:
            best, best_gap = cal, gap
    if best is None:
        raise err
    return best


# ---------------------------------------------------------------------------
# Bootstrap driving


_WORKER_STATE: dict = {}


def _init_worker(ctx: ReplicationContext, mu: np.ndarray, resid_values: np.ndarray,
                 resid_shift: float, seed: int) -> None:
    from .bootstrap import ResidualSet

    _WORKER_STATE["ctx"] = ctx
    _WORKER_STATE["mu"] = mu
    _WORKER_STATE["resid"] = ResidualSet(values=resid_values, shift=resid_shift)
    _WORKER_STATE["seed"] = seed


def _one_replication(b: int) -> ReplicationFit:
    from .bootstrap import fit_replication

    ctx = _WORKER_STATE["ctx"]
    rng = np.random.default_rng(substream(_WORKER_STATE["seed"], STREAM_BOOT, b))
    y_b, hits = pseudo_data(_WORKER_STATE["mu"], ctx.phi, _WORKER_STATE["resid"], rng)
    return fit_replication(y_b, ctx, b, floor_hits=hits)


def run_bootstrap(primary: PrimaryResult) -> BootstrapStage:
    """Fit all replications once, then assemble every gate level and flavor.

    Replication fits (the expensive part) are shared between the configured
    gates and any widened variant: provisional and final censoring are
    applied per analysis from the raw per-model records.
    """
    config = primary.config
    timings: dict[str, float] = {}
    mu_primary = primary.fit.fitted[primary.cv.q_1se - 1]
    resid = residuals(primary.triangle.as_array(), mu_primary, primary.dispersion.phi)
    ctx = ReplicationContext(
        dm=primary.dm,
        fctx=primary.fctx,
        q_count=config.q_count,
        path_ratio=config.path_ratio,
        phi=primary.dispersion.phi,
        primary_forecast=primary.primary_forecast,
        gates=primary.gates,
    )

    t0 = time.perf_counter()
    workers = config.resolve_workers()
    ids = list(range(config.bootstrap_b))
    if workers <= 1 or len(ids) <= 1:
        _init_worker(ctx, mu_primary, resid.values, resid.shift, config.seed)
        raw = [_one_replication(b) for b in ids]
    else:
        with ProcessPoolExecutor(
            max_workers=min(workers, len(ids)),
            initializer=_init_worker,
            initargs=(ctx, mu_primary, resid.values, resid.shift, config.seed),
        ) as pool:
            raw = list(pool.map(_one_replication, ids, chunksize=1))
    raw.sort(key=lambda r: r.b)
    timings["replication_fits"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rng = np.random.default_rng(substream(config.seed, STREAM_PROCESS))
    process_cov = process_error(primary.primary_forecast, primary.dispersion.phi,
                                config.process_sims, rng)
    timings["process_error"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    gate_levels: dict[str, GateSet] = {"original": primary.gates}
    if config.widen_factor is not None:
        gate_levels["widened"] = widen(primary.gates, config.widen_factor)
    matrices: dict[str, dict[str, BootstrapMatrix]] = {}
    decomps: dict[str, dict[str, ErrorDecomposition]] = {}
    for label, gates in gate_levels.items():
        gated = [apply_temporary_gates(r, ctx, gates=gates) for r in raw]
        matrices[label] = {}
        decomps[label] = {}
        for flavor, prior in primary.priors.items():
            matrix = assemble_bootstrap(
                gated, primary.summaries[flavor].mean, primary.primary_forecast,
                gates, prior,
            )
            matrices[label][flavor] = matrix
            if matrix.n_surviving >= 2:
                decomps[label][flavor] = decompose(matrix, process_cov)
    timings["assembly"] = time.perf_counter() - t0

    return BootstrapStage(
        process_cov=process_cov,
        matrices=matrices,
        decompositions=decomps,
        n_replications=config.bootstrap_b,
        timings=timings,
    )


def run_benchmark(primary: PrimaryResult, bootstrap: Optional[BootstrapStage]) -> BenchmarkResult:
    """Known-structure GLM bootstrap compared against the 1se parameter error."""
    if primary.spec is None:
        raise ValueError("the benchmark needs a synthetic run (known structure)")
    glm = fit_true_glm(primary.spec, primary.triangle)
    lasso_w_pa = float("nan")
    if bootstrap is not None:
        dec = bootstrap.decompositions.get("original", {}).get("1se")
        if dec is not None:
            lasso_w_pa = dec.w_parameter
    return bootstrap_glm(
        glm,
        primary.triangle,
        primary.dispersion.phi,
        primary.gates,
        primary.config.bootstrap_b,
        substream(primary.config.seed, STREAM_GLM),
        lasso_w_parameter=lasso_w_pa,
    )


# ---------------------------------------------------------------------------
# Artifact emission


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def emit_truth(sim: SimulatedTriangle, spec: SimulationSpec, out_dir: str) -> None:
    """Sidecar with the generating means and the true reserve."""
    past = set(sim.triangle.cells)
    rows = [
        (c.i, c.j, m, "past" if c in past else "future")
        for c, m in sim.true_means.items()
    ]
    write_csv(os.path.join(out_dir, "truth.csv"), ["i", "j", "mean", "region"], rows)
    meta = {
        "true_reserve": sim.true_reserve,
        "seed": sim.seed,
        "dispersion": spec.dispersion,
    }
    with open(os.path.join(out_dir, "sim_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def emit_primary(primary: PrimaryResult, out_dir: str) -> None:
    fit, cv = primary.fit, primary.cv
    rows = []
    for k in range(fit.n_models):
        rows.append((
            k + 1,
            float(fit.lambdas[k]),
            int(np.sum(fit.betas[k] != 0.0)),
            float(fit.deviances[k]),
            float(cv.cv_mean[k]) if k < len(cv.cv_mean) else "",
            float(cv.cv_se[k]) if k < len(cv.cv_se) else "",
        ))
    write_csv(
        os.path.join(out_dir, "path_diagnostics.csv"),
        ["q", "lambda", "active_size", "deviance", "cv_mean", "cv_se"],
        rows,
    )

    true_reserve = primary.sim.true_reserve if primary.sim is not None else ""
    rows = []
    for flavor in _ordered_flavors(primary.priors):
        s = primary.summaries[flavor]
        rows.append((
            flavor,
            float(primary.priors[flavor].lambda_g),
            true_reserve,
            primary.raw_1se_reserve,
            s.mean,
            s.cov,
        ))
    write_csv(
        os.path.join(out_dir, "primary_table.csv"),
        ["flavor", "lambda_g", "true_reserve", "raw_1se_reserve", "posterior_mean", "imse_cov"],
        rows,
    )

    for flavor, post in primary.posteriors.items():
        rows = [
            (int(q), float(r), float(p))
            for q, r, p in zip(post.model_ids, primary.cands_surviving.reserves, post.probs)
        ]
        write_csv(
            os.path.join(out_dir, f"posterior_{flavor}.csv"),
            ["q", "reserve", "prob"],
            rows,
        )

    if primary.config.emit_primary_forecast:
        f = primary.primary_forecast
        rows = [(c.i, c.j, float(v)) for c, v in zip(f.region.cells, f.cell_forecasts)]
        write_csv(os.path.join(out_dir, "primary_forecast.csv"), ["i", "j", "forecast"], rows)


def emit_bootstrap(stage: BootstrapStage, primary: PrimaryResult, out_dir: str) -> None:
    true_reserve = primary.sim.true_reserve if primary.sim is not None else ""
    for label, by_flavor in stage.matrices.items():
        suffix = "" if label == "original" else f"_{label}"
        for flavor in _ordered_flavors(by_flavor):
            matrix = by_flavor[flavor]
            rows = []
            for r in matrix.rows:
                for q, reserve, prob in zip(r.model_ids, r.reserves, r.probs):
                    rows.append((r.b, int(q), float(reserve), float(prob)))
            write_csv(
                os.path.join(out_dir, f"bootstrap_matrix_{flavor}{suffix}.csv"),
                ["b", "q", "reserve", "prob"],
                rows,
            )

        table = []
        for flavor in _ordered_flavors(by_flavor):
            dec = stage.decompositions[label].get(flavor)
            if dec is None:
                continue
            table.append((
                flavor, true_reserve, dec.mean, dec.w_model,
                by_flavor[flavor].n_surviving,
            ))
        write_csv(
            os.path.join(out_dir, f"bootstrap_table{suffix}.csv"),
            ["flavor", "true_reserve", "posterior_mean", "imse_cov", "n_surviving"],
            table,
        )

        table = []
        for flavor in _ordered_flavors(stage.decompositions[label]):
            dec = stage.decompositions[label][flavor]
            table.append((
                flavor, true_reserve, dec.mean, dec.w_model, dec.w_parameter,
                dec.w_model_parameter, dec.w_process, dec.w_subtotal, dec.n_surviving,
            ))
        write_csv(
            os.path.join(out_dir, f"decomposition{suffix}.csv"),
            ["flavor", "true_reserve", "posterior_mean", "imse_cov", "parameter_cov",
             "imse_parameter_cov", "process_cov", "subtotal_cov", "n_surviving"],
            table,
        )

    if "widened" in stage.decompositions:
        rows = []
        for flavor in _ordered_flavors(stage.decompositions["original"]):
            if flavor not in stage.decompositions["widened"]:
                continue
            rows.append((
                flavor,
                stage.decompositions["original"][flavor].w_subtotal,
                stage.decompositions["widened"][flavor].w_subtotal,
            ))
        write_csv(
            os.path.join(out_dir, "gate_sensitivity.csv"),
            ["flavor", "subtotal_cov_original", "subtotal_cov_widened"],
            rows,
        )


def emit_benchmark(result: BenchmarkResult, primary: PrimaryResult, out_dir: str) -> None:
    true_reserve = primary.sim.true_reserve if primary.sim is not None else ""
    write_csv(
        os.path.join(out_dir, "benchmark.csv"),
        ["model", "true_reserve", "mean_reserve", "parameter_cov", "n_surviving"],
        [
            ("lasso_1se", true_reserve,
             primary.summaries.get("1se").mean if "1se" in primary.summaries else "",
             result.lasso_w_parameter, ""),
            ("glm_true_structure", true_reserve, result.glm_reserve,
             result.glm_w_parameter, result.n_surviving),
        ],
    )


def build_manifest(
    primary: PrimaryResult,
    stage: Optional[BootstrapStage],
    benchmark: Optional[BenchmarkResult],
    elapsed: float,
) -> dict:
    config = primary.config
    manifest = {
        "version": __version__,
        "config": config.to_dict(),
        "gates": primary.gates.as_dict(),
        "lambda_max": float(primary.path.lambdas[0]),
        "path_truncated": primary.fit.truncated,
        "n_models": primary.fit.n_models,
        "q_min": primary.cv.q_min,
        "q_1se": primary.cv.q_1se,
        "phi": primary.dispersion.phi,
        "flavor_lambdas": {f: p.lambda_g for f, p in primary.priors.items()},
        "flavor_notes": primary.flavor_notes,
        "calibration_intervals": {
            f: [c.lower, c.upper] for f, c in primary.calibrations.items()
        },
        "primary_gate_failures": primary.gate_failures,
        "n_surviving_models": int(len(primary.surviving_ids)),
        "raw_1se_reserve": primary.raw_1se_reserve,
        "posterior_means": {f: s.mean for f, s in primary.summaries.items()},
        "imse_covs": {f: s.cov for f, s in primary.summaries.items()},
        "true_reserve": primary.sim.true_reserve if primary.sim is not None else None,
        "timings": {"primary": primary.timings, "total_seconds": elapsed},
    }
    if stage is not None:
        manifest["process_cov"] = stage.process_cov
        manifest["bootstrap"] = {
            label: {
                flavor: {
                    "n_surviving": m.n_surviving,
                    "n_dead": m.n_dead,
                    "n_empty": m.n_empty,
                    "n_thin": m.n_thin,
                    "scaling_factor": m.scaling_factor,
                    "floor_hits": m.floor_hits,
                    "gate_failures": m.gate_failures,
                }
                for flavor, m in by_flavor.items()
            }
            for label, by_flavor in stage.matrices.items()
        }
        manifest["timings"]["bootstrap"] = stage.timings
    if benchmark is not None:
        manifest["benchmark"] = {
            "glm_reserve": benchmark.glm_reserve,
            "glm_parameter_cov": benchmark.glm_w_parameter,
            "lasso_parameter_cov": benchmark.lasso_w_parameter,
            "lasso_exceeds_glm": benchmark.lasso_exceeds_glm,
            "n_surviving": benchmark.n_surviving,
        }
    return manifest


def run_all(config: RunConfig) -> dict:
    """Run the configured stages and write all artifacts; returns the manifest."""
    started = time.perf_counter()
    os.makedirs(config.out_dir, exist_ok=True)
    primary = run_primary(config)
    write_triangle_csv(primary.triangle, os.path.join(config.out_dir, "triangle.csv"))
    if primary.sim is not None:
        emit_truth(primary.sim, primary.spec, config.out_dir)
    emit_primary(primary, config.out_dir)

    stage = None
    if config.bootstrap_b > 0:
        stage = run_bootstrap(primary)
        emit_bootstrap(stage, primary, config.out_dir)

    bench = None
    if config.benchmark:
        bench = run_benchmark(primary, stage)
        emit_benchmark(bench, primary, config.out_dir)

    manifest = build_manifest(primary, stage, bench, time.perf_counter() - started)
    with open(os.path.join(config.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# Restart from stored artifacts


def read_bootstrap_matrix_csv(path: str, flavor: str) -> BootstrapMatrix:
    """Rebuild a bootstrap matrix (rows only) from its CSV."""
    by_b: dict[int, list[tuple[int, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            by_b.setdefault(int(row["b"]), []).append(
                (int(row["q"]), float(row["reserve"]), float(row["prob"]))
            )
    rows = []
    for b in sorted(by_b):
        entries = by_b[b]
        ids = np.array([e[0] for e in entries], dtype=np.int64)
        reserves = np.array([e[1] for e in entries])
        probs = np.array([e[2] for e in entries])
        mean = float(np.sum(probs * reserves))
        variance = float(np.sum(probs * (reserves - mean) ** 2))
        rows.append(ReplicationResult(
            b=b, model_ids=ids, reserves=reserves, probs=probs,
            posterior_mean=mean, posterior_cov=float(np.sqrt(variance) / mean),
            s2_within=variance, survived=True,
        ))
    return BootstrapMatrix(
        flavor=flavor, rows=tuple(rows), scaling_factor=float("nan"),
        n_requested=len(rows), n_dead=0, n_empty=0, n_thin=0, floor_hits=0,
        gate_failures={},
    )


def report_from_dir(run_dir: str, out_dir: Optional[str] = None) -> None:
    """Recompute decomposition tables from stored matrices and the manifest."""
    out_dir = out_dir or run_dir
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    process_cov = manifest.get("process_cov")
    if process_cov is None:
        raise ValueError("manifest has no process_cov; was the bootstrap stage run?")
    true_reserve = manifest.get("true_reserve")
    true_field = true_reserve if true_reserve is not None else ""
    for label, by_flavor in manifest.get("bootstrap", {}).items():
        suffix = "" if label == "original" else f"_{label}"
        table = []
        for flavor in _ordered_flavors(by_flavor):
            path = os.path.join(run_dir, f"bootstrap_matrix_{flavor}{suffix}.csv")
            if not os.path.exists(path):
                continue
            matrix = read_bootstrap_matrix_csv(path, flavor)
            if matrix.n_surviving < 2:
                continue
            dec = decompose(matrix, process_cov)
            table.append((
                flavor, true_field, dec.mean, dec.w_model, dec.w_parameter,
                dec.w_model_parameter, dec.w_process, dec.w_subtotal, dec.n_surviving,
            ))
        write_csv(
            os.path.join(out_dir, f"decomposition{suffix}.csv"),
            ["flavor", "true_reserve", "posterior_mean", "imse_cov", "parameter_cov",
             "imse_parameter_cov", "process_cov", "subtotal_cov", "n_surviving"],
            table,
        )

"""Semi-parametric bootstrap of the whole fitting pipeline.

Centered standardized residuals of the primary fit are resampled to build
pseudo triangles; each replication reruns the penalty path, forecasts every
model, and provisionally censors against widened gates. Replications are
then rescaled so their average posterior mean matches the primary one,
censored at the configured gates, and reduced to a ragged bootstrap matrix
of (reserve, posterior probability) rows. The matrix decomposes forecast
error into a model-dispersion part (the mean within-replication posterior
variance), a parameter part (the variance of posterior means across
replications), and, added in quadrature, the simulated process error.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .basis import DesignMatrix
from .bma import CandidateModels, PriorSpec, gamma_loglik, posterior, summarize
from .forecast import AGGREGATE_SPANS, ForecastContext, ModelForecast, extrapolate
from .gates import GATE_IDS, GateSet, widen
from .lasso import fit_path, lambda_max, make_path

TEMP_GATE_FACTOR = 1.4
MIN_MODELS = 5
PROB_FLOOR = 1e-4
PSEUDO_FLOOR = 0.01


@dataclass(frozen=True)
class ResidualSet:
    """Centered standardized residuals of the primary fit."""

    values: np.ndarray
    shift: float

    def __post_init__(self) -> None:
        if abs(float(np.mean(self.values))) > 1e-12:
            raise ValueError("residuals must be centered to zero mean")


def residuals(y: np.ndarray, mu: np.ndarray, phi: float) -> ResidualSet:
    """Standardize by the fitted Gamma scale (sd = sqrt(phi)*mu) and center."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(mu <= 0) or not phi > 0:
        raise ValueError("fitted means and dispersion must be positive")
    rho = (y - mu) / (np.sqrt(phi) * mu)
    shift = float(np.mean(rho))
    centered = rho - shift
    centered -= np.mean(centered)  # absorb rounding in the shift
    return ResidualSet(values=centered, shift=shift)


def pseudo_data(
    mu: np.ndarray,
    phi: float,
    resid: ResidualSet,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """One resampled pseudo triangle and the count of floored cells.

    Cells are mean plus rescaled resampled residual, floored at 1% of the
    fitted mean to stay inside the positive support.
    """
    n = len(mu)
    draw = resid.values[rng.integers(0, len(resid.values), size=n)]
    y_b = mu * (1.0 + np.sqrt(phi) * draw)
    floor = PSEUDO_FLOOR * mu
    hits = int(np.sum(y_b < floor))
    return np.maximum(y_b, floor), hits


@dataclass(frozen=True)
class ReplicationContext:
    """Everything a replication reuses from the primary run."""

    dm: DesignMatrix
    fctx: ForecastContext
    q_count: int
    path_ratio: float
    phi: float
    primary_forecast: ModelForecast
    gates: GateSet
    warm_betas: Optional[np.ndarray] = None
    temp_factor: float = TEMP_GATE_FACTOR


@dataclass(frozen=True)
class ReplicationFit:
    """Raw per-model outputs of one replication (possibly temp-censored)."""

    b: int
    floor_hits: int
    dead: bool
    model_ids: np.ndarray
    reserves: np.ndarray
    aq_sums: np.ndarray  # (n_models, len(AGGREGATE_SPANS))
    pq_sums: np.ndarray
    delinquent: np.ndarray
    l1_norms: np.ndarray
    log_likelihoods: np.ndarray

    @property
    def n_models(self) -> int:
        return len(self.model_ids)

    def subset(self, mask: np.ndarray) -> "ReplicationFit":
        return replace(
            self,
            model_ids=self.model_ids[mask],
            reserves=self.reserves[mask],
            aq_sums=self.aq_sums[mask],
            pq_sums=self.pq_sums[mask],
            delinquent=self.delinquent[mask],
            l1_norms=self.l1_norms[mask],
            log_likelihoods=self.log_likelihoods[mask],
        )


@dataclass(frozen=True)
class ReplicationResult:
    """A finished bootstrap-matrix row: rescaled, censored, renormalized."""

    b: int
    model_ids: np.ndarray
    reserves: np.ndarray
    probs: np.ndarray
    posterior_mean: float
    posterior_cov: float
    s2_within: float
    survived: bool


@dataclass(frozen=True)
class BootstrapMatrix:
    """Surviving replication rows plus audit counters."""

    flavor: str
    rows: tuple[ReplicationResult, ...]
    scaling_factor: float
    n_requested: int
    n_dead: int
    n_empty: int
    n_thin: int
    floor_hits: int
    gate_failures: dict[str, int]

    @property
    def n_surviving(self) -> int:
        return len(self.rows)

    @property
    def q_max(self) -> int:
        return max((int(np.max(r.model_ids)) for r in self.rows if len(r.model_ids)), default=0)


def _gate_mask(fit: ReplicationFit, primary: ModelForecast, gates: GateSet,
               counts: Optional[dict[str, int]] = None) -> np.ndarray:
    """Vectorized gate check of every model in a replication against the
    primary aggregates; optionally accumulates per-gate failure counts."""
    ok = ~fit.delinquent
    for g in gates:
        span = int(g.aggregate_id[2:])
        col = AGGREGATE_SPANS.index(span)
        cand = fit.aq_sums[:, col] if g.aggregate_id.startswith("AQ") else fit.pq_sums[:, col]
        prim = (primary.aq_sums[span] if g.aggregate_id.startswith("AQ")
                else primary.pq_sums[span])
        if prim <= 0:
            bad = np.ones(fit.n_models, dtype=bool)
        else:
            ratio = cand / prim
            bad = (ratio < g.lower) | (ratio > g.upper)
        if counts is not None:
            counts[g.aggregate_id] += int(np.sum(bad & ~fit.delinquent))
        ok &= ~bad
    return ok


def fit_replication(y_b: np.ndarray, ctx: ReplicationContext, b: int,
                    floor_hits: int = 0) -> ReplicationFit:
    """Rerun the penalty path on a pseudo triangle and forecast every model."""
    try:
        lmax = lambda_max(ctx.dm, y_b)
        path = make_path(lmax, ctx.q_count, ctx.path_ratio)
        fit = fit_path(ctx.dm, y_b, path, warm_betas=ctx.warm_betas)
    except (RuntimeError, ValueError):
        empty = np.array([], dtype=np.int64)
        zeros = np.zeros((0, len(AGGREGATE_SPANS)))
        return ReplicationFit(
            b=b, floor_hits=floor_hits, dead=True,
            model_ids=empty, reserves=np.array([]), aq_sums=zeros, pq_sums=zeros,
            delinquent=np.array([], dtype=bool), l1_norms=np.array([]),
            log_likelihoods=np.array([]),
        )
    n_q = fit.n_models
    reserves = np.empty(n_q)
    aq = np.empty((n_q, len(AGGREGATE_SPANS)))
    pq = np.empty((n_q, len(AGGREGATE_SPANS)))
    delinquent = np.zeros(n_q, dtype=bool)
    lls = np.empty(n_q)
    for k in range(n_q):
        f = extrapolate(fit.betas[k], ctx.fctx, model_id=k + 1)
        reserves[k] = f.reserve
        aq[k] = [f.aq_sums[n] for n in AGGREGATE_SPANS]
        pq[k] = [f.pq_sums[n] for n in AGGREGATE_SPANS]
        delinquent[k] = f.delinquent
        lls[k] = gamma_loglik(y_b, fit.fitted[k], ctx.phi)
    return ReplicationFit(
        b=b, floor_hits=floor_hits, dead=False,
        model_ids=fit.model_ids, reserves=reserves, aq_sums=aq, pq_sums=pq,
        delinquent=delinquent, l1_norms=fit.l1_norms(), log_likelihoods=lls,
    )


def apply_temporary_gates(fit: ReplicationFit, ctx: ReplicationContext,
                          gates: Optional[GateSet] = None) -> ReplicationFit:
    """Provisional censoring at widened gates, ahead of rescaling."""
    if fit.dead:
        return fit
    temp = widen(gates if gates is not None else ctx.gates, ctx.temp_factor)
    return fit.subset(_gate_mask(fit, ctx.primary_forecast, temp))


def run_replication(
    y_b: np.ndarray,
    ctx: ReplicationContext,
    b: int,
    floor_hits: int = 0,
) -> ReplicationFit:
    """One bootstrap replication: path refit, forecasts, provisional gates.

    Rescaling, final censoring and posterior evaluation happen in
    :func:`assemble` because the rescaling factor pools all replications.
    """
    return apply_temporary_gates(fit_replication(y_b, ctx, b, floor_hits), ctx)


def _row_posterior(fit: ReplicationFit, prior: PriorSpec) -> tuple[np.ndarray, float]:
    cands = CandidateModels(
        model_ids=fit.model_ids,
        log_likelihoods=fit.log_likelihoods,
        l1_norms=fit.l1_norms,
        reserves=fit.reserves,
    )
    post = posterior(cands, prior)
    return post.probs, float(np.sum(post.probs * fit.reserves))


def assemble(
    replications: Sequence[ReplicationFit],
    primary_posterior_mean: float,
    primary_forecast: ModelForecast,
    gates: GateSet,
    prior: PriorSpec,
) -> BootstrapMatrix:
    """Rescale, censor and renormalize replications into the bootstrap matrix.

    The scaling factor is chosen so the average provisional posterior mean
    across live replications equals the primary posterior mean; every model
    forecast is scaled by it before the final censoring. Rows left with
    fewer than ``MIN_MODELS`` models of probability above ``PROB_FLOOR``
    are dropped.
    """
    ordered = sorted(replications, key=lambda r: r.b)
    n_dead = sum(r.dead for r in ordered)
    live = [r for r in ordered if not r.dead and r.n_models > 0]
    n_empty = len(ordered) - n_dead - len(live)
    if not live:
        raise ValueError("no live bootstrap replications to assemble")

    prov_means = np.array([_row_posterior(r, prior)[1] for r in live])
    factor = primary_posterior_mean / float(np.mean(prov_means))

    gate_failures = {k: 0 for k in GATE_IDS}
    rows: list[ReplicationResult] = []
    n_thin = 0
    for r in live:
        scaled = replace(
            r,
            reserves=r.reserves * factor,
            aq_sums=r.aq_sums * factor,
            pq_sums=r.pq_sums * factor,
        )
        keep = _gate_mask(scaled, primary_forecast, gates, counts=gate_failures)
        final = scaled.subset(keep)
        if final.n_models == 0:
            n_thin += 1
            continue
        probs, mean = _row_posterior(final, prior)
        if int(np.sum(probs > PROB_FLOOR)) < MIN_MODELS:
            n_thin += 1
            continue
        variance = float(np.sum(probs * (final.reserves - mean) ** 2))
        cov = float(np.sqrt(variance) / mean)
        rows.append(
            ReplicationResult(
                b=r.b,
                model_ids=final.model_ids,
                reserves=final.reserves,
                probs=probs,
                posterior_mean=mean,
                posterior_cov=cov,
                s2_within=variance,
                survived=True,
            )
        )
    return BootstrapMatrix(
        flavor=prior.flavor,
        rows=tuple(rows),
        scaling_factor=float(factor),
        n_requested=len(ordered),
        n_dead=n_dead,
        n_empty=n_empty,
        n_thin=n_thin,
        floor_hits=int(sum(r.floor_hits for r in ordered)),
        gate_failures=gate_failures,
    )


@dataclass(frozen=True)
class ErrorDecomposition:
    """Forecast-error components as coefficients of variation of the reserve."""

    mean: float
    s2_model: float
    w_model: float
    s2_parameter: float
    w_parameter: float
    w_model_parameter: float
    w_process: float
    w_subtotal: float
    n_surviving: int


def combine_covs(*covs: float) -> float:
    """Quadrature combination of coefficients of variation."""
    return float(np.sqrt(sum(c * c for c in covs)))


def decompose(matrix: BootstrapMatrix, process_cov: float) -> ErrorDecomposition:
    """Averages and variances over the bootstrap matrix rows.

    The model-dispersion variance is the mean within-row posterior
    variance; the parameter variance is the population variance of row
    posterior means. Their CoVs add in quadrature, and the process CoV
    joins them for the sub-total.
    """
    if matrix.n_surviving < 2:
        raise ValueError("error decomposition needs at least 2 surviving replications")
    means = np.array([r.posterior_mean for r in matrix.rows])
    s2_within = np.array([r.s2_within for r in matrix.rows])
    m = float(np.mean(means))
    s2_model = float(np.mean(s2_within))
    w_model = float(np.sqrt(s2_model) / m)
    s2_parameter = float(np.var(means))  # population variance
    w_parameter = float(np.sqrt(s2_parameter) / m)
    w_mp = combine_covs(w_parameter, w_model)
    return ErrorDecomposition(
        mean=m,
        s2_model=s2_model,
        w_model=w_model,
        s2_parameter=s2_parameter,
        w_parameter=w_parameter,
        w_model_parameter=w_mp,
        w_process=float(process_cov),
        w_subtotal=combine_covs(w_mp, process_cov),
        n_surviving=matrix.n_surviving,
    )


def pooled_variance(matrix: BootstrapMatrix) -> float:
    """Variance of the reserve over all (row, model) pairs, each row
    weighted uniformly and models by their posterior probabilities."""
    n = matrix.n_surviving
    total_mean = float(np.mean([r.posterior_mean for r in matrix.rows]))
    acc = 0.0
    for r in matrix.rows:
        acc += float(np.sum(r.probs * (r.reserves - total_mean) ** 2)) / n
    return acc


def process_error(
    forecast: ModelForecast,
    phi: float,
    n_sims: int,
    rng: np.random.Generator,
) -> float:
    """Coefficient of variation of the total of independent Gamma cells.

    Each future cell is drawn with mean equal to its forecast and variance
    phi times the squared forecast; the CoV of the simulated totals
    estimates pure process error.
    """
    mu = np.asarray(forecast.cell_forecasts, dtype=np.float64)
    if np.any(mu <= 0) or not phi > 0:
        raise ValueError("forecasts and dispersion must be positive")
    shape = 1.0 / phi
    totals = np.empty(n_sims)
    chunk = max(1, 262144 // max(1, len(mu)))
    done = 0
    while done < n_sims:
        take = min(chunk, n_sims - done)
        draws = rng.gamma(shape=shape, scale=phi * mu[None, :], size=(take, len(mu)))
        totals[done:done + take] = draws.sum(axis=1)
        done += take
    return float(np.std(totals) / np.mean(totals))

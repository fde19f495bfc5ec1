"""Model averaging across path models under Laplace priors.

Each candidate model carries a Gamma log-likelihood of the observed
triangle (at the fixed dispersion estimate) and the L1 norm of its
penalized coefficients. A Laplace prior with dispersion ``lambda_g``
weights models by exp(-lambda_g * l1); posterior probabilities follow by
normalizing likelihood times prior. Calibration routines find the
dispersion that places the posterior mode on a chosen model, and the
extreme dispersions at which almost all mass abandons the complex (or
simple) part of the path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .lasso import PathFit

FLAVORS = ("simple", "1se", "mincv", "complex")

_LAMBDA_LO = 1e-6
_LAMBDA_HI = 1e6


class CalibrationError(ValueError):
    """Raised when no prior dispersion attains the requested posterior mode."""


@dataclass(frozen=True)
class PriorSpec:
    """A named Laplace prior dispersion."""

    flavor: str
    lambda_g: float

    def __post_init__(self) -> None:
        if self.flavor not in FLAVORS + ("custom",):
            raise ValueError(f"unknown prior flavor {self.flavor!r}")
        if not self.lambda_g > 0:
            raise ValueError("prior dispersion must be positive")


@dataclass(frozen=True)
class CandidateModels:
    """Per-model quantities entering the averaging."""

    model_ids: np.ndarray
    log_likelihoods: np.ndarray
    l1_norms: np.ndarray
    reserves: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.model_ids)
        if not (len(self.log_likelihoods) == len(self.l1_norms) == len(self.reserves) == n):
            raise ValueError("candidate model arrays must be aligned")
        if n == 0:
            raise ValueError("candidate model set is empty")

    def subset(self, mask: np.ndarray) -> "CandidateModels":
        return CandidateModels(
            model_ids=self.model_ids[mask],
            log_likelihoods=self.log_likelihoods[mask],
            l1_norms=self.l1_norms[mask],
            reserves=self.reserves[mask],
        )


@dataclass(frozen=True)
class PosteriorDistribution:
    """Normalized model probabilities under one prior."""

    model_ids: np.ndarray
    log_weights: np.ndarray
    probs: np.ndarray
    flavor: str


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean/variance of the reserve and the discrete distribution."""

    mean: float
    variance: float
    cov: float
    distribution: tuple[tuple[int, float, float], ...]  # (model id, reserve, prob)


def gamma_loglik(y: np.ndarray, mu: np.ndarray, phi: float) -> float:
    """Gamma log-likelihood of observations y under means mu and dispersion phi.

    Shape is 1/phi and the per-cell rate shape/mu, so each cell has mean mu
    and squared coefficient of variation phi.
    """
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if np.any(y <= 0) or np.any(mu <= 0) or not phi > 0:
        raise ValueError("gamma likelihood needs positive observations, means and dispersion")
    shape = 1.0 / phi
    c = shape / mu
    return float(np.sum(shape * np.log(c) - gammaln(shape) + (shape - 1.0) * np.log(y) - c * y))


def laplace_density(x: np.ndarray | float, lam: float) -> np.ndarray | float:
    """Laplace (double exponential) density with scale parameter lam."""
    return 0.5 * lam * np.exp(-lam * np.abs(x))


def log_prior(beta: np.ndarray, lambda_g: float, penalized_mask: np.ndarray) -> float:
    """Log Laplace prior of the penalized coefficients, up to an additive
    constant that is common to all models at fixed dispersion."""
    if not lambda_g > 0:
        raise ValueError("prior dispersion must be positive")
    return float(-lambda_g * np.sum(np.abs(np.asarray(beta)[penalized_mask])))


def candidate_models(
    fit: PathFit,
    y: np.ndarray,
    phi: float,
    reserves: Sequence[float],
    keep_ids: Optional[Sequence[int]] = None,
) -> CandidateModels:
    """Bundle a fitted path into candidates, optionally restricted to a
    surviving subset of model ids."""
    if len(reserves) != fit.n_models:
        raise ValueError("reserves must align with the fitted path")
    ids = fit.model_ids
    lls = np.array([gamma_loglik(y, fit.fitted[k], phi) for k in range(fit.n_models)])
    l1s = fit.l1_norms()
    res = np.asarray(reserves, dtype=np.float64)
    cands = CandidateModels(model_ids=ids, log_likelihoods=lls, l1_norms=l1s, reserves=res)
    if keep_ids is not None:
        mask = np.isin(ids, np.asarray(list(keep_ids)))
        if not np.any(mask):
            raise ValueError("no candidate models survive the requested subset")
        cands = cands.subset(mask)
    return cands


def _log_weights(cands: CandidateModels, lambda_g: float) -> np.ndarray:
    return cands.log_likelihoods - lambda_g * cands.l1_norms


def _probs(log_w: np.ndarray) -> np.ndarray:
    shifted = log_w - np.max(log_w)
    w = np.exp(shifted)
    return w / np.sum(w)


def posterior(cands: CandidateModels, prior: PriorSpec) -> PosteriorDistribution:
    """Posterior model probabilities under the given prior dispersion."""
    log_w = _log_weights(cands, prior.lambda_g)
    return PosteriorDistribution(
        model_ids=cands.model_ids.copy(),
        log_weights=log_w,
        probs=_probs(log_w),
        flavor=prior.flavor,
    )


def summarize(post: PosteriorDistribution, reserves: np.ndarray) -> PosteriorSummary:
    """Posterior mean, variance and coefficient of variation of the reserve."""
    reserves = np.asarray(reserves, dtype=np.float64)
    if len(reserves) != len(post.probs):
        raise ValueError("reserves must align with the posterior support")
    mean = float(np.sum(post.probs * reserves))
    if mean <= 0:
        raise ValueError("posterior mean reserve must be positive")
    variance = float(np.sum(post.probs * (reserves - mean) ** 2))
    cov = float(np.sqrt(variance) / mean)
    dist = tuple(
        (int(q), float(r), float(p)) for q, r, p in zip(post.model_ids, reserves, post.probs)
    )
    return PosteriorSummary(mean=mean, variance=variance, cov=cov, distribution=dist)


def _mode_index(cands: CandidateModels, lambda_g: float) -> int:
    return int(np.argmax(_log_weights(cands, lambda_g)))


@dataclass(frozen=True)
class CalibrationResult:
    """Dispersion interval whose posterior mode is the target model."""

    lambda_g: float
    lower: float
    upper: float
    target_q: int


def calibrate_lambda_g(cands: CandidateModels, target_q: int) -> CalibrationResult:
    """Find the prior dispersion placing the posterior mode on model target_q.

    As the dispersion grows the mode walks from complex (large L1) toward
    simple models, so the dispersions attaining any reachable mode form an
    interval; its log-midpoint is returned. Raises CalibrationError, naming
    the nearest attainable models, when no dispersion works.
    """
    ids = cands.model_ids
    where = np.flatnonzero(ids == target_q)
    if len(where) == 0:
        raise ValueError(f"target model {target_q} is not among the candidates")
    target_idx = int(where[0])
    l1_t = cands.l1_norms[target_idx]

    def mode_l1(lam: float) -> float:
        return float(cands.l1_norms[_mode_index(cands, lam)])

    lo_end, hi_end = np.log(_LAMBDA_LO), np.log(_LAMBDA_HI)
    tol_ok = lambda a, b: abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))  # noqa: E731

    def bisect(predicate) -> float:
        # Boundary of a predicate that flips from False to True as lambda grows.
        lo, hi = lo_end, hi_end
        if predicate(np.exp(lo)):
            return lo
        if not predicate(np.exp(hi)):
            return hi
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if predicate(np.exp(mid)):
                hi = mid
            else:
                lo = mid
            if hi - lo < 1e-12:
                break
        return hi

    at_or_simpler = bisect(lambda lam: mode_l1(lam) <= l1_t or tol_ok(mode_l1(lam), l1_t))
    strictly_simpler = bisect(lambda lam: mode_l1(lam) < l1_t and not tol_ok(mode_l1(lam), l1_t))
    mid = 0.5 * (at_or_simpler + strictly_simpler)
    mode_mid = _mode_index(cands, float(np.exp(mid)))
    same_model = tol_ok(cands.l1_norms[mode_mid], l1_t) and tol_ok(
        cands.log_likelihoods[mode_mid], cands.log_likelihoods[target_idx]
    )
    if mode_mid != target_idx and not same_model:
        near_lo = int(ids[_mode_index(cands, float(np.exp(max(lo_end, at_or_simpler - 1e-6))))])
        near_hi = int(ids[mode_mid])
        raise CalibrationError(
            f"no prior dispersion makes model {target_q} the posterior mode; "
            f"nearest attainable modes are models {near_lo} and {near_hi}"
        )
    return CalibrationResult(
        lambda_g=float(np.exp(mid)),
        lower=float(np.exp(at_or_simpler)),
        upper=float(np.exp(strictly_simpler)),
        target_q=target_q,
    )


def tail_mass(cands: CandidateModels, lambda_g: float, ids_in_tail: np.ndarray) -> float:
    """Posterior mass of the given model ids at the given dispersion."""
    probs = _probs(_log_weights(cands, lambda_g))
    return float(np.sum(probs[np.isin(cands.model_ids, ids_in_tail)]))


def find_extreme_lambda(
    cands: CandidateModels,
    q_1se: int,
    q_min: int,
    side: str,
    epsilon: float = 0.0005,
) -> Optional[float]:
    """Dispersion at which a reference tail of the path keeps only mass epsilon.

    ``side='simple'`` solves for the dispersion so extreme that models at
    least as complex as the 1se model retain total mass epsilon (mass falls
    as dispersion grows); ``side='complex'`` so small that models up to the
    CV-optimal one retain only epsilon (mass grows with dispersion).
    Returns None when no such dispersion exists in the search range.
    """
    if side == "simple":
        tail = cands.model_ids[cands.model_ids >= q_1se]
        decreasing = True
    elif side == "complex":
        tail = cands.model_ids[cands.model_ids <= q_min]
        decreasing = False
    else:
        raise ValueError(f"side must be 'simple' or 'complex', got {side!r}")
    if len(tail) == 0 or len(tail) == len(cands.model_ids):
        return None

    def h(lam: float) -> float:
        return tail_mass(cands, lam, tail) - epsilon

    lo, hi = np.log(_LAMBDA_LO), np.log(_LAMBDA_HI)
    h_lo, h_hi = h(np.exp(lo)), h(np.exp(hi))
    if decreasing:
        if not (h_lo > 0 > h_hi):
            return None
    else:
        if not (h_lo < 0 < h_hi):
            return None
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        val = h(np.exp(mid))
        above = val > 0
        if above == decreasing:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    return float(np.exp(0.5 * (lo + hi)))

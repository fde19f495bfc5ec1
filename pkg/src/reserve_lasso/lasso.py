"""L1-penalized Poisson log-link regression over a decreasing penalty path.

The fit at each penalty minimizes the negative Poisson log-likelihood plus
an L1 penalty on all columns except the intercept. Each path point is
warm-started from the previous one and solved in two phases: coordinate
descent with soft thresholding on the local quadratic approximation to
identify the active set, then Newton iterations on the sign-restricted
smooth problem to drive the stationarity (KKT) residuals to solver
precision. The penalized objective is monitored and never allowed to
increase across iterations.

Model quality along the path is scored by k-fold cross validation on the
Poisson deviance, yielding the loss-minimizing model and the simplest model
within one standard error of that minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import DesignMatrix

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional accelerator
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


MAX_OUTER = 50
MAX_SWEEPS = 1000
COEF_TOL = 1e-7
KKT_TOL = 1e-6
ETA_OVERFLOW = 700.0


@dataclass(frozen=True)
class PenaltyPath:
    """Strictly decreasing positive penalty sequence."""

    lambdas: np.ndarray

    def __post_init__(self) -> None:
        lam = np.asarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 1 or len(lam) < 1:
            raise ValueError("penalty path must be a nonempty 1-d sequence")
        if np.any(lam <= 0):
            raise ValueError("penalties must be positive")
        if np.any(np.diff(lam) >= 0):
            raise ValueError("penalties must be strictly decreasing")
        object.__setattr__(self, "lambdas", lam)

    def __len__(self) -> int:
        return len(self.lambdas)


@dataclass
class PathFit:
    """Coefficient vectors and in-sample summaries along the path.

    ``model_ids`` are 1-based: model q corresponds to row q-1 of ``betas``.
    A path that failed to converge at some penalty is truncated to the
    converged prefix and flagged.
    """

    lambdas: np.ndarray
    betas: np.ndarray  # (Q, p), standardized scale, intercept first
    fitted: np.ndarray  # (Q, n) fitted past means
    deviances: np.ndarray  # (Q,) in-sample Poisson deviance
    penalized_mask: np.ndarray
    truncated: bool

    @property
    def n_models(self) -> int:
        return len(self.lambdas)

    @property
    def model_ids(self) -> np.ndarray:
        return np.arange(1, self.n_models + 1)

    def active_set(self, q: int) -> np.ndarray:
        """Column indices with nonzero coefficients in model q (1-based)."""
        return np.flatnonzero(self.betas[q - 1] != 0.0)

    def l1_norms(self) -> np.ndarray:
        """Penalized-coefficient L1 norm per model, standardized scale."""
        return np.abs(self.betas[:, self.penalized_mask]).sum(axis=1)


@dataclass(frozen=True)
class CvResult:
    """Cross-validation losses and the selected models (1-based ids)."""

    fold_losses: np.ndarray  # (Q, n_folds)
    cv_mean: np.ndarray
    cv_se: np.ndarray
    q_min: int
    q_1se: int


def poisson_deviance(y: np.ndarray, mu: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Poisson deviance 2*sum(w*(y*ln(y/mu) - (y - mu))) for positive y, mu."""
    y = np.asarray(y, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(2.0 * np.sum(w * (y * np.log(y / mu) - (y - mu))))


def lambda_max(dm: DesignMatrix, y: np.ndarray, weights: Optional[np.ndarray] = None) -> float:
    """Smallest penalty at which the intercept-only model is stationary.

    Evaluates the score of every penalized column at the intercept-only
    fit and returns the largest magnitude, inflated by 0.1% so the first
    path point is strictly inside the all-zero region.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    if np.all(y == 0):
        raise ValueError("response is identically zero")
    ybar = float(np.sum(w * y) / np.sum(w))
    resid = w * (y - ybar)
    scores = dm.matrix[:, dm.penalized_mask].T @ resid
    return float(np.max(np.abs(scores), initial=0.0) * 1.001)


def make_path(lam_max: float, count: int, ratio: float) -> PenaltyPath:
    """Geometric penalty sequence from lam_max down to lam_max*ratio."""
    if count < 2:
        raise ValueError("path needs at least 2 points")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    if lam_max <= 0:
        raise ValueError("lam_max must be positive")
    return PenaltyPath(lam_max * ratio ** (np.arange(count) / (count - 1)))


def _objective(y, w, eta, lam, beta, pen_mask) -> float:
    # Negative Poisson log-likelihood (without the data-only constant) plus penalty.
    mu = np.exp(np.minimum(eta, ETA_OVERFLOW))
    return float(np.sum(w * (mu - y * eta)) + lam * np.sum(np.abs(beta[pen_mask])))


def _kkt_violation(score: np.ndarray, lam: float, beta: np.ndarray, pen_mask: np.ndarray) -> float:
    """Largest stationarity residual: score vs lam*sign for active penalized
    columns, max(0, |score|-lam) for inactive ones, |score| for unpenalized."""
    viol = np.abs(score)
    zero = pen_mask & (beta == 0.0)
    active = pen_mask & (beta != 0.0)
    viol[zero] = np.maximum(0.0, np.abs(score[zero]) - lam)
    viol[active] = np.abs(score[active] - lam * np.sign(beta[active]))
    return float(np.max(viol))


@njit(cache=True)
def _cd_update(XaT, wxT, g, r, beta_a, pen_a, lam, a):
    ga = g[a]
    if ga <= 1e-300:
        return 0.0
    u = ga * beta_a[a]
    for k in range(XaT.shape[1]):
        u += wxT[a, k] * r[k]
    if pen_a[a]:
        if u > lam:
            new = (u - lam) / ga
        elif u < -lam:
            new = (u + lam) / ga
        else:
            new = 0.0
    else:
        new = u / ga
    d = new - beta_a[a]
    if d != 0.0:
        beta_a[a] = new
        for k in range(XaT.shape[1]):
            r[k] -= XaT[a, k] * d
    return d


@njit(cache=True)
def _cd_sweeps(XaT, wxT, g, r, beta_a, pen_a, lam, max_sweeps, tol):
    """Cyclic coordinate descent over the working set.

    After each full sweep, iteration is focused on the coordinates that are
    still moving until they settle, then a further full sweep re-admits any
    coordinate disturbed in the meantime. ``XaT``/``wxT`` hold the
    working-set columns (plain and weighted) as contiguous rows; ``r`` and
    ``beta_a`` are updated in place.
    """
    n_cols = XaT.shape[0]
    moving = np.zeros(n_cols, dtype=np.bool_)
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_step = 0.0
        for a in range(n_cols):
            d = _cd_update(XaT, wxT, g, r, beta_a, pen_a, lam, a)
            ad = abs(d)
            moving[a] = ad > 0.0
            if ad > max_step:
                max_step = ad
        if max_step < tol:
            return sweeps
        while sweeps < max_sweeps:
            sweeps += 1
            focus_step = 0.0
            for a in range(n_cols):
                if not moving[a]:
                    continue
                d = _cd_update(XaT, wxT, g, r, beta_a, pen_a, lam, a)
                ad = abs(d)
                if ad < 0.01 * tol:
                    moving[a] = False
                if ad > focus_step:
                    focus_step = ad
            if focus_step < tol:
                break
    return sweeps


def _cd_subproblem(Xa, wk, r, beta_a, pen_a, lam, max_sweeps, tol):
    """Solve the penalized weighted least squares subproblem on the working
    set by coordinate descent; ``r`` holds the working response minus the
    current linear predictor."""
    XaT = np.ascontiguousarray(Xa.T)
    wxT = XaT * wk[None, :]
    g = (XaT * wxT).sum(axis=1)
    _cd_sweeps(XaT, wxT, g, r, beta_a, pen_a, lam, max_sweeps, tol)
    return beta_a, r


def _newton_polish(X, y, w, lam, pen_mask, beta, eta, obj, max_rounds=15):
    """Newton iterations on the smooth problem restricted to the current support.

    Signs of penalized coefficients are held fixed; steps are truncated at
    sign flips and the flipped coordinate is snapped to zero, shrinking the
    support. Returns updated (beta, eta, obj).
    """
    grad_tol = 1e-13 * max(1.0, lam) + 1e-13 * float(np.sum(np.abs(w * y)))
    for _ in range(max_rounds):
        support = np.flatnonzero((beta != 0.0) | ~pen_mask)
        Xs = X[:, support]
        sign = np.where(pen_mask[support], np.sign(beta[support]), 0.0)
        mu = np.exp(np.minimum(eta, ETA_OVERFLOW))
        grad = Xs.T @ (w * (mu - y)) + lam * sign
        if np.max(np.abs(grad)) < grad_tol:
            break
        H = (Xs * (w * mu)[:, None]).T @ Xs
        if len(support) >= len(y):
            # Interpolation regime: the Hessian is rank deficient.
            H[np.diag_indices_from(H)] += 3e-11 * float(np.trace(H)) / len(support)
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -grad, rcond=None)[0]
        flip = (sign != 0.0) & (sign * step < 0.0)
        scale = 1.0
        if np.any(flip):
            limits = -beta[support][flip] / step[flip]
            scale = min(1.0, float(np.min(limits)))
        if scale <= 0.0:
            break
        d_eta = Xs @ step
        accepted = False
        for _ in range(40):
            cand = beta.copy()
            moved = beta[support] + scale * step
            moved[pen_mask[support] & (np.abs(moved) < 1e-14)] = 0.0
            cand[support] = moved
            cand_eta = eta + scale * d_eta
            cand_obj = _objective(y, w, cand_eta, lam, cand, pen_mask)
            if cand_obj <= obj + 1e-12 * (1.0 + abs(obj)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break
        step_size = float(np.max(np.abs(scale * step)))
        beta, eta, obj = cand, cand_eta, cand_obj
        if step_size < 1e-16:
            break
    return beta, eta, obj


def _fit_single(X, y, w, lam, pen_mask, beta, eta, kkt_tol=KKT_TOL, coef_tol=COEF_TOL,
                trace=None):
    """Solve one path point from a warm start. Returns (beta, eta, converged).

    ``trace``, when given, collects the penalized objective at the top of
    every outer iteration (it is non-increasing by construction).
    """
    p = X.shape[1]
    obj = _objective(y, w, eta, lam, beta, pen_mask)
    beta_prev = beta.copy()
    for outer in range(MAX_OUTER):
        if trace is not None:
            trace.append(obj)
        mu = np.exp(np.minimum(eta, ETA_OVERFLOW))
        score = X.T @ (w * (y - mu))
        viol = _kkt_violation(score, lam, beta, pen_mask)
        coef_move = float(np.max(np.abs(beta - beta_prev))) if outer else np.inf
        # Essentially exact stationarity overrides the movement criterion:
        # with collinear columns the optimum is a set, and iterates may move
        # within it without changing the fit quality.
        if (viol < kkt_tol and coef_move < coef_tol) or viol < 1e-3 * kkt_tol:
            return beta, eta, True
        beta_prev = beta.copy()

        # Quadratic subproblem at the current expansion point, solved on a
        # working set that grows until no outside column violates its KKT.
        # Coordinate descent only needs to identify the support here; the
        # Newton polish below supplies the precision.
        wk = w * mu
        z_res0 = (y - mu) / mu
        work = beta.copy()
        active = np.flatnonzero((work != 0.0) | ~pen_mask | (np.abs(score) > lam))
        sweeps_left = MAX_SWEEPS
        for _ in range(12):
            Xa = np.ascontiguousarray(X[:, active])
            r = z_res0 - Xa @ (work[active] - beta[active])
            beta_a = work[active].copy()
            beta_a, r = _cd_subproblem(Xa, wk, r, beta_a, pen_mask[active], lam,
                                       min(250, sweeps_left), 1e-6)
            sweeps_left = max(50, sweeps_left - 250)
            work[active] = beta_a
            s_all = X.T @ (wk * r)
            outside = pen_mask.copy()
            outside[active] = False
            bad = np.flatnonzero(outside & (np.abs(s_all) > lam * (1 + 1e-9) + 1e-12))
            if len(bad) == 0:
                break
            active = np.union1d(active, bad)

        direction = work - beta
        d_eta = X[:, active] @ direction[active]
        scale, accepted = 1.0, False
        cand, cand_eta, cand_obj = beta, eta, obj
        for _ in range(40):
            cand = beta + scale * direction
            cand_eta = eta + scale * d_eta
            cand_obj = _objective(y, w, cand_eta, lam, cand, pen_mask)
            if cand_obj <= obj + 1e-8 * (1.0 + abs(obj)):
                accepted = True
                break
            scale *= 0.5
        if accepted:
            beta, eta, obj = cand, cand_eta, cand_obj
        beta, eta, obj = _newton_polish(X, y, w, lam, pen_mask, beta, eta, obj)
        if not accepted:
            # The subproblem step is exhausted; accept iff stationary.
            mu = np.exp(np.minimum(eta, ETA_OVERFLOW))
            score = X.T @ (w * (y - mu))
            return beta, eta, _kkt_violation(score, lam, beta, pen_mask) < kkt_tol

    mu = np.exp(np.minimum(eta, ETA_OVERFLOW))
    score = X.T @ (w * (y - mu))
    return beta, eta, _kkt_violation(score, lam, beta, pen_mask) < kkt_tol


def fit_path(
    dm: DesignMatrix,
    y: np.ndarray,
    path: PenaltyPath,
    weights: Optional[np.ndarray] = None,
    kkt_tol: float = KKT_TOL,
    warm_betas: Optional[np.ndarray] = None,
) -> PathFit:
    """Fit the penalized regression at every path penalty with warm starts.

    ``warm_betas`` may carry per-penalty starting points from a related fit
    (a full-data fit when refitting folds, the primary fit when refitting
    resampled data); each point then starts from whichever of the previous
    solution and the supplied start has the lower objective. A
    non-converged point truncates the path at the previous penalty and
    flags the fit; at least the first point must converge.
    """
    X = dm.matrix
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    pen_mask = dm.penalized_mask

    beta = np.zeros(p)
    ybar = float(np.sum(w * y) / np.sum(w))
    beta[0] = np.log(ybar)
    eta = X @ beta

    betas, fitted, devs = [], [], []
    truncated = False
    for k, lam in enumerate(path.lambdas):
        start_beta, start_eta = beta.copy(), eta.copy()
        if warm_betas is not None and k < len(warm_betas):
            cand = warm_betas[k]
            cand_eta = X @ cand
            if (_objective(y, w, cand_eta, lam, cand, pen_mask)
                    < _objective(y, w, start_eta, lam, start_beta, pen_mask)):
                start_beta, start_eta = cand.copy(), cand_eta
        beta, eta, ok = _fit_single(X, y, w, float(lam), pen_mask, start_beta, start_eta,
                                    kkt_tol=kkt_tol)
        if not ok:
            truncated = True
            break
        mu = np.exp(eta)
        betas.append(beta.copy())
        fitted.append(mu)
        devs.append(poisson_deviance(y, mu, w))
    if not betas:
        raise RuntimeError("path fitting failed at the first penalty")
    q = len(betas)
    return PathFit(
        lambdas=path.lambdas[:q].copy(),
        betas=np.array(betas),
        fitted=np.array(fitted),
        deviances=np.array(devs),
        penalized_mask=pen_mask.copy(),
        truncated=truncated,
    )


def _cv_fold(dm: DesignMatrix, y: np.ndarray, w: np.ndarray, path: PenaltyPath,
             test_idx: np.ndarray, fold: int) -> np.ndarray:
    """Held-out deviances of one fold's path refit (nan beyond truncation)."""
    n = len(y)
    train = np.ones(n, dtype=bool)
    train[test_idx] = False
    if not np.any(train):
        raise ValueError(f"fold {fold} has an empty training set")
    sub = _subset_design(dm, train)
    fit = fit_path(sub, y[train], path, weights=w[train])
    X_test = dm.matrix[test_idx]
    out = np.full(len(path), np.nan)
    for k in range(fit.n_models):
        mu = np.exp(X_test @ fit.betas[k])
        out[k] = poisson_deviance(y[test_idx], mu, w[test_idx])
    return out


def cross_validate(
    dm: DesignMatrix,
    y: np.ndarray,
    path: PenaltyPath,
    folds: int = 8,
    seed: int | np.random.SeedSequence = 0,
    weights: Optional[np.ndarray] = None,
    workers: int = 1,
) -> CvResult:
    """K-fold cross validation of the path under the Poisson deviance.

    Cells are assigned to folds uniformly at random (seeded permutation,
    near-equal sizes). Each fold refits the whole path on the remaining
    cells, reusing the full-data standardization, and scores the held-out
    deviance. Folds are independent and may run in worker processes; the
    result does not depend on the worker count. The returned ids satisfy
    q_1se <= q_min.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    if n < folds:
        raise ValueError(f"need at least {folds} cells for {folds}-fold cross validation")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    assignments = np.array_split(order, folds)

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, folds)) as pool:
            futures = [
                pool.submit(_cv_fold, dm, y, w, path, test_idx, s)
                for s, test_idx in enumerate(assignments)
            ]
            columns = [f.result() for f in futures]
    else:
        columns = [
            _cv_fold(dm, y, w, path, test_idx, s) for s, test_idx in enumerate(assignments)
        ]

    losses = np.column_stack(columns)
    fitted_depth = [int(np.sum(~np.isnan(c))) for c in columns]
    min_q = min(fitted_depth)
    if min_q == 0:
        raise RuntimeError("a cross-validation fold failed at the first penalty")
    losses = losses[:min_q]
    cv_mean = losses.mean(axis=1)
    cv_se = losses.std(axis=1, ddof=1) / np.sqrt(folds)
    q_min, q_1se = select_models(cv_mean, cv_se)
    return CvResult(fold_losses=losses, cv_mean=cv_mean, cv_se=cv_se, q_min=q_min, q_1se=q_1se)


def select_models(cv_mean: np.ndarray, cv_se: np.ndarray) -> tuple[int, int]:
    """The loss-minimizing model and the simplest within one standard error.

    Ids are 1-based; ties on the minimum go to the smallest id. The one
    standard error model is the first whose mean loss is at most the
    minimum plus the standard error at the minimum, hence q_1se <= q_min.
    """
    cv_mean = np.asarray(cv_mean, dtype=np.float64)
    cv_se = np.asarray(cv_se, dtype=np.float64)
    q_min = int(np.argmin(cv_mean)) + 1
    threshold = cv_mean[q_min - 1] + cv_se[q_min - 1]
    q_1se = int(np.flatnonzero(cv_mean <= threshold)[0]) + 1
    return q_min, q_1se


def _subset_design(dm: DesignMatrix, mask: np.ndarray) -> DesignMatrix:
    """Row subset of a design matrix, keeping the parent standardization."""
    return DesignMatrix(
        cells=tuple(c for c, m in zip(dm.cells, mask) if m),
        functions=dm.functions,
        kept_indices=dm.kept_indices,
        matrix=np.asfortranarray(dm.matrix[mask]),
        col_means=dm.col_means,
        col_sds=dm.col_sds,
        penalized_mask=dm.penalized_mask,
        dropped=dm.dropped,
    )

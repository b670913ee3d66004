"""High-dimensional variable selection.

Three selectors over a common candidate pool:

* ``mtb_select`` — forward selection where each added predictor must clear a
  Bonferroni-type p-value threshold that tightens with the remaining pool.
* ``pooled_lasso`` — one L1-penalized regression on the stacked panel.
* ``individual_lasso`` — per-unit L1 regressions combined through a stability
  rule (keep predictors chosen in at least a fixed fraction of units).

The penalized fits run on a shared Gram-matrix coordinate-descent kernel with
warm-started regularization paths, batched across units.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import stats

from .errors import (
    DegreesOfFreedomExhausted,
    EmptyGrid,
    EmptyPool,
    NoConvergence,
    ValidationError,
)

# Exponent for the selection threshold denominator (pool_remaining ** (delta1-1)).
# 2.0 gives Bonferroni-type family-wise error control; exponents below 2 let the
# family-wise null selection rate grow with the pool and cannot keep it near
# p_val (measured in the acceptance suite).
DEFAULT_DELTA1 = 2.0
# t-statistic flavor ('classical', 'hc1', 'hc3') and p-value reference.
# The homoskedastic statistic with the normal reference keeps the null
# selection rate at p_val; the HC flavors run 1.5-2x above it at T ~ 100.
DEFAULT_TSTAT = "classical"
DEFAULT_REFERENCE = "normal"

GRID_SIZE = 100
GRID_MIN_RATIO = 1e-4
CD_TOL = 1e-8
CD_MAX_SWEEPS = 10_000


@dataclass
class CandidatePool:
    """Candidate predictor matrix (T_m x n_c) with column names."""

    matrix: np.ndarray
    names: list
    periods: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if self.matrix.shape[1] != len(self.names):
            raise ValidationError("pool names length mismatch")
        if self.matrix.shape[0] < 5:
            raise ValidationError("candidate pool needs at least 5 periods")
        if not np.all(np.isfinite(self.matrix)):
            raise ValidationError("candidate pool contains non-finite entries")
        if self.matrix.shape[1] and np.any(np.all(self.matrix == 0.0, axis=0)):
            raise ValidationError("candidate pool contains a constant-zero column")
        if self.periods is not None:
            self.periods = np.asarray(self.periods)
            if self.periods.shape[0] != self.matrix.shape[0]:
                raise ValidationError("pool periods length mismatch")

    @property
    def n_candidates(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_periods(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class SelectionStep:
    index: int
    name: str
    tstat: float
    pvalue: float
    threshold: float


@dataclass
class SelectionResult:
    """Chosen predictor indices in selection order plus per-step statistics."""

    selected: list
    steps: list = field(default_factory=list)
    method: str = ""
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.selected)) != len(self.selected):
            raise ValidationError("selection contains a repeated index")

    @property
    def size(self) -> int:
        return len(self.selected)


@dataclass
class MtbConfig:
    """Tuning constants for the forward multiple-testing selector."""

    p_val: float = 0.05
    c1: float = 1.0
    delta1: float = DEFAULT_DELTA1
    max_steps: int | None = None

    def __post_init__(self):
        if not 0.0 < self.p_val < 1.0:
            raise ValidationError("p_val must be in (0, 1)")
        if self.c1 <= 0:
            raise ValidationError("c1 must be positive")
        if self.delta1 <= 1:
            raise ValidationError("delta1 must exceed 1")

    def threshold(self, pool_size: int, step: int) -> float:
        """p-value bar at 1-based pass ``step`` for a pool of ``pool_size``."""
        remaining = pool_size - (step - 1)
        return self.p_val / (self.c1 * remaining ** (self.delta1 - 1.0))


def _residualize(controls: np.ndarray, y: np.ndarray, candidates: np.ndarray):
    """Residuals of y and of each candidate column on the control block."""
    q, _ = np.linalg.qr(controls)
    y_t = y - q @ (q.T @ y)
    x_t = candidates - q @ (q.T @ candidates)
    leverage = np.sum(q**2, axis=1)
    return y_t, x_t, leverage


def _candidate_tstats(y_t, x_t, leverage, n_params, tstat, orig_sq=None):
    """t-statistic of each candidate after partialling out the controls.

    The coefficient on candidate j in the full regression equals the
    regression of the residualized target on the residualized candidate, and
    the corresponding row of (X'X)^{-1}X' is x_t[:, j]/d_j, so the robust
    variance needs only the full-model residuals E[:, j]. Candidates whose
    residualized norm collapses relative to their own scale (collinear with
    the controls) are dead: t = 0.
    """
    t_obs = y_t.shape[0]
    d = np.einsum("ij,ij->j", x_t, x_t)
    if orig_sq is None:
        orig_sq = d
    live = d > np.maximum(orig_sq, 1e-300) * 1e-10
    d_safe = np.where(live, d, 1.0)
    b = np.zeros_like(d)
    b[live] = (x_t.T @ y_t)[live] / d[live]
    resid = y_t[:, None] - x_t * b
    if tstat == "hc1":
        s = np.einsum("ij,ij->j", x_t**2, resid**2)
        var = s / d_safe**2 * (t_obs / max(t_obs - n_params, 1))
    elif tstat == "hc3":
        h = leverage[:, None] + x_t**2 / d_safe
        adj = resid / np.clip(1.0 - h, 1e-8, None)
        var = np.einsum("ij,ij->j", x_t**2, adj**2) / d_safe**2
    elif tstat == "classical":
        s2 = np.einsum("ij,ij->j", resid, resid) / max(t_obs - n_params, 1)
        var = s2 / d_safe
    else:
        raise ValidationError(f"unknown tstat flavor '{tstat}'")
    t = np.zeros_like(d)
    ok = live & (var > 0)
    t[ok] = b[ok] / np.sqrt(var[ok])
    return t


def _pvalues(tstats: np.ndarray, reference: str, df: int) -> np.ndarray:
    if reference == "normal":
        return 2.0 * stats.norm.sf(np.abs(tstats))
    if reference == "t":
        return 2.0 * stats.t.sf(np.abs(tstats), max(df, 1))
    raise ValidationError(f"unknown p-value reference '{reference}'")


def mtb_select(
    target: np.ndarray,
    pool: CandidatePool,
    config: MtbConfig | None = None,
    tstat: str = DEFAULT_TSTAT,
    reference: str = DEFAULT_REFERENCE,
) -> SelectionResult:
    """Forward selection with a multiplicity-corrected p-value bar per pass.

    Pass k regresses the target on an intercept, the k-1 predictors already
    chosen, and each remaining candidate in turn. The candidate with the
    largest robust |t| is admitted if its two-sided p-value is at most
    p_val / (c1 * (n_c - (k-1)) ** (delta1 - 1)); otherwise selection stops.
    """
    config = config or MtbConfig()
    y = np.asarray(target, dtype=float).ravel()
    z = pool.matrix
    t_obs, n_c = z.shape
    if n_c == 0:
        raise EmptyPool("candidate pool has no columns")
    if y.shape[0] != t_obs:
        raise ValidationError("target and pool period counts differ")
    max_steps = config.max_steps
    if max_steps is None:
        max_steps = min(t_obs // 2, n_c)
    selected: list = []
    steps: list = []
    remaining = np.arange(n_c)
    for k in range(1, max_steps + 1):
        if t_obs <= len(selected) + 2:
            raise DegreesOfFreedomExhausted(
                f"pass {k} needs T > {len(selected) + 2}, have T = {t_obs}"
            )
        controls = np.column_stack([np.ones(t_obs)] + [z[:, j] for j in selected])
        y_t, x_t, lev = _residualize(controls, y, z[:, remaining])
        n_params = controls.shape[1] + 1
        orig_sq = np.einsum("ij,ij->j", z[:, remaining], z[:, remaining])
        tstats = _candidate_tstats(y_t, x_t, lev, n_params, tstat, orig_sq)
        pvals = _pvalues(tstats, reference, t_obs - n_params)
        best = int(np.argmax(np.abs(tstats)))
        threshold = config.threshold(n_c, k)
        if pvals[best] <= threshold:
            j = int(remaining[best])
            selected.append(j)
            steps.append(
                SelectionStep(
                    index=j,
                    name=pool.names[j],
                    tstat=float(tstats[best]),
                    pvalue=float(pvals[best]),
                    threshold=float(threshold),
                )
            )
            remaining = np.delete(remaining, best)
            if remaining.size == 0:
                break
        else:
            break
    return SelectionResult(selected=selected, steps=steps, method="mtb")


# ---------------------------------------------------------------------------
# Coordinate descent on the Gram matrix, batched over problems sharing a design
# ---------------------------------------------------------------------------


@njit(cache=True)
def _cd_path_kernel(gram, cvec, y_sq, lam_path, tol, max_sweeps, saturate_stop, n_rows):  # pragma: no cover
    n_prob, p = cvec.shape
    n_lam = lam_path.shape[1]
    coefs = np.zeros((n_prob, n_lam, p))
    gaps = np.zeros((n_prob, n_lam))
    rank_cap = int(0.9 * n_rows)
    for b in range(n_prob):
        beta = np.zeros(p)
        q = np.zeros(p)  # gram @ beta, maintained incrementally
        active = np.zeros(p, dtype=np.bool_)
        saturated = False
        for li in range(n_lam):
            if saturated:
                coefs[b, li] = beta
                gaps[b, li] = gaps[b, li - 1]
                continue
            lam = lam_path[b, li]
            gap = np.inf
            r2m = y_sq[b]
            for _ in range(max_sweeps):
                # one sweep over the active set
                for j in range(p):
                    if not active[j]:
                        continue
                    gjj = gram[j, j]
                    if gjj <= 0.0:
                        continue
                    rho = cvec[b, j] - q[j] + gjj * beta[j]
                    if rho > lam:
                        new = (rho - lam) / gjj
                    elif rho < -lam:
                        new = (rho + lam) / gjj
                    else:
                        new = 0.0
                    diff = new - beta[j]
                    if diff != 0.0:
                        for k in range(p):
                            q[k] += gram[j, k] * diff
                        beta[j] = new
                # full pass: duality gap plus KKT screen that grows the active set
                l1 = 0.0
                ginf = 0.0
                dot_bc = 0.0
                dot_bq = 0.0
                grew = False
                for j in range(p):
                    g = cvec[b, j] - q[j]
                    ag = abs(g)
                    if ag > ginf:
                        ginf = ag
                    if not active[j] and ag > lam and gram[j, j] > 0.0:
                        active[j] = True
                        grew = True
                    l1 += abs(beta[j])
                    dot_bc += beta[j] * cvec[b, j]
                    dot_bq += beta[j] * q[j]
                r2m = y_sq[b] - 2.0 * dot_bc + dot_bq
                if r2m < 0.0:
                    r2m = 0.0
                if lam > 0.0:
                    s = 1.0 if ginf <= lam else lam / ginf
                    gap = 0.5 * r2m + lam * l1 - s * (r2m + (dot_bc - dot_bq)) + 0.5 * s * s * r2m
                else:
                    # unpenalized: use the gradient sup-norm as the gap
                    gap = ginf
                if gap < tol and not grew:
                    break
            coefs[b, li] = beta
            gaps[b, li] = gap
            # Once the training fit saturates (high R-squared or the active set
            # near the row count), smaller penalties only interpolate noise;
            # freeze the path (cross-validation never picks this tail).
            if saturate_stop:
                n_active = 0
                for j in range(p):
                    if active[j]:
                        n_active += 1
                if r2m <= 1e-2 * y_sq[b] or n_active >= rank_cap:
                    saturated = True
    return coefs, gaps


def _gram_path(
    gram,
    cvec,
    y_sq,
    lam_path,
    tol=CD_TOL,
    max_sweeps=CD_MAX_SWEEPS,
    saturate_stop=False,
    n_rows=0,
):
    if n_rows <= 0:
        n_rows = 10 * gram.shape[0]  # rank cap disabled
    coefs, gaps = _cd_path_kernel(
        np.ascontiguousarray(gram, dtype=float),
        np.ascontiguousarray(cvec, dtype=float),
        np.ascontiguousarray(y_sq, dtype=float),
        np.ascontiguousarray(lam_path, dtype=float),
        float(tol),
        int(max_sweeps),
        bool(saturate_stop),
        int(n_rows),
    )
    return coefs, gaps


def coordinate_descent_lasso(
    y: np.ndarray,
    x: np.ndarray,
    xi: float,
    tol: float = CD_TOL,
    max_sweeps: int = CD_MAX_SWEEPS,
) -> np.ndarray:
    """Minimize (1/2T)||y - Xb||^2 + xi * ||b||_1 by cyclic soft-thresholding.

    Iterates until the duality gap falls below ``tol`` (for xi = 0, until the
    gradient sup-norm does) or ``max_sweeps`` full sweeps have run, in which
    case NoConvergence reports the remaining gap.
    """
    y = np.asarray(y, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != y.shape[0]:
        raise ValidationError("y and X row counts differ")
    if xi < 0:
        raise ValidationError("xi must be non-negative")
    m = y.shape[0]
    gram = x.T @ x / m
    cvec = (x.T @ y / m)[None, :]
    y_sq = np.array([y @ y / m])
    lam = np.array([[float(xi)]])
    coefs, gaps = _gram_path(gram, cvec, y_sq, lam, tol=tol, max_sweeps=max_sweeps)
    if gaps[0, 0] >= tol:
        raise NoConvergence(gaps[0, 0])
    return coefs[0, 0]


def lasso_objective(y, x, b, xi) -> float:
    """(1/2T)||y - Xb||^2 + xi * ||b||_1, for optimality spot checks."""
    r = y - x @ b
    return 0.5 * float(r @ r) / len(y) + xi * float(np.sum(np.abs(b)))


def _standardize(matrix: np.ndarray):
    mu = matrix.mean(axis=0)
    sd = matrix.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    return (matrix - mu) / sd_safe, mu, sd


def _time_folds(t: int, n_folds: int):
    """Contiguous time blocks; deterministic, no shuffling."""
    n_folds = max(2, min(n_folds, t))
    return np.array_split(np.arange(t), n_folds)


def _lambda_grid(lam_max: np.ndarray) -> np.ndarray:
    """Per-problem descending log-spaced grid from lam_max to 1e-4*lam_max."""
    lam_max = np.where(lam_max > 0, lam_max, 1.0)
    exponents = np.linspace(0.0, np.log10(GRID_MIN_RATIO), GRID_SIZE)
    return lam_max[:, None] * 10.0**exponents[None, :]


# CV fold paths run at a loose relative gap tolerance with a tight sweep cap;
# the full-sample path uses a stricter tolerance. Both freeze the path once
# the training fit saturates (smaller penalties only interpolate noise).
CV_PATH_RTOL = 1e-4
CV_PATH_SWEEPS = 100
FINAL_RTOL = 1e-6
FINAL_SWEEPS = 2000


def _cv_lasso_batch(
    targets: np.ndarray,
    design: np.ndarray,
    n_folds: int = 10,
    rule: str = "1se",
):
    """10-fold CV over a lambda path for B targets sharing one design.

    ``targets`` is (B, T); ``design`` (T, p) should be standardized by the
    caller. Targets are centered internally (an unpenalized intercept).
    ``rule`` picks the penalty: 'min' takes the CV-error minimizer, '1se'
    the largest penalty within one standard error of it.
    Returns (coefs at the CV choice (B, p), chosen lambda (B,), grid (B, L)).
    """
    if rule not in ("min", "1se"):
        raise ValidationError(f"unknown CV rule '{rule}'")
    yb = np.atleast_2d(np.asarray(targets, dtype=float))
    x = np.asarray(design, dtype=float)
    n_prob, t = yb.shape
    yb = yb - yb.mean(axis=1, keepdims=True)
    lam_max = np.max(np.abs(yb @ x), axis=1) / t
    grid = _lambda_grid(lam_max)
    folds = _time_folds(t, n_folds)
    scale = max(float(np.max(np.einsum("ij,ij->i", yb, yb))) / t, 1e-12)
    fold_mse = np.empty((len(folds), n_prob, GRID_SIZE))
    for fi, val_idx in enumerate(folds):
        train = np.ones(t, dtype=bool)
        train[val_idx] = False
        x_tr, x_va = x[train], x[val_idx]
        m_tr = x_tr.shape[0]
        gram = x_tr.T @ x_tr / m_tr
        cvec = yb[:, train] @ x_tr / m_tr
        y_sq = np.einsum("ij,ij->i", yb[:, train], yb[:, train]) / m_tr
        coefs, _ = _gram_path(
            gram, cvec, y_sq, grid,
            tol=CV_PATH_RTOL * scale, max_sweeps=CV_PATH_SWEEPS, saturate_stop=True,
            n_rows=m_tr,
        )
        pred = coefs @ x_va.T  # (B, L, |val|)
        err = pred - yb[:, None, val_idx]
        fold_mse[fi] = np.einsum("blv,blv->bl", err, err) / val_idx.size
    cvm = fold_mse.mean(axis=0)
    idx_min = np.argmin(cvm, axis=1)  # ties resolve to the largest lambda
    if rule == "min":
        best = idx_min
    else:
        cvse = fold_mse.std(axis=0, ddof=1) / np.sqrt(len(folds))
        rows = np.arange(n_prob)
        bar = cvm[rows, idx_min] + cvse[rows, idx_min]
        best = np.argmax(cvm <= bar[:, None], axis=1)  # first (largest) lambda within 1 SE
    m = x.shape[0]
    gram = x.T @ x / m
    cvec = yb @ x / m
    y_sq = np.einsum("ij,ij->i", yb, yb) / m
    coefs, gaps = _gram_path(
        gram, cvec, y_sq, grid,
        tol=FINAL_RTOL * scale, max_sweeps=FINAL_SWEEPS, saturate_stop=True,
        n_rows=m,
    )
    idx = np.arange(n_prob)
    chosen = coefs[idx, best]
    worst_gap = float(gaps[idx, best].max())
    if worst_gap >= 100.0 * FINAL_RTOL * scale:
        raise NoConvergence(worst_gap)
    lam_chosen = grid[idx, best]
    return chosen, lam_chosen, grid


def pooled_lasso(
    residuals: np.ndarray,
    pool: CandidatePool,
    xi_grid: np.ndarray | None = None,
    n_folds: int = 10,
    rule: str = "1se",
) -> SelectionResult:
    """L1 selection on the stacked panel, one coefficient vector for all units.

    Minimizes (1/NT)||u - Zb||^2 + xi * sum_j |b_j| over the stacked panel
    with xi chosen by 10-fold cross-validation on contiguous time blocks.
    Stacking reduces exactly to the cross-sectional mean residual: the pooled
    objective differs from the mean-residual one only by a constant.
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    if u.shape[1] != pool.n_periods:
        raise ValidationError("residual panel and pool period counts differ")
    if xi_grid is not None:
        xi_grid = np.asarray(xi_grid, dtype=float)
        if xi_grid.size == 0:
            raise EmptyGrid("xi_grid is empty")
    z, _, sd = _standardize(pool.matrix)
    ubar = u.mean(axis=0)
    t = ubar.shape[0]
    if xi_grid is None:
        coefs, lam, _ = _cv_lasso_batch(ubar[None, :], z, n_folds=n_folds, rule=rule)
        coef, xi_chosen = coefs[0], 2.0 * lam[0]
    else:
        # honor a user grid: internal lambda is xi/2 (objective scaling)
        yb = ubar - ubar.mean()
        grid = np.sort(xi_grid)[::-1][None, :] / 2.0
        gram = z.T @ z / t
        cvec = (z.T @ yb / t)[None, :]
        y_sq = np.array([yb @ yb / t])
        folds = _time_folds(t, n_folds)
        cv_err = np.zeros(grid.shape[1])
        for val_idx in folds:
            train = np.ones(t, dtype=bool)
            train[val_idx] = False
            m_tr = int(train.sum())
            g_tr = z[train].T @ z[train] / m_tr
            c_tr = (z[train].T @ yb[train] / m_tr)[None, :]
            ysq_tr = np.array([yb[train] @ yb[train] / m_tr])
            cf, _ = _gram_path(g_tr, c_tr, ysq_tr, grid)
            err = cf[0] @ z[val_idx].T - yb[val_idx][None, :]
            cv_err += np.einsum("lv,lv->l", err, err)
        best = int(np.argmin(cv_err))
        cf, gaps = _gram_path(gram, cvec, y_sq, grid)
        if gaps[0, best] >= CD_TOL:
            raise NoConvergence(gaps[0, best])
        coef, xi_chosen = cf[0, best], 2.0 * grid[0, best]
    nz = np.flatnonzero(coef != 0.0)
    order = nz[np.argsort(-np.abs(coef[nz]), kind="stable")]
    return SelectionResult(
        selected=[int(j) for j in order],
        method="pooled-lasso",
        details={"xi": float(xi_chosen), "coef": coef / np.where(sd > 0, sd, 1.0)},
    )


def individual_lasso(
    residuals: np.ndarray,
    pool: CandidatePool,
    retain_fraction: float = 0.25,
    n_folds: int = 10,
    rule: str = "1se",
) -> SelectionResult:
    """Per-unit L1 fits combined by a stability rule.

    Each unit gets its own cross-validated penalty; a candidate is retained
    when it is selected in at least ``retain_fraction`` of the units.
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    n_units = u.shape[0]
    if u.shape[1] != pool.n_periods:
        raise ValidationError("residual panel and pool period counts differ")
    if not 0.0 <= retain_fraction <= 1.0:
        raise ValidationError("retain_fraction must lie in [0, 1]")
    z, _, _ = _standardize(pool.matrix)
    coefs, lam, _ = _cv_lasso_batch(u, z, n_folds=n_folds, rule=rule)
    counts = (coefs != 0.0).sum(axis=0)
    cutoff = retain_fraction * n_units - 1e-9
    retained = np.flatnonzero(counts >= cutoff)
    order = retained[np.argsort(-counts[retained], kind="stable")]
    return SelectionResult(
        selected=[int(j) for j in order],
        method="individual-lasso",
        details={
            "frequencies": counts / n_units,
            "xi_per_unit": lam,
            "retain_fraction": retain_fraction,
        },
    )

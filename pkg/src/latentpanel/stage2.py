"""Mapping residual common variation to observable low-frequency proxies.

Extracts the leading principal component of the unit-level residuals,
aligns it to the monthly calendar, selects explanatory proxies from a
high-dimensional pool, decomposes the fit's R-squared across the selected
predictors, and estimates per-unit exposures to them.
"""

from dataclasses import dataclass
from itertools import combinations
from math import factorial

import numpy as np
from scipy import stats

from .errors import (
    RankDeficientDesign,
    TooManyPredictors,
    ValidationError,
)
from .linalg import eigenvalue_ratio_count, extract_factors
from .panel import aggregate_to_months
from .selection import (
    CandidatePool,
    MtbConfig,
    SelectionResult,
    mtb_select,
)
from .stage1 import _pooled_over_units

MAX_SHAPLEY_PREDICTORS = 20
COMPONENT_K_MAX = 8


@dataclass
class LatentComponent:
    """Leading residual principal component at native and monthly frequency."""

    weekly: np.ndarray
    explained_share: float
    monthly: np.ndarray | None = None
    months: np.ndarray | None = None


@dataclass
class ExposureFit:
    """Per-unit regression of (aggregated) residuals on the selected proxies."""

    unit: object
    delta: np.ndarray
    stderr: np.ndarray
    residual: np.ndarray
    names: list


@dataclass
class ShapleyReport:
    """Allocation of the regression R^2 across predictors.

    Shares may be negative for predictors whose marginal contribution is
    negative on average; they sum to the full-model R^2.
    """

    names: list
    shares: np.ndarray
    total_r2: float


def residual_leading_component(
    residuals: np.ndarray,
    dates=None,
    aggregation: str = "mean",
    drop_partial: bool = False,
) -> LatentComponent:
    """Leading principal component of the pooled residual covariance.

    ``residuals`` is (N, T_eff). When ``dates`` are supplied the weekly
    component is also averaged within calendar months.
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    if u.shape[0] < 2:
        raise ValidationError("need residuals from at least two units")
    cov = _pooled_over_units(u[:, :, None])
    est = extract_factors(cov, 1)
    weekly = est.factors[:, 0]
    share = float(est.explained_share[0])
    monthly = months = None
    if dates is not None:
        monthly, months = aggregate_to_months(
            weekly, dates, method=aggregation, drop_partial=drop_partial
        )
    return LatentComponent(
        weekly=weekly, explained_share=share, monthly=monthly, months=months
    )


def pca_mtb(
    residuals: np.ndarray,
    pool: CandidatePool,
    config: MtbConfig | None = None,
    dates=None,
    aggregation: str = "mean",
    drop_partial: bool = False,
    components: int | str = 1,
):
    """Select proxies for the residual common component.

    Extracts the leading component, aggregates it to months when ``dates``
    are given (the pool must then be monthly and aligned), and runs the
    forward multiple-testing selector. ``components`` extends the procedure
    to the union of per-component selections; 'auto' picks the component
    count by the eigenvalue-ratio rule. Returns (component, selection,
    design), where design holds the selected pool columns.
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    if u.shape[0] < 2:
        raise ValidationError("need residuals from at least two units")
    cov = _pooled_over_units(u[:, :, None])
    if components == "auto":
        eigvals = np.linalg.eigvalsh(cov)[::-1]
        k_cap = min(COMPONENT_K_MAX, eigvals.size - 1)
        n_comp = eigenvalue_ratio_count(np.clip(eigvals, 0.0, None), k_cap)
    else:
        n_comp = int(components)
        if n_comp < 1:
            raise ValidationError("components must be at least 1 or 'auto'")
    est = extract_factors(cov, n_comp)
    weekly = est.factors[:, 0]
    component = LatentComponent(weekly=weekly, explained_share=float(est.explained_share[0]))
    if dates is not None:
        component.monthly, component.months = aggregate_to_months(
            weekly, dates, method=aggregation, drop_partial=drop_partial
        )
    if pool.periods is not None and component.months is not None:
        # restrict the pool to the months the component actually covers
        lookup = {str(p): i for i, p in enumerate(pool.periods)}
        missing = [m for m in component.months if m not in lookup]
        if missing:
            raise ValidationError(
                f"proxy pool lacks months covered by the component: {missing[:5]}"
            )
        rows = [lookup[m] for m in component.months]
        pool = CandidatePool(
            matrix=pool.matrix[rows], names=pool.names, periods=component.months
        )
    elif (component.monthly if dates is not None else weekly).shape[0] != pool.n_periods:
        raise ValidationError(
            f"pool has {pool.n_periods} periods but the target does not match"
        )
    selected: list = []
    steps: list = []
    for j in range(n_comp):
        series = est.factors[:, j]
        if dates is not None:
            series, _ = aggregate_to_months(
                series, dates, method=aggregation, drop_partial=drop_partial
            )
        part = mtb_select(series, pool, config=config)
        steps.extend(part.steps)
        for idx in part.selected:
            if idx not in selected:
                selected.append(idx)
    selection = SelectionResult(selected=selected, steps=steps, method="pca-mtb")
    design = pool.matrix[:, selection.selected]
    return component, selection, design


def _r2_cache(target: np.ndarray, design: np.ndarray) -> np.ndarray:
    """R^2 of target on every subset of design columns, indexed by bitmask."""
    y = target - target.mean()
    x = design - design.mean(axis=0)
    tss = float(y @ y)
    k = design.shape[1]
    gram = x.T @ x
    xty = x.T @ y
    out = np.zeros(2**k)
    if tss <= 0:
        return out
    for mask in range(1, 2**k):
        idx = [j for j in range(k) if mask >> j & 1]
        sub = gram[np.ix_(idx, idx)]
        coef, *_ = np.linalg.lstsq(sub, xty[idx], rcond=None)
        out[mask] = float(xty[idx] @ coef) / tss
    return out


def shapley_owen(target: np.ndarray, design: np.ndarray, names=None) -> ShapleyReport:
    """Average marginal R^2 contribution of each predictor over all orderings.

    share_j = sum over subsets W not containing j of
    |W|! (k - |W| - 1)! / k! * (R^2(W + j) - R^2(W)); the shares sum to the
    full-model R^2. Exact enumeration, so at most 20 predictors.
    """
    y = np.asarray(target, dtype=float).ravel()
    x = np.atleast_2d(np.asarray(design, dtype=float))
    if x.shape[0] != y.shape[0]:
        raise ValidationError("target and design lengths differ")
    k = x.shape[1]
    if k > MAX_SHAPLEY_PREDICTORS:
        raise TooManyPredictors(f"{k} predictors exceed the exact-enumeration cap of 20")
    if names is None:
        names = [f"x{j}" for j in range(k)]
    r2 = _r2_cache(y, x)
    shares = np.zeros(k)
    weights = [factorial(s) * factorial(k - s - 1) / factorial(k) for s in range(k)]
    others = list(range(k))
    for j in range(k):
        rest = [i for i in others if i != j]
        for size in range(k):
            w = weights[size]
            for combo in combinations(rest, size):
                mask = sum(1 << i for i in combo)
                shares[j] += w * (r2[mask | (1 << j)] - r2[mask])
    return ShapleyReport(names=list(names), shares=shares, total_r2=float(r2[2**k - 1]))


def exposure_regressions(
    residuals: np.ndarray,
    design: np.ndarray,
    unit_ids=None,
    names=None,
    dates=None,
    aggregation: str = "mean",
    drop_partial: bool = False,
) -> list:
    """Per-unit least squares of residuals on the selected proxies.

    Residuals are averaged within calendar months first when ``dates`` are
    given. Fits include an intercept; standard errors are
    heteroskedasticity-robust (HC1). The intercept is not reported.
    """
    u = np.atleast_2d(np.asarray(residuals, dtype=float))
    x = np.atleast_2d(np.asarray(design, dtype=float))
    if dates is not None:
        agg_rows = [
            aggregate_to_months(u[i], dates, method=aggregation, drop_partial=drop_partial)[0]
            for i in range(u.shape[0])
        ]
        u = np.vstack(agg_rows)
    t_m, k = x.shape
    if u.shape[1] != t_m:
        raise ValidationError("residuals and design period counts differ")
    if unit_ids is None:
        unit_ids = list(range(u.shape[0]))
    if names is None:
        names = [f"x{j}" for j in range(k)]
    xd = np.column_stack([x, np.ones(t_m)])
    svals = np.linalg.svd(xd, compute_uv=False)
    if svals[-1] <= 1e-10 * svals[0]:
        raise RankDeficientDesign("proxy design matrix is rank deficient")
    xtx_inv = np.linalg.inv(xd.T @ xd)
    fits = []
    for i, unit in enumerate(unit_ids):
        coef = xtx_inv @ (xd.T @ u[i])
        resid = u[i] - xd @ coef
        meat = (xd * resid[:, None] ** 2).T @ xd
        cov = xtx_inv @ meat @ xtx_inv * (t_m / max(t_m - xd.shape[1], 1))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        fits.append(
            ExposureFit(
                unit=unit,
                delta=coef[:k],
                stderr=se[:k],
                residual=resid,
                names=list(names),
            )
        )
    return fits


def exposure_zstats(fit: ExposureFit):
    """z-statistics and two-sided normal p-values for one exposure fit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(fit.stderr > 0, fit.delta / fit.stderr, 0.0)
    return z, 2.0 * stats.norm.sf(np.abs(z))

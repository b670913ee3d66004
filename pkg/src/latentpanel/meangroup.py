"""Mean Group aggregation of heterogeneous unit-level coefficients.

The cross-sectional average of per-unit estimates is asymptotically normal
with a variance estimated from the dispersion of the estimates themselves,
so no unit-level covariance input is needed.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import GroupTooSmall, OverlappingGroups, ValidationError

Z_95 = float(stats.norm.ppf(0.975))


@dataclass
class MeanGroupResult:
    """Cross-sectional mean, dispersion covariance, and per-coefficient tests."""

    mean: np.ndarray
    covariance: np.ndarray  # dispersion covariance of the unit coefficients
    n_units: int
    param_names: list
    group: str = "all"
    units: tuple = ()

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None) / self.n_units)

    @property
    def zstats(self) -> np.ndarray:
        se = self.stderr
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.mean / se, 0.0)

    @property
    def pvalues(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.zstats))

    def conf_int(self, level: float = 0.95):
        z = float(stats.norm.ppf(0.5 + level / 2.0))
        half = z * self.stderr
        return self.mean - half, self.mean + half


def mean_group(
    coefficients: np.ndarray,
    param_names=None,
    group: str = "all",
    units=None,
) -> MeanGroupResult:
    """Average an (N, K) coefficient matrix across units.

    The reported standard error of coefficient j is
    sqrt(S[j, j] / N) with S the (N-1)-denominator dispersion covariance.
    """
    theta = np.atleast_2d(np.asarray(coefficients, dtype=float))
    n, k = theta.shape
    if n < 2:
        raise GroupTooSmall(f"mean group needs at least 2 units, got {n}")
    if not np.all(np.isfinite(theta)):
        raise ValidationError("coefficient matrix contains non-finite entries")
    if param_names is None:
        param_names = [f"b{j}" for j in range(k)]
    if len(param_names) != k:
        raise ValidationError("param_names length mismatch")
    mean = theta.mean(axis=0)
    dev = theta - mean
    cov = dev.T @ dev / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return MeanGroupResult(
        mean=mean,
        covariance=cov,
        n_units=n,
        param_names=list(param_names),
        group=group,
        units=tuple(units) if units is not None else (),
    )


def group_difference(a: MeanGroupResult, b: MeanGroupResult):
    """Unpaired z-test per coefficient between two disjoint groups.

    Returns (z, two-sided p-values). Groups sharing any unit are rejected;
    the test assumes independent samples.
    """
    if a.param_names != b.param_names:
        raise ValidationError("results cover different coefficient vectors")
    if a.units and b.units:
        shared = set(a.units) & set(b.units)
        if shared:
            raise OverlappingGroups(f"groups share units: {sorted(shared)[:5]}")
    se = np.sqrt(a.stderr**2 + b.stderr**2)
    diff = a.mean - b.mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, 0.0)
    return z, 2.0 * stats.norm.sf(np.abs(z))


def significance_stars(pvalue_two_sided: float) -> str:
    """One-tailed star convention: the two-sided p-value is halved, with the
    alternative taken in the direction of the estimate."""
    p = pvalue_two_sided / 2.0
    if p <= 0.01:
        return "***"
    if p <= 0.05:
        return "**"
    if p <= 0.10:
        return "*"
    return ""

"""Domain model for balanced panels and calendar alignment.

Holds the outcome/covariate panel, the observed common-factor series, group
classifications, and the lag/trim/monthly-aggregation plumbing every
estimation stage relies on. Missing observations are rejected outright: the
estimators assume a balanced panel and silent imputation would change them.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    EmptyMonth,
    SampleTooShort,
    TauTooLarge,
    UnbalancedPanel,
    ValidationError,
)


def _as_dates(time_index) -> np.ndarray:
    try:
        dates = pd.to_datetime(np.asarray(time_index)).to_numpy(dtype="datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise ValidationError(f"unparseable time index: {exc}") from exc
    return dates


@dataclass
class PanelDataset:
    """Balanced N x T panel of one outcome series and K covariates per unit.

    outcome is (N, T); covariates is (N, T, K) aligned with covariate_names.
    """

    unit_ids: list
    time_index: np.ndarray
    outcome: np.ndarray
    covariates: np.ndarray
    covariate_names: list

    def __post_init__(self):
        self.time_index = _as_dates(self.time_index)
        self.outcome = np.asarray(self.outcome, dtype=float)
        self.covariates = np.asarray(self.covariates, dtype=float)
        n, t = self.outcome.shape
        if len(self.unit_ids) != n:
            raise UnbalancedPanel("unit_ids length does not match outcome rows")
        if len(set(self.unit_ids)) != n:
            raise ValidationError("duplicate unit ids")
        if self.time_index.shape != (t,):
            raise UnbalancedPanel("time index length does not match outcome columns")
        if self.covariates.shape[:2] != (n, t):
            raise UnbalancedPanel(
                f"covariates shape {self.covariates.shape} does not match (N, T) = ({n}, {t})"
            )
        if self.covariates.shape[2] != len(self.covariate_names):
            raise ValidationError("covariate_names length mismatch")
        if not np.all(np.isfinite(self.outcome)) or not np.all(np.isfinite(self.covariates)):
            raise UnbalancedPanel("panel contains missing or non-finite cells")
        if np.any(np.diff(self.time_index) <= np.timedelta64(0, "D")):
            raise ValidationError("time index must be strictly increasing")
        k = self.covariates.shape[2]
        if n < 2:
            raise ValidationError("panel needs at least two units")
        if t < k + 2:
            raise ValidationError(f"panel too short: T={t} < K_x+2={k + 2}")

    @property
    def n_units(self) -> int:
        return self.outcome.shape[0]

    @property
    def n_periods(self) -> int:
        return self.outcome.shape[1]

    def covariate(self, name: str) -> np.ndarray:
        """Return one covariate as an (N, T) array."""
        j = self.covariate_names.index(name)
        return self.covariates[:, :, j]


@dataclass
class ObservedFactors:
    """Common factor series observed for every unit: values is (T, K)."""

    time_index: np.ndarray
    values: np.ndarray
    names: list

    def __post_init__(self):
        self.time_index = _as_dates(self.time_index)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[0] != self.time_index.shape[0]:
            raise ValidationError("factor values and time index length differ")
        if self.values.shape[1] != len(self.names):
            raise ValidationError("factor names length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("factor values contain non-finite entries")

    @property
    def n_factors(self) -> int:
        return self.values.shape[1]

    def check_alignment(self, panel: PanelDataset):
        if self.time_index.shape != panel.time_index.shape or np.any(
            self.time_index != panel.time_index
        ):
            raise ValidationError("observed factors are not aligned with the panel calendar")


@dataclass
class SemiEndogenousSet:
    """Per-unit series that load on the latent factors: values is (N, T, K)."""

    values: np.ndarray
    names: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ValidationError("semi-endogenous values must be (N, T, K)")
        if self.values.shape[2] != len(self.names):
            raise ValidationError("semi-endogenous names length mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("semi-endogenous values contain non-finite entries")

    def check_alignment(self, panel: PanelDataset):
        if self.values.shape[:2] != panel.outcome.shape:
            raise ValidationError(
                "semi-endogenous block does not match the panel's unit/time layout"
            )


@dataclass
class GroupMap:
    """Unit classifications, one label per unit per scheme."""

    schemes: dict = field(default_factory=dict)

    def labels(self, scheme: str) -> dict:
        return self.schemes[scheme]

    def units_in(self, scheme: str, label: str) -> list:
        return [u for u, lab in self.schemes[scheme].items() if lab == label]

    def check_cover(self, unit_ids):
        for scheme, mapping in self.schemes.items():
            missing = [u for u in unit_ids if u not in mapping]
            if missing:
                raise ValidationError(
                    f"scheme '{scheme}' misses units: {missing[:5]}"
                )


def lag(series: np.ndarray, tau: int) -> np.ndarray:
    """Shift a (T,) or (T, K) array forward by tau periods.

    output[t] = input[t - tau]; the first tau periods are NaN (unavailable),
    there is no wraparound.
    """
    x = np.asarray(series, dtype=float)
    tau = int(tau)
    t = x.shape[0]
    if tau < 0 or tau >= t:
        raise TauTooLarge(f"tau={tau} out of range for T={t}")
    if tau == 0:
        return x.copy()
    out = np.full_like(x, np.nan)
    out[tau:] = x[:-tau]
    return out


def trim_common(arrays, zeta: int, ar_lags: int = 0):
    """Restrict time-axis-0 arrays to the common effective sample.

    Drops the first ``zeta + ar_lags`` periods from every array: zeta periods
    are consumed by the lagged instruments and one more per autoregressive
    lag of the outcome. Returns the trimmed arrays in input order.
    """
    zeta = int(zeta)
    ar_lags = int(ar_lags)
    if zeta < 0 or ar_lags < 0:
        raise ValidationError("zeta and ar_lags must be non-negative")
    cut = zeta + ar_lags
    arrays = [np.asarray(a) for a in arrays]
    t = arrays[0].shape[0]
    for a in arrays:
        if a.shape[0] != t:
            raise SampleTooShort("arrays share no common sample (lengths differ)")
    if cut >= t - 1:
        raise SampleTooShort(f"trimming {cut} periods leaves too short a sample (T={t})")
    return [a[cut:].copy() for a in arrays]


def month_key(dates: np.ndarray) -> np.ndarray:
    """Calendar month of each period-start date, as 'YYYY-MM' labels."""
    return np.asarray(pd.DatetimeIndex(dates).strftime("%Y-%m"))


def aggregate_to_months(
    values: np.ndarray,
    dates,
    method: str = "mean",
    drop_partial: bool = False,
):
    """Aggregate a weekly series to calendar months.

    A week belongs to the month containing its period-start date. ``values``
    is (T,) or (T, K); returns (monthly values, month labels). ``method`` is
    'mean' (default) or 'median'. With ``drop_partial`` the first and last
    months are dropped when they contain fewer than four weeks, since a full
    calendar month always spans at least four week starts.
    """
    if method not in ("mean", "median"):
        raise ValidationError(f"unknown aggregation method '{method}'")
    x = np.asarray(values, dtype=float)
    dates = _as_dates(dates)
    if x.shape[0] != dates.shape[0]:
        raise ValidationError("values and dates length differ")
    keys = month_key(dates)
    labels = list(dict.fromkeys(keys))  # preserves chronological order
    # A calendar gap (a month with zero weeks inside the span) is an error.
    periods = pd.PeriodIndex(labels, freq="M")
    expected = pd.period_range(periods[0], periods[-1], freq="M")
    if len(expected) != len(periods):
        missing = sorted(set(expected.astype(str)) - set(labels))
        raise EmptyMonth(f"months without any week: {missing[:5]}")
    agg = np.mean if method == "mean" else np.median
    rows = [agg(x[keys == lab], axis=0) for lab in labels]
    out = np.asarray(rows)
    labels = np.asarray(labels)
    if drop_partial:
        counts = np.array([int(np.sum(keys == lab)) for lab in labels])
        keep = np.ones(len(labels), dtype=bool)
        if counts[0] < 4:
            keep[0] = False
        if counts[-1] < 4:
            keep[-1] = False
        out = out[keep]
        labels = labels[keep]
    return out, labels

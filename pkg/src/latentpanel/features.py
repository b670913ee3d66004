"""Unit-level risk characteristics built from raw price/volume data.

Log returns from weekly closes, the Garman-Klass range volatility, weekly
Amihud illiquidity from daily data, and the capitalization-weighted market
volatility aggregate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    AllZeroCaps,
    NonPositivePrice,
    ValidationError,
    ZeroVolumeWithMove,
)

# Coefficient on the close/open term of the Garman-Klass estimator.
_GK_CO = 2.0 * np.log(2.0) - 1.0


@dataclass
class OhlcvSeries:
    """Open/high/low/close prices and volume for one unit, one row per period."""

    unit: str
    dates: np.ndarray
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    market_cap: np.ndarray | None = None

    def __post_init__(self):
        for name in ("open", "high", "low", "close", "volume"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.market_cap is not None:
            self.market_cap = np.asarray(self.market_cap, dtype=float)
        bad = self.validate()
        if bad.size:
            raise ValidationError(
                f"unit {self.unit}: invalid OHLCV rows at indices {bad[:5].tolist()}"
            )

    def validate(self) -> np.ndarray:
        """Indices of rows violating positivity or low <= open,close <= high."""
        with np.errstate(invalid="ignore"):
            ok = (
                (self.low > 0)
                & (self.volume >= 0)
                & (self.low <= np.minimum(self.open, self.close))
                & (np.maximum(self.open, self.close) <= self.high)
            )
        ok &= np.isfinite(self.open) & np.isfinite(self.high)
        ok &= np.isfinite(self.low) & np.isfinite(self.close) & np.isfinite(self.volume)
        return np.flatnonzero(~ok)


def log_returns(close: np.ndarray) -> np.ndarray:
    """r_t = ln(p_t) - ln(p_{t-1}) from successive closing prices.

    Input has T periods, output has T-1.
    """
    p = np.asarray(close, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise ValidationError("need at least two closing prices")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise NonPositivePrice("closing prices must be positive and finite")
    lp = np.log(p)
    return lp[1:] - lp[:-1]


def garman_klass(open_, high, low, close):
    """Range-based variance estimate per period.

    0.5*ln(h/l)^2 - (2 ln 2 - 1)*ln(c/o)^2. Values are clamped at zero (the
    raw estimate can dip below zero when the data violate the OHLC ordering);
    returns (values, number of clamped periods).
    """
    o = np.asarray(open_, dtype=float)
    h = np.asarray(high, dtype=float)
    low_ = np.asarray(low, dtype=float)
    c = np.asarray(close, dtype=float)
    for arr in (o, h, low_, c):
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise NonPositivePrice("OHLC prices must be positive and finite")
    raw = 0.5 * np.log(h / low_) ** 2 - _GK_CO * np.log(c / o) ** 2
    clamped = int(np.sum(raw < 0))
    return np.clip(raw, 0.0, None), clamped


def amihud(
    abs_returns: np.ndarray,
    volumes: np.ndarray,
    week_ids: np.ndarray,
    divisor: str = "calendar",
) -> np.ndarray:
    """Weekly Amihud illiquidity from daily absolute returns and volumes.

    ILQ = 1e6 * (1/7) * sum_d |r_d| / VLM_d over the days of each week.
    Days with zero return and zero volume contribute 0 (routine for thinly
    traded assets); a day with a nonzero move at zero volume is an error.
    ``divisor`` = 'calendar' divides by 7, 'observed' by the day count of the
    week (only relevant for non-crypto data with closed days).
    """
    r = np.abs(np.asarray(abs_returns, dtype=float))
    v = np.asarray(volumes, dtype=float)
    w = np.asarray(week_ids)
    if r.shape != v.shape or r.shape != w.shape:
        raise ValidationError("daily returns, volumes and week ids must align")
    if divisor not in ("calendar", "observed"):
        raise ValidationError(f"unknown divisor '{divisor}'")
    bad = (r > 0) & (v == 0)
    if np.any(bad):
        raise ZeroVolumeWithMove(
            f"nonzero return at zero volume on {int(bad.sum())} day(s)"
        )
    ratio = np.zeros_like(r)
    nz = v > 0
    ratio[nz] = r[nz] / v[nz]
    weeks = list(dict.fromkeys(w.tolist()))
    out = np.empty(len(weeks))
    for i, wk in enumerate(weeks):
        mask = w == wk
        denom = 7.0 if divisor == "calendar" else float(mask.sum())
        out[i] = 1e6 * ratio[mask].sum() / denom
    return out


@dataclass
class FeaturePanel:
    """Weekly model covariates for one unit.

    Returns need two closes, so the first week of the raw series is dropped:
    all arrays start at the second week.
    """

    unit: str
    dates: np.ndarray
    log_return: np.ndarray
    volatility: np.ndarray
    illiquidity: np.ndarray
    volume: np.ndarray
    clamped_volatility: int = 0

    def __post_init__(self):
        lengths = {
            len(self.dates), len(self.log_return), len(self.volatility),
            len(self.illiquidity), len(self.volume),
        }
        if len(lengths) != 1:
            raise ValidationError(f"unit {self.unit}: feature lengths differ")
        if np.any(self.volatility < 0) or np.any(self.illiquidity < 0):
            raise ValidationError(f"unit {self.unit}: negative volatility or illiquidity")


def build_feature_panel(
    weekly: OhlcvSeries,
    daily_abs_returns: np.ndarray | None = None,
    daily_volumes: np.ndarray | None = None,
    daily_week_ids: np.ndarray | None = None,
    divisor: str = "calendar",
) -> FeaturePanel:
    """Assemble one unit's weekly covariates from raw bars.

    The daily inputs (for the illiquidity ratio) carry a week id per day,
    indexing into the weekly series; weeks without daily data get 0.
    """
    rets = log_returns(weekly.close)
    vlt, clamped = garman_klass(weekly.open, weekly.high, weekly.low, weekly.close)
    n_weeks = len(weekly.close)
    ilq = np.zeros(n_weeks)
    if daily_abs_returns is not None:
        week_ids = np.asarray(daily_week_ids)
        values = amihud(daily_abs_returns, daily_volumes, week_ids, divisor=divisor)
        for value, w in zip(values, dict.fromkeys(week_ids.tolist())):
            if 0 <= w < n_weeks:
                ilq[w] = value
    return FeaturePanel(
        unit=weekly.unit,
        dates=np.asarray(weekly.dates)[1:],
        log_return=rets,
        volatility=vlt[1:],
        illiquidity=ilq[1:],
        volume=weekly.volume[1:],
        clamped_volatility=clamped,
    )


def capweighted_market_vol(volatilities: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Capitalization-weighted average of unit volatilities, per period.

    ``volatilities`` and ``caps`` are (N, T); weights are caps normalized
    cross-sectionally each period.
    """
    vlt = np.asarray(volatilities, dtype=float)
    cap = np.asarray(caps, dtype=float)
    if vlt.shape != cap.shape:
        raise ValidationError("volatilities and caps must have the same shape")
    if np.any(cap < 0) or np.any(~np.isfinite(cap)):
        raise ValidationError("caps must be non-negative and finite")
    total = cap.sum(axis=0)
    if np.any(total <= 0):
        bad = np.flatnonzero(total <= 0)
        raise AllZeroCaps(f"all caps are zero in periods {bad[:5].tolist()}")
    return (vlt * cap).sum(axis=0) / total

"""Panel containers, lagging, trimming, and monthly aggregation."""

import numpy as np
import pytest

from latentpanel.errors import (
    EmptyMonth,
    SampleTooShort,
    TauTooLarge,
    UnbalancedPanel,
    ValidationError,
)
from latentpanel.panel import (
    PanelDataset,
    aggregate_to_months,
    lag,
    trim_common,
)


def weekly_dates(n, start="2019-12-30"):
    return (np.datetime64(start) + 7 * np.arange(n)).astype("datetime64[D]")


def make_panel(n=3, t=12):
    rng = np.random.default_rng(7)
    return PanelDataset(
        unit_ids=[f"u{i}" for i in range(n)],
        time_index=weekly_dates(t),
        outcome=rng.standard_normal((n, t)),
        covariates=rng.standard_normal((n, t, 2)),
        covariate_names=["a", "b"],
    )


def test_lag_basic():
    out = lag(np.array([1.0, 2.0, 3.0, 4.0]), 1)
    assert np.isnan(out[0])
    np.testing.assert_allclose(out[1:], [1.0, 2.0, 3.0])


def test_lag_zero_is_identity():
    x = np.array([5.0, 6.0, 7.0])
    np.testing.assert_allclose(lag(x, 0), x)


def test_lag_two():
    out = lag(np.array([10.0, 20.0, 30.0]), 2)
    assert np.isnan(out[0]) and np.isnan(out[1]) and out[2] == 10.0


def test_lag_matrix_and_errors():
    x = np.arange(8.0).reshape(4, 2)
    out = lag(x, 1)
    assert np.all(np.isnan(out[0]))
    np.testing.assert_allclose(out[1:], x[:-1])
    with pytest.raises(TauTooLarge):
        lag(x, 4)
    with pytest.raises(TauTooLarge):
        lag(x, -1)


def test_trim_effective_sample_bookkeeping():
    # one AR lag plus five instrument lags reproduce the published NT
    series = np.zeros(157)
    (trimmed,) = trim_common([series], zeta=5, ar_lags=1)
    assert trimmed.shape[0] == 151
    assert 40 * trimmed.shape[0] == 6040
    (trimmed,) = trim_common([series], zeta=1, ar_lags=1)
    assert trimmed.shape[0] == 155
    assert 40 * trimmed.shape[0] == 6200


def test_trim_identity_and_error():
    x = np.arange(6.0)
    (out,) = trim_common([x], zeta=0)
    np.testing.assert_allclose(out, x)
    with pytest.raises(SampleTooShort):
        trim_common([x], zeta=5)


def test_lag_then_trim_commutes():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(30)
    a = trim_common([lag(x, 2)], zeta=3)[0]
    b = lag(x, 2)[3:]
    np.testing.assert_allclose(a, b, equal_nan=True)


def test_aggregate_single_month():
    dates = np.datetime64("2021-03-01") + 7 * np.arange(4)
    vals, labels = aggregate_to_months(np.array([1.0, 2.0, 3.0, 4.0]), dates)
    np.testing.assert_allclose(vals, [2.5])
    assert list(labels) == ["2021-03"]
    vals, _ = aggregate_to_months(np.array([1.0, 2.0, 3.0, 4.0]), dates, method="median")
    np.testing.assert_allclose(vals, [2.5])


def test_aggregate_constant_series():
    dates = weekly_dates(30)
    vals, _ = aggregate_to_months(np.full(30, 3.3), dates)
    np.testing.assert_allclose(vals, 3.3)


def test_aggregate_paper_calendar():
    # 157 Mondays from 2019-12-30: one boundary week in Dec 2019, then 36
    # full months; dropping partial boundary months leaves exactly 36
    dates = weekly_dates(157)
    assert str(dates[-1]) == "2022-12-26"
    series = np.arange(157.0)
    vals, labels = aggregate_to_months(series, dates)
    assert len(labels) == 37
    vals, labels = aggregate_to_months(series, dates, drop_partial=True)
    assert len(labels) == 36
    assert labels[0] == "2020-01" and labels[-1] == "2022-12"


def test_aggregate_empty_month():
    dates = np.concatenate([
        np.datetime64("2021-01-04") + 7 * np.arange(4),
        np.datetime64("2021-03-01") + 7 * np.arange(4),
    ])
    with pytest.raises(EmptyMonth):
        aggregate_to_months(np.zeros(8), dates)


def test_panel_validations():
    panel = make_panel()
    assert panel.n_units == 3 and panel.n_periods == 12
    with pytest.raises(ValidationError):
        make_panel(n=1)
    rng = np.random.default_rng(0)
    bad = rng.standard_normal((3, 12))
    bad[1, 4] = np.nan
    with pytest.raises(UnbalancedPanel):
        PanelDataset(
            unit_ids=["a", "b", "c"],
            time_index=weekly_dates(12),
            outcome=bad,
            covariates=rng.standard_normal((3, 12, 1)),
            covariate_names=["x"],
        )
    with pytest.raises(ValidationError):
        PanelDataset(
            unit_ids=["a", "b"],
            time_index=weekly_dates(12)[::-1],
            outcome=rng.standard_normal((2, 12)),
            covariates=rng.standard_normal((2, 12, 1)),
            covariate_names=["x"],
        )


def test_covariate_lookup():
    panel = make_panel()
    np.testing.assert_allclose(panel.covariate("b"), panel.covariates[:, :, 1])

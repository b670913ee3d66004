"""Raw OHLCV bars to model covariates.

Log returns from weekly closes, Garman-Klass range volatility, weekly Amihud
illiquidity from daily bars, and the capitalization-weighted market
volatility aggregate.
"""

import numpy as np

from latentpanel.features import (
    amihud,
    capweighted_market_vol,
    garman_klass,
    log_returns,
)

rng = np.random.default_rng(3)
n_weeks = 8

# one synthetic unit: weekly bars with a 2% weekly noise scale
close = 100 * np.exp(np.cumsum(0.02 * rng.standard_normal(n_weeks)))
open_ = np.concatenate([[100.0], close[:-1]])
high = np.maximum(open_, close) * (1 + 0.01 * rng.uniform(size=n_weeks))
low = np.minimum(open_, close) * (1 - 0.01 * rng.uniform(size=n_weeks))

r = log_returns(close)
vlt, clamped = garman_klass(open_, high, low, close)
print("weekly log returns  :", r.round(4))
print("Garman-Klass vol    :", vlt.round(5), f"(clamped {clamped})")

# daily bars for the same weeks: |return|/volume averaged within the week
daily_ret = np.abs(0.01 * rng.standard_normal(7 * n_weeks))
daily_vlm = rng.uniform(1e5, 1e6, 7 * n_weeks)
week_ids = np.repeat(np.arange(n_weeks), 7)
ilq = amihud(daily_ret, daily_vlm, week_ids)
print("Amihud illiquidity  :", ilq.round(3))

# market-level volatility from five units with drifting caps
vlt_panel = rng.uniform(0.01, 0.2, (5, n_weeks))
caps = rng.uniform(1e8, 1e10, (5, n_weeks))
cvlt = capweighted_market_vol(vlt_panel, caps)
print("cap-weighted market :", cvlt.round(4))

"""Synthetic data with known coefficients, for tests and demos.

Two generators: a bare factor-model draw used by the unit tests of the IV
stage, and a full file-backed dataset (panel, observed factors, monthly
proxies, groups) whose true mean coefficients are recorded so the whole
pipeline can be checked end to end.
"""

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .panel import ObservedFactors, PanelDataset, SemiEndogenousSet


@dataclass
class SyntheticModel:
    """One draw from the structural model with every latent piece exposed."""

    panel: PanelDataset
    observed: ObservedFactors
    semi: SemiEndogenousSet
    theta: np.ndarray  # (N, K_x + K_y) true unit coefficients
    theta_mean: np.ndarray
    latent: np.ndarray  # (T, K_f) factor driving the regressors and the error
    delta: np.ndarray  # (N, K_g) loadings of the error factor
    delta_mean: np.ndarray
    param_names: list


def _weekly_mondays(n: int, start: str = "2020-01-06") -> np.ndarray:
    return (np.datetime64(start) + 7 * np.arange(n)).astype("datetime64[D]")


def draw_structural_model(
    n_units: int = 40,
    n_periods: int = 120,
    k_y: int = 2,
    k_z: int = 2,
    rho: float = 0.5,
    theta_mean: np.ndarray | None = None,
    theta_spread: float = 0.1,
    delta_mean: float = 1.0,
    noise_scale: float = 1.0,
    latent_strength: float = 1.0,
    seed: int = 0,
    rng: np.random.Generator | None = None,
) -> SyntheticModel:
    """Draw outcomes with semi-endogenous regressors sharing one latent factor.

    The regressor block Z_i loads on a latent AR(1) factor that also drives
    the error, making least squares biased while the defactored instruments
    stay valid. X_i equals Z_i (all unit covariates semi-endogenous), and
    theta_i = theta_mean + noise with independent entries.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    t, n = n_periods, n_units
    scale = np.sqrt(1.0 - rho**2)
    f = np.empty(t)
    f[0] = rng.standard_normal()
    innov = rng.standard_normal(t)
    for s in range(1, t):
        f[s] = rho * f[s - 1] + scale * innov[s]
    y = rng.standard_normal((t, k_y))
    lam = latent_strength * (1.0 + 0.5 * rng.standard_normal((n, k_z)))
    phi = 0.5 * rng.standard_normal((n, k_z, k_y))
    v = rng.standard_normal((n, t, k_z))
    z = f[None, :, None] * lam[:, None, :] + np.einsum("nky,ty->ntk", phi, y) + v

    k_x = k_z
    if theta_mean is None:
        theta_mean = np.concatenate([
            np.linspace(0.5, 1.5, k_x),
            np.linspace(-1.0, 1.0, k_y),
        ])
    theta_mean = np.asarray(theta_mean, dtype=float)
    theta = theta_mean + theta_spread * rng.standard_normal((n, k_x + k_y))
    delta = delta_mean + 0.5 * rng.standard_normal(n)
    eps = noise_scale * rng.standard_normal((n, t))
    u = delta[:, None] * f[None, :] + eps
    outcome = (
        np.einsum("ntk,nk->nt", z, theta[:, :k_x])
        + (y @ theta[:, k_x:].T).T
        + u
    )

    dates = _weekly_mondays(t)
    x_names = [f"x{j}" for j in range(k_x)]
    y_names = [f"y{j}" for j in range(k_y)]
    panel = PanelDataset(
        unit_ids=[f"u{i:03d}" for i in range(n)],
        time_index=dates,
        outcome=outcome,
        covariates=z,
        covariate_names=x_names,
    )
    observed = ObservedFactors(time_index=dates, values=y, names=y_names)
    semi = SemiEndogenousSet(values=z, names=x_names)
    return SyntheticModel(
        panel=panel,
        observed=observed,
        semi=semi,
        theta=theta,
        theta_mean=theta_mean,
        latent=f[:, None],
        delta=delta[:, None],
        delta_mean=np.array([delta_mean]),
        param_names=x_names + y_names,
    )


@dataclass
class SyntheticDataset:
    """File-backed dataset bundle with the truth recorded."""

    panel_csv: str
    factors_csv: str
    proxies_csv: str
    groups_csv: str
    truth: dict = field(default_factory=dict)


def write_synthetic_dataset(
    out_dir: str,
    n_units: int = 30,
    n_months: int = 48,
    weeks_per_month: int = 4,
    k_y: int = 2,
    n_noise_proxies: int = 20,
    seed: int = 0,
) -> SyntheticDataset:
    """Write a full synthetic dataset for the estimation pipeline.

    The latent economy-wide factor is a monthly series held constant within
    each month, so the monthly proxy pool (true factor plus noise columns)
    can recover it after residual aggregation. Returns the file paths and
    the true mean coefficients.
    """
    import os

    rng = np.random.default_rng(seed)
    os.makedirs(out_dir, exist_ok=True)
    t = n_months * weeks_per_month
    n = n_units

    g_month = np.empty(n_months)
    g_month[0] = rng.standard_normal()
    for s in range(1, n_months):
        g_month[s] = 0.5 * g_month[s - 1] + np.sqrt(0.75) * rng.standard_normal()
    g_week = np.repeat(g_month, weeks_per_month)

    k_z = 2
    y = rng.standard_normal((t, k_y))
    lam = 1.0 + 0.5 * rng.standard_normal((n, k_z))
    phi = 0.5 * rng.standard_normal((n, k_z, k_y))
    z = g_week[None, :, None] * lam[:, None, :] + np.einsum("nky,ty->ntk", phi, y) \
        + rng.standard_normal((n, t, k_z))

    theta_mean = np.concatenate([[0.8, -0.5], np.linspace(0.5, -0.5, k_y)])
    theta = theta_mean + 0.1 * rng.standard_normal((n, 2 + k_y))
    delta_mean = 1.0
    delta = delta_mean + 0.3 * rng.standard_normal(n)
    eps = rng.standard_normal((n, t))
    u = delta[:, None] * g_week[None, :] + eps
    outcome = (
        np.einsum("ntk,nk->nt", z, theta[:, :k_z]) + (y @ theta[:, k_z:].T).T + u
    )

    # weekly dates laid out so that every calendar month holds exactly
    # weeks_per_month week-start dates (spacing chosen inside each month)
    months = pd.period_range("2020-01", periods=n_months, freq="M")
    dates = []
    for m in months:
        start = m.to_timestamp()
        dates.extend(start + pd.to_timedelta(7 * np.arange(weeks_per_month), "D"))
    dates = pd.DatetimeIndex(dates)

    unit_ids = [f"u{i:03d}" for i in range(n)]
    rows = []
    for i, uid in enumerate(unit_ids):
        for s in range(t):
            rows.append(
                {
                    "unit": uid,
                    "date": dates[s].date().isoformat(),
                    "outcome": outcome[i, s],
                    "z0": z[i, s, 0],
                    "z1": z[i, s, 1],
                }
            )
    panel_csv = os.path.join(out_dir, "panel.csv")
    pd.DataFrame(rows).to_csv(panel_csv, index=False, lineterminator="\n")

    factors_csv = os.path.join(out_dir, "factors.csv")
    fdf = pd.DataFrame(y, columns=[f"y{j}" for j in range(k_y)])
    fdf.insert(0, "date", [d.date().isoformat() for d in dates])
    fdf.to_csv(factors_csv, index=False, lineterminator="\n")

    proxies_csv = os.path.join(out_dir, "proxies.csv")
    noise = rng.standard_normal((n_months, n_noise_proxies))
    pdf = pd.DataFrame(noise, columns=[f"noise{j}" for j in range(n_noise_proxies)])
    pdf.insert(0, "latent_proxy", g_month)
    pdf.insert(0, "month", months.astype(str))
    pdf.to_csv(proxies_csv, index=False, lineterminator="\n")

    groups_csv = os.path.join(out_dir, "groups.csv")
    labels = ["alpha" if i < n // 2 else "beta" for i in range(n)]
    gdf = pd.DataFrame({"unit": unit_ids, "scheme": "kind", "label": labels})
    gdf.to_csv(groups_csv, index=False, lineterminator="\n")

    # the estimation pipeline adds an AR lag and an intercept, both truly zero
    truth_by_param = {"r_lag1": 0.0, "z0": theta_mean[0], "z1": theta_mean[1]}
    truth_by_param.update({f"y{j}": theta_mean[2 + j] for j in range(k_y)})
    truth_by_param["const"] = 0.0
    truth = {
        "theta_mean": theta_mean.tolist(),
        "theta_mean_by_param": truth_by_param,
        "delta_mean": delta_mean,
        "param_names": ["z0", "z1"] + [f"y{j}" for j in range(k_y)],
        "true_proxy": "latent_proxy",
        "theta": theta.tolist(),
    }
    return SyntheticDataset(
        panel_csv=panel_csv,
        factors_csv=factors_csv,
        proxies_csv=proxies_csv,
        groups_csv=groups_csv,
        truth=truth,
    )

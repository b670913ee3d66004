"""CSV ingestion and report emission.

Input formats (UTF-8, header row, ISO-8601 dates):

* panel (long):     unit,date,outcome,<covariate...>
* factors (wide):   date,<factor...>
* proxies (wide):   month,<proxy...>
* groups (long):    unit,scheme,label
* raw OHLCV:        unit,date,open,high,low,close,volume[,market_cap]

Outputs are RFC-4180 CSV with deterministic float formatting, plus aligned
markdown variants of the group tables.
"""

import hashlib
import json
import os

import numpy as np
import pandas as pd

from .errors import ValidationError
from .meangroup import significance_stars
from .panel import GroupMap, ObservedFactors, PanelDataset, SemiEndogenousSet

FLOAT_FMT = "%.10g"


def _read_csv(path: str, required: list) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except Exception as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from exc
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")
    return df


def load_panel_csv(path: str):
    """Read a long-format panel into a PanelDataset.

    The outcome column is named ``outcome`` (``r``, the prep output's name,
    is accepted as an alias). Rejects unbalanced panels: every unit must
    have a value for every date, exactly once.
    """
    df = _read_csv(path, ["unit", "date"])
    outcome_col = "outcome" if "outcome" in df.columns else "r"
    if outcome_col not in df.columns:
        raise ValidationError(f"{path}: missing columns ['outcome']")
    covariate_names = [c for c in df.columns if c not in ("unit", "date", outcome_col)]
    units = list(dict.fromkeys(df["unit"].astype(str)))
    dates = np.sort(df["date"].unique())
    n, t = len(units), len(dates)
    if len(df) != n * t:
        counts = df.groupby("unit").size()
        bad = counts[counts != t]
        raise ValidationError(
            f"{path}: unbalanced panel; expected {t} rows per unit, offenders: "
            f"{dict(bad.head(5))}"
        )
    try:
        pivot_out = df.pivot(index="unit", columns="date", values=outcome_col)
    except ValueError as exc:
        raise ValidationError(f"{path}: duplicate (unit, date) rows: {exc}") from exc
    if pivot_out.isna().any().any():
        raise ValidationError(f"{path}: missing outcome cells after alignment")
    pivot_out = pivot_out.reindex(index=units, columns=dates)
    cov = np.empty((n, t, len(covariate_names)))
    for j, name in enumerate(covariate_names):
        pv = df.pivot(index="unit", columns="date", values=name).reindex(
            index=units, columns=dates
        )
        if pv.isna().any().any():
            raise ValidationError(f"{path}: missing '{name}' cells")
        cov[:, :, j] = pv.to_numpy()
    panel = PanelDataset(
        unit_ids=units,
        time_index=dates,
        outcome=pivot_out.to_numpy(),
        covariates=cov,
        covariate_names=covariate_names,
    )
    return panel


def load_factors_csv(path: str) -> ObservedFactors:
    df = _read_csv(path, ["date"])
    names = [c for c in df.columns if c != "date"]
    if not names:
        raise ValidationError(f"{path}: no factor columns")
    df = df.sort_values("date")
    return ObservedFactors(
        time_index=df["date"].to_numpy(),
        values=df[names].to_numpy(dtype=float),
        names=names,
    )


def load_proxies_csv(path: str):
    """Monthly proxy pool: returns (matrix, names, month labels)."""
    df = _read_csv(path, ["month"])
    names = [c for c in df.columns if c != "month"]
    if not names:
        raise ValidationError(f"{path}: no proxy columns")
    df = df.sort_values("month")
    return df[names].to_numpy(dtype=float), names, df["month"].astype(str).to_numpy()


def load_groups_csv(path: str) -> GroupMap:
    df = _read_csv(path, ["unit", "scheme", "label"])
    schemes: dict = {}
    for _, row in df.iterrows():
        scheme = schemes.setdefault(str(row["scheme"]), {})
        unit = str(row["unit"])
        if unit in scheme:
            raise ValidationError(
                f"{path}: unit '{unit}' appears twice in scheme '{row['scheme']}'"
            )
        scheme[unit] = str(row["label"])
    return GroupMap(schemes=schemes)


def semi_endogenous_from_panel(panel: PanelDataset, names: list) -> SemiEndogenousSet:
    """Pick the semi-endogenous columns out of the panel covariates."""
    missing = [c for c in names if c not in panel.covariate_names]
    if missing:
        raise ValidationError(f"semi-endogenous columns not in panel: {missing}")
    idx = [panel.covariate_names.index(c) for c in names]
    return SemiEndogenousSet(values=panel.covariates[:, :, idx], names=list(names))


def load_ohlcv_csv(path: str):
    """Raw OHLCV rows grouped by unit; returns {unit: frame with line numbers}."""
    df = _read_csv(path, ["unit", "date", "open", "high", "low", "close", "volume"])
    df["_line"] = np.arange(2, len(df) + 2)  # header is line 1
    out = {}
    for unit, g in df.groupby("unit", sort=True):
        g = g.sort_values("date")
        bad = g[
            ~(
                (g["low"] > 0)
                & (g["low"] <= g[["open", "close"]].min(axis=1))
                & (g[["open", "close"]].max(axis=1) <= g["high"])
                & (g["volume"] >= 0)
            )
        ]
        if len(bad):
            line = int(bad["_line"].iloc[0])
            raise ValidationError(
                f"{path} line {line}: invalid OHLCV row for unit '{unit}' "
                f"(requires 0 < low <= open,close <= high and volume >= 0)"
            )
        out[str(unit)] = g.reset_index(drop=True)
    return out


# --- writers -----------------------------------------------------------------


def write_csv(df: pd.DataFrame, path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FMT, lineterminator="\n")
    return path


def coefficients_frame(fits) -> pd.DataFrame:
    rows = []
    for fit in fits:
        se = fit.stderr
        for j, name in enumerate(fit.param_names):
            rows.append(
                {
                    "unit": fit.unit,
                    "param": name,
                    "estimate": fit.theta[j],
                    "stderr": se[j],
                }
            )
    return pd.DataFrame(rows)


def selection_frame(result, names) -> pd.DataFrame:
    rows = [
        {
            "step": k + 1,
            "candidate": step.index,
            "name": names[step.index],
            "tstat": step.tstat,
            "pvalue": step.pvalue,
            "threshold": step.threshold,
        }
        for k, step in enumerate(result.steps)
    ]
    if not rows and result.selected:
        rows = [
            {"step": k + 1, "candidate": j, "name": names[j],
             "tstat": np.nan, "pvalue": np.nan, "threshold": np.nan}
            for k, j in enumerate(result.selected)
        ]
    return pd.DataFrame(
        rows, columns=["step", "candidate", "name", "tstat", "pvalue", "threshold"]
    )


def shapley_frame(report) -> pd.DataFrame:
    total = report.total_r2
    return pd.DataFrame(
        {
            "proxy": report.names,
            "share": report.shares,
            "share_of_R2": report.shares / total if total > 0 else np.nan,
        }
    )


def exposures_frame(fits) -> pd.DataFrame:
    rows = []
    for fit in fits:
        for j, name in enumerate(fit.names):
            rows.append(
                {
                    "unit": fit.unit,
                    "proxy": name,
                    "estimate": fit.delta[j],
                    "stderr": fit.stderr[j],
                }
            )
    return pd.DataFrame(rows)


def mean_group_frame(results: list) -> pd.DataFrame:
    """Wide table: one row per coefficient, one column pair per group."""
    if not results:
        raise ValidationError("no mean-group results to tabulate")
    names = results[0].param_names
    data = {"param": names}
    for res in results:
        data[f"{res.group}"] = res.mean
        data[f"{res.group}_se"] = res.stderr
    df = pd.DataFrame(data)
    counts = {res.group: res.n_units for res in results}
    df.attrs["n_units"] = counts
    return df


def mean_group_markdown(results: list) -> str:
    """Aligned markdown table with one-tailed significance stars."""
    names = results[0].param_names
    header = ["param"] + [r.group for r in results]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join(["---"] * len(header)) + "|"]
    for j, name in enumerate(names):
        cells = [name]
        for r in results:
            star = significance_stars(r.pvalues[j])
            cells.append(f"{r.mean[j]:.4f}{star} ({r.stderr[j]:.4f})")
        lines.append("| " + " | ".join(cells) + " |")
    lines.append(
        "| N | " + " | ".join(str(r.n_units) for r in results) + " |"
    )
    return "\n".join(lines) + "\n"


def write_manifest(path: str, config: dict, seed, extra: dict | None = None):
    """Run manifest: config hash, seed and versions, for exact reproduction."""
    import latentpanel

    payload = json.dumps(config, sort_keys=True, default=str).encode()
    manifest = {
        "config": config,
        "config_sha256": hashlib.sha256(payload).hexdigest(),
        "seed": seed,
        "versions": {
            "latentpanel": latentpanel.__version__,
            "numpy": np.__version__,
            "pandas": pd.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return path

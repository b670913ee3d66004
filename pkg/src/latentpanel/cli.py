"""Command-line entry point.

Subcommands: ``prep`` (raw OHLCV to model covariates), ``estimate`` (the
two-stage pipeline plus Mean Group tables), ``mc`` (the selection-accuracy
benchmark grid). Options come from an INI config file plus flag overrides
(flags win). Exit codes: 0 success, 1 validation failure, 2 numerical
failure.
"""

import argparse
import configparser
import os
import sys

import numpy as np
import pandas as pd

from . import dataio
from .errors import NumericalError, ValidationError
from .features import (
    OhlcvSeries,
    build_feature_panel,
    capweighted_market_vol,
    garman_klass,
)
from .meangroup import group_difference, mean_group
from .montecarlo import PRESETS, DgpConfig, run_grid, write_tables
from .selection import CandidatePool, MtbConfig
from .stage1 import Stage1Config, stage1_run
from .stage2 import exposure_regressions, pca_mtb, shapley_owen


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        if not os.path.exists(path):
            raise ValidationError(f"config file not found: {path}")
        cfg.read(path)
    return cfg


def _get(cfg, section, key, fallback=None):
    if cfg.has_option(section, key):
        return cfg.get(section, key)
    return fallback


# --- prep --------------------------------------------------------------------


def cmd_prep(args) -> int:
    cfg = _load_config(args.config)
    divisor = _get(cfg, "prep", "amihud_divisor", "calendar")
    weekly = dataio.load_ohlcv_csv(args.weekly)
    daily = dataio.load_ohlcv_csv(args.daily) if args.daily else None

    rows = []
    market_vlt = {}
    market_cap = {}
    for unit, wf in weekly.items():
        series = OhlcvSeries(
            unit=unit,
            dates=pd.to_datetime(wf["date"]).to_numpy(),
            open=wf["open"].to_numpy(float),
            high=wf["high"].to_numpy(float),
            low=wf["low"].to_numpy(float),
            close=wf["close"].to_numpy(float),
            volume=wf["volume"].to_numpy(float),
        )
        daily_args = {}
        if daily is not None:
            if unit not in daily:
                raise ValidationError(f"unit {unit} missing from the daily file")
            df = daily[unit]
            d_dates = pd.to_datetime(df["date"]).to_numpy()
            ret_d = np.zeros(len(df))
            ret_d[1:] = np.abs(np.diff(np.log(df["close"].to_numpy(float))))
            week_id = np.searchsorted(series.dates, d_dates, side="right") - 1
            keep = week_id >= 0
            daily_args = {
                "daily_abs_returns": ret_d[keep],
                "daily_volumes": df["volume"].to_numpy(float)[keep],
                "daily_week_ids": week_id[keep],
            }
        features = build_feature_panel(series, divisor=divisor, **daily_args)
        market_vlt[unit] = garman_klass(series.open, series.high, series.low, series.close)[0]
        if "market_cap" in wf.columns and wf["market_cap"].notna().all():
            market_cap[unit] = wf["market_cap"].to_numpy(float)
        for k in range(len(features.dates)):
            rows.append(
                {
                    "unit": unit,
                    "date": pd.Timestamp(features.dates[k]).date().isoformat(),
                    "r": features.log_return[k],
                    "VLT": features.volatility[k],
                    "ILQ": features.illiquidity[k],
                    "VLM": features.volume[k],
                }
            )
    out_dir = args.out or "."
    path = os.path.join(out_dir, "features.csv")
    dataio.write_csv(pd.DataFrame(rows), path)
    written = [path]
    if market_cap and len(market_cap) == len(weekly):
        units = sorted(weekly)
        vlt_mat = np.vstack([market_vlt[u] for u in units])
        cap_mat = np.vstack([market_cap[u] for u in units])
        cvlt = capweighted_market_vol(vlt_mat, cap_mat)
        dates = [
            pd.Timestamp(d).date().isoformat()
            for d in pd.to_datetime(weekly[units[0]]["date"]).to_numpy()
        ]
        mpath = os.path.join(out_dir, "market_vlt.csv")
        dataio.write_csv(pd.DataFrame({"date": dates, "CVLT": cvlt}), mpath)
        written.append(mpath)
    dataio.write_manifest(
        os.path.join(out_dir, "manifest.json"),
        {"command": "prep", "weekly": args.weekly, "daily": args.daily,
         "amihud_divisor": divisor},
        seed=None,
    )
    for p in written:
        print(f"wrote {p}")
    return 0


# --- estimate ------------------------------------------------------------------


def _stage1_config(cfg, args) -> Stage1Config:
    k_f = _get(cfg, "stage1", "k_f", "auto")
    return Stage1Config(
        zeta=int(_get(cfg, "stage1", "zeta", 5)),
        k_f="auto" if k_f == "auto" else int(k_f),
        k_max=int(_get(cfg, "stage1", "k_max", 8)),
        intercept=_get(cfg, "stage1", "intercept", "true").lower() != "false",
        ar_lags=int(_get(cfg, "stage1", "ar_lags", 1)),
    )


def _mtb_config(cfg) -> MtbConfig:
    kwargs = {}
    for key, cast in (("p_val", float), ("c1", float), ("delta1", float),
                      ("max_steps", int)):
        val = _get(cfg, "mtb", key)
        if val is not None:
            kwargs[key] = cast(val)
    return MtbConfig(**kwargs)


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    out = args.out or "."
    panel = dataio.load_panel_csv(args.panel)
    observed = dataio.load_factors_csv(args.factors)
    z_names = [
        s.strip()
        for s in _get(cfg, "estimate", "z", ",".join(panel.covariate_names)).split(",")
    ]
    semi = dataio.semi_endogenous_from_panel(panel, z_names)
    x_key = _get(cfg, "estimate", "x")
    if x_key is not None:
        # regressor columns may be a strict subset (an instrument-only column
        # such as trading volume stays out of the outcome equation)
        x_names = [s.strip() for s in x_key.split(",")]
        missing = [c for c in x_names if c not in panel.covariate_names]
        if missing:
            raise ValidationError(f"x columns not in panel: {missing}")
        idx = [panel.covariate_names.index(c) for c in x_names]
        from .panel import PanelDataset

        panel = PanelDataset(
            unit_ids=panel.unit_ids,
            time_index=panel.time_index,
            outcome=panel.outcome,
            covariates=panel.covariates[:, :, idx],
            covariate_names=x_names,
        )
    s1cfg = _stage1_config(cfg, args)

    stage1 = stage1_run(panel, observed, semi, s1cfg)
    n, t_eff = stage1.residual_matrix.shape
    print(f"stage 1: N={n} T_eff={t_eff} NT={stage1.nt} "
          f"k_f={stage1.factor_estimates[0].n_factors}")
    dataio.write_csv(
        dataio.coefficients_frame(stage1.fits), os.path.join(out, "stage1_coefficients.csv")
    )

    groups = dataio.load_groups_csv(args.groups) if args.groups else None
    mg_all = mean_group(
        stage1.theta_matrix, stage1.param_names, group="full_sample",
        units=panel.unit_ids,
    )
    mg_results = [mg_all]
    diffs = []
    if groups:
        groups.check_cover(panel.unit_ids)
        for scheme, mapping in groups.schemes.items():
            labels = sorted(set(mapping.values()))
            by_label = {}
            for label in labels:
                members = [u for u in panel.unit_ids if mapping[u] == label]
                idx = [panel.unit_ids.index(u) for u in members]
                res = mean_group(
                    stage1.theta_matrix[idx], stage1.param_names,
                    group=f"{scheme}:{label}", units=members,
                )
                by_label[label] = res
                mg_results.append(res)
            if len(labels) == 2:
                z, p = group_difference(by_label[labels[0]], by_label[labels[1]])
                diffs.append((scheme, z, p))
    dataio.write_csv(
        dataio.mean_group_frame(mg_results), os.path.join(out, "mean_group_stage1.csv")
    )
    with open(os.path.join(out, "mean_group_stage1.md"), "w", encoding="utf-8") as fh:
        fh.write(dataio.mean_group_markdown(mg_results))
    if diffs:
        rows = []
        for scheme, z, p in diffs:
            for j, name in enumerate(stage1.param_names):
                rows.append({"scheme": scheme, "param": name, "z": z[j], "pvalue": p[j]})
        dataio.write_csv(pd.DataFrame(rows), os.path.join(out, "group_differences_stage1.csv"))

    report_paths = [os.path.join(out, "stage1_coefficients.csv")]
    if args.proxies:
        matrix, names, months = dataio.load_proxies_csv(args.proxies)
        aggregation = _get(cfg, "estimate", "aggregation", "mean")
        drop_partial = _get(cfg, "estimate", "drop_partial_months", "false").lower() == "true"
        components = _get(cfg, "estimate", "components", "1")
        pool = CandidatePool(matrix=matrix, names=names, periods=months)
        component, selection, design = pca_mtb(
            stage1.residual_matrix,
            pool,
            config=_mtb_config(cfg),
            dates=stage1.time_index,
            aggregation=aggregation,
            drop_partial=drop_partial,
            components="auto" if components == "auto" else int(components),
        )
        print(
            f"stage 2: leading component explains "
            f"{component.explained_share:.1%} of residual variance; "
            f"{len(selection.selected)} of {pool.n_candidates} proxies selected"
        )
        dataio.write_csv(
            dataio.selection_frame(selection, names), os.path.join(out, "selection_report.csv")
        )
        if selection.selected:
            sel_names = [names[j] for j in selection.selected]
            shap = shapley_owen(component.monthly, design, names=sel_names)
            dataio.write_csv(dataio.shapley_frame(shap), os.path.join(out, "shapley.csv"))
            fits = exposure_regressions(
                stage1.residual_matrix,
                design,
                unit_ids=panel.unit_ids,
                names=sel_names,
                dates=stage1.time_index,
                aggregation=aggregation,
                drop_partial=drop_partial,
            )
            dataio.write_csv(dataio.exposures_frame(fits), os.path.join(out, "exposures.csv"))
            delta_matrix = np.vstack([f.delta for f in fits])
            mg_delta = [mean_group(delta_matrix, sel_names, group="full_sample",
                                   units=panel.unit_ids)]
            if groups:
                for scheme, mapping in groups.schemes.items():
                    for label in sorted(set(mapping.values())):
                        members = [u for u in panel.unit_ids if mapping[u] == label]
                        idx = [panel.unit_ids.index(u) for u in members]
                        mg_delta.append(
                            mean_group(delta_matrix[idx], sel_names,
                                       group=f"{scheme}:{label}", units=members)
                        )
            dataio.write_csv(
                dataio.mean_group_frame(mg_delta), os.path.join(out, "mean_group_stage2.csv")
            )
            with open(os.path.join(out, "mean_group_stage2.md"), "w", encoding="utf-8") as fh:
                fh.write(dataio.mean_group_markdown(mg_delta))

    dataio.write_manifest(
        os.path.join(out, "manifest.json"),
        {
            "command": "estimate",
            "panel": args.panel,
            "factors": args.factors,
            "proxies": args.proxies,
            "groups": args.groups,
            "stage1": vars(s1cfg),
        },
        seed=args.seed,
    )
    print(f"reports written to {out}")
    return 0


# --- mc ------------------------------------------------------------------------


def _mc_designs(cfg, args):
    preset = args.preset or _get(cfg, "mc", "preset")
    if preset:
        if preset not in PRESETS:
            raise ValidationError(
                f"unknown preset '{preset}'; available: {sorted(PRESETS)}"
            )
        return PRESETS[preset]()
    r = int(_get(cfg, "mc", "r", 2))
    phi = float(_get(cfg, "mc", "phi", 1.0))
    rho = float(_get(cfg, "mc", "rho", 0.5))
    pi = float(_get(cfg, "mc", "pi", 0.5))
    t_grid = [int(s) for s in _get(cfg, "mc", "t_grid", "25,50,100").split(",")]
    n_grid = [int(s) for s in _get(cfg, "mc", "n_grid", "25,50,100").split(",")]
    return [
        DgpConfig(r=r, n=n, T=t, N=t, rho=rho, pi=pi, phi=phi)
        for t in t_grid
        for n in n_grid
    ]


def cmd_mc(args) -> int:
    cfg = _load_config(args.config)
    designs = _mc_designs(cfg, args)
    reps = args.reps or int(_get(cfg, "mc", "reps", 500))
    methods = [
        s.strip()
        for s in (args.methods or _get(cfg, "mc", "methods", "pca-mtb,p-lasso,i-lasso")).split(",")
    ]
    seed = args.seed if args.seed is not None else _get(cfg, "mc", "seed")
    if seed is None:
        # no seed supplied: draw one and record it in the manifest
        seed = int(np.random.SeedSequence().entropy % 2**31)
        print(f"seed drawn: {seed}")
    seed = int(seed)
    out = args.out or "."
    result = run_grid(
        designs, reps=reps, seed=seed, methods=methods,
        mtb_config=_mtb_config(cfg), jobs=args.jobs,
    )
    paths = write_tables(result, out)
    dataio.write_manifest(
        os.path.join(out, "manifest.json"),
        {
            "command": "mc",
            "designs": [vars(d) for d in designs],
            "reps": reps,
            "methods": methods,
        },
        seed=seed,
    )
    for p in paths:
        print(f"wrote {p}")
    return 0


# --- entry ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentpanel",
        description="Two-stage panel estimation with latent common risk factors",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, default=None, help="root RNG seed")
    common.add_argument("--out", help="output directory", default=".")

    p = sub.add_parser("prep", parents=[common], help="build model covariates from raw OHLCV")
    p.add_argument("--weekly", required=True, help="weekly OHLCV CSV")
    p.add_argument("--daily", help="daily OHLCV CSV (for the illiquidity ratio)")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("estimate", parents=[common], help="run the two-stage pipeline")
    p.add_argument("--panel", required=True, help="long panel CSV")
    p.add_argument("--factors", required=True, help="observed factor CSV")
    p.add_argument("--proxies", help="monthly proxy CSV")
    p.add_argument("--groups", help="unit classification CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("mc", parents=[common], help="selection-accuracy benchmark")
    p.add_argument("--preset", help=f"design preset: {', '.join(sorted(PRESETS))}")
    p.add_argument("--reps", type=int, help="replications per design cell")
    p.add_argument("--methods", help="comma list: pca-mtb,p-lasso,i-lasso")
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

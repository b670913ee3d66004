"""Simulation harness for the selection-accuracy benchmark.

Generates a factor panel with confounded candidate pools, runs the three
selectors (principal-component target with forward testing, pooled L1,
per-unit L1 with a stability rule), scores each against the true signal set,
and averages metrics over replications on a grid of designs.

Replication streams are keyed by (cell, rep), so results are bit-identical
for any worker count.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import IndexOutOfRange, InvalidConfig
from .linalg import extract_factors, pooled_covariance
from .selection import (
    CandidatePool,
    MtbConfig,
    individual_lasso,
    mtb_select,
    pooled_lasso,
)

METHODS = ("pca-mtb", "p-lasso", "i-lasso")
METRICS = ("mcc", "f1", "model_size", "tdr", "fdr", "tpr", "fpr")


@dataclass(frozen=True)
class DgpConfig:
    """One simulation design cell.

    r true signals and n extra candidates (the first r extras are
    pseudo-signals correlated with the true ones through shared innovations);
    loadings have mean phi and pairwise correlation 0.5.
    """

    r: int
    n: int
    T: int
    N: int
    rho: float = 0.5
    pi: float = 0.5
    phi: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise InvalidConfig("r must be at least 1")
        if self.n < self.r:
            raise InvalidConfig("need n >= r (the first r extras are pseudo-signals)")
        if not 0.0 <= self.rho < 1.0:
            raise InvalidConfig("rho must lie in [0, 1)")
        if not 0.0 <= self.pi <= 1.0:
            raise InvalidConfig("pi must lie in [0, 1]")
        if self.T < 5 or self.N < 2:
            raise InvalidConfig("T must be >= 5 and N >= 2")


@dataclass(frozen=True)
class DgpDraw:
    """One simulated panel: outcomes, true signals, and the candidate pool."""

    outcomes: np.ndarray  # (N, T)
    signals: np.ndarray  # (T, r)
    pool: np.ndarray  # (T, r + n): true signals first, extras after
    loadings: np.ndarray  # (N, r)


def _ar1(innovations: np.ndarray, rho: float, init: np.ndarray) -> np.ndarray:
    """Stationary AR(1) path with unit variance given unit-variance inputs."""
    t = innovations.shape[0]
    out = np.empty_like(innovations)
    scale = np.sqrt(1.0 - rho**2)
    prev = init
    for s in range(t):
        prev = rho * prev + scale * innovations[s]
        out[s] = prev
    return out


def generate_dgp(config: DgpConfig, rng: np.random.Generator | None = None) -> DgpDraw:
    """Draw one panel from the design.

    Signals follow a stationary AR(1) with unit variance; loadings are
    normal with mean phi, unit variance, and 0.5 pairwise correlation.
    Pseudo-signal j shares the innovation of signal j with weight
    sqrt(1 - pi); the remaining extras are independent noise factors.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    r, n, t, n_units = config.r, config.n, config.T, config.N
    rho, pi = config.rho, config.pi

    eps_g = rng.standard_normal((t, r))  # signal innovations
    g0 = rng.standard_normal(r)
    signals = _ar1(eps_g, rho, g0)

    # Pseudo-signals: innovation = sqrt(pi)*own + sqrt(1-pi)*signal innovation,
    # initialized at the stationary joint law so the correlation holds from t=0.
    own = rng.standard_normal((t, r))
    eps_ps = np.sqrt(pi) * own + np.sqrt(1.0 - pi) * eps_g
    ps0 = np.sqrt(pi) * rng.standard_normal(r) + np.sqrt(1.0 - pi) * g0
    pseudo = _ar1(eps_ps, rho, ps0)

    eps_noise = rng.standard_normal((t, n - r))
    f0 = rng.standard_normal(n - r)
    noise_factors = _ar1(eps_noise, rho, f0) if n > r else np.empty((t, 0))

    # Loadings: mean phi, covariance 0.5*J + 0.5*I (unit variance, 0.5 corr).
    common = rng.standard_normal(n_units)
    idio = rng.standard_normal((n_units, r))
    loadings = config.phi + np.sqrt(0.5) * (common[:, None] + idio)

    eps = rng.standard_normal((n_units, t))
    outcomes = loadings @ signals.T + eps
    pool = np.column_stack([signals, pseudo, noise_factors])
    return DgpDraw(outcomes=outcomes, signals=signals, pool=pool, loadings=loadings)


@dataclass(frozen=True)
class MetricReport:
    """Confusion counts and selection-accuracy metrics for one replication."""

    tp: int
    fp: int
    tn: int
    fn: int
    mcc: float
    f1: float
    tpr: float
    fpr: float
    tdr: float
    fdr: float
    model_size: int

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}


def score_selection(selected, true_count: int, pool_size: int) -> MetricReport:
    """Score a selected index set against the true set {0, ..., true_count-1}.

    Ratios with a zero denominator are reported as 0 (standard convention for
    MCC and TDR when nothing is selected).
    """
    sel = set(int(j) for j in selected)
    for j in sel:
        if j < 0 or j >= pool_size:
            raise IndexOutOfRange(f"selected index {j} outside pool of {pool_size}")
    truth = set(range(true_count))
    tp = len(sel & truth)
    fp = len(sel - truth)
    fn = true_count - tp
    tn = pool_size - true_count - fp
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / np.sqrt(denom) if denom > 0 else 0.0
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    tpr = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    fpr = fp / (fp + tn) if (fp + tn) > 0 else 0.0
    tdr = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    fdr = fp / (tp + fp) if (tp + fp) > 0 else 0.0
    return MetricReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        mcc=float(mcc), f1=float(f1), tpr=float(tpr), fpr=float(fpr),
        tdr=float(tdr), fdr=float(fdr), model_size=len(sel),
    )


def leading_component(outcomes: np.ndarray) -> np.ndarray:
    """Leading principal component of the pooled outcome covariance."""
    cov = pooled_covariance(outcomes)
    return extract_factors(cov, 1).factors[:, 0]


def run_methods(
    draw: DgpDraw,
    config: DgpConfig,
    methods=METHODS,
    mtb_config: MtbConfig | None = None,
) -> dict:
    """Run each selector on one draw and score it. Returns method -> report."""
    pool = CandidatePool(
        matrix=draw.pool,
        names=[f"z{j}" for j in range(draw.pool.shape[1])],
    )
    n_pool = pool.n_candidates
    out = {}
    for method in methods:
        if method == "pca-mtb":
            target = leading_component(draw.outcomes)
            result = mtb_select(target, pool, config=mtb_config)
        elif method == "p-lasso":
            result = pooled_lasso(draw.outcomes, pool)
        elif method == "i-lasso":
            result = individual_lasso(draw.outcomes, pool)
        else:
            raise InvalidConfig(f"unknown method '{method}'")
        out[method] = score_selection(result.selected, config.r, n_pool)
    return out


# ---------------------------------------------------------------------------
# Experiment grids
# ---------------------------------------------------------------------------

TABLE_GRID = (25, 50, 100)  # T values; n takes the same values, N = T


def paper_grid(r: int, phi: float, rho: float = 0.5, pi: float = 0.5) -> list:
    """The published 9-cell design block: T x n over {25, 50, 100}, N = T."""
    return [
        DgpConfig(r=r, n=n, T=t, N=t, rho=rho, pi=pi, phi=phi)
        for t in TABLE_GRID
        for n in TABLE_GRID
    ]


def text_grid(r: int, phi: float, rho: float = 0.5, pi: float = 0.5) -> list:
    """Alternate grid from the narrative description: T in {50,100,200}, n = T - r."""
    return [
        DgpConfig(r=r, n=t - r, T=t, N=t, rho=rho, pi=pi, phi=phi)
        for t in (50, 100, 200)
    ]


PRESETS = {
    "paper-r2": lambda: paper_grid(2, 1.0),
    "paper-r2-phi0": lambda: paper_grid(2, 0.0),
    "paper-r5": lambda: paper_grid(5, 1.0),
    "paper-r5-phi0": lambda: paper_grid(5, 0.0),
    "text-r2": lambda: text_grid(2, 1.0),
    "text-r5": lambda: text_grid(5, 1.0),
}


def _cell_rng(seed: int, cell_index: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, rep))
    )


def _run_one(args):
    seed, cell_index, rep, config, methods, mtb_config = args
    rng = _cell_rng(seed, cell_index, rep)
    draw = generate_dgp(config, rng=rng)
    reports = run_methods(draw, config, methods=methods, mtb_config=mtb_config)
    return cell_index, rep, {m: rep_.as_dict() for m, rep_ in reports.items()}


@dataclass
class GridResult:
    """Mean metrics per design cell and method, plus run metadata."""

    designs: list
    methods: tuple
    reps: int
    seed: int
    means: dict = field(default_factory=dict)  # (cell_index, method) -> {metric: mean}

    def cell_mean(self, cell_index: int, method: str, metric: str) -> float:
        return self.means[(cell_index, method)][metric]

    def metric_table(self, metric: str) -> pd.DataFrame:
        """Wide table of one metric: rows (r, phi, T), columns method x n."""
        rows = {}
        for idx, cfg in enumerate(self.designs):
            key = (cfg.r, cfg.phi, cfg.T)
            row = rows.setdefault(key, {})
            for method in self.methods:
                row[(method, cfg.n)] = self.means[(idx, method)][metric]
        records = []
        for (r, phi, t), vals in sorted(rows.items()):
            rec = {"r": r, "phi": phi, "T": t}
            for (method, n), v in sorted(vals.items()):
                rec[f"{method}/n={n}"] = v
            records.append(rec)
        return pd.DataFrame.from_records(records)

    def summary_table(self, metric: str = "mcc") -> pd.DataFrame:
        """Cross-design summary per method: median, IQR, min, max, share > 0.8,
        average rank, and share ranked first."""
        per_method = {
            m: np.array([self.means[(i, m)][metric] for i in range(len(self.designs))])
            for m in self.methods
        }
        stacked = np.vstack([per_method[m] for m in self.methods])
        # rank 1 = best (largest metric value) within each design cell
        order = (-stacked).argsort(axis=0, kind="stable")
        ranks = np.empty_like(order)
        for c in range(stacked.shape[1]):
            ranks[order[:, c], c] = np.arange(1, stacked.shape[0] + 1)
        records = []
        for i, m in enumerate(self.methods):
            vals = per_method[m]
            q1, q3 = np.percentile(vals, [25, 75])
            records.append(
                {
                    "method": m,
                    "median": float(np.median(vals)),
                    "iqr": float(q3 - q1),
                    "min": float(vals.min()),
                    "max": float(vals.max()),
                    "prop_gt_0.8": float(np.mean(vals > 0.8)),
                    "rank": float(ranks[i].mean()),
                    "prop_1st": float(np.mean(ranks[i] == 1)),
                }
            )
        return pd.DataFrame.from_records(records)


def run_grid(
    designs,
    reps: int,
    seed: int = 0,
    methods=METHODS,
    mtb_config: MtbConfig | None = None,
    jobs: int = 1,
) -> GridResult:
    """Average metric reports over ``reps`` replications of every design cell.

    The (cell, rep) seed stream makes the result independent of ``jobs``.
    """
    designs = list(designs)
    if reps < 1:
        raise InvalidConfig("reps must be at least 1")
    for cfg in designs:
        if not isinstance(cfg, DgpConfig):
            raise InvalidConfig("designs must be DgpConfig instances")
    tasks = [
        (seed, ci, rep, cfg, tuple(methods), mtb_config)
        for ci, cfg in enumerate(designs)
        for rep in range(reps)
    ]
    accum: dict = {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=8))
    else:
        results = [_run_one(t) for t in tasks]
    # deterministic fold regardless of completion order
    results.sort(key=lambda r: (r[0], r[1]))
    for cell_index, _rep, reports in results:
        for method, metrics in reports.items():
            bucket = accum.setdefault((cell_index, method), {m: 0.0 for m in METRICS})
            for m in METRICS:
                bucket[m] += metrics[m]
    means = {
        key: {m: v / reps for m, v in bucket.items()} for key, bucket in accum.items()
    }
    return GridResult(
        designs=designs, methods=tuple(methods), reps=reps, seed=seed, means=means
    )


def write_tables(result: GridResult, out_dir: str) -> list:
    """One CSV per metric plus an MCC summary CSV; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for metric in METRICS:
        path = os.path.join(out_dir, f"mc_{metric}.csv")
        result.metric_table(metric).to_csv(
            path, index=False, float_format="%.6f", lineterminator="\n"
        )
        paths.append(path)
    path = os.path.join(out_dir, "mc_summary_mcc.csv")
    result.summary_table("mcc").to_csv(
        path, index=False, float_format="%.6f", lineterminator="\n"
    )
    paths.append(path)
    return paths

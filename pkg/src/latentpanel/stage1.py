"""Unit-level IV estimation with defactored instruments.

The semi-endogenous regressors load on latent common factors shared with the
error term. Projecting out the observed factors, extracting the remaining
common component by PCA of the pooled covariance, and annihilating it from
lagged copies of the regressors yields instruments that are exogenous with
respect to the composite error. Each unit is then fit by GMM with the
instrument Gram matrix as the weighting, and a heteroskedasticity-robust
sandwich covariance.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FactorCountZero,
    OrderConditionViolated,
    RankDeficientA,
    SampleTooShort,
    SingularWeighting,
    Stage1Failed,
    ValidationError,
)
from .linalg import (
    FactorEstimate,
    annihilator,
    eigenvalue_ratio_count,
    extract_factors,
)
from .panel import ObservedFactors, PanelDataset, SemiEndogenousSet

# Condition-number policy for the instrument weighting matrix.
COND_HARD_LIMIT = 1e12
COND_JITTER_AT = 1e10
JITTER_SCALE = 1e-10
RANK_RTOL = 1e-10


@dataclass
class Stage1Config:
    zeta: int = 5
    k_f: int | str = "auto"
    k_max: int = 8
    intercept: bool = True
    ar_lags: int = 1

    def __post_init__(self):
        if self.zeta < 0:
            raise ValidationError("zeta must be non-negative")
        if self.ar_lags < 0:
            raise ValidationError("ar_lags must be non-negative")
        if isinstance(self.k_f, str):
            if self.k_f != "auto":
                raise ValidationError("k_f must be an integer or 'auto'")
        elif self.k_f < 1:
            raise ValidationError("k_f must be at least 1")
        if self.k_max < 1:
            raise ValidationError("k_max must be at least 1")


@dataclass
class InstrumentMatrix:
    """Per-unit instrument blocks on the effective sample.

    Column layout: defactored semi-endogenous blocks for lags 0..zeta, then
    the observed factors and their first lag, then (optionally) a constant.
    """

    data: np.ndarray  # (N, T_eff, columns)
    zeta: int
    k_z: int
    k_y: int
    intercept: bool

    @property
    def k_iv(self) -> int:
        return self.k_z * (self.zeta + 1) + 2 * self.k_y

    @property
    def n_columns(self) -> int:
        return self.data.shape[2]


@dataclass
class UnitIVFit:
    """Coefficients, sandwich covariance and residuals for one unit."""

    unit: object
    theta: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    param_names: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


@dataclass
class Stage1Result:
    fits: list
    factor_estimates: list  # FactorEstimate per lag 0..zeta
    instruments: InstrumentMatrix
    residual_matrix: np.ndarray  # (N, T_eff)
    time_index: np.ndarray
    param_names: list
    config: Stage1Config

    @property
    def theta_matrix(self) -> np.ndarray:
        return np.vstack([f.theta for f in self.fits])

    @property
    def n_effective(self) -> int:
        return self.residual_matrix.shape[1]

    @property
    def nt(self) -> int:
        return self.residual_matrix.size


def defactor_regressors(
    z_lagged: list,
    y_eff: np.ndarray | None,
    k_f: int | str = "auto",
    k_max: int = 8,
):
    """Purge observed and latent common components from regressor blocks.

    ``z_lagged[tau]`` is the (N, T_eff, K_z) block of the semi-endogenous
    variables lagged tau periods, all on one common sample. For each lag the
    observed factors are projected out, the latent component is extracted
    from the pooled covariance (factor count shared across lags, chosen by
    the eigenvalue-ratio rule when ``k_f`` is 'auto'), and its annihilator is
    applied. Returns (factor estimates per lag, defactored blocks per lag).
    """
    blocks = [np.asarray(z, dtype=float) for z in z_lagged]
    n, t_eff, _ = blocks[0].shape
    if y_eff is not None and y_eff.size:
        m_y = annihilator(y_eff).annihilator
    else:
        m_y = np.eye(t_eff)
    raw_scale = max(float(np.mean(blocks[0] ** 2)), 1e-300)
    estimates: list = []
    defactored: list = []
    k_use: int | None = None if k_f == "auto" else int(k_f)
    for tau, block in enumerate(blocks):
        projected = np.einsum("ts,nsk->ntk", m_y, block)
        pooled = _pooled_over_units(projected)
        if np.trace(pooled) <= 1e-10 * raw_scale:
            raise FactorCountZero(
                f"no residual common variation at lag {tau}: the projected block is null"
            )
        if k_use is None:
            eigvals = np.linalg.eigvalsh(pooled)[::-1]
            k_cap = min(k_max, t_eff - 2, max(1, eigvals.size - 1))
            k_use = eigenvalue_ratio_count(np.clip(eigvals, 0.0, None), k_cap)
        est = extract_factors(pooled, k_use)
        m_f = annihilator(est.factors).annihilator
        estimates.append(est)
        defactored.append(np.einsum("ts,nsk->ntk", m_f, projected))
    return estimates, defactored


def _pooled_over_units(blocks: np.ndarray) -> np.ndarray:
    n, t_eff, k = blocks.shape
    flat = blocks.transpose(1, 0, 2).reshape(t_eff, n * k)
    cov = flat @ flat.T / (n * t_eff)
    return 0.5 * (cov + cov.T)


def build_instruments(
    defactored: list,
    y_eff: np.ndarray | None,
    y_lag1: np.ndarray | None,
    k_x: int,
    intercept: bool = True,
) -> InstrumentMatrix:
    """Assemble the per-unit instrument matrix.

    Raises OrderConditionViolated when the instrument count (excluding the
    constant) falls short of the regressor count k_x + k_y.
    """
    blocks = [np.asarray(b, dtype=float) for b in defactored]
    n, t_eff, k_z = blocks[0].shape
    zeta = len(blocks) - 1
    k_y = 0 if y_eff is None else int(np.atleast_2d(y_eff).shape[1])
    k_iv = k_z * (zeta + 1) + 2 * k_y
    if k_iv < k_x + k_y:
        raise OrderConditionViolated(
            f"instrument count {k_iv} below regressor count {k_x + k_y}"
        )
    parts = list(blocks)
    if k_y:
        parts.append(np.broadcast_to(y_eff, (n, t_eff, k_y)))
        parts.append(np.broadcast_to(y_lag1, (n, t_eff, k_y)))
    if intercept:
        parts.append(np.ones((n, t_eff, 1)))
    data = np.concatenate(parts, axis=2)
    return InstrumentMatrix(data=data, zeta=zeta, k_z=k_z, k_y=k_y, intercept=intercept)


def fit_unit_iv(
    r_i: np.ndarray,
    c_i: np.ndarray,
    zhat_i: np.ndarray,
    factors: FactorEstimate | None = None,
    param_names: list | None = None,
    unit: object = None,
) -> UnitIVFit:
    """GMM fit of one unit's coefficient vector.

    theta = (A' B^-1 A)^-1 A' B^-1 c with A = Z'M C/T, B = Z'M Z/T and
    c = Z'M r/T, where M annihilates the estimated factors (the identity
    when ``factors`` is None). The covariance is the sandwich
    (A'B^-1 A)^-1 A'B^-1 S B^-1 A (A'B^-1 A)^-1 / T with the outer-product
    plug-in S built from defactored instrument rows and the fit residuals.
    Residuals are computed on the untransformed data, r - C theta.
    """
    if factors is not None:
        m_f = annihilator(factors.factors).annihilator
    else:
        m_f = None
    return _fit_unit_iv(
        np.asarray(r_i, float),
        np.asarray(c_i, float),
        np.asarray(zhat_i, float),
        m_f,
        param_names,
        unit,
    )


def _fit_unit_iv(r_i, c_i, zhat_i, m_f, param_names=None, unit=None) -> UnitIVFit:
    t_eff = r_i.shape[0]
    if c_i.shape[0] != t_eff or zhat_i.shape[0] != t_eff:
        raise ValidationError("sample lengths differ across r, C, Z")
    if t_eff <= zhat_i.shape[1]:
        raise SampleTooShort(
            f"effective sample {t_eff} not larger than instrument count {zhat_i.shape[1]}"
        )
    zt = zhat_i if m_f is None else m_f @ zhat_i
    a_mat = zt.T @ c_i / t_eff
    b_mat = zt.T @ zt / t_eff
    c_vec = zt.T @ r_i / t_eff
    b_mat = 0.5 * (b_mat + b_mat.T)

    cond_b = float(np.linalg.cond(b_mat))
    ridge = 0.0
    if not np.isfinite(cond_b) or cond_b > COND_HARD_LIMIT:
        raise SingularWeighting(f"weighting matrix condition {cond_b:.3e} exceeds 1e12")
    if cond_b > COND_JITTER_AT:
        ridge = JITTER_SCALE * np.trace(b_mat) / b_mat.shape[0]
        b_mat = b_mat + ridge * np.eye(b_mat.shape[0])

    sing = np.linalg.svd(a_mat, compute_uv=False)
    if sing[-1] <= RANK_RTOL * sing[0]:
        raise RankDeficientA(
            f"instrument-regressor moment matrix is rank deficient "
            f"(singular values {sing[-1]:.3e}/{sing[0]:.3e})"
        )

    b_inv_a = np.linalg.solve(b_mat, a_mat)
    b_inv_c = np.linalg.solve(b_mat, c_vec)
    h_mat = a_mat.T @ b_inv_a
    h_mat = 0.5 * (h_mat + h_mat.T)
    theta = np.linalg.solve(h_mat, a_mat.T @ b_inv_c)

    residuals = r_i - c_i @ theta
    weighted = zt * residuals[:, None] ** 2
    sigma = zt.T @ weighted / t_eff
    proj = np.linalg.solve(h_mat, b_inv_a.T)  # H^-1 A' B^-1
    cov = proj @ sigma @ proj.T / t_eff
    cov = 0.5 * (cov + cov.T)

    if param_names is None:
        param_names = [f"b{j}" for j in range(theta.shape[0])]
    return UnitIVFit(
        unit=unit,
        theta=theta,
        covariance=cov,
        residuals=residuals,
        param_names=list(param_names),
        diagnostics={
            "a_min_singular": float(sing[-1]),
            "b_condition": cond_b,
            "ridge_jitter": float(ridge),
        },
    )


def stage1_run(
    panel: PanelDataset,
    observed: ObservedFactors,
    semi: SemiEndogenousSet,
    config: Stage1Config | None = None,
) -> Stage1Result:
    """Run the full first stage: defactor, build instruments, fit every unit.

    The effective sample drops zeta + ar_lags leading periods (zeta for the
    lagged instruments, one per autoregressive lag of the outcome), with a
    minimum of one dropped period for the lagged observed factors.
    Deterministic given inputs and configuration; any unit-level failure
    aborts the run with the offending unit labels.
    """
    config = config or Stage1Config()
    observed.check_alignment(panel)
    semi.check_alignment(panel)
    n, t = panel.outcome.shape
    cut = max(config.zeta + config.ar_lags, 1)
    t_eff = t - cut
    k_x = panel.covariates.shape[2] + config.ar_lags
    k_y = observed.n_factors
    if t_eff <= k_x + k_y + 2:
        raise SampleTooShort(
            f"effective sample {t_eff} too short for {k_x + k_y} regressors"
        )

    r_eff = panel.outcome[:, cut:]
    x_parts = [
        panel.outcome[:, cut - a : t - a][:, :, None] for a in range(1, config.ar_lags + 1)
    ]
    x_parts.append(panel.covariates[:, cut:, :])
    x_eff = np.concatenate(x_parts, axis=2)
    y_eff = observed.values[cut:]
    y_lag1 = observed.values[cut - 1 : t - 1]
    z_lagged = [semi.values[:, cut - tau : t - tau, :] for tau in range(config.zeta + 1)]

    estimates, defactored = defactor_regressors(
        z_lagged, y_eff if k_y else None, k_f=config.k_f, k_max=config.k_max
    )
    instruments = build_instruments(
        defactored,
        y_eff if k_y else None,
        y_lag1 if k_y else None,
        k_x=k_x,
        intercept=config.intercept,
    )

    param_names = [f"r_lag{a}" for a in range(1, config.ar_lags + 1)]
    param_names += list(panel.covariate_names) + list(observed.names)
    if config.intercept:
        param_names.append("const")

    m_f = estimates[0].annihilator().annihilator
    const = np.ones((t_eff, 1))
    fits: list = []
    failures: list = []
    for i, unit in enumerate(panel.unit_ids):
        c_parts = [x_eff[i], y_eff]
        if config.intercept:
            c_parts.append(const)
        c_i = np.column_stack(c_parts)
        try:
            fit = _fit_unit_iv(
                r_eff[i], c_i, instruments.data[i], m_f, param_names, unit
            )
        except Exception as exc:  # noqa: BLE001 - collected and re-raised below
            failures.append((unit, exc))
            continue
        fits.append(fit)
    if failures:
        raise Stage1Failed(failures)

    residual_matrix = np.vstack([f.residuals for f in fits])
    return Stage1Result(
        fits=fits,
        factor_estimates=estimates,
        instruments=instruments,
        residual_matrix=residual_matrix,
        time_index=panel.time_index[cut:],
        param_names=param_names,
        config=config,
    )

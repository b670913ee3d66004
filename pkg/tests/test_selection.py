"""Forward multiple-testing selection and the L1 baselines."""

import numpy as np
import pytest

from latentpanel.errors import (
    DegreesOfFreedomExhausted,
    EmptyGrid,
    EmptyPool,
    NoConvergence,
    ValidationError,
)
from latentpanel.selection import (
    CandidatePool,
    MtbConfig,
    coordinate_descent_lasso,
    individual_lasso,
    lasso_objective,
    mtb_select,
    pooled_lasso,
)

SEED = 987


def make_pool(t=120, n_c=30, seed=SEED):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((t, n_c))
    return CandidatePool(matrix=z, names=[f"c{j}" for j in range(n_c)]), rng


# --- configuration and thresholds -------------------------------------------


def test_threshold_formula_at_paper_constants():
    cfg = MtbConfig(p_val=0.05, c1=1.0, delta1=1.5)
    assert abs(cfg.threshold(100, 1) - 0.05 / 100**0.5) < 1e-15
    assert abs(cfg.threshold(100, 1) - 0.005) < 1e-12


def test_threshold_tightens_with_pool_and_loosens_over_passes():
    cfg = MtbConfig()
    assert cfg.threshold(100, 1) < cfg.threshold(50, 1)
    bars = [cfg.threshold(40, k) for k in range(1, 10)]
    assert all(b2 > b1 for b1, b2 in zip(bars, bars[1:]))


def test_config_validation():
    with pytest.raises(ValidationError):
        MtbConfig(p_val=0.0)
    with pytest.raises(ValidationError):
        MtbConfig(c1=-1.0)
    with pytest.raises(ValidationError):
        MtbConfig(delta1=1.0)


def test_pool_validation():
    with pytest.raises(ValidationError):
        CandidatePool(matrix=np.zeros((10, 2)), names=["a", "b"])
    with pytest.raises(ValidationError):
        CandidatePool(matrix=np.ones((3, 1)), names=["a"])


# --- forward selection --------------------------------------------------------


def test_mtb_finds_planted_signal_and_stops():
    pool, rng = make_pool(t=200)
    target = pool.matrix[:, 7] + 0.01 * rng.standard_normal(200)
    res = mtb_select(target, pool)
    assert res.selected == [7]
    assert len(res.steps) == 1
    step = res.steps[0]
    assert step.pvalue <= step.threshold
    assert abs(step.tstat) > 50


def test_mtb_two_signals_in_order_of_strength():
    pool, rng = make_pool(t=300)
    target = 2.0 * pool.matrix[:, 3] + 1.0 * pool.matrix[:, 11]
    target = target + 0.5 * rng.standard_normal(300)
    res = mtb_select(target, pool)
    assert res.selected[:2] == [3, 11]


def test_mtb_deterministic():
    pool, rng = make_pool()
    target = rng.standard_normal(pool.n_periods)
    a = mtb_select(target, pool)
    b = mtb_select(target, pool)
    assert a.selected == b.selected
    assert [s.tstat for s in a.steps] == [s.tstat for s in b.steps]


def test_mtb_scale_invariance():
    pool, rng = make_pool(t=150)
    target = pool.matrix[:, 2] + 0.3 * rng.standard_normal(150)
    base = mtb_select(target, pool).selected
    scaled = pool.matrix.copy()
    scaled[:, 5] *= 1e6
    scaled[:, 2] *= 1e-4
    res = mtb_select(target, CandidatePool(matrix=scaled, names=pool.names))
    assert res.selected == base


def test_mtb_sign_invariance_of_target():
    pool, rng = make_pool(t=150)
    target = pool.matrix[:, 4] + 0.3 * rng.standard_normal(150)
    assert mtb_select(target, pool).selected == mtb_select(-target, pool).selected


def test_mtb_pvalues_within_thresholds():
    pool, rng = make_pool(t=250)
    target = pool.matrix[:, 0] - pool.matrix[:, 1] + 0.2 * rng.standard_normal(250)
    res = mtb_select(target, pool)
    assert all(s.pvalue <= s.threshold for s in res.steps)
    assert len(set(res.selected)) == len(res.selected)


def test_mtb_errors():
    # orthogonal signals keep every pass selecting, so a user-supplied step
    # cap runs the sample out of degrees of freedom
    rng = np.random.default_rng(SEED)
    q, _ = np.linalg.qr(rng.standard_normal((8, 7)))
    pool = CandidatePool(matrix=q, names=[f"c{j}" for j in range(7)])
    with pytest.raises(DegreesOfFreedomExhausted):
        mtb_select(
            q.sum(axis=1),
            pool,
            config=MtbConfig(p_val=0.9, delta1=1.01, max_steps=9),
        )
    with pytest.raises(EmptyPool):
        mtb_select(
            np.zeros(10),
            CandidatePool(matrix=np.empty((10, 0)), names=[]),
        )


def test_mtb_null_rate_smoke():
    # quick version of the null family-wise error check (full run in acceptance)
    reps, hits = 200, 0
    rng = np.random.default_rng(SEED)
    for _ in range(reps):
        z = rng.standard_normal((100, 50))
        pool = CandidatePool(matrix=z, names=[str(j) for j in range(50)])
        hits += bool(mtb_select(rng.standard_normal(100), pool).selected)
    assert hits / reps <= 0.12


# --- coordinate descent --------------------------------------------------------


def test_cd_orthonormal_soft_threshold():
    rng = np.random.default_rng(SEED)
    t, p = 200, 6
    q, _ = np.linalg.qr(rng.standard_normal((t, p)))
    x = q * np.sqrt(t)  # X'X/T = I
    y = rng.standard_normal(t)
    xi = 0.08
    b = coordinate_descent_lasso(y, x, xi)
    corr = x.T @ y / t
    closed = np.sign(corr) * np.maximum(np.abs(corr) - xi, 0.0)
    np.testing.assert_allclose(b, closed, atol=1e-6)


def test_cd_unpenalized_equals_least_squares():
    rng = np.random.default_rng(SEED + 1)
    x = rng.standard_normal((80, 5))
    y = rng.standard_normal(80)
    b = coordinate_descent_lasso(y, x, 0.0)
    ref = np.linalg.lstsq(x, y, rcond=None)[0]
    np.testing.assert_allclose(b, ref, atol=1e-6)


def test_cd_optimality_under_perturbation():
    rng = np.random.default_rng(SEED + 2)
    x = rng.standard_normal((60, 10))
    y = x[:, 0] - 0.5 * x[:, 3] + rng.standard_normal(60)
    xi = 0.05
    b = coordinate_descent_lasso(y, x, xi)
    base = lasso_objective(y, x, b, xi)
    for _ in range(100):
        cand = b + 1e-4 * rng.standard_normal(10)
        assert lasso_objective(y, x, cand, xi) >= base - 1e-12


def test_cd_validation_and_convergence_error():
    rng = np.random.default_rng(SEED + 3)
    x = rng.standard_normal((30, 4))
    y = rng.standard_normal(30)
    with pytest.raises(ValidationError):
        coordinate_descent_lasso(y, x, -0.1)
    base = rng.standard_normal(40)
    x_corr = np.column_stack([base + 1e-8 * rng.standard_normal(40) for _ in range(6)])
    with pytest.raises(NoConvergence) as err:
        coordinate_descent_lasso(rng.standard_normal(40), x_corr, 1e-9, max_sweeps=1)
    assert err.value.gap > 0


# --- penalized baselines --------------------------------------------------------


def planted_panel(t=60, n_units=20, n_c=25, strength=1.0, seed=SEED):
    rng = np.random.default_rng(seed)
    pool = CandidatePool(
        matrix=rng.standard_normal((t, n_c)), names=[f"c{j}" for j in range(n_c)]
    )
    loadings = strength * (1.0 + 0.2 * rng.standard_normal((n_units, 2)))
    u = loadings @ pool.matrix[:, [2, 9]].T + 0.5 * rng.standard_normal((n_units, t))
    return pool, u


def test_pooled_lasso_null_at_large_penalty():
    pool, u = planted_panel()
    res = pooled_lasso(u, pool, xi_grid=np.array([1e9]))
    assert res.selected == []


def test_pooled_lasso_unpenalized_matches_least_squares():
    pool, u = planted_panel(t=80, n_c=10)
    res = pooled_lasso(u, pool, xi_grid=np.array([0.0]))
    ubar = u.mean(axis=0)
    design = np.column_stack([np.ones(80), pool.matrix])
    ref = np.linalg.lstsq(design, ubar, rcond=None)[0][1:]
    np.testing.assert_allclose(res.details["coef"], ref, atol=1e-6)


def test_pooled_lasso_selects_planted_columns():
    pool, u = planted_panel()
    res = pooled_lasso(u, pool)
    assert set(res.selected) >= {2, 9}


def test_pooled_lasso_empty_grid():
    pool, u = planted_panel()
    with pytest.raises(EmptyGrid):
        pooled_lasso(u, pool, xi_grid=np.array([]))


def test_individual_lasso_stability_boundary():
    # one of four units selects a candidate: 1/4 meets the 25% rule exactly
    rng = np.random.default_rng(SEED + 5)
    t = 60
    z = rng.standard_normal((t, 12))
    pool = CandidatePool(matrix=z, names=[f"c{j}" for j in range(12)])
    u = np.vstack([
        5.0 * z[:, 7] + 0.1 * rng.standard_normal(t),
        0.05 * rng.standard_normal(t),
        0.05 * rng.standard_normal(t),
        0.05 * rng.standard_normal(t),
    ])
    res = individual_lasso(u, pool, retain_fraction=0.25)
    freqs = res.details["frequencies"]
    assert freqs[7] == 0.25
    assert 7 in res.selected
    dropped = [j for j in range(12) if freqs[j] == 0.0]
    assert all(j not in res.selected for j in dropped)


def test_individual_lasso_monotone_in_retain_fraction():
    pool, u = planted_panel(n_units=12)
    sizes = []
    for frac in (0.1, 0.25, 0.5, 0.9):
        sizes.append(len(individual_lasso(u, pool, retain_fraction=frac).selected))
    assert all(s2 <= s1 for s1, s2 in zip(sizes, sizes[1:]))


def test_individual_lasso_recovers_common_signals():
    pool, u = planted_panel(n_units=30, strength=2.0)
    res = individual_lasso(u, pool)
    assert set(res.selected) >= {2, 9}


def test_lasso_standardization_internal():
    # rescaling a pool column leaves the selected set unchanged
    pool, u = planted_panel()
    scaled = pool.matrix.copy()
    scaled[:, 2] *= 100.0
    res_a = pooled_lasso(u, pool)
    res_b = pooled_lasso(u, CandidatePool(matrix=scaled, names=pool.names))
    assert set(res_a.selected) == set(res_b.selected)

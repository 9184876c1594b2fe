"""
Tests for design construction, the Gibbs sampler and predictive distributions.
"""
import numpy as np
import pandas as pd
import pytest
from scipy import linalg

from backend.ingestion.panel import PanelDataset, Role, StandardizationStats, subset_survey
from backend.ingestion.synthetic import DgpSpec, generate_synthetic, generate_synthetic_with_truth
from backend.services.harness import ExperimentPlan, ModelSpec, run_experiment
from backend.services.model import (
    HorseshoeState,
    McmcConfig,
    PosteriorDraws,
    PriorConfig,
    build_design,
    export_draws,
    forecast,
    gibbs_run,
    predict,
    sample_delta_inverse,
    sample_horseshoe_scales,
)
from backend.services.scoring import mixture_quantiles
from backend.tests.helpers import make_design, tiny_panel
from backend.utils.errors import DesignError, SamplerError


def window_to(data: PanelDataset, i: int):
    return data.time_index[0], data.time_index[i]


def test_design_dimensions(small_panel):
    """30 months, two target lags and h = 3 leave T = 25 training rows."""
    survey = subset_survey(small_panel, "industry", "EA")
    design = build_design(small_panel, "headline", survey, 3, window_to(small_panel, 29))
    assert design.T == 25
    assert design.M == 1 + 2 + 3
    assert design.K == 2 * len(survey)
    assert design.x_columns[:3] == ["intercept", "headline@L1", "headline@L2"]
    assert design.z_columns[:2] == [f"{survey[0]}@L0", f"{survey[0]}@L1"]
    assert design.periods[-1] == design.origin - 3
    assert design.response_key == "headline@F3"
    assert not design.fallback
    np.testing.assert_allclose(design.X[:, 0], 1.0)
    np.testing.assert_allclose(design.y.mean(), 0.0, atol=1e-12)


def test_design_matches_predictor_count():
    data = generate_synthetic(DgpSpec(periods=40, mirror_counts=True, n_signals=0), seed=1)
    design = build_design(data, "headline", subset_survey(data, "industry", "Big9"), 3, window_to(data, 29))
    assert design.T == 25
    assert (design.M - 1) + design.K == 153


def test_benchmark_design_has_no_survey_block(small_panel):
    design = build_design(small_panel, "headline", [], 1, window_to(small_panel, 29))
    assert design.K == 0
    assert design.Z.shape == (design.T, 0)
    assert not design.fallback


def test_short_window_reports_earliest_origin(small_panel):
    with pytest.raises(DesignError) as exc:
        build_design(small_panel, "headline", [], 3, window_to(small_panel, 6))
    earliest = exc.value.earliest_feasible_origin
    assert earliest == small_panel.time_index[11]
    design = build_design(small_panel, "headline", [], 3, (small_panel.time_index[0], earliest))
    assert design.T == design.M + 1


def test_design_rejects_bad_requests(small_panel):
    window = window_to(small_panel, 29)
    with pytest.raises(DesignError):
        build_design(small_panel, "headline", [], 0, window)
    with pytest.raises(DesignError):
        build_design(small_panel, "unemployment", [], 1, window)
    with pytest.raises(DesignError):
        build_design(small_panel, "headline", ["m2"], 1, window)
    with pytest.raises(DesignError):
        build_design(small_panel, "headline", [], 1, (small_panel.time_index[0], pd.Period("2030-01", "M")))


def test_future_data_never_enters_the_design(small_panel):
    """Scrambling every row after the origin leaves the design untouched."""
    survey = subset_survey(small_panel, "all", "All")
    window = window_to(small_panel, 29)
    before = build_design(small_panel, "headline", survey, 1, window)

    frame = small_panel.frame.copy()
    after_origin = frame.index > window[1]
    rng = np.random.default_rng(0)
    frame.loc[after_origin] = rng.standard_normal((after_origin.sum(), frame.shape[1])) * 100
    scrambled = PanelDataset(frame=frame, meta=dict(small_panel.meta))
    after = build_design(scrambled, "headline", survey, 1, window)

    for name in ("y", "X", "Z", "x_new", "z_new"):
        np.testing.assert_array_equal(getattr(before, name), getattr(after, name))


def test_survey_with_gap_falls_back_to_benchmark():
    n = 30
    rng = np.random.default_rng(1)
    late = rng.standard_normal(n)
    late[:10] = np.nan
    data = tiny_panel({
        "headline": (Role.TARGET, rng.standard_normal(n)),
        "unemployment": (Role.CORE_PREDICTOR, rng.standard_normal(n)),
        "late": (Role.SURVEY, late),
    })
    design = build_design(data, "headline", ["late"], 1, window_to(data, n - 1))
    assert design.fallback
    assert design.K == 0


def test_delta_conditional_moments():
    prior = PriorConfig(c0=3.0, c1=0.03)
    gamma = np.linspace(-1.0, 1.0, 40)
    sigma2 = 0.5
    shape = prior.c0 + gamma.size / 2
    rate = prior.c1 + gamma @ gamma / (2 * sigma2)
    draws = sample_delta_inverse(gamma, sigma2, prior, np.random.default_rng(2), size=50_000)
    assert draws.mean() == pytest.approx(shape / rate, rel=0.01)
    assert draws.var() == pytest.approx(shape / rate ** 2, rel=0.02)


def test_horseshoe_scales_stay_positive():
    state = HorseshoeState.initial(4)
    rng = np.random.default_rng(3)
    beta = np.array([0.0, 1e-8, 1.0, 50.0])
    for _ in range(200):
        state = sample_horseshoe_scales(beta, state, PriorConfig(), rng)
    assert np.all(state.lam2 > 0) and np.all(np.isfinite(state.lam2))
    assert state.tau2 > 0 and state.xi > 0
    assert sample_horseshoe_scales(np.empty(0), state, PriorConfig(), rng) is state


def test_intercept_only_model_matches_conjugate_posterior():
    """Flat intercept prior and IG(a0, b0) error variance: beta is Student-t."""
    rng = np.random.default_rng(4)
    T, a0, b0 = 30, 2.0, 1.0
    y = 3.0 + rng.standard_normal(T)
    design = make_design(y, np.ones((T, 1)))
    prior = PriorConfig(sigma2_shape=a0, sigma2_rate=b0, intercept_var=1e10)
    draws = gibbs_run(design, prior, McmcConfig(burn=500, retain=20_000), np.random.default_rng(5))

    nu = 2 * a0 + T - 1
    ssr = float(np.sum((y - y.mean()) ** 2))
    variance = (2 * b0 + ssr) / (T * (nu - 2))
    beta = draws.beta[:, 0]
    n = beta.size
    assert abs(beta.mean() - y.mean()) < 3 * np.sqrt(variance / n)
    # sample variance of a Student-t has relative standard error sqrt((2 + 6/(nu-4)) / n)
    assert abs(beta.var() - variance) < 3 * variance * np.sqrt((2 + 6 / (nu - 4)) / n)


def test_gibbs_run_shapes_and_determinism(small_panel):
    survey = subset_survey(small_panel, "all", "Big9")
    design = build_design(small_panel, "headline", survey, 1, window_to(small_panel, 35))
    mcmc = McmcConfig(burn=50, retain=40, thin=2)
    prior = PriorConfig()
    a = gibbs_run(design, prior, mcmc, np.random.default_rng(6))
    b = gibbs_run(design, prior, mcmc, np.random.default_rng(6))

    assert a.beta.shape == (40, design.M)
    assert a.gamma.shape == (40, design.K)
    assert a.lam.shape == (40, design.M)
    np.testing.assert_allclose(a.lam[:, 0], np.sqrt(prior.intercept_var))
    assert np.all(a.sigma2 > 0) and np.all(a.delta > 0) and np.all(a.tau > 0)
    for name in ("beta", "gamma", "sigma2", "delta", "lam", "tau"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_fixed_delta_shrinkage_is_monotone(small_panel):
    survey = subset_survey(small_panel, "all", "Big9")
    design = build_design(small_panel, "headline", survey, 1, window_to(small_panel, 35))
    norms = []
    for delta in (1e-3, 1e-2, 1e-1, 1.0):
        draws = gibbs_run(design, PriorConfig(fixed_delta=delta), McmcConfig(burn=200, retain=2000),
                          np.random.default_rng(7))
        np.testing.assert_allclose(draws.delta, delta)
        norms.append(np.linalg.norm(draws.gamma.mean(axis=0)))
    assert norms == sorted(norms)


def test_non_finite_data_raises_sampler_error():
    y = np.ones(10)
    y[3] = np.nan
    design = make_design(y, np.column_stack([np.ones(10), np.arange(10.0)]))
    with pytest.raises(SamplerError) as exc:
        gibbs_run(design, PriorConfig(), McmcConfig(burn=5, retain=5), np.random.default_rng(8))
    assert exc.value.iteration == 0


def horseshoe_regression(y, X, n_free, prior, mcmc, rng):
    """Plain Horseshoe regression of y on X, written out conditional by conditional."""
    T, M = X.shape
    m = M - n_free
    clip = lambda v: np.clip(v, 1e-12, 1e12)  # noqa: E731
    lam2, nu, tau2, xi = np.ones(m), np.ones(m), 1.0, 1.0
    sigma2 = 1.0
    betas, sigma2s, taus = [], [], []
    for it in range(mcmc.iterations):
        prior_var = np.concatenate([np.full(n_free, prior.intercept_var), lam2 * tau2])
        L = linalg.cholesky(X.T @ X / sigma2 + np.diag(1.0 / prior_var), lower=True)
        mean = linalg.cho_solve((L, True), X.T @ y / sigma2)
        beta = mean + linalg.solve_triangular(L.T, rng.standard_normal(M), lower=False)

        b2 = beta[n_free:] ** 2
        lam2 = clip((1.0 / nu + b2 / (2.0 * tau2)) / rng.gamma(1.0, 1.0, size=m))
        nu = clip((1.0 + 1.0 / lam2) / rng.gamma(1.0, 1.0, size=m))
        tau2 = float(clip((1.0 / xi + float(np.sum(b2 / lam2)) / 2.0) / rng.gamma(0.5 * (m + 1), 1.0)))
        xi = float(clip((1.0 / prior.horseshoe_scale ** 2 + 1.0 / tau2) / rng.gamma(1.0, 1.0)))

        resid = y - X @ beta
        sigma2 = float((prior.sigma2_rate + 0.5 * float(resid @ resid)) / rng.gamma(prior.sigma2_shape + 0.5 * T, 1.0))
        if it >= mcmc.burn:
            betas.append(beta)
            sigma2s.append(sigma2)
            taus.append(np.sqrt(tau2))
    return np.array(betas), np.array(sigma2s), np.array(taus)


def test_benchmark_is_a_plain_horseshoe_regression(small_panel):
    design = build_design(small_panel, "headline", [], 1, window_to(small_panel, 35))
    assert design.K == 0
    prior = PriorConfig(fixed_delta=1.0)
    mcmc = McmcConfig(burn=30, retain=60)
    draws = gibbs_run(design, prior, mcmc, np.random.default_rng(11))
    beta, sigma2, tau = horseshoe_regression(design.y, design.X, design.n_unpenalized, prior, mcmc,
                                             np.random.default_rng(11))

    np.testing.assert_allclose(draws.beta, beta, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(draws.sigma2, sigma2, rtol=1e-9)
    np.testing.assert_allclose(draws.tau, tau, rtol=1e-9)
    assert draws.gamma.shape == (60, 0)

    dist = forecast(design, draws)
    std = design.stats.std[design.response_key]
    np.testing.assert_allclose(dist.component_means, design.stats.invert(design.response_key, beta @ design.x_new),
                               rtol=1e-9)
    np.testing.assert_allclose(dist.component_vars, sigma2 * std ** 2, rtol=1e-9)


def test_known_coefficients_are_recovered():
    """Noise orthogonal to X makes the least-squares fit equal the true beta."""
    rng = np.random.default_rng(12)
    T = 200
    X = np.column_stack([np.ones(T), rng.standard_normal((T, 5))])
    beta_true = np.array([0.0, 1.0, -0.5, 0.0, 0.25, 0.0])
    noise = rng.standard_normal(T)
    noise -= X @ np.linalg.lstsq(X, noise, rcond=None)[0]
    y = X @ beta_true + 0.5 * noise / noise.std()
    draws = gibbs_run(make_design(y, X), PriorConfig(), McmcConfig(burn=500, retain=3000), np.random.default_rng(13))

    post_mean = draws.beta.mean(axis=0)
    post_sd = draws.beta.std(axis=0)
    assert np.all(np.abs(post_mean - beta_true) < 2 * post_sd)
    assert draws.sigma2.mean() == pytest.approx(0.25, rel=0.15)


def test_strong_survey_signals_get_the_right_sign():
    spec = DgpSpec(periods=240, counts={"industry.EA": 250}, n_signals=5, noise_sd=0.1)
    data, truth = generate_synthetic_with_truth(spec, seed=3)
    survey = subset_survey(data, "industry", "EA")
    design = build_design(data, "headline", survey, 1, window_to(data, len(data.time_index) - 2))
    assert design.K == 500
    draws = gibbs_run(design, PriorConfig(), McmcConfig(burn=500, retain=500), np.random.default_rng(14))

    post_mean = draws.gamma.mean(axis=0)
    signals = truth.signals["headline"]
    assert len(signals) == 5
    for var_id, coef in signals.items():
        j = design.z_columns.index(f"{var_id}@L0")
        assert np.sign(post_mean[j]) == np.sign(coef), var_id


@pytest.mark.slow
def test_ninety_percent_intervals_cover_about_ninety_percent():
    data = generate_synthetic(DgpSpec(periods=240, counts={"industry.EA": 10}, n_signals=2, noise_sd=0.5), seed=4)
    plan = ExperimentPlan(
        targets=["headline"],
        horizons=[1],
        model_specs=[ModelSpec(kind="benchmark"), ModelSpec(kind="svd", category="industry", group="EA")],
        initial_window=("2002-01", "2011-12"),
        holdout_end="2021-12",
        mcmc=McmcConfig(burn=200, retain=300),
        seed=4,
    )
    store = run_experiment(plan, data, threads=4)
    assert store.failures() == []

    for spec_id in ("benchmark", "svd:industry:EA"):
        dists = [d for d in store.distributions() if d.spec_id == spec_id]
        assert len(dists) == 120
        inside = [lo <= d.realized <= hi for d in dists for lo, hi in [mixture_quantiles(d, [0.05, 0.95])]]
        assert 0.80 <= np.mean(inside) <= 0.98, spec_id


def draws_from(beta, sigma2, gamma=None):
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    n = beta.shape[0]
    gamma = np.empty((n, 0)) if gamma is None else np.asarray(gamma, dtype=float)
    return PosteriorDraws(beta=beta, gamma=gamma, sigma2=np.asarray(sigma2, dtype=float), delta=np.ones(n),
                          lam=np.ones_like(beta), tau=np.ones(n))


def test_single_draw_predictive_is_normal():
    """beta = 2, sigma2 = 9 on the standardized scale gives N(2, 9)."""
    stats = StandardizationStats(mean={"y@F1": 0.0}, std={"y@F1": 1.0})
    dist = predict(draws_from([[2.0]], [9.0]), np.ones(1), np.empty(0), stats, "y@F1",
                   pd.Period("2010-01", "M"), 1, "y")
    assert dist.n_components == 1
    assert dist.mean() == pytest.approx(2.0)
    assert dist.variance() == pytest.approx(9.0)


def test_predictive_is_mapped_back_to_original_scale():
    stats = StandardizationStats(mean={"y@F1": 1.0}, std={"y@F1": 2.0})
    draws = draws_from([[2.0, 1.0], [0.0, 1.0]], [1.0, 4.0], gamma=[[1.0], [3.0]])
    dist = predict(draws, np.array([1.0, 0.5]), np.array([2.0]), stats, "y@F1",
                   pd.Period("2010-01", "M"), 3, "y", spec_id="svd:all:EA", T=20)
    # standardized means 2 + 0.5 + 2 = 4.5 and 0 + 0.5 + 6 = 6.5
    np.testing.assert_allclose(dist.component_means, [1.0 + 2.0 * 4.5, 1.0 + 2.0 * 6.5])
    np.testing.assert_allclose(dist.component_vars, [4.0, 16.0])
    assert dist.target_period == pd.Period("2010-04", "M")
    assert (dist.M, dist.K, dist.T) == (2, 1, 20)

    with pytest.raises(ValueError):
        predict(draws, np.ones(3), np.array([2.0]), stats, "y@F1", pd.Period("2010-01", "M"), 3, "y")


def test_forecast_uses_origin_row(small_panel):
    design = build_design(small_panel, "headline", [], 1, window_to(small_panel, 29))
    draws = gibbs_run(design, PriorConfig(), McmcConfig(burn=20, retain=10), np.random.default_rng(9))
    dist = forecast(design, draws, spec_id="benchmark")
    expected = design.stats.invert(design.response_key, draws.beta @ design.x_new)
    np.testing.assert_allclose(dist.component_means, expected)
    assert dist.origin == design.origin


def test_export_draws(tmp_path, small_panel):
    survey = subset_survey(small_panel, "industry", "EA")
    design = build_design(small_panel, "headline", survey, 1, window_to(small_panel, 29))
    draws = gibbs_run(design, PriorConfig(), McmcConfig(burn=10, retain=15), np.random.default_rng(10))
    path = export_draws(draws, tmp_path / "draws.csv")
    frame = pd.read_csv(path, index_col="draw")
    assert len(frame) == 15
    assert "beta_intercept" in frame.columns
    assert f"gamma_{design.z_columns[0]}" in frame.columns
    assert {"sigma2", "delta", "tau"} <= set(frame.columns)
    np.testing.assert_allclose(frame["sigma2"].to_numpy(), draws.sigma2, rtol=1e-10)

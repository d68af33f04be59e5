"""Fitting machinery: gradients, drivers, event/action model, init."""

import numpy as np
import pytest

from cfgp.errors import ConfigurationError, DegenerateDataError, DomainError
from cfgp.gp import (
    GPComponent,
    MixtureModel,
    mixture_log_likelihood,
    trailing_mean_feature,
)
from cfgp.kernels import BSplineMean, WhiteNoise, bspline_mean, uniform_clamped_knots
from cfgp.learning import (
    FitConfig,
    _initial_theta,
    _IouPolyFamily,
    _prepare,
    _SplineFamily,
    assemble_adjusted_objective,
    fit_baseline,
    fit_cgp,
    fit_event_action_model,
    init_parameters,
)
from cfgp.model_io import model_to_dict
from cfgp.optim import numerical_gradient
from cfgp.simulator import (
    SimConfig,
    icu_config,
    policy_a,
    policy_by_name,
    policy_never,
    simulate_regime,
)
from cfgp.traces import Dataset, Event, Trace


def rel_grad_err(analytic, numeric):
    return np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric)))


def small_regime(n=6, seed=2):
    return simulate_regime(SimConfig(), policy_a(), n, seed=seed)[0]


class TestGradients:
    @pytest.mark.parametrize("include_response", [True, False])
    def test_spline_family_matches_fd(self, include_response):
        ds = small_regime()
        traces, atypes = _prepare(ds)
        fam = _SplineFamily(traces, atypes, 3, include_response)
        rng = np.random.default_rng(0)
        theta = _initial_theta(fam, 0) + 0.05 * rng.standard_normal(fam.n_params)
        _, analytic = fam.objective_and_grad(theta)
        numeric = numerical_gradient(lambda th: fam.objective_and_grad(th)[0], theta)
        assert rel_grad_err(analytic, numeric) < 1e-4

    def test_spline_family_k1(self):
        ds = small_regime()
        traces, atypes = _prepare(ds)
        fam = _SplineFamily(traces, atypes, 1, True)
        theta = _initial_theta(fam, 0)
        _, analytic = fam.objective_and_grad(theta)
        numeric = numerical_gradient(lambda th: fam.objective_and_grad(th)[0], theta)
        assert rel_grad_err(analytic, numeric) < 1e-4

    @pytest.mark.parametrize("include_response", [True, False])
    def test_iou_poly_family_matches_fd(self, include_response):
        ds = simulate_regime(icu_config(), policy_a(), 4, seed=2)[0]
        traces, atypes = _prepare(ds)
        fam = _IouPolyFamily(traces, atypes, 2, include_response)
        rng = np.random.default_rng(1)
        theta = _initial_theta(fam, 0) + 0.05 * rng.standard_normal(fam.n_params)
        _, analytic = fam.objective_and_grad(theta)
        numeric = numerical_gradient(lambda th: fam.objective_and_grad(th)[0], theta)
        assert rel_grad_err(analytic, numeric) < 1e-4

    def test_gradients_at_multiple_points(self):
        # One random point can hide sign errors that cancel; probe a few.
        ds = small_regime()
        traces, atypes = _prepare(ds)
        fam = _SplineFamily(traces, atypes, 2, True)
        base = _initial_theta(fam, 0)
        rng = np.random.default_rng(3)
        for _ in range(3):
            theta = base + 0.15 * rng.standard_normal(fam.n_params)
            _, analytic = fam.objective_and_grad(theta)
            numeric = numerical_gradient(
                lambda th: fam.objective_and_grad(th)[0], theta
            )
            assert rel_grad_err(analytic, numeric) < 1e-4


class TestFitConfig:
    def test_defaults(self):
        cfg = FitConfig()
        assert cfg.n_components == 3 and cfg.restarts == 5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_components": 0},
            {"max_iter": 0},
            {"restarts": 0},
            {"grad_tol": 0.0},
            {"init_strategy": "nope"},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            FitConfig(**kwargs)


class TestFitDrivers:
    def test_baseline_equals_cgp_without_actions(self):
        # No actions anywhere: the response term has nothing to condition
        # on and both drivers must produce the identical result.
        ds = simulate_regime(SimConfig(), policy_never(), 8, seed=1)[0]
        ds = Dataset(traces=ds.traces)  # drop the vocabulary entry too
        cfg = FitConfig(n_components=2, max_iter=40, restarts=1, seed=0)
        r_cgp = fit_cgp(ds, cfg)
        r_base = fit_baseline(ds, cfg)
        assert r_cgp.final_objective == r_base.final_objective
        assert model_to_dict(r_cgp.model) == model_to_dict(r_base.model)

    def test_fit_improves_on_init(self):
        ds = small_regime(n=10, seed=4)
        traces, atypes = _prepare(ds)
        fam = _SplineFamily(traces, atypes, 2, True)
        theta0 = _initial_theta(fam, 0)
        v0, _ = fam.objective_and_grad(theta0)
        res = fit_cgp(ds, FitConfig(n_components=2, max_iter=60, restarts=1, seed=0))
        assert res.final_objective > -v0 * len(traces)

    def test_trace_order_invariance(self):
        ds = small_regime(n=7, seed=6)
        shuffled = Dataset(traces=tuple(reversed(ds.traces)))
        cfg = FitConfig(n_components=2, max_iter=30, restarts=1, seed=0)
        r1 = fit_cgp(ds, cfg)
        r2 = fit_cgp(shuffled, cfg)
        assert r1.final_objective == pytest.approx(r2.final_objective, abs=1e-9)
        assert model_to_dict(r1.model) == model_to_dict(r2.model)

    def test_effect_recovery_moderate_n(self):
        ds = simulate_regime(SimConfig(), policy_a(), 60, seed=11)[0]
        res = fit_cgp(ds, FitConfig(n_components=3, max_iter=150, restarts=1, seed=0))
        effect = res.model.components[0].response_mode.effect
        assert effect == pytest.approx(0.5, abs=0.08)

    def test_zero_effect_recovered_as_zero(self):
        ds = simulate_regime(SimConfig(effect=0.0), policy_a(), 60, seed=12)[0]
        res = fit_cgp(ds, FitConfig(n_components=3, max_iter=150, restarts=1, seed=0))
        effect = res.model.components[0].response_mode.effect
        assert abs(effect) < 0.05

    def test_restart_index_reported(self):
        ds = small_regime(n=8, seed=8)
        res = fit_cgp(ds, FitConfig(n_components=2, max_iter=25, restarts=2, seed=0))
        assert res.restart_index in (0, 1)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateDataError):
            fit_cgp(Dataset(traces=()), FitConfig())

    def test_outcomeless_trace_rejected(self):
        tr = Trace(id="x", tau=5.0, events=(Event(t=1.0, a="treatment"),))
        with pytest.raises(DegenerateDataError):
            fit_cgp(Dataset(traces=(tr,)), FitConfig())


class TestInitParameters:
    def test_spline_cluster_shape_and_determinism(self):
        ds = small_regime(n=9, seed=5)
        cfg = FitConfig(n_components=3, seed=0)
        vecs = [init_parameters(ds, cfg, k) for k in range(3)]
        assert all(v.shape == (5,) for v in vecs)
        again = [init_parameters(ds, cfg, k) for k in range(3)]
        for v, w in zip(vecs, again):
            assert np.array_equal(v, w)
        # Components are ordered by their end-of-horizon coefficient.
        last = [v[-1] for v in vecs]
        assert last == sorted(last)

    def test_k1_center_is_mean_of_per_trace_fits(self):
        ds = small_regime(n=6, seed=7)
        cfg = FitConfig(n_components=1, seed=0)
        center = init_parameters(ds, cfg, 0)
        from cfgp.kernels import BSplineMean, bspline_design, uniform_clamped_knots
        from cfgp.learning import _per_trace_coefficients

        traces, _ = _prepare(ds)
        spec = BSplineMean(uniform_clamped_knots(24.0, 5), np.zeros(5))
        designs = [bspline_design(spec, t.times) for t in traces]
        X = _per_trace_coefficients([t.values for t in traces], designs)
        assert np.allclose(center, X.mean(axis=0))

    def test_random_lognormal_draws(self):
        ds = small_regime(n=4, seed=3)
        cfg = FitConfig(n_components=2, seed=9, init_strategy="random_lognormal")
        v0 = init_parameters(ds, cfg, 0)
        v1 = init_parameters(ds, cfg, 1)
        assert v0.shape == (7,)
        assert not np.array_equal(v0, v1)
        # a, b, r, alpha, nu are lognormal draws, hence positive.
        assert np.all(v0[:5] > 0)
        assert np.array_equal(v0, init_parameters(ds, cfg, 0))

    def test_component_out_of_range(self):
        ds = small_regime(n=4, seed=3)
        with pytest.raises(DomainError):
            init_parameters(ds, FitConfig(n_components=2), 2)


class TestEventActionModel:
    def test_rate_closed_form(self):
        # 10 traces x 24h with 24 events each: lambda = 240 / 240 = 1.
        events = tuple(Event(t=float(j) + 0.5, y=0.0) for j in range(24))
        traces = tuple(Trace(id=f"t{i}", tau=24.0, events=events) for i in range(10))
        eam = fit_event_action_model(Dataset(traces=traces))
        assert eam.rate == pytest.approx(1.0)

    def test_logistic_recovery(self):
        # Generate labels from a known logistic law on the trailing mean.
        rng = np.random.default_rng(0)
        w_true, b_true = -1.2, 0.3
        traces = []
        for i in range(300):
            t = np.sort(rng.uniform(0.0, 24.0, size=12))
            y = rng.normal(size=12)
            events = []
            for j in range(12):
                feat = trailing_mean_feature(t[: j + 1], y[: j + 1], t[j], 2.0)
                p = 1.0 / (1.0 + np.exp(-(w_true * feat + b_true)))
                a = "treatment" if rng.uniform() < p else None
                events.append(Event(t=float(t[j]), y=float(y[j]), a=a))
            traces.append(Trace(id=f"t{i:04d}", tau=24.0, events=tuple(events)))
        eam = fit_event_action_model(Dataset(traces=tuple(traces)))
        assert eam.action_weight == pytest.approx(w_true, abs=0.15)
        assert eam.action_bias == pytest.approx(b_true, abs=0.15)

    def test_perfect_separation_clipped(self):
        # All positive outcomes treated, all negative untreated: the MLE
        # runs to infinity and must be clipped at +/-20.
        events = []
        rng = np.random.default_rng(1)
        t = np.sort(rng.uniform(0.0, 24.0, size=40))
        for j, tj in enumerate(t):
            y = 1.0 if j % 2 else -1.0
            events.append(Event(t=float(tj), y=y, a="treatment" if y > 0 else None))
        ds = Dataset(traces=(Trace(id="s", tau=24.0, events=tuple(events)),))
        eam = fit_event_action_model(ds)
        assert abs(eam.action_weight) <= 20.0
        assert eam.action_weight > 5.0  # still strongly positive

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateDataError):
            fit_event_action_model(Dataset(traces=()))

    def test_no_events_rejected(self):
        ds = Dataset(traces=(Trace(id="e", tau=5.0, events=()),))
        with pytest.raises(DegenerateDataError):
            fit_event_action_model(ds)


# Crossing trajectories: both classes sweep the same outcome range, so the
# trailing-mean feature alone cannot stand in for the class and per-class
# probability scales stay identifiable.
_CROSS_COEFFS = ((2.0, 1.0, 0.0, -1.0, -2.0), (-2.0, -1.0, 0.0, 1.0, 2.0))


def crossing_component(coeffs, sigma=0.2):
    knots = uniform_clamped_knots(24.0, 5)
    return GPComponent(
        mean=BSplineMean(knots, np.asarray(coeffs, dtype=float)),
        kernel=WhiteNoise(sigma=sigma),
    )


def crossing_mixture():
    return MixtureModel(
        log_weights=np.log([0.5, 0.5]),
        components=tuple(crossing_component(c) for c in _CROSS_COEFFS),
    )


def choice_dataset(alphas, n=250, seed=5, w_true=-0.3):
    """Traces whose whole-trajectory shape marks the class and whose action
    choice follows p = alphas[class] * sigmoid(w_true * trailing_mean)."""
    rng = np.random.default_rng(seed)
    knots = uniform_clamped_knots(24.0, 5)
    means = [BSplineMean(knots, np.asarray(c, dtype=float)) for c in _CROSS_COEFFS]
    traces = []
    for i in range(n):
        z = int(rng.integers(0, 2))
        t = np.arange(1.0, 24.0, 2.0)
        y = bspline_mean(means[z], t) + 0.2 * rng.standard_normal(t.size)
        events = []
        for j in range(t.size):
            feat = trailing_mean_feature(t[: j + 1], y[: j + 1], t[j], 2.0)
            p = alphas[z] / (1.0 + np.exp(-w_true * feat))
            a = "treatment" if rng.uniform() < p else None
            events.append(Event(t=float(t[j]), y=float(y[j]), a=a))
        traces.append(Trace(id=f"c{i:04d}", tau=24.0, events=tuple(events)))
    return Dataset(traces=tuple(traces))


class TestClassScaledActionModel:
    def test_class_dependent_choices_recover_scale_contrast(self):
        ds = choice_dataset(alphas=(0.25, 0.85))
        eam = fit_event_action_model(ds, outcome_model=crossing_mixture())
        assert eam.class_scales is not None
        s0, s1 = eam.class_scales
        assert s1 > s0
        # The shared sigmoid absorbs the common level, so compare ratios.
        assert np.log(s1 / s0) == pytest.approx(np.log(0.85 / 0.25), abs=0.4)

    def test_class_free_choices_collapse_to_flat_model(self):
        ds = choice_dataset(alphas=(0.6, 0.6))
        plain = fit_event_action_model(ds)
        eam = fit_event_action_model(ds, outcome_model=crossing_mixture())
        assert eam.class_scales is None
        assert eam == plain

    def test_single_component_model_stays_flat(self):
        ds = choice_dataset(alphas=(0.25, 0.85), n=40)
        k1 = MixtureModel(
            log_weights=np.zeros(1),
            components=(crossing_component(np.zeros(5)),),
        )
        eam = fit_event_action_model(ds, outcome_model=k1)
        assert eam.class_scales is None

    def test_simulated_regimes_keep_scales_only_under_class_policy(self):
        # Policy A treats on recent outcomes alone: scales must collapse.
        # Policy C rescales per class: scales must survive selection, with
        # the plateau class (index 1 after end-coefficient ordering) well
        # above the declining class (index 0).
        cfg = FitConfig(n_components=3, max_iter=100, restarts=1, seed=0)
        ds_a, _ = simulate_regime(SimConfig(), policy_a(), 80, seed=65)
        model_a = fit_cgp(ds_a, cfg).model
        eam_a = fit_event_action_model(ds_a, outcome_model=model_a)
        assert eam_a.class_scales is None

        ds_c, _ = simulate_regime(SimConfig(), policy_by_name("C"), 80, seed=67)
        model_c = fit_cgp(ds_c, cfg).model
        eam_c = fit_event_action_model(ds_c, outcome_model=model_c)
        assert eam_c.class_scales is not None
        assert eam_c.class_scales[1] > eam_c.class_scales[0]


class TestAdjustedObjective:
    def test_terms_assemble_exactly(self):
        ds = small_regime(n=5, seed=9)
        res = fit_cgp(ds, FitConfig(n_components=2, max_iter=30, restarts=1, seed=0))
        eam = fit_event_action_model(ds)
        adj = assemble_adjusted_objective(ds, res.model, eam)

        # Outcome term is the fit's own objective.
        assert adj.outcome_term == pytest.approx(res.final_objective, rel=1e-9)

        # Recompute each term independently.
        outcome = 0.0
        ea = 0.0
        total_tau = 0.0
        for tr in ds.traces:
            out = tr.outcome_events()
            times = [ev.t for ev in out]
            values = [ev.y for ev in out]
            actions = [(ev.a, ev.t) for ev in tr.events if ev.z_a]
            outcome += mixture_log_likelihood(res.model, times, values, actions)
            total_tau += tr.tau
            ea += len(tr.events) * np.log(eam.rate)
            for ev in out:
                feat = trailing_mean_feature(
                    np.asarray(times), np.asarray(values), ev.t, 2.0
                )
                s = eam.action_weight * feat + eam.action_bias
                p = 1.0 / (1.0 + np.exp(-s))
                ea += np.log(p if ev.z_a else 1.0 - p)
        assert adj.outcome_term == pytest.approx(outcome, abs=1e-9)
        assert adj.event_action_term == pytest.approx(ea, abs=1e-8)
        assert adj.integral_term == pytest.approx(eam.rate * total_tau, rel=1e-12)
        assert adj.total == pytest.approx(outcome + ea - eam.rate * total_tau, abs=1e-8)

    def test_outcome_term_separable_from_event_terms(self):
        # Reweighting the event model must not move the outcome term.
        from cfgp.gp import EventActionModel

        ds = small_regime(n=4, seed=10)
        res = fit_cgp(ds, FitConfig(n_components=2, max_iter=20, restarts=1, seed=0))
        eam1 = EventActionModel(rate=1.0, action_weight=0.0, action_bias=0.0)
        eam2 = EventActionModel(rate=2.0, action_weight=-1.0, action_bias=0.5)
        a1 = assemble_adjusted_objective(ds, res.model, eam1)
        a2 = assemble_adjusted_objective(ds, res.model, eam2)
        assert a1.outcome_term == a2.outcome_term
        assert a1.total != a2.total

"""Gaussian-process mixture inference over outcome trajectories.

A trajectory model is a mixture of GP components.  Each component owns a
mean function, a covariance function (with white observation noise folded
in), and a treatment-response description that shifts the mean after each
action.  Inference conditions every component on the observed history,
weighs them by their posterior class probabilities, and predicts latent
(noise-free) trajectory values at future query times under a hypothetical
plan of actions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit, logsumexp
from scipy.stats import norm

from .errors import DomainError
from .kernels import (
    Additive,
    KernelSpec,
    MeanSpec,
    ResponseMode,
    ResponseParams,
    Saturating,
    bspline_mean,
    cholesky_with_jitter,
    cumulative_response,
    kernel_cross,
    kernel_matrix,
    split_noise,
)
from .traces import ActionPlan, History

__all__ = [
    "GPComponent",
    "EventActionModel",
    "MixtureModel",
    "trailing_mean_feature",
    "PosteriorPrediction",
    "component_mean_vector",
    "component_log_likelihood",
    "mixture_log_likelihood",
    "action_choice_log_likelihoods",
    "class_posterior",
    "predict",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_Z_95 = float(norm.ppf(0.975))


@dataclass(frozen=True)
class GPComponent:
    """One mixture component: mean, covariance, and treatment response.

    ``response`` maps action types to their response-curve parameters and is
    consulted in additive mode; a saturating mode carries its own window and
    effect size and applies to actions of every type, so the map may stay
    empty there.
    """

    mean: MeanSpec
    kernel: KernelSpec
    response: Mapping[str, ResponseParams] = field(default_factory=dict)
    response_mode: ResponseMode = field(default_factory=Additive)

    def __post_init__(self):
        object.__setattr__(self, "response", dict(self.response))


@dataclass(frozen=True)
class EventActionModel:
    """Event timing and action-choice model, separable from the outcome GP.

    ``rate`` is the homogeneous event intensity in events/hour.  The
    probability that an event carries an action is
    sigmoid(action_weight * feature + action_bias) with the feature being
    the trailing 2h mean of observed outcomes; ``class_scales``, when
    present, multiplies that probability per latent class.
    """

    rate: float
    action_weight: float
    action_bias: float
    class_scales: tuple | None = None

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError(f"event rate must be positive, got {self.rate}")
        if self.class_scales is not None:
            scales = tuple(float(s) for s in self.class_scales)
            if any(not 0.0 < s < 1.0 for s in scales):
                raise DomainError("class_scales entries must lie in (0, 1)")
            object.__setattr__(self, "class_scales", scales)


def trailing_mean_feature(times, values, t: float, window: float = 2.0) -> float:
    """Mean observed outcome over the half-open window (t - window, t].

    This is the decision feature of :class:`EventActionModel`: action
    choices at an event may depend on recent outcomes, including one
    measured at the event itself.  Returns 0.0 when the window is empty.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    inside = (times > t - window) & (times <= t)
    if not np.any(inside):
        return 0.0
    return float(np.mean(values[inside]))


@dataclass(frozen=True)
class MixtureModel:
    log_weights: np.ndarray
    components: tuple[GPComponent, ...]
    event_action_model: EventActionModel | None = None

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise DomainError("mixture needs at least one component")
        lw = np.asarray(self.log_weights, dtype=float)
        if lw.shape != (len(components),):
            raise DomainError(
                f"log_weights shape {lw.shape} does not match "
                f"{len(components)} components"
            )
        if not np.all(np.isfinite(lw)):
            raise DomainError("log_weights must be finite")
        lw = lw - logsumexp(lw)
        lw.setflags(write=False)
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "components", components)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)


def component_mean_vector(
    component: GPComponent,
    times,
    actions: Sequence[tuple[str, float]] = (),
) -> np.ndarray:
    """Trajectory mean at ``times`` given past ``actions`` (type, time) pairs.

    Additive mode sums the per-type response curves over actions whose type
    has parameters; saturating mode bumps the mean while any action of any
    type is active.
    """
    t = np.asarray(times, dtype=float)
    out = np.asarray(bspline_mean(component.mean, t), dtype=float).copy()
    mode = component.response_mode
    if isinstance(mode, Saturating):
        all_times = [a_time for _, a_time in actions]
        out += cumulative_response(None, all_times, t, mode)
    else:
        by_type: dict[str, list[float]] = {}
        for a_type, a_time in actions:
            by_type.setdefault(a_type, []).append(a_time)
        for a_type, a_times in by_type.items():
            params = component.response.get(a_type)
            if params is not None:
                out += cumulative_response(params, a_times, t, mode)
    return out


def component_log_likelihood(
    component: GPComponent,
    times,
    values,
    actions: Sequence[tuple[str, float]] = (),
) -> float:
    """Gaussian log density of observed ``values`` under one component.

    Observation noise is whatever white-noise term the component kernel
    carries.  Empty observations give 0.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size != y.size:
        raise DomainError(f"{t.size} times but {y.size} values")
    if t.size == 0:
        return 0.0
    r = y - component_mean_vector(component, t, actions)
    K = kernel_matrix(component.kernel, t)
    chol = cholesky_with_jitter(K)
    alpha = cho_solve(chol.c_and_lower, r)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol.L))))
    return -0.5 * (float(r @ alpha) + logdet + t.size * _LOG_2PI)


def _membership_logits(model, times, values, actions) -> np.ndarray:
    lls = np.array(
        [
            component_log_likelihood(c, times, values, actions)
            for c in model.components
        ]
    )
    return model.log_weights + lls


def mixture_log_likelihood(
    model: MixtureModel,
    times,
    values,
    actions: Sequence[tuple[str, float]] = (),
) -> float:
    """log sum_k w_k N(values | component k), marginalizing the class."""
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        return 0.0
    return float(logsumexp(_membership_logits(model, t, values, actions)))


def action_choice_log_likelihoods(
    eam: EventActionModel,
    times,
    values,
    actions: Sequence[tuple[str, float]] = (),
) -> np.ndarray | None:
    """Per-class log likelihood of the action choices at the outcome events.

    Each outcome-carrying event is a decision point: treated when an action
    of any type sits at the same time, untreated otherwise, with treatment
    probability class_scales[k] * sigmoid(weight * feature + bias).  Only
    a model that actually distinguishes classes makes this class-dependent,
    so the function returns None when ``class_scales`` is absent (or the
    history is empty) and callers can drop the term entirely.
    """
    if eam is None or eam.class_scales is None:
        return None
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size == 0:
        return None
    action_times = np.array([a_time for _, a_time in actions], dtype=float)
    if action_times.size:
        gaps = np.abs(action_times[None, :] - t[:, None]).min(axis=1)
        treated = gaps <= 1e-9
    else:
        treated = np.zeros(t.size, dtype=bool)
    feats = np.array([trailing_mean_feature(t, y, tj) for tj in t])
    eta = eam.action_weight * feats + eam.action_bias
    log_sig = -np.logaddexp(0.0, -eta)
    scales = np.asarray(eam.class_scales, dtype=float)
    # P[j, k] = scale_k * sigmoid(eta_j) stays strictly below 1 because the
    # scales are validated into the open interval.
    P = expit(eta)[:, None] * scales[None, :]
    out = np.where(
        treated[:, None],
        log_sig[:, None] + np.log(scales)[None, :],
        np.log1p(-P),
    )
    return out.sum(axis=0)


def class_posterior(
    model: MixtureModel,
    times,
    values,
    actions: Sequence[tuple[str, float]] = (),
) -> np.ndarray:
    """Posterior class probabilities given observations; prior when empty.

    Outcome observations always enter through the component likelihoods.
    When the model carries a class-distinguishing event/action model, the
    observed action choices are themselves evidence about the class, so
    their per-class log likelihood joins the logits.
    """
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        return model.weights
    logits = _membership_logits(model, t, values, actions)
    tilt = action_choice_log_likelihoods(
        model.event_action_model, t, values, actions
    )
    if tilt is not None:
        logits = logits + tilt
    return np.exp(logits - logsumexp(logits))


@dataclass(frozen=True)
class PosteriorPrediction:
    """Latent-trajectory posterior at the query times.

    ``mean`` / ``variance`` marginalize or select the class according to the
    requested mode; the per-component arrays keep the full picture and the
    interval is the central 95% band under a Gaussian approximation.
    """

    query_times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    class_probabilities: np.ndarray
    component_means: np.ndarray
    component_variances: np.ndarray
    mode: str


def _component_posterior(component, train_t, train_r, query_t, actions):
    """Posterior (mean shift from prior mean, variance) for one component."""
    smooth, _ = split_noise(component.kernel)
    m_query = component_mean_vector(component, query_t, actions)
    if smooth is None:
        prior_var = np.zeros(query_t.size)
    else:
        prior_var = np.diag(smooth.gram(query_t, query_t)).copy()
    if train_t.size == 0 or smooth is None:
        return m_query, np.clip(prior_var, 0.0, None)
    K_train = kernel_matrix(component.kernel, train_t)
    chol = cholesky_with_jitter(K_train)
    K_cross = kernel_cross(smooth, query_t, train_t)
    alpha = cho_solve(chol.c_and_lower, train_r)
    mean = m_query + K_cross @ alpha
    reduction = np.einsum(
        "ij,ji->i", K_cross, cho_solve(chol.c_and_lower, K_cross.T)
    )
    var = np.clip(prior_var - reduction, 0.0, None)
    return mean, var


def predict(
    model: MixtureModel,
    history: History,
    plan: ActionPlan,
    query_times,
    mode: str = "mixture",
) -> PosteriorPrediction:
    """Predict the latent trajectory after the history cut under a plan.

    Class probabilities come from the history alone; the planned actions
    only shift the predicted means.  ``mode`` is "mixture" (moment-matched
    across classes) or "map" (single most probable class).  Query times and
    plan times at or before the cut are rejected.
    """
    if mode not in ("mixture", "map"):
        raise DomainError(f"unknown prediction mode {mode!r}")
    q = np.atleast_1d(np.asarray(query_times, dtype=float))
    if q.size == 0:
        raise DomainError("need at least one query time")
    if not np.all(np.isfinite(q)):
        raise DomainError("query times must be finite")
    if np.any(q <= history.cut_time):
        raise DomainError(
            f"query times must lie strictly after the cut at {history.cut_time}"
        )
    for _, a_time in plan.actions:
        if a_time <= history.cut_time:
            raise DomainError(
                f"planned action at {a_time} is not after the cut at "
                f"{history.cut_time}"
            )

    times, values = history.outcomes()
    train_t = np.asarray(times, dtype=float)
    train_y = np.asarray(values, dtype=float)
    past_actions = history.actions()
    probs = class_posterior(model, train_t, train_y, past_actions)
    all_actions = list(past_actions) + list(plan.actions)

    K = model.n_components
    comp_means = np.zeros((K, q.size))
    comp_vars = np.zeros((K, q.size))
    for k, component in enumerate(model.components):
        train_r = (
            train_y - component_mean_vector(component, train_t, past_actions)
            if train_t.size
            else np.zeros(0)
        )
        comp_means[k], comp_vars[k] = _component_posterior(
            component, train_t, train_r, q, all_actions
        )

    if mode == "map":
        k_star = int(np.argmax(probs))
        mean = comp_means[k_star]
        var = comp_vars[k_star]
    else:
        mean = probs @ comp_means
        second_moment = probs @ (comp_vars + comp_means**2)
        var = np.clip(second_moment - mean**2, 0.0, None)

    half = _Z_95 * np.sqrt(var)
    return PosteriorPrediction(
        query_times=q,
        mean=mean,
        variance=var,
        lower=mean - half,
        upper=mean + half,
        class_probabilities=probs,
        component_means=comp_means,
        component_variances=comp_vars,
        mode=mode,
    )

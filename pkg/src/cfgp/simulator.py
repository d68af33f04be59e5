"""Marked-point-process generator for treated outcome trajectories.

Each simulated subject gets a latent class, measurement times from a
homogeneous Poisson process on [0, tau], a latent trajectory drawn from a
class-specific GP plus independent observation noise, and a treatment
policy that decides at each measurement time, after seeing the measured
value, whether to act.  Active treatments shift the observed outcome but
never the latent trajectory, so the untreated continuation is available as
ground truth.

The latent side (class, times, trajectory, noise) is drawn before any
policy decision and every policy consumes exactly one uniform per event,
so two simulations with the same seed but different policies share the
latent side exactly: common random numbers, which is what makes policy
comparisons sharp.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError, ParseError
from .gp import GPComponent, MixtureModel, trailing_mean_feature
from .kernels import (
    Additive,
    BSplineMean,
    Matern32,
    IOU,
    QuadPoly,
    ResponseParams,
    Saturating,
    SumKernel,
    WhiteNoise,
    Zero,
    bspline_mean,
    cholesky_with_jitter,
    cumulative_response,
    split_noise,
    uniform_clamped_knots,
)
from .traces import Dataset, Event, Trace

__all__ = [
    "SimConfig",
    "TreatmentPolicy",
    "SimTrace",
    "TestBundle",
    "policy_a",
    "policy_b",
    "policy_c",
    "policy_never",
    "policy_by_name",
    "sample_measurement_times",
    "sample_gp_path",
    "simulate_trace",
    "simulate_regime",
    "make_test_set",
    "true_mixture_model",
    "write_truth",
    "read_truth",
    "icu_config",
]

# The decision feature is the mean observed outcome over (t-2, t].
FEATURE_WINDOW = 2.0

# Latent ground truth is recorded on a half-hour grid in addition to the
# measurement times, so the untreated continuation can be plotted and the
# end-of-horizon value is always available for labeling.
_GRID_STEP = 0.5

# Class trajectories over 24h: monotone decline, decline-then-plateau,
# stable.  Classes 0 and 1 start close and separate mostly in the second
# half, so a 12h history leaves real class uncertainty; class 2 improves.
_DEFAULT_COEFFS = (
    (0.85, 0.4, -0.22, -0.6, -0.95),
    (0.72, 0.35, 0.02, -0.13, -0.08),
    (0.35, 0.38, 0.4, 0.42, 0.45),
)


def _default_class_means():
    knots = uniform_clamped_knots(24.0, 5)
    return tuple(BSplineMean(knots, np.asarray(c)) for c in _DEFAULT_COEFFS)


def _default_kernel():
    return SumKernel((Matern32(0.04, 8.0), WhiteNoise(0.1)))


@dataclass(frozen=True)
class SimConfig:
    """Ground-truth generator parameters.

    Outcomes are class mean + GP draw + white noise; while any action in
    the trailing ``effect_window`` is active the observed value is shifted
    by ``effect`` (bumps do not stack).  Setting ``response`` switches to
    additive response curves per action type instead of the constant bump;
    ``class_responses`` makes those curves class-specific (one map per
    class, all sharing the same action types).  When several action types
    are available, each treatment picks one uniformly.  ``class_kernels``
    optionally overrides ``kernel`` per class.
    """

    event_rate: float = 1.0
    tau: float = 24.0
    kernel: object = field(default_factory=_default_kernel)
    class_means: tuple = field(default_factory=_default_class_means)
    class_prior: tuple = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    effect: float = 0.5
    effect_window: float = 2.0
    action_type: str = "tx"
    response: dict | None = None
    class_kernels: tuple | None = None
    class_responses: tuple | None = None

    def __post_init__(self):
        if self.event_rate <= 0:
            raise DomainError(f"event rate must be positive, got {self.event_rate}")
        if self.tau <= 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if self.effect_window <= 0:
            raise DomainError(f"effect window must be positive, got {self.effect_window}")
        prior = np.asarray(self.class_prior, dtype=float)
        if len(self.class_means) != prior.size:
            raise DomainError(
                f"{prior.size} prior entries but {len(self.class_means)} class means"
            )
        if np.any(prior <= 0) or abs(prior.sum() - 1.0) > 1e-9:
            raise DomainError("class prior must be positive and sum to 1")
        if self.class_kernels is not None and len(self.class_kernels) != prior.size:
            raise DomainError("class_kernels must have one kernel per class")
        if self.class_responses is not None:
            if len(self.class_responses) != prior.size:
                raise DomainError("class_responses must have one map per class")
            keys = {frozenset(m) for m in self.class_responses}
            if len(keys) != 1:
                raise DomainError("class_responses maps must share one action-type set")
        for mean in self.class_means:
            if isinstance(mean, BSplineMean) and mean.span != (0.0, self.tau):
                raise DomainError(
                    f"class mean span {mean.span} does not cover [0, {self.tau}]"
                )

    @property
    def n_classes(self) -> int:
        return len(self.class_means)

    def kernel_for(self, class_index: int):
        if self.class_kernels is not None:
            return self.class_kernels[class_index]
        return self.kernel

    def response_for(self, class_index: int) -> dict | None:
        if self.class_responses is not None:
            return self.class_responses[class_index]
        return self.response

    def action_types(self) -> tuple:
        if isinstance(self.response_mode(), Additive):
            return tuple(sorted(self.response_for(0)))
        return (self.action_type,)

    def response_mode(self):
        if self.response is not None or self.class_responses is not None:
            return Additive()
        return Saturating(window=self.effect_window, effect=self.effect)


@dataclass(frozen=True)
class TreatmentPolicy:
    """Treat/do-not-treat rule applied at every measurement.

    The action probability is sigmoid(weight * feature), with the feature
    being the trailing mean of observed outcomes.  ``class_scales``, when
    set, multiplies the probability by a per-class factor, which makes the
    policy depend on the latent class and not just the observed history.
    The never variant is the untreated regime.
    """

    name: str
    weight: float
    class_scales: tuple | None = None
    treats: bool = True

    def action_probability(self, feature: float, class_index: int) -> float:
        if not self.treats:
            return 0.0
        p = float(expit(self.weight * feature))
        if self.class_scales is not None:
            p *= self.class_scales[class_index]
        return p


def policy_a() -> TreatmentPolicy:
    """Treats low recent outcomes more often."""
    return TreatmentPolicy(name="A", weight=-0.5)


def policy_b() -> TreatmentPolicy:
    """Treats high recent outcomes more often."""
    return TreatmentPolicy(name="B", weight=0.5)


def policy_c() -> TreatmentPolicy:
    """Like A, but scaled per latent class: a hidden-confounder regime."""
    return TreatmentPolicy(name="C", weight=-0.5, class_scales=(0.2, 0.9, 0.5))


def policy_never() -> TreatmentPolicy:
    return TreatmentPolicy(name="never", weight=0.0, treats=False)


def policy_by_name(name: str) -> TreatmentPolicy:
    policies = {"A": policy_a, "B": policy_b, "C": policy_c, "never": policy_never}
    if name not in policies:
        raise DomainError(f"unknown regime {name!r}; expected one of {sorted(policies)}")
    return policies[name]()


@dataclass(frozen=True)
class SimTrace:
    """A trace plus the ground truth the model never sees.

    ``untreated`` holds the would-have-been measurements with the
    treatment shift removed (observation noise included); under the
    saturating default, observed minus untreated is always 0 or the
    effect.  ``grid_latent`` is the smooth latent path on ``grid_times``
    (measurement-noise free); its endpoint sits at tau and drives the
    at-risk label.
    """

    trace: Trace
    class_index: int
    untreated: np.ndarray
    grid_times: np.ndarray
    grid_latent: np.ndarray

    @property
    def latent_final(self) -> float:
        return float(self.grid_latent[-1])

    @property
    def at_risk(self) -> bool:
        return self.latent_final < 0.0


def sample_measurement_times(rate: float, tau: float, rng) -> np.ndarray:
    """Homogeneous Poisson arrival times on [0, tau).

    Exponential(rate) inter-arrivals accumulated until they pass tau.
    """
    if rate <= 0:
        raise DomainError(f"rate must be positive, got {rate}")
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    times = []
    t = rng.exponential(1.0 / rate)
    while t < tau:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    return np.asarray(times, dtype=float)


def sample_gp_path(mean: np.ndarray, cov: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Map standard normals ``z`` through the lower Cholesky factor of ``cov``.

    Equivalent to drawing the joint Gaussian one coordinate at a time from
    its sequential conditionals with the same ``z``, because the Cholesky
    factor is lower triangular.
    """
    if z.shape != mean.shape:
        raise DomainError(f"z shape {z.shape} does not match mean {mean.shape}")
    if mean.size == 0:
        return mean.copy()
    chol = cholesky_with_jitter(cov)
    return mean + chol.L @ z


def _observed_shift(config, class_index, actions, t: float) -> float:
    """Mean shift of the observed value at ``t`` from past (type, time) actions."""
    if not actions:
        return 0.0
    if isinstance(config.response_mode(), Saturating):
        deltas = t - np.asarray([a_time for _, a_time in actions])
        if np.any((deltas > 0.0) & (deltas <= config.effect_window)):
            return config.effect
        return 0.0
    responses = config.response_for(class_index)
    total = 0.0
    for a_type, a_time in actions:
        total += float(
            cumulative_response(responses[a_type], [a_time], t, Additive())
        )
    return total


def simulate_trace(
    config: SimConfig,
    policy: TreatmentPolicy,
    rng,
    trace_id: str = "tr-00000",
    treat_until: float | None = None,
) -> SimTrace:
    """Simulate one subject.

    Draw order is fixed: class, measurement times, latent path on the
    union of measurement times and the ground-truth grid, observation
    noise, then one policy uniform per event.  ``treat_until`` caps the
    treatment period: at and after it the policy never acts (used for
    test cohorts that are left untreated after the decision point).
    """
    class_index = int(rng.choice(config.n_classes, p=np.asarray(config.class_prior)))
    times = sample_measurement_times(config.event_rate, config.tau, rng)
    n = times.size

    grid = np.linspace(0.0, config.tau, int(round(config.tau / _GRID_STEP)) + 1)
    pts = np.union1d(times, grid)
    smooth, sigma = split_noise(config.kernel_for(class_index))
    mean_vec = np.asarray(bspline_mean(config.class_means[class_index], pts), dtype=float)
    cov = smooth.gram(pts, pts) if smooth is not None else np.zeros((pts.size, pts.size))
    path = sample_gp_path(mean_vec, cov, rng.standard_normal(pts.size))
    noise = sigma * rng.standard_normal(n)

    meas_idx = np.searchsorted(pts, times)
    untreated = path[meas_idx] + noise
    grid_idx = np.searchsorted(pts, grid)

    types = config.action_types()
    events = []
    observed = np.empty(n)
    actions: list[tuple[str, float]] = []
    for j in range(n):
        t = float(times[j])
        observed[j] = untreated[j] + _observed_shift(config, class_index, actions, t)
        feature = trailing_mean_feature(
            times[: j + 1], observed[: j + 1], t, FEATURE_WINDOW
        )
        p = policy.action_probability(feature, class_index)
        u = rng.uniform()
        act = bool(u < p) and (treat_until is None or t < treat_until)
        a_type = None
        if act:
            # Reuse the treatment uniform for the type choice: u/p is
            # uniform given u < p, so types are equally likely and the
            # draw stream stays one uniform per event.
            a_type = types[min(int(len(types) * u / p), len(types) - 1)]
            actions.append((a_type, t))
        events.append(Event(t=t, y=float(observed[j]), a=a_type))

    trace = Trace(id=trace_id, tau=config.tau, events=tuple(events))
    return SimTrace(
        trace=trace,
        class_index=class_index,
        untreated=untreated,
        grid_times=grid,
        grid_latent=path[grid_idx],
    )


def _child_rng(seed: int, index: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def simulate_regime(
    config: SimConfig,
    policy: TreatmentPolicy,
    n: int,
    seed: int,
    treat_until: float | None = None,
) -> tuple[Dataset, list[SimTrace]]:
    """Simulate ``n`` independent subjects under ``policy``.

    Subject i is driven by SeedSequence(seed, spawn_key=(i,)), so the
    latent side of subject i is identical across policies and independent
    of n and of how work is scheduled.
    """
    if n < 1:
        raise DomainError(f"need n >= 1 traces, got {n}")
    sims = [
        simulate_trace(config, policy, _child_rng(seed, i), f"tr-{i:05d}", treat_until)
        for i in range(n)
    ]
    dataset = Dataset(
        traces=tuple(s.trace for s in sims),
        action_vocabulary=frozenset(config.action_types()),
    )
    return dataset, sims


@dataclass(frozen=True)
class TestBundle:
    """A test cohort: traces, at-risk labels, and the decision time."""

    __test__ = False  # the name pattern trips pytest collection otherwise

    dataset: Dataset
    labels: dict
    cut_time: float
    sims: tuple = ()

    def __post_init__(self):
        ids = {tr.id for tr in self.dataset.traces}
        if set(self.labels) != ids:
            missing = sorted(ids ^ set(self.labels))[:5]
            raise DomainError(f"label ids do not match trace ids (e.g. {missing})")


def make_test_set(
    config: SimConfig,
    policy_until: TreatmentPolicy,
    cut: float = 12.0,
    n: int = 500,
    seed: int = 0,
) -> TestBundle:
    """Simulate a test cohort treated by ``policy_until`` only before ``cut``.

    After the cut nobody is treated, so the observed continuation equals
    the untreated one and the latent endpoint labels each subject: at risk
    iff the smooth latent path ends below zero.
    """
    if not 0.0 < cut < config.tau:
        raise DomainError(f"cut {cut} outside (0, {config.tau})")
    dataset, sims = simulate_regime(config, policy_until, n, seed, treat_until=cut)
    labels = {s.trace.id: s.at_risk for s in sims}
    return TestBundle(dataset=dataset, labels=labels, cut_time=cut, sims=tuple(sims))


def true_mixture_model(config: SimConfig = SimConfig()) -> MixtureModel:
    """The generator expressed as a mixture model (for oracles and demos)."""
    mode = config.response_mode()
    components = tuple(
        GPComponent(
            mean=config.class_means[k],
            kernel=config.kernel_for(k),
            response=dict(config.response_for(k) or {}),
            response_mode=mode,
        )
        for k in range(config.n_classes)
    )
    return MixtureModel(
        log_weights=np.log(np.asarray(config.class_prior)), components=components
    )


def write_truth(sims, path) -> None:
    """Ground-truth sidecar: one JSON object per line, keyed by trace id."""
    with open(path, "w") as fh:
        for s in sims:
            fh.write(
                json.dumps(
                    {
                        "id": s.trace.id,
                        "class": s.class_index,
                        "latent_final": s.latent_final,
                        "label": s.at_risk,
                    }
                )
            )
            fh.write("\n")


def read_truth(path) -> dict:
    """Read a ground-truth sidecar back as {id: row dict}."""
    rows = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad truth row: {exc}", line=lineno) from None
            for key in ("id", "class", "latent_final", "label"):
                if key not in row:
                    raise ParseError(f"truth row missing {key!r}", line=lineno)
            rows[row["id"]] = row
    return rows


def icu_config() -> SimConfig:
    """Longer-horizon generator for the error-by-horizon study.

    Zero-mean trajectories with per-class quadratic-polynomial kernels
    (classes differ in how much their slopes and curvatures vary) on top
    of a shared integrated-OU drift.  Three renal-support action types
    carry additive response curves whose sizes depend on the latent
    class: class 0 reacts with large short-term spikes, class 1 with
    strong sustained shifts, class 2 barely at all.  A pooled single-GP
    fit averages these regimes away, which is what the error-by-horizon
    study measures.
    """
    iou = IOU(alpha=1.0, nu=0.12)
    noise = WhiteNoise(0.15)
    class_kernels = tuple(
        SumKernel((QuadPoly(np.diag(d)), iou, noise))
        for d in (
            (0.36, 6.0e-4, 4.0e-8),
            (0.36, 1.0e-4, 1.0e-8),
            (0.36, 2.5e-4, 2.25e-7),
        )
    )
    # Per-type base sizes (short-term h1, sustained h2), strongest first.
    base = {"IHD": (1.5, 0.35), "CVVH": (1.0, 0.25), "CVVHD": (0.6, 0.15)}
    # Per-class multipliers on (h1, h2).
    styles = ((2.0, 0.4), (0.3, 2.5), (0.2, 0.2))
    class_responses = tuple(
        {
            a_type: ResponseParams(
                h1=m1 * h1, a=0.9, b=0.4, h2=m2 * h2, r=0.6
            )
            for a_type, (h1, h2) in base.items()
        }
        for m1, m2 in styles
    )
    return SimConfig(
        event_rate=0.4,
        tau=60.0,
        kernel=class_kernels[0],
        class_means=(Zero(), Zero(), Zero()),
        class_prior=(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        class_kernels=class_kernels,
        class_responses=class_responses,
    )

"""Fitting mixture-of-GP outcome models to action/outcome traces.

The outcome model is fit by maximizing the summed mixture log likelihood
of the observed outcomes, with component means conditioned on each trace's
observed action history.  The event-timing and action-choice models have
separate parameters, so they are estimated independently by
``fit_event_action_model``; ``assemble_adjusted_objective`` puts the three
terms back together into the single adjusted objective the decomposition
came from.

Two model families are supported, selected by the initialization strategy:

* ``spline_cluster`` -- per-class B-spline means, one shared Matern 3/2
  kernel plus white noise, and a shared saturating treatment effect
  (fixed 2h window, learned height).  Initialized from k-means clusters
  of per-trace least-squares spline coefficients.
* ``random_lognormal`` -- zero means with per-class quadratic-polynomial
  plus integrated-OU kernels, shared white noise, and per-class additive
  response curves per action type.  Initialized from scaled-identity
  coefficient covariances and log-normal draws.

The baseline fit uses the identical family and optimizer but drops every
response term, so whatever the action policy did to the outcomes is
absorbed into the means and kernels.  All constrained parameters are
optimized through log (positives) or softmax (weights) transforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cho_solve
from scipy.special import expit, logsumexp

from .errors import (
    ConfigurationError,
    DegenerateDataError,
    DomainError,
    InitializationError,
    NumericalError,
    OptimizationError,
)
from .gp import (
    EventActionModel,
    GPComponent,
    MixtureModel,
    class_posterior,
    mixture_log_likelihood,
    trailing_mean_feature,
)
from .kernels import (
    Additive,
    BSplineMean,
    IOU,
    Matern32,
    QuadPoly,
    ResponseParams,
    Saturating,
    SumKernel,
    WhiteNoise,
    Zero,
    bspline_design,
    cholesky_with_jitter,
    cumulative_response,
    uniform_clamped_knots,
)
from .optim import minimize
from .traces import Dataset

__all__ = [
    "FitConfig",
    "FitResult",
    "AdjustedObjective",
    "fit_cgp",
    "fit_baseline",
    "fit_event_action_model",
    "init_parameters",
    "assemble_adjusted_objective",
]

_LOG_2PI = float(np.log(2.0 * np.pi))

# The saturating response window is fixed; only its height is learned.
_SATURATING_WINDOW = 2.0

# Number of B-spline mean coefficients per class.
_N_COEFFS = 5

# Decision feature window for the action model, hours.
_FEATURE_WINDOW = 2.0

# Logistic parameters are clipped here to guard the separation case.
_LOGISTIC_CLIP = 20.0

_STRATEGIES = ("spline_cluster", "random_lognormal")


@dataclass(frozen=True)
class FitConfig:
    n_components: int = 3
    max_iter: int = 300
    grad_tol: float = 3e-4
    restarts: int = 5
    seed: int = 0
    init_strategy: str = "spline_cluster"

    def __post_init__(self):
        if self.n_components < 1:
            raise ConfigurationError(f"n_components must be >= 1, got {self.n_components}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be positive, got {self.max_iter}")
        if self.restarts < 1:
            raise ConfigurationError(f"restarts must be positive, got {self.restarts}")
        if not self.grad_tol > 0:
            raise ConfigurationError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.init_strategy not in _STRATEGIES:
            raise ConfigurationError(
                f"unknown init_strategy {self.init_strategy!r}; expected one of {_STRATEGIES}"
            )


@dataclass(frozen=True)
class FitResult:
    """Best-restart outcome of a fit.

    ``final_objective`` is the maximized outcome-model log likelihood,
    summed over traces (the first term of the adjusted objective).
    """

    model: MixtureModel
    final_objective: float
    converged: bool
    iterations: int
    restart_index: int


# --- per-trace precomputation -------------------------------------------------


class _TraceArrays:
    """Immutable per-trace arrays shared by every objective evaluation."""

    def __init__(self, trace, action_types):
        out = trace.outcome_events()
        self.times = np.array([ev.t for ev in out], dtype=float)
        self.values = np.array([ev.y for ev in out], dtype=float)
        self.n = self.times.size
        self.tau = trace.tau
        all_actions = np.array([ev.t for ev in trace.events if ev.z_a], dtype=float)
        self.action_times_by_type = {
            a: np.array([ev.t for ev in trace.events if ev.a == a], dtype=float)
            for a in action_types
        }
        # Saturating activity mask: any action (of any type) in (t-w, t).
        d = self.times[:, None] - all_actions[None, :] if all_actions.size else None
        if d is None:
            self.active = np.zeros(self.n, dtype=bool)
        else:
            self.active = np.any((d > 0.0) & (d <= _SATURATING_WINDOW), axis=1)
        self.has_actions = all_actions.size > 0
        self.abs_dt = np.abs(self.times[:, None] - self.times[None, :])


def _prepare(dataset: Dataset):
    if len(dataset) == 0:
        raise DegenerateDataError("empty dataset")
    for trace in dataset.traces:
        if not any(ev.z_y for ev in trace.events):
            raise DegenerateDataError(
                f"trace {trace.id!r} has no outcome measurements"
            )
    traces = sorted(dataset.traces, key=lambda tr: tr.id)
    action_types = tuple(sorted(dataset.action_vocabulary))
    return [_TraceArrays(tr, action_types) for tr in traces], action_types


# --- spline + Matern family ---------------------------------------------------


class _SplineFamily:
    """Per-class spline means, shared Matern+noise kernel, shared bump.

    Parameter vector: [class coefficients (K x 5), log variance,
    log lengthscale, log noise, (effect if responses included),
    mixture logits (K)].
    """

    def __init__(self, traces, action_types, n_components, include_response):
        self.traces = traces
        self.K = n_components
        self.include_response = include_response and len(action_types) > 0
        self.tau = max(t.tau for t in traces)
        self.knots = uniform_clamped_knots(self.tau, _N_COEFFS)
        spec = BSplineMean(self.knots, np.zeros(_N_COEFFS))
        self.designs = [bspline_design(spec, t.times) for t in traces]
        self.n_params = (
            self.K * _N_COEFFS + 3 + (1 if self.include_response else 0) + self.K
        )

    # natural <-> packed
    def pack(self, nat):
        parts = [np.asarray(nat["coeffs"], dtype=float).ravel()]
        parts.append(np.log([nat["variance"], nat["lengthscale"], nat["noise"]]))
        if self.include_response:
            parts.append([nat["effect"]])
        parts.append(nat["logits"])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])

    def unpack(self, theta):
        K = self.K
        i = K * _N_COEFFS
        coeffs = theta[:i].reshape(K, _N_COEFFS)
        v, ell, sigma = np.exp(theta[i : i + 3])
        i += 3
        effect = 0.0
        if self.include_response:
            effect = float(theta[i])
            i += 1
        logits = theta[i : i + K]
        return coeffs, v, ell, sigma, effect, logits

    def init_natural(self, seed):
        # Clustering on raw coefficients merges classes whose separation
        # is smaller than the response shifts, so estimate a crude effect
        # from the activity indicator first and cluster the de-shifted
        # trajectories instead.
        effect0 = self._moment_effect() if self.include_response else 0.0
        values = [t.values - effect0 * t.active for t in self.traces]
        X = _per_trace_coefficients(values, self.designs)
        centers, labels = _robust_coefficient_clusters(X, self.K, seed)
        sq = 0.0
        count = 0
        for vals, B, lab in zip(values, self.designs, labels):
            r = vals - B @ centers[lab]
            sq += float(r @ r)
            count += vals.size
        s2 = max(sq / max(count, 1), 1e-6)
        shares = np.bincount(labels, minlength=self.K) + 1.0
        return {
            "coeffs": centers,
            "variance": 0.75 * s2,
            "lengthscale": self.tau / 3.0,
            "noise": np.sqrt(0.25 * s2),
            "effect": effect0,
            "logits": np.log(shares / shares.sum()),
        }

    def _moment_effect(self):
        # Pooled slope of per-trace spline residuals on the centered
        # activity indicator; crude because the spline fit absorbs part
        # of the shift, but close enough to start in the right basin.
        num = 0.0
        den = 0.0
        for t, B in zip(self.traces, self.designs):
            if not t.has_actions:
                continue
            c, *_ = np.linalg.lstsq(B, t.values, rcond=None)
            r = t.values - B @ c
            a = t.active - t.active.mean()
            num += float(a @ r)
            den += float(a @ a)
        return num / den if den > 0.0 else 0.0

    def objective_and_grad(self, theta):
        coeffs, v, ell, sigma, effect, logits = self.unpack(theta)
        K = self.K
        log_w = logits - logsumexp(logits)
        w = np.exp(log_w)

        value = 0.0
        g_coeffs = np.zeros((K, _N_COEFFS))
        g_kernel = np.zeros(3)
        g_effect = 0.0
        g_logits = np.zeros(K)

        try:
            for t, B in zip(self.traces, self.designs):
                n = t.n
                s = np.sqrt(3.0) * t.abs_dt / ell
                E = np.exp(-s)
                M = v * (1.0 + s) * E
                Kmat = M + sigma**2 * np.eye(n)
                chol = cholesky_with_jitter(Kmat)

                R = t.values[:, None] - B @ coeffs.T
                if self.include_response:
                    R = R - effect * t.active[:, None]
                A = cho_solve(chol.c_and_lower, R)
                quad = np.einsum("nk,nk->k", R, A)
                logdet = 2.0 * float(np.sum(np.log(np.diag(chol.L))))
                comp_ll = -0.5 * (quad + logdet + n * _LOG_2PI)

                member = log_w + comp_ll
                ll = float(logsumexp(member))
                rho = np.exp(member - ll)
                value += ll

                g_coeffs += rho[:, None] * (B.T @ A).T
                if self.include_response:
                    g_effect += float(t.active @ (A @ rho))
                Kinv = cho_solve(chol.c_and_lower, np.eye(n))
                G = 0.5 * ((A * rho) @ A.T - Kinv)
                g_kernel[0] += float(np.sum(G * M))
                g_kernel[1] += float(np.sum(G * (v * s * s * E)))
                g_kernel[2] += 2.0 * sigma**2 * float(np.trace(G))
                g_logits += rho - w
        except NumericalError:
            return np.inf, np.full(self.n_params, np.nan)

        m = len(self.traces)
        grad = np.concatenate(
            [
                g_coeffs.ravel(),
                g_kernel,
                [g_effect] if self.include_response else [],
                g_logits,
            ]
        )
        return -value / m, -grad / m

    def build_model(self, theta) -> MixtureModel:
        coeffs, v, ell, sigma, effect, logits = self.unpack(theta)
        kernel = SumKernel((Matern32(v, ell), WhiteNoise(sigma)))
        if self.include_response:
            mode = Saturating(window=_SATURATING_WINDOW, effect=effect)
        else:
            mode = Additive()
        components = tuple(
            GPComponent(
                mean=BSplineMean(self.knots, coeffs[k].copy()),
                kernel=kernel,
                response={},
                response_mode=mode,
            )
            for k in range(self.K)
        )
        return MixtureModel(log_weights=logits - logsumexp(logits), components=components)


def _per_trace_coefficients(values, designs):
    rows = []
    for v, B in zip(values, designs):
        c, *_ = np.linalg.lstsq(B, v, rcond=None)
        rows.append(c)
    return np.vstack(rows)


def _spline_cluster_centers(values, designs, n_components, seed):
    if len(values) < n_components:
        raise InitializationError(
            f"{len(values)} traces cannot seed {n_components} components"
        )
    X = _per_trace_coefficients(values, designs)
    if n_components == 1:
        return X.mean(axis=0, keepdims=True)
    centers, _ = kmeans2(X, n_components, minit="++", seed=seed)
    # Deterministic component order: sort by end-of-horizon coefficient.
    return centers[np.argsort(centers[:, -1])]


def _nearest_center(values, designs, centers):
    X = _per_trace_coefficients(values, designs)
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _robust_coefficient_clusters(X, n_components, seed):
    """Cluster coefficient rows on robustly standardized, clipped features.

    Per-trace least-squares coefficients have heavy tails (a trace with no
    observations near a knot leaves that coefficient almost free), and a
    single wild row can capture a k-means center outright.  Clipping at 3
    scaled MADs keeps every row's influence bounded; centers are mapped
    back to the raw coefficient space.
    """
    if n_components == 1:
        return X.mean(axis=0, keepdims=True), np.zeros(len(X), dtype=int)
    med = np.median(X, axis=0)
    mad = np.median(np.abs(X - med), axis=0)
    scale = np.where(mad > 1e-9, 1.4826 * mad, np.maximum(X.std(axis=0), 1.0))
    Z = np.clip((X - med) / scale, -3.0, 3.0)
    centers_z, labels = kmeans2(Z, n_components, minit="++", seed=seed)
    for bump in range(1, 4):
        if np.bincount(labels, minlength=n_components).min() > 0:
            break
        centers_z, labels = kmeans2(Z, n_components, minit="++", seed=seed + 1000 * bump)
    centers = med + scale * centers_z
    order = np.argsort(centers[:, -1])
    relabel = np.empty(n_components, dtype=int)
    relabel[order] = np.arange(n_components)
    return centers[order], relabel[labels]


# --- quadratic-polynomial + IOU family ---------------------------------------


# Width of the central finite-difference step used for the few kernel/mean
# parameters whose derivatives are not worth writing out analytically.
_FD_STEP = 1e-6

_RESP_BLOCK = 5  # h1, log a, log b, h2, log r


class _IouPolyFamily:
    """Zero means, per-class QuadPoly+IOU kernels, additive responses.

    Per class: six Cholesky entries of the scaled coefficient covariance
    (diagonal in log space), log IOU decay and scale, then per action type
    [h1, log a, log b, h2, log r] when responses are included.  Shared:
    log noise and mixture logits.  The coefficient covariance is
    D L L' D with D = diag(1, 1/tau, 1/tau^2), so an identity L is an
    identity covariance in horizon-scaled units.
    """

    def __init__(self, traces, action_types, n_components, include_response):
        self.traces = traces
        self.K = n_components
        self.action_types = action_types
        self.include_response = include_response and len(action_types) > 0
        self.tau = max(t.tau for t in traces)
        self.D = np.diag([1.0, 1.0 / self.tau, 1.0 / self.tau**2])
        self.features = [
            np.stack([np.ones(t.n), t.times, t.times**2], axis=1) for t in traces
        ]
        self.mins = [np.minimum(t.times[:, None], t.times[None, :]) for t in traces]
        self.T = len(action_types) if self.include_response else 0
        self.block = 8 + _RESP_BLOCK * self.T
        self.n_params = self.K * self.block + 1 + self.K

    # -- parameter plumbing --
    def _tril(self, entries):
        L = np.zeros((3, 3))
        L[0, 0] = np.exp(entries[0])
        L[1, 0] = entries[1]
        L[1, 1] = np.exp(entries[2])
        L[2, 0] = entries[3]
        L[2, 1] = entries[4]
        L[2, 2] = np.exp(entries[5])
        return L

    def unpack(self, theta):
        per_class = []
        for k in range(self.K):
            b = theta[k * self.block : (k + 1) * self.block]
            responses = {}
            for t_idx, a_type in enumerate(self.action_types[: self.T]):
                r = b[8 + t_idx * _RESP_BLOCK : 8 + (t_idx + 1) * _RESP_BLOCK]
                responses[a_type] = ResponseParams(
                    h1=float(r[0]),
                    a=float(np.exp(r[1])),
                    b=float(np.exp(r[2])),
                    h2=float(r[3]),
                    r=float(np.exp(r[4])),
                )
            per_class.append(
                {
                    "L": self._tril(b[:6]),
                    "alpha": float(np.exp(b[6])),
                    "nu": float(np.exp(b[7])),
                    "responses": responses,
                }
            )
        sigma = float(np.exp(theta[self.K * self.block]))
        logits = theta[self.K * self.block + 1 :]
        return per_class, sigma, logits

    def pack_component(self, L, alpha, nu, responses):
        entries = [
            np.log(L[0, 0]), L[1, 0], np.log(L[1, 1]),
            L[2, 0], L[2, 1], np.log(L[2, 2]),
            np.log(alpha), np.log(nu),
        ]
        for a_type in self.action_types[: self.T]:
            p = responses[a_type]
            entries.extend([p.h1, np.log(p.a), np.log(p.b), p.h2, np.log(p.r)])
        return np.asarray(entries, dtype=float)

    def init_theta(self, seed):
        blocks = []
        for k in range(self.K):
            draw = _lognormal_component_draw(seed, k, self.T)
            responses = {
                a_type: draw["responses"][i]
                for i, a_type in enumerate(self.action_types[: self.T])
            }
            blocks.append(
                self.pack_component(np.eye(3), draw["alpha"], draw["nu"], responses)
            )
        pooled = np.concatenate([t.values for t in self.traces])
        sigma0 = max(0.2 * float(np.std(pooled)), 1e-3)
        return np.concatenate(blocks + [[np.log(sigma0)], np.zeros(self.K)])

    # -- likelihood pieces --
    def _iou_gram(self, trace_index, alpha, nu):
        t = self.traces[trace_index].times
        core = (
            2.0 * alpha * self.mins[trace_index]
            + np.exp(-alpha * t)[:, None]
            + np.exp(-alpha * t)[None, :]
            - 1.0
            - np.exp(-alpha * self.traces[trace_index].abs_dt)
        )
        return nu**2 / (2.0 * alpha**3) * core

    def _response_mean(self, trace, responses):
        mean = np.zeros(trace.n)
        for a_type, params in responses.items():
            a_times = trace.action_times_by_type.get(a_type)
            if a_times is not None and a_times.size:
                mean += cumulative_response(params, a_times, trace.times, Additive())
        return mean

    def _mean_jacobian(self, trace, k_block, theta):
        """d(response mean)/d(packed response params) by central differences."""
        cols = []
        base = k_block * self.block
        for j in range(8, self.block):
            h = _FD_STEP * max(1.0, abs(theta[base + j]))
            up = theta.copy()
            up[base + j] += h
            dn = theta.copy()
            dn[base + j] -= h
            per_up, _, _ = self.unpack(up)
            per_dn, _, _ = self.unpack(dn)
            m_up = self._response_mean(trace, per_up[k_block]["responses"])
            m_dn = self._response_mean(trace, per_dn[k_block]["responses"])
            cols.append((m_up - m_dn) / (2.0 * h))
        return np.stack(cols, axis=1) if cols else np.zeros((trace.n, 0))

    def objective_and_grad(self, theta):
        per_class, sigma, logits = self.unpack(theta)
        K = self.K
        log_w = logits - logsumexp(logits)
        w = np.exp(log_w)

        value = 0.0
        grad = np.zeros_like(theta)
        g_logsigma = 0.0
        g_logits = np.zeros(K)

        try:
            for i, trace in enumerate(self.traces):
                n = trace.n
                Phi = self.features[i]
                comp_ll = np.empty(K)
                cache = []
                for k, pc in enumerate(per_class):
                    Sigma = self.D @ pc["L"] @ pc["L"].T @ self.D
                    K_poly = Phi @ Sigma @ Phi.T
                    K_iou = self._iou_gram(i, pc["alpha"], pc["nu"])
                    Kmat = K_poly + K_iou + sigma**2 * np.eye(n)
                    chol = cholesky_with_jitter(Kmat)
                    r = trace.values - self._response_mean(trace, pc["responses"]) \
                        if self.include_response else trace.values
                    a_vec = cho_solve(chol.c_and_lower, r)
                    logdet = 2.0 * float(np.sum(np.log(np.diag(chol.L))))
                    comp_ll[k] = -0.5 * (float(r @ a_vec) + logdet + n * _LOG_2PI)
                    cache.append((chol, a_vec, K_iou))

                member = log_w + comp_ll
                ll = float(logsumexp(member))
                rho = np.exp(member - ll)
                value += ll
                g_logits += rho - w

                for k, pc in enumerate(per_class):
                    if rho[k] < 1e-14:
                        continue
                    chol, a_vec, K_iou = cache[k]
                    Kinv = cho_solve(chol.c_and_lower, np.eye(n))
                    G = 0.5 * rho[k] * (np.outer(a_vec, a_vec) - Kinv)
                    base = k * self.block

                    M3 = Phi.T @ G @ Phi
                    gL = 2.0 * (self.D @ M3 @ self.D) @ pc["L"]
                    L = pc["L"]
                    grad[base + 0] += gL[0, 0] * L[0, 0]
                    grad[base + 1] += gL[1, 0]
                    grad[base + 2] += gL[1, 1] * L[1, 1]
                    grad[base + 3] += gL[2, 0]
                    grad[base + 4] += gL[2, 1]
                    grad[base + 5] += gL[2, 2] * L[2, 2]

                    # log alpha by central differences on the Gram builder.
                    h = _FD_STEP
                    dK = (
                        self._iou_gram(i, pc["alpha"] * np.exp(h), pc["nu"])
                        - self._iou_gram(i, pc["alpha"] * np.exp(-h), pc["nu"])
                    ) / (2.0 * h)
                    grad[base + 6] += float(np.sum(G * dK))
                    grad[base + 7] += 2.0 * float(np.sum(G * K_iou))

                    if self.include_response and trace.has_actions:
                        J = self._mean_jacobian(trace, k, theta)
                        grad[base + 8 : base + self.block] += rho[k] * (a_vec @ J)

                    g_logsigma += 2.0 * sigma**2 * float(np.trace(G))
        except NumericalError:
            return np.inf, np.full(self.n_params, np.nan)

        m = len(self.traces)
        grad[self.K * self.block] = g_logsigma
        grad[self.K * self.block + 1 :] = g_logits
        return -value / m, -grad / m

    def build_model(self, theta) -> MixtureModel:
        per_class, sigma, logits = self.unpack(theta)
        components = []
        for pc in per_class:
            Sigma = self.D @ pc["L"] @ pc["L"].T @ self.D
            kernel = SumKernel(
                (QuadPoly(Sigma), IOU(pc["alpha"], pc["nu"]), WhiteNoise(sigma))
            )
            components.append(
                GPComponent(
                    mean=Zero(),
                    kernel=kernel,
                    response=dict(pc["responses"]),
                    response_mode=Additive(),
                )
            )
        return MixtureModel(
            log_weights=logits - logsumexp(logits), components=tuple(components)
        )


def _lognormal_component_draw(seed, component, n_types):
    """Appendix-style random draws for one component, fixed order.

    a, b, r, alpha, nu are LogNormal(0, 0.1); h1, h2 are Normal(0, 0.1).
    Extra action types keep drawing from the same per-component stream.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(component,)))
    a = rng.lognormal(0.0, 0.1)
    b = rng.lognormal(0.0, 0.1)
    r = rng.lognormal(0.0, 0.1)
    alpha = rng.lognormal(0.0, 0.1)
    nu = rng.lognormal(0.0, 0.1)
    h1 = rng.normal(0.0, 0.1)
    h2 = rng.normal(0.0, 0.1)
    responses = [ResponseParams(h1=h1, a=a, b=b, h2=h2, r=r)]
    for _ in range(1, n_types):
        responses.append(
            ResponseParams(
                h1=rng.normal(0.0, 0.1),
                a=rng.lognormal(0.0, 0.1),
                b=rng.lognormal(0.0, 0.1),
                h2=rng.normal(0.0, 0.1),
                r=rng.lognormal(0.0, 0.1),
            )
        )
    return {
        "vector": np.array([a, b, r, alpha, nu, h1, h2]),
        "alpha": alpha,
        "nu": nu,
        "responses": responses,
    }


# --- fit drivers ---------------------------------------------------------------


def _make_family(traces, action_types, config, include_response):
    if config.init_strategy == "spline_cluster":
        return _SplineFamily(traces, action_types, config.n_components, include_response)
    return _IouPolyFamily(traces, action_types, config.n_components, include_response)


def _initial_theta(family, seed):
    if isinstance(family, _SplineFamily):
        return family.pack(family.init_natural(seed))
    return family.init_theta(seed)


def _fit(dataset: Dataset, config: FitConfig, include_response: bool) -> FitResult:
    traces, action_types = _prepare(dataset)
    family = _make_family(traces, action_types, config, include_response)

    best = None
    diagnostics = {}
    for restart in range(config.restarts):
        seed = config.seed + restart
        try:
            theta0 = _initial_theta(family, seed)
            res = minimize(
                family.objective_and_grad,
                theta0,
                max_iter=config.max_iter,
                grad_tol=config.grad_tol,
            )
        except (OptimizationError, NumericalError) as exc:
            diagnostics[restart] = str(exc)
            continue
        if not np.isfinite(res.value):
            diagnostics[restart] = f"non-finite objective: {res.message}"
            continue
        if best is None or res.value < best[0]:
            best = (res.value, restart, res)

    if best is None:
        raise OptimizationError(
            f"all {config.restarts} restarts diverged", diagnostics=diagnostics
        )
    value, restart, res = best
    return FitResult(
        model=family.build_model(res.x),
        final_objective=-value * len(traces),
        converged=res.converged,
        iterations=res.iterations,
        restart_index=restart,
    )


def fit_cgp(dataset: Dataset, config: FitConfig) -> FitResult:
    """Fit the outcome model with response terms conditioned on actions.

    Maximizes the summed mixture log likelihood where component means are
    shifted by each trace's observed actions; the event/action terms of
    the adjusted objective have separate parameters and are fit by
    :func:`fit_event_action_model`.  Datasets whose action vocabulary is
    empty have no response terms to fit, making this identical to
    :func:`fit_baseline`.
    """
    return _fit(dataset, config, include_response=True)


def fit_baseline(dataset: Dataset, config: FitConfig) -> FitResult:
    """Fit the same family with every response term dropped.

    Whatever the treatment policy did to the outcomes is absorbed into
    the spline means and kernel parameters, which is exactly the
    policy-confounded supervised baseline.
    """
    return _fit(dataset, config, include_response=False)


def init_parameters(dataset: Dataset, config: FitConfig, component: int) -> np.ndarray:
    """Initial natural-space parameter vector for one component.

    ``spline_cluster``: the component's k-means center over per-trace
    least-squares spline coefficients (components ordered by their
    end-of-horizon coefficient).  ``random_lognormal``: the component's
    [a, b, r, alpha, nu, h1, h2] draw.
    """
    if not 0 <= component < config.n_components:
        raise DomainError(
            f"component {component} outside [0, {config.n_components})"
        )
    if config.init_strategy == "random_lognormal":
        return _lognormal_component_draw(config.seed, component, 1)["vector"]
    traces, _ = _prepare(dataset)
    spec = BSplineMean(uniform_clamped_knots(max(t.tau for t in traces), _N_COEFFS),
                       np.zeros(_N_COEFFS))
    designs = [bspline_design(spec, t.times) for t in traces]
    values = [t.values for t in traces]
    centers = _spline_cluster_centers(values, designs, config.n_components, config.seed)
    return centers[component]


# --- event/action model --------------------------------------------------------


def fit_event_action_model(
    dataset: Dataset, *, outcome_model: MixtureModel | None = None
) -> EventActionModel:
    """Closed-form intensity MLE plus a logistic action-choice fit.

    The homogeneous intensity lambda = (total events) / (total follow-up)
    maximizes sum(log lambda) - integral(lambda) exactly.  The action model
    is a logistic regression of action presence on the trailing 2h mean of
    observed outcomes, evaluated at every outcome-carrying event; weights
    are clipped at +/-20 to guard perfect separation.

    When ``outcome_model`` is given, per-class probability scales are also
    estimated, weighting every trace's decision events by its posterior
    class probabilities under that model.  The scales are kept only when
    they earn their complexity (twice the expected log-likelihood gain must
    beat K * log(n_events)); otherwise the class-free model is returned
    unchanged.  Action choices that load on the latent class this way break
    the history-only assumption the outcome fit leans on, so retained
    scales both flag the violation and let prediction account for it.
    """
    if len(dataset) == 0:
        raise DegenerateDataError("empty dataset")
    total_events = sum(len(tr.events) for tr in dataset.traces)
    if total_events == 0:
        raise DegenerateDataError("no events in dataset")
    total_tau = sum(tr.tau for tr in dataset.traces)
    rate = total_events / total_tau

    feats, labels, trace_index = [], [], []
    per_trace = []
    for i, tr in enumerate(dataset.traces):
        out = tr.outcome_events()
        times = np.array([ev.t for ev in out])
        values = np.array([ev.y for ev in out])
        per_trace.append((times, values, [(ev.a, ev.t) for ev in tr.events if ev.z_a]))
        for ev in out:
            feats.append(trailing_mean_feature(times, values, ev.t, _FEATURE_WINDOW))
            labels.append(1.0 if ev.z_a else 0.0)
            trace_index.append(i)
    if not feats:
        raise DegenerateDataError("no outcome-carrying events to fit the action model")
    f = np.asarray(feats)
    y = np.asarray(labels)

    def nll_and_grad(theta):
        s = theta[0] * f + theta[1]
        # log sigmoid(s) = -logaddexp(0, -s); stable on both tails
        ll = float(np.sum(y * s - np.logaddexp(0.0, s)))
        p = 1.0 / (1.0 + np.exp(-s))
        g = np.array([float((y - p) @ f), float(np.sum(y - p))])
        n = y.size
        return -ll / n, -g / n

    res = minimize(nll_and_grad, np.zeros(2), max_iter=200, grad_tol=1e-8)
    weight, bias = np.clip(res.x, -_LOGISTIC_CLIP, _LOGISTIC_CLIP)
    flat = EventActionModel(
        rate=rate, action_weight=float(weight), action_bias=float(bias)
    )
    if outcome_model is None or outcome_model.n_components < 2:
        return flat
    scaled = _fit_class_scaled_choice(
        outcome_model, per_trace, f, y, np.asarray(trace_index), flat
    )
    return scaled if scaled is not None else flat


def _fit_class_scaled_choice(outcome_model, per_trace, f, y, trace_index, flat):
    """Refit the action-choice model with per-class probability scales.

    Treatment probability becomes sigmoid(u_k) * sigmoid(w*f + b); events
    are weighted by each trace's class responsibilities, so the objective
    is the expected complete-data log likelihood.  Returns None when the
    class-free model explains the choices essentially as well (BIC), which
    keeps models fit under class-blind policies exactly class-free.
    """
    K = outcome_model.n_components
    resp = np.array(
        [
            class_posterior(outcome_model, times, values, actions)
            for times, values, actions in per_trace
        ]
    )
    R = resp[trace_index]
    n = y.size
    treated = y > 0.5

    def nll_and_grad(theta):
        w, b = theta[0], theta[1]
        u = theta[2:]
        eta = w * f + b
        sig = expit(eta)
        s = np.clip(expit(u), 1e-12, 1.0 - 1e-12)
        P = sig[:, None] * s[None, :]
        log_sig = -np.logaddexp(0.0, -eta)
        L = np.where(
            treated[:, None],
            log_sig[:, None] + np.log(s)[None, :],
            np.log1p(-P),
        )
        ratio = 1.0 / (1.0 - P)
        dL_deta = np.where(
            treated[:, None],
            (1.0 - sig)[:, None] * np.ones_like(s)[None, :],
            -(sig * (1.0 - sig))[:, None] * s[None, :] * ratio,
        )
        dL_du = np.where(
            treated[:, None],
            (1.0 - s)[None, :] * np.ones_like(sig)[:, None],
            -(s * (1.0 - s))[None, :] * sig[:, None] * ratio,
        )
        W = R * dL_deta
        g = np.concatenate(
            (
                [float(W.sum(axis=1) @ f), float(W.sum())],
                (R * dL_du).sum(axis=0),
            )
        )
        return -float((R * L).sum()) / n, -g / n

    theta0 = np.concatenate(([flat.action_weight, flat.action_bias], np.zeros(K)))
    try:
        res = minimize(nll_and_grad, theta0, max_iter=300, grad_tol=1e-8)
    except (OptimizationError, NumericalError):
        return None
    # Null log likelihood at the clipped class-free optimum; the weighted
    # and unweighted sums agree because its event terms are class-free.
    eta0 = flat.action_weight * f + flat.action_bias
    ll_null = float(np.sum(y * eta0 - np.logaddexp(0.0, eta0)))
    ll_scaled = -res.value * n
    if 2.0 * (ll_scaled - ll_null) <= K * np.log(n):
        return None
    w, b = np.clip(res.x[:2], -_LOGISTIC_CLIP, _LOGISTIC_CLIP)
    u = np.clip(res.x[2:], -_LOGISTIC_CLIP, _LOGISTIC_CLIP)
    return EventActionModel(
        rate=flat.rate,
        action_weight=float(w),
        action_bias=float(b),
        class_scales=tuple(float(v) for v in expit(u)),
    )


# --- objective assembly ---------------------------------------------------------


@dataclass(frozen=True)
class AdjustedObjective:
    """The adjusted log likelihood split into its separable terms.

    ``total`` is outcome_term + event_action_term - integral_term, exactly:
    the decomposition is how the model is fit in the first place.
    """

    outcome_term: float
    event_action_term: float
    integral_term: float

    @property
    def total(self) -> float:
        return self.outcome_term + self.event_action_term - self.integral_term


def assemble_adjusted_objective(
    dataset: Dataset, model: MixtureModel, event_action: EventActionModel
) -> AdjustedObjective:
    """Evaluate the full adjusted objective on a dataset.

    Outcome term: summed mixture log likelihood with action-conditioned
    means.  Event/action term: log intensity per event plus the action
    model's log probability at every outcome-carrying event.  Integral
    term: intensity times total follow-up.
    """
    outcome = 0.0
    event_action_model = event_action
    ea = 0.0
    total_tau = 0.0
    for tr in dataset.traces:
        out = tr.outcome_events()
        times = np.array([ev.t for ev in out])
        values = np.array([ev.y for ev in out])
        actions = [(ev.a, ev.t) for ev in tr.events if ev.z_a]
        outcome += mixture_log_likelihood(model, times, values, actions)
        total_tau += tr.tau
        ea += len(tr.events) * float(np.log(event_action_model.rate))
        for ev in out:
            feat = trailing_mean_feature(times, values, ev.t, _FEATURE_WINDOW)
            s = event_action_model.action_weight * feat + event_action_model.action_bias
            log_p = -float(np.logaddexp(0.0, -s))
            log_q = -float(np.logaddexp(0.0, s))
            ea += log_p if ev.z_a else log_q
    return AdjustedObjective(
        outcome_term=outcome,
        event_action_term=ea,
        integral_term=event_action_model.rate * total_tau,
    )

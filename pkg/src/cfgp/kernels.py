"""Covariance functions, mean functions, and treatment-response functions.

Three kernels are supported (plus white observation noise and sums thereof):

* ``Matern32`` -- stationary Matern 3/2, k(t1,t2) = v (1+s) exp(-s) with
  s = sqrt(3)|t1-t2| / lengthscale.
* ``IOU`` -- covariance of the integrated Ornstein-Uhlenbeck process,
  k(t1,t2) = nu^2/(2 alpha^3) (2 alpha min(t1,t2) + e^{-alpha t1}
  + e^{-alpha t2} - 1 - e^{-alpha |t1-t2|}); vanishes when either
  argument is 0.
* ``QuadPoly`` -- non-stationary quadratic-polynomial kernel
  k(t1,t2) = phi(t1)^T Sigma phi(t2) with phi(t) = [1, t, t^2].

Mean functions are either zero or a clamped degree-3 B-spline.  Treatment
responses combine a short-term pulse and a long-term saturating shift; past
actions enter trajectory means either additively or through a saturating
"constant bump while active" rule.

Everything here is a pure function over immutable specs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor

from .errors import DomainError, NumericalError

__all__ = [
    "Matern32",
    "IOU",
    "QuadPoly",
    "WhiteNoise",
    "SumKernel",
    "Zero",
    "BSplineMean",
    "ResponseParams",
    "Additive",
    "Saturating",
    "kernel_eval",
    "kernel_matrix",
    "kernel_cross",
    "split_noise",
    "bspline_mean",
    "bspline_design",
    "uniform_clamped_knots",
    "response",
    "cumulative_response",
    "cholesky_with_jitter",
]

# Same-time tolerance for the white-noise diagonal in cross-covariances.
_TIME_EQ_ATOL = 0.0


def _require_positive(name, value):
    if not value > 0:
        raise DomainError(f"{name} must be strictly positive, got {value}")


@dataclass(frozen=True)
class Matern32:
    variance: float
    lengthscale: float

    def __post_init__(self):
        _require_positive("variance", self.variance)
        _require_positive("lengthscale", self.lengthscale)

    def gram(self, t1, t2):
        s = np.sqrt(3.0) * np.abs(t1[:, None] - t2[None, :]) / self.lengthscale
        return self.variance * (1.0 + s) * np.exp(-s)


@dataclass(frozen=True)
class IOU:
    alpha: float
    nu: float

    def __post_init__(self):
        _require_positive("alpha", self.alpha)
        _require_positive("nu", self.nu)

    def gram(self, t1, t2):
        a = self.alpha
        u, v = t1[:, None], t2[None, :]
        core = (
            2.0 * a * np.minimum(u, v)
            + np.exp(-a * u)
            + np.exp(-a * v)
            - 1.0
            - np.exp(-a * np.abs(u - v))
        )
        return self.nu**2 / (2.0 * a**3) * core


def poly_features(t):
    """Quadratic polynomial basis phi(t) = [1, t, t^2], rows per time."""
    t = np.asarray(t, dtype=float)
    return np.stack([np.ones_like(t), t, t * t], axis=-1)


@dataclass(frozen=True)
class QuadPoly:
    Sigma: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.Sigma, dtype=float)
        if S.shape != (3, 3):
            raise DomainError(f"Sigma must be 3x3, got {S.shape}")
        if not np.allclose(S, S.T, atol=1e-10):
            raise DomainError("Sigma must be symmetric")
        if np.any(np.linalg.eigvalsh(S) <= 0):
            raise DomainError("Sigma must be positive definite")
        S = 0.5 * (S + S.T)
        S.setflags(write=False)
        object.__setattr__(self, "Sigma", S)

    def gram(self, t1, t2):
        return poly_features(t1) @ self.Sigma @ poly_features(t2).T


@dataclass(frozen=True)
class WhiteNoise:
    sigma: float

    def __post_init__(self):
        _require_positive("sigma", self.sigma)

    def gram(self, t1, t2):
        eq = np.abs(t1[:, None] - t2[None, :]) <= _TIME_EQ_ATOL
        return np.where(eq, self.sigma**2, 0.0)


@dataclass(frozen=True)
class SumKernel:
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise DomainError("SumKernel needs at least one term")

    def gram(self, t1, t2):
        out = self.terms[0].gram(t1, t2)
        for term in self.terms[1:]:
            out = out + term.gram(t1, t2)
        return out


KernelSpec = Matern32 | IOU | QuadPoly | WhiteNoise | SumKernel


def kernel_eval(spec, t1: float, t2: float) -> float:
    """Evaluate a covariance function at a single pair of times."""
    return float(spec.gram(np.array([t1], float), np.array([t2], float))[0, 0])


def kernel_matrix(spec, times) -> np.ndarray:
    """Gram matrix K[i,j] = k(times[i], times[j]); PSD up to jitter.

    White-noise terms contribute sigma^2 on the index diagonal only:
    duplicated measurement times carry independent noise, which is exactly
    what keeps the Gram nonsingular in that case.
    """
    t = np.asarray(times, dtype=float)
    if t.size == 0:
        return np.zeros((0, 0))
    smooth, sigma = split_noise(spec)
    K = smooth.gram(t, t) if smooth is not None else np.zeros((t.size, t.size))
    if sigma > 0.0:
        K = K + sigma**2 * np.eye(t.size)
    return K


def kernel_cross(spec, t1, t2) -> np.ndarray:
    """Rectangular cross-covariance between two time grids."""
    t1 = np.asarray(t1, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    if t1.size == 0 or t2.size == 0:
        return np.zeros((t1.size, t2.size))
    return spec.gram(t1, t2)


def split_noise(spec):
    """Split a kernel into (noise-free part, noise sigma).

    White-noise terms model independent observation error: they belong in
    the training covariance but not in latent-trajectory predictions.
    Returns ``(None, sigma)`` for a pure white-noise kernel.
    """
    if isinstance(spec, WhiteNoise):
        return None, spec.sigma
    if isinstance(spec, SumKernel):
        sigma2 = 0.0
        smooth = []
        for term in spec.terms:
            sub_smooth, sub_sigma = split_noise(term)
            sigma2 += sub_sigma**2
            if sub_smooth is not None:
                smooth.append(sub_smooth)
        if not smooth:
            return None, float(np.sqrt(sigma2))
        part = smooth[0] if len(smooth) == 1 else SumKernel(tuple(smooth))
        return part, float(np.sqrt(sigma2))
    return spec, 0.0


# --- mean functions ---------------------------------------------------------


@dataclass(frozen=True)
class Zero:
    pass


def uniform_clamped_knots(tau: float, n_coeffs: int = 5, degree: int = 3) -> np.ndarray:
    """Clamped uniform knot vector on [0, tau] for the given basis size."""
    n_interior = n_coeffs - degree - 1
    interior = np.linspace(0.0, tau, n_interior + 2)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior, np.full(degree + 1, tau)])


@dataclass(frozen=True)
class BSplineMean:
    """Degree-3 B-spline mean with 5 coefficients; clamps outside the span."""

    knots: np.ndarray
    coeffs: np.ndarray
    degree: int = 3

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if np.any(np.diff(knots) < 0):
            raise DomainError("knots must be ascending")
        if knots.size != coeffs.size + self.degree + 1:
            raise DomainError(
                f"need {coeffs.size + self.degree + 1} knots for "
                f"{coeffs.size} coefficients, got {knots.size}"
            )
        knots.setflags(write=False)
        coeffs.setflags(write=False)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def span(self) -> tuple[float, float]:
        return (self.knots[self.degree], self.knots[-self.degree - 1])


MeanSpec = Zero | BSplineMean


def bspline_mean(spec, t):
    """Evaluate a mean function at time(s) ``t``.

    Out-of-span times clamp to the boundary value rather than extrapolating
    the cubic pieces.
    """
    t = np.asarray(t, dtype=float)
    if isinstance(spec, Zero):
        out = np.zeros_like(t)
        return float(out) if out.ndim == 0 else out
    lo, hi = spec.span
    tc = np.clip(t, lo, hi)
    val = BSpline(spec.knots, spec.coeffs, spec.degree, extrapolate=True)(tc)
    return float(val) if val.ndim == 0 else val


def bspline_design(spec: BSplineMean, times) -> np.ndarray:
    """Dense basis matrix B[i,j] = basis_j(times[i]) with clamped times."""
    lo, hi = spec.span
    tc = np.clip(np.asarray(times, dtype=float), lo, hi)
    return BSpline.design_matrix(tc, spec.knots, spec.degree).toarray()


# --- treatment responses ----------------------------------------------------


@dataclass(frozen=True)
class ResponseParams:
    """Short-term pulse (h1, a, b) plus long-term saturating shift (h2, r)."""

    h1: float
    a: float
    b: float
    h2: float
    r: float

    def __post_init__(self):
        _require_positive("a", self.a)
        _require_positive("b", self.b)
        _require_positive("r", self.r)


# |a - b| below this switches the short-term pulse to its a == b limit form.
_AB_LIMIT_TOL = 1e-9


def response(params: ResponseParams, delta) -> np.ndarray | float:
    """Combined treatment response at lag ``delta`` >= 0 hours after an action.

    Short-term: h1 a/(a-b) (e^{-b d} - e^{-a d}), taken in the limit form
    h1 a d e^{-a d} when a == b.  Long-term: h2 (1 - e^{-r d}).  Both vanish
    at d = 0.
    """
    d = np.asarray(delta, dtype=float)
    h1, a, b, h2, r = params.h1, params.a, params.b, params.h2, params.r
    if abs(a - b) < _AB_LIMIT_TOL:
        short = h1 * a * d * np.exp(-a * d)
    else:
        short = h1 * a / (a - b) * (np.exp(-b * d) - np.exp(-a * d))
    long = h2 * (1.0 - np.exp(-r * d))
    out = short + long
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Additive:
    """Responses of overlapping actions add up."""


@dataclass(frozen=True)
class Saturating:
    """A constant bump while any action is active; overlaps do not stack."""

    window: float
    effect: float

    def __post_init__(self):
        _require_positive("window", self.window)


ResponseMode = Additive | Saturating


def cumulative_response(params, action_times, t, mode) -> np.ndarray | float:
    """Total mean shift at time(s) ``t`` from actions at ``action_times``.

    Only past actions contribute (t0 < t).  Additive mode sums the response
    function over them; saturating mode returns ``mode.effect`` whenever any
    action satisfies t - t0 in (0, window].
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    times = np.asarray(list(action_times), dtype=float)
    if times.size:
        if isinstance(mode, Saturating):
            d = t[..., None] - times
            active = np.any((d > 0.0) & (d <= mode.window), axis=-1)
            out = np.where(active, mode.effect, 0.0)
        else:
            d = t[..., None] - times
            vals = np.where(d > 0.0, response(params, np.maximum(d, 0.0)), 0.0)
            out = vals.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


# --- factorization with jitter ----------------------------------------------

# Jitter starts at 1e-8 x mean diagonal and escalates x10 up to 1e-4; the
# low-rank-prone IOU + polynomial kernels need this.
_JITTER_START = 1e-8
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class CholFactor:
    """Lower-triangular Cholesky factor plus the jitter that was applied."""

    L: np.ndarray
    jitter: float
    c_and_lower: tuple = field(repr=False, default=None)


def cholesky_with_jitter(K: np.ndarray) -> CholFactor:
    """Cholesky-factor a Gram matrix, escalating diagonal jitter on failure."""
    n = K.shape[0]
    if n == 0:
        return CholFactor(L=np.zeros((0, 0)), jitter=0.0, c_and_lower=(np.zeros((0, 0)), True))
    base = float(np.mean(np.diag(K)))
    if base <= 0:
        base = 1.0
    jitter = 0.0
    while True:
        try:
            c, low = cho_factor(K + jitter * np.eye(n), lower=True)
            return CholFactor(L=np.tril(c), jitter=jitter, c_and_lower=(c, low))
        except np.linalg.LinAlgError:
            jitter = _JITTER_START * base if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX * base:
                raise NumericalError(
                    f"Gram matrix not positive definite after jitter up to "
                    f"{_JITTER_MAX * base:.3e}"
                ) from None

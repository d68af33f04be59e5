"""Covariance, mean, and response building blocks against independent oracles.

The oracles here are deliberately naive: direct quadrature for the
integrated-OU covariance, the textbook recursive basis evaluation for
splines, and O(n^3)-style dense linear algebra.  The implementations must
agree with them, not the other way round.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from cfgp.errors import DomainError, NumericalError
from cfgp.kernels import (
    IOU,
    Additive,
    BSplineMean,
    Matern32,
    QuadPoly,
    ResponseParams,
    Saturating,
    SumKernel,
    WhiteNoise,
    Zero,
    bspline_design,
    bspline_mean,
    cholesky_with_jitter,
    cumulative_response,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    response,
    split_noise,
    uniform_clamped_knots,
)

RNG = np.random.default_rng(20260814)


def kernel_zoo():
    return [
        Matern32(variance=1.3, lengthscale=4.0),
        Matern32(variance=0.04, lengthscale=8.0),
        IOU(alpha=1.0, nu=1.0),
        IOU(alpha=0.12, nu=1.0),
        QuadPoly(Sigma=np.diag([0.36, 6e-4, 4e-8])),
        QuadPoly(Sigma=np.array([[1.0, 0.2, 0.0], [0.2, 0.5, 0.1], [0.0, 0.1, 0.3]])),
        WhiteNoise(sigma=0.3),
        SumKernel((Matern32(variance=0.04, lengthscale=8.0), WhiteNoise(sigma=0.1))),
        SumKernel(
            (
                QuadPoly(Sigma=np.diag([0.36, 1e-4, 1e-8])),
                IOU(alpha=0.12, nu=1.0),
                WhiteNoise(sigma=0.15),
            )
        ),
    ]


class TestMatern32:
    def test_at_zero_lag_equals_variance(self):
        k = Matern32(variance=1.7, lengthscale=3.0)
        assert kernel_eval(k, 5.0, 5.0) == pytest.approx(1.7, abs=1e-12)

    def test_closed_form(self):
        k = Matern32(variance=2.0, lengthscale=5.0)
        for dt in (0.3, 1.0, 4.2, 20.0):
            s = math.sqrt(3.0) * dt / 5.0
            expected = 2.0 * (1.0 + s) * math.exp(-s)
            assert kernel_eval(k, 1.0, 1.0 + dt) == pytest.approx(expected, rel=1e-12)

    def test_monotone_decay(self):
        k = Matern32(variance=1.0, lengthscale=2.0)
        lags = np.linspace(0.0, 10.0, 50)
        vals = [kernel_eval(k, 0.0, d) for d in lags]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            Matern32(variance=-1.0, lengthscale=1.0)
        with pytest.raises(DomainError):
            Matern32(variance=1.0, lengthscale=0.0)


class TestIOU:
    def test_hand_value(self):
        # alpha = nu = 1 at (1, 1): (2 + 2/e - 2) / 2 = 1/e.
        assert kernel_eval(IOU(alpha=1.0, nu=1.0), 1.0, 1.0) == pytest.approx(
            math.exp(-1.0), rel=1e-12
        )

    @pytest.mark.parametrize(
        "alpha,nu,t1,t2",
        [
            (1.0, 1.0, 1.0, 1.0),
            (1.0, 1.0, 0.5, 2.0),
            (0.7, 1.3, 2.0, 3.5),
            (0.12, 1.0, 10.0, 25.0),
            (2.0, 0.5, 0.1, 0.1),
        ],
    )
    def test_quadrature_oracle(self, alpha, nu, t1, t2):
        # The integrated process: double integral of the stationary OU
        # covariance nu^2/(2 alpha) e^{-alpha |u-v|} over [0,t1] x [0,t2].
        # Splitting the inner integral at v = u keeps the integrand smooth
        # on each piece, so the quadrature reaches its requested accuracy.
        def ou_cov(v, u):
            return nu**2 / (2.0 * alpha) * math.exp(-alpha * abs(u - v))

        below, _ = dblquad(
            ou_cov, 0.0, t1, 0.0, lambda u: min(u, t2), epsabs=1e-13, epsrel=1e-12
        )
        above, _ = dblquad(
            ou_cov, 0.0, t1, lambda u: min(u, t2), t2, epsabs=1e-13, epsrel=1e-12
        )
        oracle = below + above
        got = kernel_eval(IOU(alpha=alpha, nu=nu), t1, t2)
        assert got == pytest.approx(oracle, rel=1e-8, abs=1e-10)

    def test_zero_at_origin(self):
        k = IOU(alpha=0.5, nu=2.0)
        assert kernel_eval(k, 0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
        assert kernel_eval(k, 0.0, 7.0) == pytest.approx(0.0, abs=1e-12)

    def test_variance_grows(self):
        k = IOU(alpha=0.3, nu=1.0)
        ts = np.linspace(0.5, 40.0, 30)
        vars_ = [kernel_eval(k, t, t) for t in ts]
        assert all(a < b for a, b in zip(vars_, vars_[1:]))


class TestQuadPoly:
    def test_hand_value_identity_sigma(self):
        # phi(2) . phi(3) = 1 + 6 + 36 = 43 under Sigma = I.
        k = QuadPoly(Sigma=np.eye(3))
        assert kernel_eval(k, 2.0, 3.0) == pytest.approx(43.0, rel=1e-12)

    def test_general_sigma(self):
        S = np.array([[2.0, 0.1, 0.0], [0.1, 1.0, 0.2], [0.0, 0.2, 0.5]])
        k = QuadPoly(Sigma=S)
        p1 = np.array([1.0, 1.5, 2.25])
        p2 = np.array([1.0, -0.5, 0.25])
        assert kernel_eval(k, 1.5, -0.5) == pytest.approx(p1 @ S @ p2, rel=1e-12)

    def test_validation(self):
        with pytest.raises(DomainError):
            QuadPoly(Sigma=np.eye(2))
        with pytest.raises(DomainError):
            QuadPoly(Sigma=np.array([[1.0, 0.5, 0], [0.4, 1, 0], [0, 0, 1.0]]))
        with pytest.raises(DomainError):
            QuadPoly(Sigma=np.diag([1.0, -0.1, 1.0]))


class TestWhiteNoiseAndSum:
    def test_noise_on_index_diagonal_only(self):
        spec = SumKernel((Matern32(variance=1.0, lengthscale=2.0), WhiteNoise(sigma=0.5)))
        # Duplicate times: noise must still land only on the index diagonal.
        t = np.array([1.0, 1.0, 3.0])
        K = kernel_matrix(spec, t)
        smooth, sigma = split_noise(spec)
        K_smooth = smooth.gram(t, t)
        assert sigma == pytest.approx(0.5)
        assert np.allclose(K, K_smooth + 0.25 * np.eye(3))
        assert K[0, 1] == pytest.approx(K_smooth[0, 1])

    def test_cross_covariance_has_no_noise(self):
        spec = SumKernel((Matern32(variance=1.0, lengthscale=2.0), WhiteNoise(sigma=0.5)))
        smooth, _ = split_noise(spec)
        C = kernel_cross(smooth, [1.0, 2.0], [1.0, 4.0])
        assert C[0, 0] == pytest.approx(1.0)  # Matern at zero lag, no noise

    def test_sum_is_sum(self):
        parts = (Matern32(variance=0.7, lengthscale=3.0), IOU(alpha=0.4, nu=0.9))
        t = np.array([0.5, 2.0, 7.0])
        K = SumKernel(parts).gram(t, t)
        assert np.allclose(K, parts[0].gram(t, t) + parts[1].gram(t, t))

    def test_split_noise_combines_sigmas(self):
        spec = SumKernel((WhiteNoise(sigma=0.3), WhiteNoise(sigma=0.4)))
        smooth, sigma = split_noise(spec)
        assert smooth is None
        assert sigma == pytest.approx(0.5)

    def test_split_noise_plain_kernel(self):
        k = Matern32(variance=1.0, lengthscale=1.0)
        smooth, sigma = split_noise(k)
        assert smooth is k and sigma == 0.0

    def test_empty_sum_rejected(self):
        with pytest.raises(DomainError):
            SumKernel(())


class TestPSDSuite:
    @pytest.mark.parametrize("spec", kernel_zoo(), ids=lambda s: type(s).__name__)
    def test_gram_psd_on_random_grids(self, spec):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 13))
            t = np.sort(rng.uniform(0.0, 60.0, size=n))
            K = kernel_matrix(spec, t)
            assert np.allclose(K, K.T, atol=1e-12)
            min_eig = np.linalg.eigvalsh(K).min()
            scale = max(np.mean(np.diag(K)), 1.0)
            assert min_eig >= -1e-8 * scale

    def test_empty_grid(self):
        K = kernel_matrix(Matern32(variance=1.0, lengthscale=1.0), [])
        assert K.shape == (0, 0)


class TestBSpline:
    @staticmethod
    def deboor_basis(knots, i, k, t):
        """Cox-de Boor recursion, textbook form (half-open support)."""
        if k == 0:
            return 1.0 if knots[i] <= t < knots[i + 1] else 0.0
        total = 0.0
        den_l = knots[i + k] - knots[i]
        if den_l > 0:
            total += (t - knots[i]) / den_l * TestBSpline.deboor_basis(knots, i, k - 1, t)
        den_r = knots[i + k + 1] - knots[i + 1]
        if den_r > 0:
            total += (
                (knots[i + k + 1] - t)
                / den_r
                * TestBSpline.deboor_basis(knots, i + 1, k - 1, t)
            )
        return total

    def test_matches_deboor_recursion(self):
        tau = 24.0
        knots = uniform_clamped_knots(tau, n_coeffs=5, degree=3)
        coeffs = np.array([1.0, 0.4, -0.2, -0.9, -1.3])
        spec = BSplineMean(knots=knots, coeffs=coeffs)
        # Strictly interior times: the half-open convention of the naive
        # recursion differs from scipy only at the right endpoint.
        for t in np.linspace(0.01, tau - 0.01, 57):
            oracle = sum(
                c * self.deboor_basis(knots, i, 3, t) for i, c in enumerate(coeffs)
            )
            assert bspline_mean(spec, t) == pytest.approx(oracle, abs=1e-10)

    def test_design_matrix_matches_deboor(self):
        tau = 10.0
        knots = uniform_clamped_knots(tau, n_coeffs=5, degree=3)
        spec = BSplineMean(knots=knots, coeffs=np.zeros(5))
        times = np.linspace(0.2, 9.8, 13)
        B = bspline_design(spec, times)
        assert B.shape == (13, 5)
        for r, t in enumerate(times):
            for i in range(5):
                assert B[r, i] == pytest.approx(
                    self.deboor_basis(knots, i, 3, t), abs=1e-10
                )

    def test_partition_of_unity(self):
        knots = uniform_clamped_knots(24.0)
        spec = BSplineMean(knots=knots, coeffs=np.ones(5))
        t = np.linspace(0.0, 24.0, 101)
        assert np.allclose(bspline_mean(spec, t), 1.0, atol=1e-10)

    def test_clamped_endpoints_interpolate(self):
        knots = uniform_clamped_knots(24.0)
        coeffs = np.array([2.0, 0.0, 0.0, 0.0, -3.0])
        spec = BSplineMean(knots=knots, coeffs=coeffs)
        assert bspline_mean(spec, 0.0) == pytest.approx(2.0, abs=1e-12)
        assert bspline_mean(spec, 24.0) == pytest.approx(-3.0, abs=1e-12)

    def test_out_of_span_clamps(self):
        knots = uniform_clamped_knots(24.0)
        coeffs = np.array([2.0, 0.4, 0.0, -1.0, -3.0])
        spec = BSplineMean(knots=knots, coeffs=coeffs)
        assert bspline_mean(spec, -5.0) == pytest.approx(bspline_mean(spec, 0.0))
        assert bspline_mean(spec, 99.0) == pytest.approx(bspline_mean(spec, 24.0))

    def test_zero_mean(self):
        t = np.array([1.0, 2.0])
        assert np.allclose(bspline_mean(Zero(), t), 0.0)
        assert bspline_mean(Zero(), 3.0) == 0.0

    def test_knot_count_validation(self):
        with pytest.raises(DomainError):
            BSplineMean(knots=np.zeros(7), coeffs=np.zeros(5))


class TestResponse:
    def test_vanishes_at_zero_lag(self):
        p = ResponseParams(h1=1.0, a=0.9, b=0.4, h2=0.2, r=0.5)
        assert response(p, 0.0) == pytest.approx(0.0, abs=1e-12)

    def test_long_term_saturates_to_h2(self):
        p = ResponseParams(h1=0.0, a=1.0, b=2.0, h2=0.7, r=0.5)
        assert response(p, 100.0) == pytest.approx(0.7, rel=1e-6)

    def test_equal_rate_limit_continuous(self):
        # The a != b closed form approaches the a == b limit form.
        h1, a = 1.3, 0.8
        deltas = np.linspace(0.1, 8.0, 23)
        limit = ResponseParams(h1=h1, a=a, b=a, h2=0.0, r=1.0)
        for eps in (1e-5, 1e-7):
            near = ResponseParams(h1=h1, a=a, b=a + eps, h2=0.0, r=1.0)
            diff = np.max(np.abs(response(near, deltas) - response(limit, deltas)))
            assert diff < 1e-4 if eps == 1e-5 else diff < 1e-6

    def test_limit_form_exact(self):
        p = ResponseParams(h1=2.0, a=0.5, b=0.5, h2=0.0, r=1.0)
        d = 3.0
        assert response(p, d) == pytest.approx(2.0 * 0.5 * d * math.exp(-0.5 * d))

    def test_short_term_pulse_shape(self):
        p = ResponseParams(h1=1.0, a=0.9, b=0.4, h2=0.0, r=1.0)
        d = np.linspace(0.01, 30.0, 200)
        vals = response(p, d)
        peak = np.argmax(vals)
        assert 0 < peak < len(d) - 1  # rises then decays
        assert vals[-1] < 0.05 * vals[peak]


class TestCumulativeResponse:
    def test_additive_stacks(self):
        p = ResponseParams(h1=1.0, a=0.9, b=0.4, h2=0.3, r=0.5)
        t = 5.0
        for times in ([2.0], [2.0, 3.0], [2.0, 3.0, 4.5]):
            expected = sum(response(p, t - t0) for t0 in times)
            got = cumulative_response(p, times, t, Additive())
            assert got == pytest.approx(expected, rel=1e-12)

    def test_additive_ignores_future_actions(self):
        p = ResponseParams(h1=1.0, a=0.9, b=0.4, h2=0.3, r=0.5)
        assert cumulative_response(p, [7.0], 5.0, Additive()) == 0.0

    def test_saturating_does_not_stack(self):
        mode = Saturating(window=2.0, effect=0.5)
        # Two overlapping active actions still produce a single bump.
        got = cumulative_response(None, [4.5, 5.0], 5.5, mode)
        assert got == pytest.approx(0.5)

    def test_saturating_window_edges(self):
        mode = Saturating(window=2.0, effect=0.5)
        assert cumulative_response(None, [3.0], 3.0, mode) == 0.0  # d = 0 excluded
        assert cumulative_response(None, [3.0], 5.0, mode) == pytest.approx(0.5)  # d = w
        assert cumulative_response(None, [3.0], 5.01, mode) == 0.0  # past window

    def test_vector_times(self):
        mode = Saturating(window=2.0, effect=0.5)
        t = np.array([2.9, 3.5, 6.0])
        out = cumulative_response(None, [3.0], t, mode)
        assert np.allclose(out, [0.0, 0.5, 0.0])

    def test_no_actions(self):
        assert cumulative_response(None, [], 5.0, Saturating(2.0, 0.5)) == 0.0


class TestCholeskyWithJitter:
    def test_no_jitter_for_well_conditioned(self):
        K = kernel_matrix(
            SumKernel((Matern32(variance=1.0, lengthscale=2.0), WhiteNoise(sigma=0.3))),
            np.linspace(0.0, 10.0, 8),
        )
        fac = cholesky_with_jitter(K)
        assert fac.jitter == 0.0
        assert np.allclose(fac.L @ fac.L.T, K, atol=1e-10)

    def test_jitter_rescues_singular(self):
        # Rank-one Gram: strictly singular, jitter must kick in.
        v = np.arange(1.0, 6.0)
        K = np.outer(v, v)
        fac = cholesky_with_jitter(K)
        assert fac.jitter > 0.0
        assert np.allclose(fac.L @ fac.L.T, K + fac.jitter * np.eye(5), atol=1e-8)

    def test_hopeless_matrix_raises(self):
        K = -np.eye(4)
        with pytest.raises(NumericalError):
            cholesky_with_jitter(K)

    def test_empty(self):
        fac = cholesky_with_jitter(np.zeros((0, 0)))
        assert fac.L.shape == (0, 0)


@given(
    t1=st.floats(min_value=0.0, max_value=50.0, allow_nan=False),
    t2=st.floats(min_value=0.0, max_value=50.0, allow_nan=False),
)
@settings(max_examples=60, deadline=None)
def test_kernel_symmetry_property(t1, t2):
    for spec in (
        Matern32(variance=1.2, lengthscale=3.0),
        IOU(alpha=0.4, nu=0.8),
        QuadPoly(Sigma=np.diag([0.5, 0.01, 1e-4])),
    ):
        assert kernel_eval(spec, t1, t2) == pytest.approx(
            kernel_eval(spec, t2, t1), rel=1e-10, abs=1e-12
        )


@given(
    st.lists(
        st.floats(min_value=0.0, max_value=40.0, allow_nan=False),
        min_size=1,
        max_size=8,
        unique=True,
    )
)
@settings(max_examples=40, deadline=None)
def test_gram_psd_property(times):
    spec = SumKernel((Matern32(variance=0.5, lengthscale=5.0), WhiteNoise(sigma=0.2)))
    K = kernel_matrix(spec, sorted(times))
    assert np.linalg.eigvalsh(K).min() >= -1e-10

"""Tests for orbit finding, fundamental matrices, and the noise Gram."""

import numpy as np
import pytest

from spsd.errors import AssumptionViolationError, ConvergenceError, UsageError
from spsd.periodic import (
    FundamentalPath,
    OrbitPath,
    PeriodicModel,
    find_periodic_orbit,
    fundamental_matrix,
    jacobian_path,
    noise_gram,
)


def constant_orbit(x, period, nodes=17):
    """OrbitPath pinned at a constant state (for driving time-only noise)."""
    grid = np.linspace(0.0, period, nodes)
    states = np.tile(np.asarray(x, dtype=float), (nodes, 1))
    derivs = np.zeros_like(states)
    return OrbitPath(
        grid=grid,
        states=states,
        derivatives=derivs,
        period=period,
        drift=lambda t, y: np.zeros_like(y),
    )


def forced_linear_model(jacobian=True):
    """x' = -x + sin(t), period 2 pi; orbit x*(t) = (sin t - cos t)/2."""
    return PeriodicModel(
        dim=1,
        noise_dim=1,
        period=2.0 * np.pi,
        drift=lambda t, x: -x + np.sin(t),
        diffusion=lambda t, x: np.array([[0.1]]),
        jacobian=(lambda t, x: np.array([[-1.0]])) if jacobian else None,
        orbit_hint=np.array([0.0]),
    )


def forced_orbit_exact(t):
    return (np.sin(t) - np.cos(t)) / 2.0


LOGISTIC_C = np.array([[-0.5, 1.0], [0.0, -0.3]])  # rbar=0.5, b=0.5, m0=0.3


def logistic_phi_exact(t, rbar=0.5, b=0.5, m0=0.3):
    off = rbar * (np.exp(-m0 * t) - np.exp(-rbar * t)) / (b * (rbar - m0))
    return np.array([[np.exp(-rbar * t), off], [0.0, np.exp(-m0 * t)]])


class TestFundamentalMatrix:
    def test_scalar_known_solution(self):
        fund = fundamental_matrix(
            lambda t: np.array([[np.cos(t)]]), 2.0 * np.pi, 400
        )
        for t in [0.0, 1.234, np.pi, 5.0, 2.0 * np.pi]:
            assert fund.at(t)[0, 0] == pytest.approx(np.exp(np.sin(t)), rel=1e-9)

    def test_fourth_order_convergence(self):
        def err(steps):
            fund = fundamental_matrix(
                lambda t: np.array([[np.cos(t)]]), 2.0 * np.pi, steps
            )
            ts = np.linspace(0.1, 2.0 * np.pi - 0.1, 7)
            return max(
                abs(fund.at(t)[0, 0] - np.exp(np.sin(t))) for t in ts
            )

        assert err(100) / err(200) >= 12.0

    def test_closed_form_two_by_two(self):
        fund = fundamental_matrix(lambda t: LOGISTIC_C, 50.0, 2000)
        for t in [0.0, 3.7, 12.5, 50.0]:
            assert np.allclose(
                fund.at(t), logistic_phi_exact(t), rtol=1e-7, atol=1e-18
            )

    def test_closed_form_degenerate_rates(self):
        # equal decay rates: the off-diagonal picks up a t e^{-rt} factor
        C = np.array([[-0.5, 1.0], [0.0, -0.5]])
        fund = fundamental_matrix(lambda t: C, 10.0, 2000)
        for t in [0.5, 2.0, 7.3]:
            expected = np.array(
                [
                    [np.exp(-0.5 * t), t * np.exp(-0.5 * t)],
                    [0.0, np.exp(-0.5 * t)],
                ]
            )
            assert np.allclose(fund.at(t), expected, rtol=1e-8)

    def test_inverse_is_coherent(self):
        def cpath(t):
            w = 2.0 * np.pi * t / 5.0
            return np.array(
                [[-0.3 + 0.1 * np.sin(w), 0.2 * np.cos(w)], [0.1, -0.4]]
            )

        fund = fundamental_matrix(cpath, 5.0, 500)
        for j in range(0, 501, 50):
            gap = fund.phis[j] @ fund.psis[j] - np.eye(2)
            assert np.linalg.norm(gap) <= 1e-8
        # and through the interpolants
        for t in [0.33, 2.71, 4.99]:
            gap = fund.at(t) @ fund.inverse_at(t) - np.eye(2)
            assert np.linalg.norm(gap) <= 1e-8

    def test_autonomous_semigroup(self):
        fund = fundamental_matrix(lambda t: LOGISTIC_C, 10.0, 1000)
        lhs = fund.at(2.0)
        rhs = fund.at(1.3) @ fund.at(0.7)
        assert np.linalg.norm(lhs - rhs) <= 1e-6

    def test_input_validation(self):
        with pytest.raises(UsageError):
            fundamental_matrix(lambda t: LOGISTIC_C, 10.0, 50)
        with pytest.raises(UsageError):
            fundamental_matrix(lambda t: LOGISTIC_C, -1.0, 200)
        fund = fundamental_matrix(lambda t: LOGISTIC_C, 10.0, 200)
        with pytest.raises(UsageError):
            fund.at(-0.5)
        with pytest.raises(UsageError):
            fund.at(10.5)


class TestFindPeriodicOrbit:
    def test_forced_linear_orbit(self):
        orbit = find_periodic_orbit(forced_linear_model())
        for t in [0.0, 0.7, np.pi, 4.4]:
            assert orbit.at(t)[0] == pytest.approx(forced_orbit_exact(t), abs=1e-9)
        assert orbit.ode_defect() <= 1e-6

    def test_periodic_extension(self):
        orbit = find_periodic_orbit(forced_linear_model())
        t = 1.1
        assert orbit.at(t + 2.0 * np.pi)[0] == pytest.approx(
            orbit.at(t)[0], abs=1e-12
        )
        assert orbit.at(t - 2.0 * np.pi)[0] == pytest.approx(
            orbit.at(t)[0], abs=1e-12
        )

    def test_finite_difference_jacobian_fallback(self):
        orbit = find_periodic_orbit(forced_linear_model(jacobian=False))
        assert orbit.at(0.7)[0] == pytest.approx(forced_orbit_exact(0.7), abs=1e-8)

    def test_fixed_point_converges_immediately(self):
        model = PeriodicModel(
            dim=2,
            noise_dim=1,
            period=3.0,
            drift=lambda t, x: np.array(
                [x[0] * (0.5 - 0.5 * x[0]), 0.3 * (0.5 - x[1])]
            ),
            diffusion=lambda t, x: np.array([[0.0], [0.1]]),
        )
        orbit = find_periodic_orbit(model, x_guess=np.array([1.0, 0.5]))
        assert np.allclose(orbit.states, np.tile([1.0, 0.5], (orbit.grid.size, 1)))

    def test_requires_a_guess(self):
        model = forced_linear_model()
        object.__setattr__(model, "orbit_hint", None)
        with pytest.raises(UsageError):
            find_periodic_orbit(model)

    def test_degenerate_orbit_detected(self):
        # drift independent of x with nonzero period average: the return map
        # is a pure translation, so I - M is singular and no orbit exists
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=1.0,
            drift=lambda t, x: np.array([np.sin(2.0 * np.pi * t) ** 2]),
            diffusion=lambda t, x: np.array([[1.0]]),
            jacobian=lambda t, x: np.array([[0.0]]),
        )
        with pytest.raises(AssumptionViolationError):
            find_periodic_orbit(model, x_guess=np.array([0.0]))

    def test_divergence_detected(self):
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=1.0,
            drift=lambda t, x: np.array([0.1 + x[0] ** 2]),
            diffusion=lambda t, x: np.array([[1.0]]),
            jacobian=lambda t, x: np.array([[2.0 * x[0]]]),
        )
        with pytest.raises(ConvergenceError):
            find_periodic_orbit(model, x_guess=np.array([0.0]))

    def test_known_orbit_used_as_seed(self):
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=2.0 * np.pi,
            drift=lambda t, x: -x + np.sin(t),
            diffusion=lambda t, x: np.array([[0.1]]),
            jacobian=lambda t, x: np.array([[-1.0]]),
            known_orbit=lambda t: np.array([forced_orbit_exact(t)]),
        )
        orbit = find_periodic_orbit(model)
        assert orbit.at(2.2)[0] == pytest.approx(forced_orbit_exact(2.2), abs=1e-9)


class TestJacobianPath:
    def test_analytic_and_fd_agree(self):
        model = PeriodicModel(
            dim=2,
            noise_dim=1,
            period=3.0,
            drift=lambda t, x: np.array(
                [x[0] * (0.5 - 0.5 * x[0]) + 0.1 * x[1], 0.3 * (0.5 - x[1])]
            ),
            diffusion=lambda t, x: np.array([[0.0], [0.1]]),
            jacobian=lambda t, x: np.array(
                [[0.5 - x[0], 0.1], [0.0, -0.3]]
            ),
        )
        orbit = constant_orbit([0.8, 0.4], 3.0)
        analytic = jacobian_path(model, orbit)
        fd_model = PeriodicModel(
            dim=2,
            noise_dim=1,
            period=3.0,
            drift=model.drift,
            diffusion=model.diffusion,
        )
        numeric = jacobian_path(fd_model, orbit)
        for t in [0.0, 1.2, 2.9]:
            assert np.allclose(analytic(t), numeric(t), atol=1e-7)


class TestNoiseGram:
    def test_scalar_exact_integral(self):
        # Phi = I, so the accumulation is a plain integral of Gamma^2
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=1.0,
            drift=lambda t, x: np.zeros(1),
            diffusion=lambda t, x: np.array([[np.sin(2.0 * np.pi * t) + 1.1]]),
            jacobian=lambda t, x: np.zeros((1, 1)),
        )
        orbit = constant_orbit([1.0], 1.0)
        fund = fundamental_matrix(lambda t: np.zeros((1, 1)), 1.0, 2048)
        gram = noise_gram(model, orbit, fund)

        def exact(t):
            w = 2.0 * np.pi
            # int (sin(wt) + 1.1)^2 = 1.71 t - 2.2 cos(wt)/w - sin(2wt)/(4w)
            return (
                1.71 * t
                - 2.2 * (np.cos(w * t) - 1.0) / w
                - np.sin(2.0 * w * t) / (4.0 * w)
            )

        for t in [0.1, 0.37, 0.5, 0.93, 1.0]:
            assert gram.partial_at(t)[0, 0] == pytest.approx(exact(t), rel=1e-9)

    def test_quadrature_fourth_order(self):
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=1.0,
            drift=lambda t, x: np.zeros(1),
            diffusion=lambda t, x: np.array([[np.exp(np.sin(2.0 * np.pi * t))]]),
            jacobian=lambda t, x: np.zeros((1, 1)),
        )
        orbit = constant_orbit([1.0], 1.0)

        def value(steps):
            fund = fundamental_matrix(lambda t: np.zeros((1, 1)), 1.0, steps)
            # probe an odd prefix node so the seeded half panel is exercised
            return noise_gram(model, orbit, fund).partial_at(0.3171)[0, 0]

        v1, v2, v4 = value(128), value(256), value(4096)
        assert abs(v1 - v4) / abs(v2 - v4) >= 12.0

    def test_zero_noise(self):
        model = PeriodicModel(
            dim=2,
            noise_dim=2,
            period=2.0,
            drift=lambda t, x: np.zeros(2),
            diffusion=lambda t, x: np.zeros((2, 2)),
            jacobian=lambda t, x: np.zeros((2, 2)),
        )
        orbit = constant_orbit([1.0, 1.0], 2.0)
        fund = fundamental_matrix(lambda t: LOGISTIC_C, 2.0, 200)
        gram = noise_gram(model, orbit, fund)
        assert np.array_equal(gram.full, np.zeros((2, 2)))
        assert np.array_equal(gram.partial_at(1.3), np.zeros((2, 2)))

    def test_oscillating_damped_accumulation(self):
        # second diagonal of the Gram for the linearized logistic system
        # driven by a sinusoidal noise amplitude has a closed form
        sigma0, m0, theta = 0.1, 0.3, 50.0
        model = PeriodicModel(
            dim=2,
            noise_dim=2,
            period=theta,
            drift=lambda t, x: LOGISTIC_C @ x,
            diffusion=lambda t, x: np.array(
                [[0.0, 0.0], [0.0, sigma0 * np.sin(2.0 * np.pi * t / theta)]]
            ),
            jacobian=lambda t, x: LOGISTIC_C,
        )
        orbit = constant_orbit([1.0, 0.5], theta)
        fund = fundamental_matrix(lambda t: LOGISTIC_C, theta, 4000)
        gram = noise_gram(model, orbit, fund)
        expected = (
            sigma0**2
            * np.pi**2
            * (np.exp(2.0 * m0 * theta) - 1.0)
            / (m0 * (m0**2 * theta**2 + 4.0 * np.pi**2))
        )
        assert gram.partial_at(theta)[1, 1] == pytest.approx(expected, rel=1e-6)
        # the full one-period Gram is symmetric PSD
        w = np.linalg.eigvalsh(gram.full)
        assert np.array_equal(gram.full, gram.full.T)
        assert w[0] >= -1e-12 * max(w[-1], 1.0)

    def test_domain_checks(self):
        model = PeriodicModel(
            dim=1,
            noise_dim=1,
            period=1.0,
            drift=lambda t, x: np.zeros(1),
            diffusion=lambda t, x: np.array([[1.0]]),
            jacobian=lambda t, x: np.zeros((1, 1)),
        )
        orbit = constant_orbit([1.0], 1.0)
        fund = fundamental_matrix(lambda t: np.zeros((1, 1)), 1.0, 100)
        gram = noise_gram(model, orbit, fund)
        with pytest.raises(UsageError):
            gram.partial_at(1.7)


class TestModelValidation:
    def test_dimension_and_period_checks(self):
        with pytest.raises(UsageError):
            PeriodicModel(
                dim=0,
                noise_dim=1,
                period=1.0,
                drift=lambda t, x: x,
                diffusion=lambda t, x: x[:, None],
            )
        with pytest.raises(UsageError):
            PeriodicModel(
                dim=1,
                noise_dim=1,
                period=0.0,
                drift=lambda t, x: x,
                diffusion=lambda t, x: x[:, None],
            )
        with pytest.raises(UsageError):
            PeriodicModel(
                dim=2,
                noise_dim=1,
                period=1.0,
                drift=lambda t, x: x,
                diffusion=lambda t, x: x[:, None],
                orbit_hint=np.array([1.0]),
            )

    def test_kolmogorov_factory(self):
        model = PeriodicModel.kolmogorov(
            dim=1,
            noise_dim=1,
            period=1.0,
            growth_rate=lambda t, x: np.array([0.5 - 0.5 * x[0]]),
            diffusion_factor=lambda t, x: np.array([[0.2]]),
        )
        x = np.array([0.8])
        assert model.drift(0.0, x)[0] == pytest.approx(0.8 * (0.5 - 0.4))
        assert model.diffusion(0.0, x)[0, 0] == pytest.approx(0.16)
        assert model.growth_rate is not None
        assert model.diffusion_factor is not None

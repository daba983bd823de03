"""Tests for the log-normal approximation pipeline."""

import numpy as np
import pytest

from helpers import stein_residual

from spsd.errors import PositivityViolationError
from spsd.lyapunov import LyapunovProblem, series_oracle
from spsd.periodic import PeriodicModel
from spsd.plna import build_log_system, plna_approximate
from spsd.pnoa import autonomous_residual

RBAR, B = 0.5, 0.5


def scalar_logistic(epsilon, sigma=0.2, theta=1.0):
    """dx = x(rbar - b x) dt + sqrt(eps) sigma x dW, the factored way."""
    return PeriodicModel.kolmogorov(
        dim=1,
        noise_dim=1,
        period=theta,
        growth_rate=lambda t, x: np.array([RBAR - B * x[0]]),
        diffusion_factor=lambda t, x: np.array([[sigma]]),
        epsilon=epsilon,
        orbit_hint=np.array([RBAR / B]),
    )


def competitive_pair(epsilon=0.05, theta=2.0):
    """Two competing species, first growth rate periodically forced."""

    def rate(t, x):
        forcing = 0.1 * np.sin(2.0 * np.pi * t / theta)
        return np.array(
            [1.0 + forcing - x[0] - 0.3 * x[1], 0.8 - 0.2 * x[0] - x[1]]
        )

    return PeriodicModel.kolmogorov(
        dim=2,
        noise_dim=2,
        period=theta,
        growth_rate=rate,
        diffusion_factor=lambda t, x: np.array([[0.3, 0.0], [0.1, 0.2]]),
        epsilon=epsilon,
        orbit_hint=np.array([0.76, 0.64]),
    )


@pytest.fixture(scope="module")
def scalar_approx():
    return plna_approximate(scalar_logistic(0.1))


@pytest.fixture(scope="module")
def pair_approx():
    return plna_approximate(competitive_pair())


class TestBuildLogSystem:
    def test_log_drift_carries_ito_correction(self):
        system = build_log_system(scalar_logistic(0.1))
        for psi in (-0.2, 0.0, 0.3):
            got = system.model.drift(0.4, np.array([psi]))
            want = RBAR - B * np.exp(psi) - 0.5 * 0.1 * 0.04
            assert got[0] == pytest.approx(want, rel=1e-14)

    def test_scalar_fixed_point_and_linearization(self):
        system = build_log_system(scalar_logistic(0.1))
        # rbar - b e^psi - eps sigma^2/2 = 0 at the orbit
        assert np.exp(system.orbit.at(0.5))[0] == pytest.approx(0.996, rel=1e-10)
        assert system.dstar(0.0)[0, 0] == pytest.approx(-0.498, rel=1e-9)

    def test_loading_evaluated_on_positive_state(self):
        system = build_log_system(competitive_pair())
        lam = system.model.diffusion(0.0, np.array([0.1, -0.4]))
        assert np.array_equal(lam, np.array([[0.3, 0.0], [0.1, 0.2]]))

    def test_requires_factored_form(self):
        model = PeriodicModel(
            dim=2,
            noise_dim=2,
            period=10.0,
            drift=lambda t, x: np.array([x[0] * (x[1] - x[0]), 0.3 * (0.5 - x[1])]),
            diffusion=lambda t, x: np.diag([0.0, 0.1]),
            orbit_hint=np.array([0.5, 0.5]),
        )
        with pytest.raises(PositivityViolationError, match="factored"):
            build_log_system(model)

    def test_rejects_non_positive_hint(self):
        model = scalar_logistic(0.1)
        object.__setattr__(model, "orbit_hint", np.array([-1.0]))
        with pytest.raises(PositivityViolationError, match="positive"):
            build_log_system(model)

    def test_rejects_non_positive_guess(self):
        with pytest.raises(PositivityViolationError, match="positive"):
            build_log_system(scalar_logistic(0.1), x_guess=np.array([0.0]))

    def test_vanishing_noise_recovers_deterministic_orbit(self):
        system = build_log_system(scalar_logistic(1e-8))
        assert abs(system.orbit.at(0.3)[0] - np.log(RBAR / B)) <= 1e-9


class TestPlnaApproximate:
    def test_scalar_covariance_closed_form(self, scalar_approx):
        # eps sigma^2 / (2 (rbar - eps sigma^2 / 2)) at eps=0.1, sigma^2=0.04
        want = 0.004016064257028112
        assert scalar_approx.covariance.sigma0[0, 0] == pytest.approx(
            want, rel=1e-8
        )

    def test_family_and_median_path(self, scalar_approx):
        assert scalar_approx.family == "log_normal"
        assert scalar_approx.lin_model is not scalar_approx.model
        for t in (0.0, 0.37, 0.9):
            assert scalar_approx.mean_at(t)[0] == pytest.approx(
                np.log(0.996), abs=1e-10
            )

    def test_scalar_covariance_is_constant(self, scalar_approx):
        path = scalar_approx.covariance
        spread = max(abs(float(s[0, 0]) - path.sigma0[0, 0]) for s in path.values)
        assert spread <= 1e-9 * (1.0 + path.sigma0[0, 0])

    def test_autonomous_consistency(self, scalar_approx):
        residual = autonomous_residual(scalar_approx.lin_model, scalar_approx)
        assert residual <= 1e-6

    def test_zero_loading_degenerates(self):
        model = PeriodicModel.kolmogorov(
            dim=1,
            noise_dim=1,
            period=1.0,
            growth_rate=lambda t, x: np.array([RBAR - B * x[0]]),
            diffusion_factor=lambda t, x: np.zeros((1, 1)),
            epsilon=0.1,
            orbit_hint=np.array([1.0]),
        )
        approx = plna_approximate(model, grid=300)
        assert np.all(approx.covariance.values == 0.0)
        assert approx.certificate.verdict == "positive_semidefinite_only"

    def test_unfactored_model_is_rejected(self):
        model = PeriodicModel(
            dim=2,
            noise_dim=2,
            period=50.0,
            drift=lambda t, x: np.array(
                [x[0] * (x[1] - 0.5 * x[0]), 0.3 * (0.5 - x[1])]
            ),
            diffusion=lambda t, x: np.array(
                [[0.0, 0.0], [0.0, 0.1 * np.sin(2.0 * np.pi * t / 50.0)]]
            ),
            epsilon=0.01,
            orbit_hint=np.array([1.0, 0.5]),
        )
        with pytest.raises(PositivityViolationError):
            plna_approximate(model)

    def test_pair_discrete_equation_and_oracle(self, pair_approx):
        mono = pair_approx.fundamental.monodromy
        rhs = pair_approx.model.epsilon * pair_approx.gram.full
        sigma0 = pair_approx.covariance.sigma0
        assert stein_residual(mono, sigma0, rhs) <= 1e-9 * (
            1.0 + np.linalg.norm(sigma0)
        )
        prob = LyapunovProblem(
            mono, pair_approx.gram.full, scale=pair_approx.model.epsilon
        )
        assert sigma0 == pytest.approx(series_oracle(prob), rel=1e-8)

    def test_pair_periodicity_and_psd(self, pair_approx):
        path = pair_approx.covariance
        assert path.periodicity_defect <= 1e-7 * (1.0 + np.linalg.norm(path.sigma0))
        assert np.all(pair_approx.gram.values[0] == 0.0)
        for j in range(0, path.values.shape[0], 100):
            assert np.linalg.eigvalsh(pair_approx.gram.values[j])[0] >= -1e-12
            assert np.linalg.eigvalsh(path.values[j])[0] >= -1e-14
        assert pair_approx.certificate.verdict == "positive_definite"

    def test_median_consistency(self, scalar_approx, pair_approx):
        rng = np.random.default_rng(745912)
        psi = scalar_approx.mean_at(0.3)[0]
        std = np.sqrt(scalar_approx.covariance_at(0.3)[0, 0])
        samples = np.exp(rng.normal(psi, std, size=100_000))
        assert np.median(samples) == pytest.approx(np.exp(psi), rel=0.01)

        mean = pair_approx.mean_at(0.7)
        chol = np.linalg.cholesky(pair_approx.covariance_at(0.7))
        draws = mean + rng.standard_normal((100_000, 2)) @ chol.T
        medians = np.median(np.exp(draws), axis=0)
        assert medians == pytest.approx(np.exp(mean), rel=0.01)

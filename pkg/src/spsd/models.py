"""Built-in example systems and their closed forms.

The flagship is a logistic population whose growth rate follows a
periodically forced Ornstein-Uhlenbeck process: its orbit, fundamental
matrix, noise Gram integrals, and covariance all evaluate in closed form,
which makes it both a demonstration model and the reference oracle for the
numerical pipeline. A scalar logistic model with multiplicative noise plays
the same role for the log-normal family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .periodic import PeriodicModel

__all__ = [
    "EXAMPLE_CASES",
    "LogisticOuClosedForms",
    "LogisticOuParams",
    "builtin_model",
    "builtin_model_names",
    "logistic_ou_closed_forms",
    "logistic_ou_model",
    "scalar_logistic_model",
]

#: Rate gap below which the logistic-OU closed forms switch to (or demand)
#: the resonant branch.
DEGENERATE_RTOL = 1e-8


@dataclass(frozen=True)
class LogisticOuParams:
    """Parameters of the logistic population with OU growth rate.

    The growth rate reverts to `rbar` at speed `m0` and is driven by
    sigma0 sin(2 pi t / theta) scaled noise; `b` is the intraspecific
    competition strength. Defaults are the weak-noise short-period case.
    """

    rbar: float = 0.5
    b: float = 0.5
    m0: float = 0.3
    sigma0: float = 0.1
    epsilon: float = 0.01
    theta: float = 50.0

    def __post_init__(self):
        for label, value, lowest in (
            ("rbar", self.rbar, 0.0),
            ("b", self.b, 0.0),
            ("m0", self.m0, 0.0),
            ("epsilon", self.epsilon, 0.0),
            ("theta", self.theta, 0.0),
        ):
            if not value > lowest:
                raise UsageError(f"{label} must be positive, got {value}")
        if self.sigma0 < 0.0:
            raise UsageError(f"sigma0 must be nonnegative, got {self.sigma0}")


def logistic_ou_model(p: LogisticOuParams) -> PeriodicModel:
    """Logistic population with periodically forced OU growth rate.

    State (x, r), drift (x(r - bx), m0(rbar - r)). Only the growth rate is
    driven, additively, so the noise matrix has the single nonzero entry
    (2, 2) = sigma0 sin(2 pi t / theta); the system does not factor in the
    positive Kolmogorov form (r crosses zero), so no log transform applies.
    The deterministic orbit is the constant (rbar/b, rbar), registered as a
    known orbit.
    """
    rbar, b, m0 = p.rbar, p.b, p.m0
    sigma0, theta = p.sigma0, p.theta

    def drift(t, x):
        pop, rate = x[..., 0], x[..., 1]
        return np.stack([pop * (rate - b * pop), m0 * (rbar - rate)], axis=-1)

    def jacobian(t, x):
        return np.array([[x[1] - 2.0 * b * x[0], x[0]], [0.0, -m0]])

    def diffusion(t, x):
        return np.array(
            [[0.0, 0.0], [0.0, sigma0 * np.sin(2.0 * np.pi * t / theta)]]
        )

    equilibrium = np.array([rbar / b, rbar])
    return PeriodicModel(
        dim=2,
        noise_dim=2,
        period=theta,
        drift=drift,
        diffusion=diffusion,
        epsilon=p.epsilon,
        jacobian=jacobian,
        orbit_hint=equilibrium,
        known_orbit=lambda t: equilibrium.copy(),
        name="logistic-ou",
    )


def _b_single(mu: float, theta: float, t: float) -> float:
    """2 int_0^t e^{2 mu s} (1 - cos(4 pi s / theta)) ds in closed form."""
    w = 4.0 * math.pi / theta
    denom = mu * mu * theta * theta + 4.0 * math.pi**2
    osc = (
        mu * theta * theta * math.cos(w * t) + 2.0 * math.pi * theta * math.sin(w * t)
    ) / denom
    return math.exp(2.0 * mu * t) * (1.0 / mu - osc) - 4.0 * math.pi**2 / (mu * denom)


def _b_cross(s: float, theta: float, t: float) -> float:
    """2 int_0^t e^{s u} (1 - cos(4 pi u / theta)) du in closed form."""
    w = 4.0 * math.pi / theta
    denom = s * s * theta * theta + 16.0 * math.pi**2
    osc = (
        s * theta * theta * math.cos(w * t) + 4.0 * math.pi * theta * math.sin(w * t)
    ) / denom
    return math.exp(s * t) * (1.0 / s - osc) - 16.0 * math.pi**2 / (s * denom)


@dataclass(frozen=True, eq=False)
class LogisticOuClosedForms:
    """Closed-form fundamental matrix, noise Gram, and covariance path.

    The Gram and covariance expressions need distinct rates rbar != m0;
    when the rates collide only the fundamental matrix survives, in its
    resonant form, and the other evaluators raise instead of silently
    dividing by the vanishing gap.
    """

    params: LogisticOuParams

    @property
    def degenerate(self) -> bool:
        p = self.params
        return abs(p.rbar - p.m0) < DEGENERATE_RTOL * max(p.rbar, p.m0, 1.0)

    @property
    def cstar(self) -> np.ndarray:
        """Constant linearization of the drift at the equilibrium orbit."""
        p = self.params
        return np.array([[-p.rbar, p.rbar / p.b], [0.0, -p.m0]])

    def phi(self, t: float) -> np.ndarray:
        p = self.params
        er = math.exp(-p.rbar * t)
        em = math.exp(-p.m0 * t)
        if self.degenerate:
            off = p.rbar * t * er / p.b
        else:
            off = p.rbar * (em - er) / (p.b * (p.rbar - p.m0))
        return np.array([[er, off], [0.0, em]])

    def phi_inverse(self, t: float) -> np.ndarray:
        p = self.params
        er = math.exp(p.rbar * t)
        em = math.exp(p.m0 * t)
        if self.degenerate:
            off = -p.rbar * t * er / p.b
        else:
            off = p.rbar * (em - er) / (p.b * (p.rbar - p.m0))
        return np.array([[er, off], [0.0, em]])

    def _require_generic(self):
        if self.degenerate:
            raise UsageError(
                "rates rbar and m0 coincide: only the fundamental matrix has "
                "a closed form there (the resonant branch of phi); evaluate "
                "the Gram and covariance through the numerical pipeline"
            )

    def hbar(self, t: float) -> np.ndarray:
        """Accumulated noise Gram int_0^t (phi^-1 Gamma)(phi^-1 Gamma)^T ds."""
        self._require_generic()
        p = self.params
        gap = p.rbar - p.m0
        b_m = _b_single(p.m0, p.theta, t)
        b_r = _b_single(p.rbar, p.theta, t)
        b_rm = _b_cross(p.rbar + p.m0, p.theta, t)
        quarter = p.sigma0**2 / 4.0
        h11 = quarter * (p.rbar / (p.b * gap)) ** 2 * (b_m + b_r - 4.0 * b_rm)
        h12 = quarter * (p.rbar / (p.b * gap)) * (b_m - 2.0 * b_rm)
        h22 = quarter * b_m
        return np.array([[h11, h12], [h12, h22]])

    def covariance_zero(self) -> np.ndarray:
        """Fixed-point covariance at the start of the period."""
        self._require_generic()
        p = self.params
        rbar, b, m0 = p.rbar, p.b, p.m0
        eps, theta = p.epsilon, p.theta
        gap = rbar - m0
        pi2 = math.pi**2
        qm = m0 * m0 * theta * theta + 4.0 * pi2
        er = math.exp(-rbar * theta)
        em = math.exp(-m0 * theta)
        erm = math.exp(-(rbar + m0) * theta)
        diff = em - er
        h = self.hbar(theta)
        s22 = eps * p.sigma0**2 * pi2 / (m0 * qm)
        s12 = (eps / (1.0 - erm)) * (
            erm * h[0, 1]
            + rbar
            * p.sigma0**2
            * pi2
            * math.exp(m0 * theta)
            * diff
            / (b * m0 * gap * qm)
        )
        s11 = (eps / ((1.0 - math.exp(-2.0 * rbar * theta)) * (1.0 - erm))) * (
            math.exp(2.0 * m0 * theta)
            * (p.sigma0 * rbar * math.pi) ** 2
            * (1.0 + erm)
            * diff**2
            / (m0 * b**2 * gap**2 * qm)
            + er
            * (
                er * (1.0 - erm) * h[0, 0]
                + 2.0 * rbar * diff * h[0, 1] / (b * gap)
            )
        )
        return np.array([[s11, s12], [s12, s22]])

    def covariance(self, t: float) -> np.ndarray:
        """Covariance at time t in [0, theta]."""
        self._require_generic()
        p = self.params
        gap = p.rbar - p.m0
        start = self.covariance_zero()
        h = self.hbar(t)
        a11 = start[0, 0] + p.epsilon * h[0, 0]
        a12 = start[0, 1] + p.epsilon * h[0, 1]
        a22 = start[1, 1] + p.epsilon * h[1, 1]
        er = math.exp(-p.rbar * t)
        em = math.exp(-p.m0 * t)
        slope = p.rbar * (em - er) / (p.b * gap)
        c11 = er * er * a11 + 2.0 * er * slope * a12 + slope * slope * a22
        c12 = em * (er * a12 + slope * a22)
        c22 = em * em * a22
        return np.array([[c11, c12], [c12, c22]])


def logistic_ou_closed_forms(p: LogisticOuParams) -> LogisticOuClosedForms:
    """Closed-form evaluators for the logistic-OU model at parameters p."""
    return LogisticOuClosedForms(params=p)


def scalar_logistic_model(
    epsilon: float = 0.1,
    sigma: float = 0.2,
    rbar: float = 0.5,
    b: float = 0.5,
    theta: float = 1.0,
) -> PeriodicModel:
    """Scalar logistic growth with multiplicative noise, in factored form.

    dx = x(rbar - b x) dt + sqrt(eps) sigma x dW. The factored growth rate
    and loading make it the canonical demonstration of the log-normal
    family; its log-space covariance is eps sigma^2 / (2(rbar - eps
    sigma^2 / 2)) in closed form.
    """
    if not (rbar > 0.0 and b > 0.0 and theta > 0.0):
        raise UsageError("rbar, b, and theta must be positive")
    if sigma < 0.0:
        raise UsageError(f"sigma must be nonnegative, got {sigma}")
    point = np.array([rbar / b])
    return PeriodicModel.kolmogorov(
        dim=1,
        noise_dim=1,
        period=theta,
        growth_rate=lambda t, x: np.stack([rbar - b * x[..., 0]], axis=-1),
        diffusion_factor=lambda t, x: np.array([[sigma]]),
        epsilon=epsilon,
        jacobian=lambda t, x: np.array([[rbar - 2.0 * b * x[0]]]),
        orbit_hint=point,
        known_orbit=lambda t: point.copy(),
        name="scalar-logistic",
    )


#: The four published parameter sets of the logistic-OU example.
EXAMPLE_CASES = {
    "I": LogisticOuParams(epsilon=0.01, theta=50.0),
    "II": LogisticOuParams(epsilon=0.01, theta=100.0),
    "III": LogisticOuParams(epsilon=0.05, theta=100.0),
    "IV": LogisticOuParams(epsilon=0.1, theta=100.0),
}

_BUILTINS = {
    "logistic-ou-case1": lambda: logistic_ou_model(EXAMPLE_CASES["I"]),
    "logistic-ou-case2": lambda: logistic_ou_model(EXAMPLE_CASES["II"]),
    "logistic-ou-case3": lambda: logistic_ou_model(EXAMPLE_CASES["III"]),
    "logistic-ou-case4": lambda: logistic_ou_model(EXAMPLE_CASES["IV"]),
    "scalar-logistic": lambda: scalar_logistic_model(),
}


def builtin_model_names() -> list[str]:
    return sorted(_BUILTINS)


def builtin_model(name: str) -> PeriodicModel:
    """Instantiate a built-in model by registry name."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UsageError(
            f"unknown builtin model {name!r}; available: "
            + ", ".join(sorted(_BUILTINS))
        ) from None
    return factory()

"""Gaussian approximation of small-noise periodic solutions.

Near the deterministic periodic orbit the law of the state is asymptotically
normal: the mean follows the orbit and the covariance at time zero solves a
discrete Lyapunov fixed-point equation driven by the one-period noise Gram.
This module assembles that covariance, extends it over a full period, and
attaches a positive-definiteness certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolationError, UsageError
from .linalg import eigen_moduli_in_unit_disc
from .lyapunov import (
    LyapunovProblem,
    PdCertificate,
    pd_certificate,
    solve_discrete_lyapunov,
)
from .periodic import (
    FundamentalPath,
    NoiseGram,
    OrbitPath,
    PeriodicModel,
    _hermite,
    find_periodic_orbit,
    fundamental_matrix,
    jacobian_path,
    noise_gram,
)

__all__ = [
    "CovariancePath",
    "SpsdApproximation",
    "autonomous_residual",
    "covariance_at",
    "pnoa_approximate",
]


def _reduce_time(t: float, period: float) -> float:
    """Reduce t into [0, period], leaving values already inside untouched."""
    if 0.0 <= t <= period:
        return t
    return t - period * np.floor(t / period)


@dataclass(frozen=True, eq=False)
class CovariancePath:
    """Covariance of the approximating law on a uniform one-period grid.

    `values[j]` holds the covariance at node j and `derivs[j]` its exact
    time derivative C Sigma + Sigma C^T + eps Gamma Gamma^T, so `at` is a
    locally fourth-order Hermite evaluator. Times outside [0, period] are
    reduced periodically before evaluation.
    """

    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    sigma0: np.ndarray
    period: float

    def at(self, t: float) -> np.ndarray:
        tau = _reduce_time(t, self.period)
        s = _hermite(self.grid, self.values, self.derivs, tau)
        return 0.5 * (s + s.T)

    @property
    def periodicity_defect(self) -> float:
        """Frobenius mismatch between the covariance at the period endpoints."""
        return float(np.linalg.norm(self.values[-1] - self.values[0]))


@dataclass(frozen=True, eq=False)
class SpsdApproximation:
    """Distributional approximation of a periodic solution.

    `family` is "normal" (mean path = the deterministic orbit, covariance in
    state coordinates) or "log_normal" (mean path = the orbit of the
    log-transformed system, covariance in log coordinates). `model` is the
    original system either way, so a simulation harness can integrate it
    directly; `lin_model` is the system that was actually linearized (the
    model itself, or its log transform), and `orbit`, `fundamental`, and
    `gram` belong to it.
    """

    family: str
    model: PeriodicModel
    lin_model: PeriodicModel
    orbit: OrbitPath
    fundamental: FundamentalPath
    gram: NoiseGram
    covariance: CovariancePath
    certificate: PdCertificate

    def mean_at(self, t: float) -> np.ndarray:
        return self.orbit.at(t)

    def covariance_at(self, t: float) -> np.ndarray:
        return self.covariance.at(t)


def covariance_at(
    path: CovariancePath,
    fund: FundamentalPath,
    gram: NoiseGram,
    epsilon: float,
    t: float,
) -> np.ndarray:
    """Covariance at time t from the defining factors.

    Evaluates Phi(t) [Sigma0 + eps * partial(t)] Phi(t)^T after exact
    periodic reduction of t. The path's own `at` interpolates precomputed
    node values; this recomputes from the factors and serves as the
    reference the interpolant is checked against.
    """
    tau = _reduce_time(t, path.period)
    phi = fund.at(tau)
    s = phi @ (path.sigma0 + epsilon * gram.partial_at(tau)) @ phi.T
    return 0.5 * (s + s.T)


def _covariance_path(
    model: PeriodicModel,
    orbit: OrbitPath,
    cpath,
    fund: FundamentalPath,
    gram: NoiseGram,
    sigma0: np.ndarray,
) -> CovariancePath:
    eps = model.epsilon
    values = np.empty_like(gram.values)
    derivs = np.empty_like(gram.values)
    for j, t in enumerate(fund.grid):
        phi = fund.phis[j]
        s = phi @ (sigma0 + eps * gram.values[j]) @ phi.T
        s = 0.5 * (s + s.T)
        gam = np.asarray(model.diffusion(t, orbit.states[j]), dtype=float)
        c = cpath(t)
        d = c @ s + s @ c.T + eps * (gam @ gam.T)
        values[j] = s
        derivs[j] = 0.5 * (d + d.T)
    return CovariancePath(
        grid=fund.grid,
        values=values,
        derivs=derivs,
        sigma0=sigma0,
        period=model.period,
    )


def _assemble_approximation(
    family: str,
    model: PeriodicModel,
    lin_model: PeriodicModel,
    orbit: OrbitPath,
    grid: int,
) -> SpsdApproximation:
    """Shared pipeline tail: linearize, solve, certify, extend over a period.

    `lin_model` is the system actually linearized (the model itself for the
    normal family, its log transform for the log-normal one); `orbit` is its
    periodic orbit.
    """
    cpath = jacobian_path(lin_model, orbit)
    fund = fundamental_matrix(cpath, lin_model.period, steps=grid)
    report = eigen_moduli_in_unit_disc(fund.monodromy)
    if not report.is_member:
        moduli = ", ".join(f"{m:.6g}" for m in report.moduli)
        raise AssumptionViolationError(
            "monodromy eigenvalue moduli must lie strictly inside the open "
            f"unit disc and away from zero; got ({moduli})"
        )
    gram = noise_gram(lin_model, orbit, fund)
    problem = LyapunovProblem(fund.monodromy, gram.full, scale=lin_model.epsilon)
    solution = solve_discrete_lyapunov(problem)
    certificate = pd_certificate(
        problem, solution.sigma, solution.chains, solution.split
    )
    path = _covariance_path(lin_model, orbit, cpath, fund, gram, solution.sigma)
    return SpsdApproximation(
        family=family,
        model=model,
        lin_model=lin_model,
        orbit=orbit,
        fundamental=fund,
        gram=gram,
        covariance=path,
        certificate=certificate,
    )


def pnoa_approximate(
    model: PeriodicModel, orbit_guess=None, grid: int = 2000
) -> SpsdApproximation:
    """Normal approximation of the periodic solution of a small-noise system.

    Runs the full pipeline: orbit search, linearization along the orbit,
    fundamental matrix integration, noise Gram accumulation, discrete
    Lyapunov solve for the time-zero covariance, and the definiteness
    certificate. The linearized fluctuation has zero mean, so the mean path
    of the returned approximation is the deterministic orbit itself.

    Raises
    ------
    AssumptionViolationError
        If some monodromy eigenvalue modulus falls outside the open unit
        disc (or vanishes); the message reports all moduli. Orbit-search
        and Lyapunov failures propagate unchanged.
    """
    orbit = find_periodic_orbit(model, orbit_guess, steps=grid)
    return _assemble_approximation("normal", model, model, orbit, grid)


def autonomous_residual(model: PeriodicModel, approx: SpsdApproximation) -> float:
    """Worst defect of the continuous Lyapunov identity for autonomous drift.

    When the drift has no explicit time dependence the covariance path must
    satisfy C* Sigma(t) + Sigma(t) C*^T + eps Gamma(t) Gamma(t)^T = dSigma/dt
    with the constant linearization C*. Returns the largest Frobenius norm of
    the defect over the grid, differentiating Sigma by a fourth-order central
    difference under periodic wrap.

    Raises UsageError if sampling detects time dependence in the drift.
    """
    path = approx.covariance
    period = path.period
    for state_frac in (0.0, 0.31, 0.77):
        x = approx.orbit.at(state_frac * period)
        f0 = np.asarray(model.drift(0.0, x), dtype=float)
        for time_frac in (0.29, 0.64, 0.97):
            ft = np.asarray(model.drift(time_frac * period, x), dtype=float)
            if np.max(np.abs(ft - f0)) > 1e-9 * (1.0 + np.max(np.abs(f0))):
                raise UsageError(
                    "drift is time-dependent; the autonomous-consistency "
                    "residual is undefined"
                )
    cstar = jacobian_path(model, approx.orbit)(0.0)
    eps = model.epsilon
    vals = path.values
    m = vals.shape[0] - 1
    h = path.grid[1] - path.grid[0]
    worst = 0.0
    for j, t in enumerate(path.grid):
        dsig = (
            vals[(j - 2) % m]
            - 8.0 * vals[(j - 1) % m]
            + 8.0 * vals[(j + 1) % m]
            - vals[(j + 2) % m]
        ) / (12.0 * h)
        gam = np.asarray(model.diffusion(t, approx.orbit.at(t)), dtype=float)
        defect = cstar @ vals[j] + vals[j] @ cstar.T + eps * (gam @ gam.T) - dsig
        worst = max(worst, float(np.linalg.norm(defect)))
    return worst

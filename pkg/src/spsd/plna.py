"""Log-normal approximation for positive population-type systems.

Componentwise logarithms turn a Kolmogorov system with multiplicative noise
into an additive-noise system whose drift carries the Ito correction
-(eps/2) sum_j g_ij^2. Running the Gaussian pipeline there gives a
log-normal approximation in the original coordinates: the covariance lives
in log space and exp of the log-space orbit is the componentwise median of
the approximating law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import PositivityViolationError
from .periodic import OrbitPath, PeriodicModel, find_periodic_orbit, jacobian_path
from .pnoa import SpsdApproximation, _assemble_approximation

__all__ = ["LogSystem", "build_log_system", "plna_approximate"]


def _positive_log(vector, what: str) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if not np.all(v > 0.0):
        raise PositivityViolationError(
            f"{what} must be strictly positive for the log transform, got {v}"
        )
    return np.log(v)


@dataclass(frozen=True, eq=False)
class LogSystem:
    """Log-coordinate view of a positive Kolmogorov system.

    `model` wraps the transformed drift
    F_i(t, psi) = r_i(t, e^psi) - (eps/2) sum_j g_ij(t, e^psi)^2 and the
    noise loading Lambda(t, psi) = g(t, e^psi) as an ordinary periodic
    model in the log state psi = ln x; `orbit` is its periodic orbit and
    `dstar` the linearization of F along it. `original` keeps the
    untransformed system.
    """

    original: PeriodicModel
    model: PeriodicModel
    orbit: OrbitPath
    dstar: Callable[[float], np.ndarray]


def build_log_system(
    model: PeriodicModel, x_guess=None, grid: int = 2000
) -> LogSystem:
    """Transform a positive Kolmogorov model to log coordinates.

    Requires the factored form (`growth_rate`, `diffusion_factor`): the
    plain drift/diffusion callables say nothing about positive invariance,
    and the transform is meaningless off the positive orthant. The periodic
    orbit of the transformed drift is found immediately (seeded by `x_guess`
    or the model's own hints, mapped through ln), and the linearization is
    taken directly in log coordinates, which is the chain rule
    d/d(ln x_j) = x_j d/dx_j applied to the factored drift.

    Raises
    ------
    PositivityViolationError
        If the factorization is missing, or any available starting point
        has a non-positive component.
    """
    if model.growth_rate is None or model.diffusion_factor is None:
        raise PositivityViolationError(
            "log transform needs the positive factored form: the model must "
            "declare growth_rate and diffusion_factor"
        )
    eps = model.epsilon
    rate, loading = model.growth_rate, model.diffusion_factor

    def drift(t, psi):
        x = np.exp(psi)
        r = np.asarray(rate(t, x), dtype=float)
        g = np.asarray(loading(t, x), dtype=float)
        return r - 0.5 * eps * np.sum(g * g, axis=-1)

    def diffusion(t, psi):
        return np.asarray(loading(t, np.exp(psi)), dtype=float)

    hint = None
    if model.orbit_hint is not None:
        hint = _positive_log(model.orbit_hint, "orbit hint")
    known = None
    if model.known_orbit is not None:
        reference = model.known_orbit

        def known(t):
            return _positive_log(reference(t), "known orbit value")

    log_model = PeriodicModel(
        dim=model.dim,
        noise_dim=model.noise_dim,
        period=model.period,
        drift=drift,
        diffusion=diffusion,
        epsilon=eps,
        orbit_hint=hint,
        known_orbit=known,
        name=f"{model.name} (log)" if model.name else "",
    )
    guess = _positive_log(x_guess, "initial guess") if x_guess is not None else None
    orbit = find_periodic_orbit(log_model, guess, steps=grid)
    return LogSystem(
        original=model,
        model=log_model,
        orbit=orbit,
        dstar=jacobian_path(log_model, orbit),
    )


def plna_approximate(
    model: PeriodicModel, orbit_guess=None, grid: int = 2000
) -> SpsdApproximation:
    """Log-normal approximation of the periodic solution of a positive system.

    Builds the log system and runs the Gaussian pipeline on it. In the
    returned approximation the mean path is the log-space orbit, the
    covariance is the log-space covariance, and the componentwise median of
    the approximating law is exp of the mean path. The `model` field stays
    the original system so a simulation harness can integrate it directly
    and compare paths in log space.

    Errors match the normal-family pipeline, plus PositivityViolationError
    from the log transform itself.
    """
    system = build_log_system(model, x_guess=orbit_guess, grid=grid)
    return _assemble_approximation(
        "log_normal", model, system.model, system.orbit, grid
    )

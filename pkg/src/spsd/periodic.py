"""Periodic orbits, fundamental matrices, and noise Gram integrals.

The deterministic skeleton of the approximation pipeline: locate a periodic
orbit of the drift by shooting Newton iteration, linearize along it, integrate
the fundamental matrix pair (Phi, Phi^-1) with RK4, and accumulate the
noise Gram integral with a fourth-order cumulative quadrature. All paths are
stored on uniform grids with cubic Hermite evaluators whose node derivatives
are exact, so interpolated values stay at the integrator's accuracy order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    AssumptionViolationError,
    ConvergenceError,
    SingularMatrixError,
    UsageError,
)
from .linalg import solve_linear_system

__all__ = [
    "FundamentalPath",
    "NoiseGram",
    "OrbitPath",
    "PeriodicModel",
    "find_periodic_orbit",
    "fundamental_matrix",
    "jacobian_path",
    "noise_gram",
]


@dataclass(frozen=True, eq=False)
class PeriodicModel:
    """Time-periodic drift/diffusion system dx = f(t,x) dt + Gamma(t,x) dW.

    `drift` maps (t, x) to an n-vector and `diffusion` to an n x N matrix,
    both theta-periodic in t. Both must be transparent to leading batch
    axes: the Monte Carlo engine passes states of shape (batch, n) with
    components on the last axis, so closures should index x[..., i] (a
    state-independent diffusion may always return a plain (n, N) matrix).
    The driving noise enters scaled by sqrt(epsilon), so `diffusion` itself
    should not carry the small-noise factor. `jacobian` (d drift / dx) is optional; a central-difference
    fallback is used when absent. For systems whose components factor as
    x_i * (growth rate) and x_i * (noise loading), pass `growth_rate` and
    `diffusion_factor` as well (the log-transformed approximation family
    needs them). `orbit_hint` seeds the orbit search; `known_orbit`, when
    set, gives the orbit in closed form and is used as a starting point and
    cross-check, never as a substitute for the search.
    """

    dim: int
    noise_dim: int
    period: float
    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    epsilon: float = 1.0
    jacobian: Callable[[float, np.ndarray], np.ndarray] | None = None
    growth_rate: Callable[[float, np.ndarray], np.ndarray] | None = None
    diffusion_factor: Callable[[float, np.ndarray], np.ndarray] | None = None
    orbit_hint: np.ndarray | None = None
    known_orbit: Callable[[float], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1 or self.noise_dim < 1:
            raise UsageError("state and noise dimensions must be at least 1")
        if not self.period > 0.0:
            raise UsageError(f"period must be positive, got {self.period}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise UsageError(f"noise scale must be positive, got {self.epsilon}")
        if self.orbit_hint is not None:
            hint = np.asarray(self.orbit_hint, dtype=float)
            if hint.shape != (self.dim,):
                raise UsageError(
                    f"orbit hint must have shape ({self.dim},), got {hint.shape}"
                )
            object.__setattr__(self, "orbit_hint", hint)

    @classmethod
    def kolmogorov(
        cls,
        dim: int,
        noise_dim: int,
        period: float,
        growth_rate: Callable[[float, np.ndarray], np.ndarray],
        diffusion_factor: Callable[[float, np.ndarray], np.ndarray],
        **kwargs,
    ) -> "PeriodicModel":
        """Population-type system with drift x_i r_i(t,x), noise x_i g_ij(t,x)."""

        def drift(t, x):
            return x * np.asarray(growth_rate(t, x), dtype=float)

        def diffusion(t, x):
            factor = np.asarray(diffusion_factor(t, x), dtype=float)
            return x[..., :, None] * factor

        return cls(
            dim=dim,
            noise_dim=noise_dim,
            period=period,
            drift=drift,
            diffusion=diffusion,
            growth_rate=growth_rate,
            diffusion_factor=diffusion_factor,
            **kwargs,
        )


def _hermite(grid, values, derivs, t):
    """Cubic Hermite interpolation with exact node derivatives."""
    m = grid.size - 1
    h = grid[1] - grid[0]
    j = int(np.clip(np.floor((t - grid[0]) / h), 0, m - 1))
    s = (t - grid[j]) / h
    h00 = (1.0 + 2.0 * s) * (1.0 - s) ** 2
    h10 = s * (1.0 - s) ** 2
    h01 = s * s * (3.0 - 2.0 * s)
    h11 = s * s * (s - 1.0)
    return (
        h00 * values[j]
        + (h10 * h) * derivs[j]
        + h01 * values[j + 1]
        + (h11 * h) * derivs[j + 1]
    )


@dataclass(frozen=True, eq=False)
class OrbitPath:
    """Periodic orbit sampled on a uniform grid over one period.

    `derivatives` holds the drift evaluated at the nodes, making `at` a
    locally fourth-order interpolant. Evaluation reduces the time modulo the
    period, so any real t is valid.
    """

    grid: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    period: float
    drift: Callable[[float, np.ndarray], np.ndarray] = field(repr=False)

    def at(self, t: float) -> np.ndarray:
        tau = t - self.period * np.floor(t / self.period)
        return _hermite(self.grid, self.states, self.derivatives, tau)

    def ode_defect(self) -> float:
        """Worst interval-midpoint defect |p'(t) - f(t, p(t))| of the interpolant."""
        worst = 0.0
        h = self.grid[1] - self.grid[0]
        for j in range(self.grid.size - 1):
            tm = self.grid[j] + 0.5 * h
            # derivative of the Hermite cubic at s = 1/2
            dp = 1.5 * (self.states[j + 1] - self.states[j]) / h - 0.25 * (
                self.derivatives[j] + self.derivatives[j + 1]
            )
            worst = max(worst, float(np.max(np.abs(dp - self.drift(tm, self.at(tm))))))
        return worst


def _flow_with_variational(model: PeriodicModel, x0, steps: int, want_path=False):
    """RK4 integration of x' = f and M' = (df/dx) M over one period."""
    n = model.dim
    h = model.period / steps
    jac = model.jacobian
    if jac is None:
        jac = _fd_jacobian(model.drift, n)
    x = np.array(x0, dtype=float)
    M = np.eye(n)
    states = [x.copy()] if want_path else None
    derivs = [np.asarray(model.drift(0.0, x), dtype=float)] if want_path else None
    t = 0.0
    for _ in range(steps):
        k1 = np.asarray(model.drift(t, x), dtype=float)
        K1 = np.asarray(jac(t, x), dtype=float) @ M
        x2 = x + 0.5 * h * k1
        k2 = np.asarray(model.drift(t + 0.5 * h, x2), dtype=float)
        K2 = np.asarray(jac(t + 0.5 * h, x2), dtype=float) @ (M + 0.5 * h * K1)
        x3 = x + 0.5 * h * k2
        k3 = np.asarray(model.drift(t + 0.5 * h, x3), dtype=float)
        K3 = np.asarray(jac(t + 0.5 * h, x3), dtype=float) @ (M + 0.5 * h * K2)
        x4 = x + h * k3
        k4 = np.asarray(model.drift(t + h, x4), dtype=float)
        K4 = np.asarray(jac(t + h, x4), dtype=float) @ (M + h * K3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        M = M + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        t += h
        if want_path:
            states.append(x.copy())
            derivs.append(np.asarray(model.drift(t, x), dtype=float))
    if want_path:
        return x, M, np.array(states), np.array(derivs)
    return x, M


def _fd_jacobian(f, n):
    def jac(t, x):
        J = np.empty((n, n))
        for j in range(n):
            h = max(1e-6, 1e-7 * abs(x[j]))
            xp = np.array(x, dtype=float)
            xm = np.array(x, dtype=float)
            xp[j] += h
            xm[j] -= h
            fp = np.asarray(f(t, xp), dtype=float)
            fm = np.asarray(f(t, xm), dtype=float)
            J[:, j] = (fp - fm) / (2.0 * h)
        return J

    return jac


def _check_time_periodicity(model: PeriodicModel, x: np.ndarray) -> None:
    """Spot-check that drift and diffusion repeat after one declared period."""
    for frac in (0.137, 0.487, 0.829):
        t = frac * model.period
        for label, func in (("drift", model.drift), ("diffusion", model.diffusion)):
            a = np.asarray(func(t, x), dtype=float)
            b = np.asarray(func(t + model.period, x), dtype=float)
            if np.max(np.abs(b - a)) > 1e-9 * (1.0 + np.max(np.abs(a))):
                raise UsageError(
                    f"{label} is not periodic in time with the declared "
                    f"period {model.period}"
                )


def find_periodic_orbit(
    model: PeriodicModel,
    x_guess=None,
    steps: int = 2000,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> OrbitPath:
    """Locate a periodic orbit of the drift by shooting Newton iteration.

    Solves flow_theta(x0) = x0. Each iteration integrates the state jointly
    with its variational matrix and applies a Newton step on the return-map
    residual. Convergence requires the residual norm to drop below
    tol * (1 + |x0|) within `max_iter` iterations.

    Raises
    ------
    UsageError
        If no starting point is available (argument or model hint).
    AssumptionViolationError
        If I - M(theta) is singular (a degenerate orbit: some Floquet
        multiplier equals one).
    ConvergenceError
        If Newton iteration fails to converge.
    """
    if x_guess is None:
        if model.known_orbit is not None:
            x_guess = model.known_orbit(0.0)
        elif model.orbit_hint is not None:
            x_guess = model.orbit_hint
        else:
            raise UsageError("no initial guess: pass x_guess or set an orbit hint")
    x0 = np.array(x_guess, dtype=float)
    if x0.shape != (model.dim,):
        raise UsageError(f"guess must have shape ({model.dim},), got {x0.shape}")
    _check_time_periodicity(model, x0)

    for _ in range(max_iter):
        x_end, M = _flow_with_variational(model, x0, steps)
        if not (np.all(np.isfinite(x_end)) and np.all(np.isfinite(M))):
            raise ConvergenceError("orbit search diverged to non-finite state")
        residual = x_end - x0
        if np.linalg.norm(residual) <= tol * (1.0 + np.linalg.norm(x0)):
            _, _, states, derivs = _flow_with_variational(
                model, x0, steps, want_path=True
            )
            grid = np.linspace(0.0, model.period, steps + 1)
            return OrbitPath(
                grid=grid,
                states=states,
                derivatives=derivs,
                period=model.period,
                drift=model.drift,
            )
        try:
            delta = solve_linear_system(M - np.eye(model.dim), -residual)
        except SingularMatrixError as exc:
            raise AssumptionViolationError(
                "return map has a unit Floquet multiplier; the periodic "
                "orbit is degenerate"
            ) from exc
        x0 = x0 + delta
        if not np.all(np.isfinite(x0)):
            raise ConvergenceError("orbit search diverged to non-finite state")
    raise ConvergenceError(
        f"orbit search did not converge in {max_iter} Newton iterations"
    )


def jacobian_path(model: PeriodicModel, orbit: OrbitPath):
    """Drift Jacobian along the orbit as a callable of time.

    Uses the model's analytic Jacobian when present; otherwise central
    differences with per-component step max(1e-6, 1e-7 |x_j|).
    """
    jac = model.jacobian
    if jac is None:
        jac = _fd_jacobian(model.drift, model.dim)

    def cpath(t: float) -> np.ndarray:
        return np.asarray(jac(t, orbit.at(t)), dtype=float)

    return cpath


@dataclass(frozen=True, eq=False)
class FundamentalPath:
    """Fundamental matrix Phi and its inverse on a uniform grid.

    Both follow from a single RK4 co-integration of Phi' = C Phi and
    (Phi^-1)' = -Phi^-1 C, so the inverse never requires a matrix solve.
    Node derivatives are kept for Hermite evaluation.
    """

    grid: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    phi_derivs: np.ndarray
    psi_derivs: np.ndarray
    period: float

    def _check(self, t: float) -> float:
        if t < -1e-9 * self.period or t > self.period * (1.0 + 1e-9):
            raise UsageError(
                f"time {t} outside the fundamental interval [0, {self.period}]"
            )
        return min(max(t, 0.0), self.period)

    def at(self, t: float) -> np.ndarray:
        return _hermite(self.grid, self.phis, self.phi_derivs, self._check(t))

    def inverse_at(self, t: float) -> np.ndarray:
        return _hermite(self.grid, self.psis, self.psi_derivs, self._check(t))

    @property
    def monodromy(self) -> np.ndarray:
        return self.phis[-1]


def fundamental_matrix(cpath, period: float, steps: int = 2000) -> FundamentalPath:
    """Integrate the fundamental matrix pair of x' = C(t) x over one period.

    `cpath` maps t to the n x n coefficient matrix. At least 100 RK4 steps
    are required; accuracy is O(h^4) at the nodes and through the Hermite
    evaluators.
    """
    if steps < 100:
        raise UsageError(f"need at least 100 integration steps, got {steps}")
    if not period > 0.0:
        raise UsageError(f"period must be positive, got {period}")
    C0 = np.asarray(cpath(0.0), dtype=float)
    n = C0.shape[0]
    h = period / steps
    phi = np.eye(n)
    psi = np.eye(n)
    phis = [phi.copy()]
    psis = [psi.copy()]
    phi_d = [C0 @ phi]
    psi_d = [-psi @ C0]
    t = 0.0
    for _ in range(steps):
        Ca = np.asarray(cpath(t), dtype=float)
        Cm = np.asarray(cpath(t + 0.5 * h), dtype=float)
        Cb = np.asarray(cpath(t + h), dtype=float)
        k1 = Ca @ phi
        l1 = -psi @ Ca
        k2 = Cm @ (phi + 0.5 * h * k1)
        l2 = -(psi + 0.5 * h * l1) @ Cm
        k3 = Cm @ (phi + 0.5 * h * k2)
        l3 = -(psi + 0.5 * h * l2) @ Cm
        k4 = Cb @ (phi + h * k3)
        l4 = -(psi + h * l3) @ Cb
        phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        psi = psi + (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        t += h
        phis.append(phi.copy())
        psis.append(psi.copy())
        phi_d.append(Cb @ phi)
        psi_d.append(-psi @ Cb)
    return FundamentalPath(
        grid=np.linspace(0.0, period, steps + 1),
        phis=np.array(phis),
        psis=np.array(psis),
        phi_derivs=np.array(phi_d),
        psi_derivs=np.array(psi_d),
        period=period,
    )


@dataclass(frozen=True, eq=False)
class NoiseGram:
    """Cumulative noise Gram integral along the orbit.

    `values[j]` approximates int_0^{t_j} (Phi^-1 Gamma)(s) (Phi^-1 Gamma)(s)^T ds
    and `full` is Phi(theta) values[-1] Phi(theta)^T, the one-period noise
    Gram that drives the covariance recursion.
    """

    grid: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    full: np.ndarray
    period: float

    def partial_at(self, t: float) -> np.ndarray:
        if t < -1e-9 * self.period or t > self.period * (1.0 + 1e-9):
            raise UsageError(
                f"time {t} outside the accumulation interval [0, {self.period}]"
            )
        tau = min(max(t, 0.0), self.period)
        return _hermite(self.grid, self.values, self.derivs, tau)


def noise_gram(
    model: PeriodicModel, orbit: OrbitPath, fund: FundamentalPath
) -> NoiseGram:
    """Accumulate the noise Gram integral on the fundamental-matrix grid.

    The integrand (Phi^-1 Gamma)(Phi^-1 Gamma)^T is sampled at the grid
    nodes and integrated by a cumulative pairwise Simpson rule; the first
    interval uses the three-point open Newton-Cotes half panel, so every
    prefix value carries the same O(h^4) accuracy. A plain trapezoid prefix
    would cap the whole pipeline at O(h^2).
    """
    grid = fund.grid
    m = grid.size - 1
    if m < 2:
        raise UsageError("need at least two grid intervals for the quadrature")
    h = grid[1] - grid[0]
    n = model.dim

    f = np.empty((m + 1, n, n))
    for j, t in enumerate(grid):
        root = fund.psis[j] @ np.asarray(
            model.diffusion(t, orbit.at(t)), dtype=float
        )
        f[j] = root @ root.T

    vals = np.empty_like(f)
    vals[0] = 0.0
    if m >= 2:
        vals[1] = (h / 12.0) * (5.0 * f[0] + 8.0 * f[1] - f[2])
    for j in range(2, m + 1):
        vals[j] = vals[j - 2] + (h / 3.0) * (f[j - 2] + 4.0 * f[j - 1] + f[j])

    phi_T = fund.monodromy
    full = phi_T @ vals[-1] @ phi_T.T
    return NoiseGram(
        grid=grid,
        values=vals,
        derivs=f,
        full=0.5 * (full + full.T),
        period=model.period,
    )

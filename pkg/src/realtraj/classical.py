"""Classical stochastic machinery: Langevin sampling, grid-based
(stochastic) differential Chapman-Kolmogorov evolution, Bayesian
conditioning, and the Kalman-Bucy closed form used as the oracle for
continuous conditioning.

The grid stencils here (flux-form central differences with zero-flux
boundaries) are shared with the photoreceiver's voltage grid so that the
two solvers are identical scheme-for-scheme.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    CflViolation,
    ConfigError,
    JumpNotGridAligned,
    MassNotConserved,
    ZeroEvidence,
)

TOL_NORM = 1e-8
TOL_NEG = 1e-12


@dataclass(frozen=True)
class SdeModel:
    """dX = a(X) dt + sqrt(D) dW + e dN, with jump rate E[dN] = g(X) dt."""

    a: Callable[[np.ndarray], np.ndarray]
    D: float
    e: float = 0.0
    g: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.D < 0:
            raise ConfigError("diffusion constant D must be nonnegative")

    def drift(self, x):
        return np.asarray(self.a(x), dtype=float)

    def rate(self, x):
        if self.g is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        r = np.asarray(self.g(x), dtype=float)
        if np.any(r < 0):
            raise ConfigError("jump rate g(x) must be nonnegative on the grid")
        return r


@dataclass
class GridDistribution:
    """Probability density on a uniform grid of cell centers.

    Mass is the Riemann sum sum(p) * dx.  The normalized role requires
    mass 1 within 1e-8 and p >= -1e-12.
    """

    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.p.shape:
            raise ConfigError("x and p must be 1-d arrays of equal length")
        if self.x.size < 4:
            raise ConfigError("grid needs at least 4 points")
        steps = np.diff(self.x)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise ConfigError("grid must be uniform")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def mass(self) -> float:
        return float(np.sum(self.p) * self.dx)

    def mean(self) -> float:
        return float(np.sum(self.x * self.p) * self.dx / self.mass())

    def variance(self) -> float:
        m = self.mean()
        return float(np.sum((self.x - m) ** 2 * self.p) * self.dx / self.mass())

    def validate(self, normalized: bool = True) -> "GridDistribution":
        if np.min(self.p) < -TOL_NEG:
            raise ConfigError(f"negative density {np.min(self.p):.3e}")
        if normalized and abs(self.mass() - 1.0) > TOL_NORM:
            raise ConfigError(f"mass {self.mass()!r} not 1 within {TOL_NORM}")
        return self

    @staticmethod
    def from_range(x_min: float, x_max: float, K: int, p=None) -> "GridDistribution":
        x = np.linspace(x_min, x_max, K)
        if p is None:
            p = np.full(K, 1.0 / (x_max - x_min) * (K - 1) / K)
        return GridDistribution(x, np.asarray(p, dtype=float))

    @staticmethod
    def gaussian(x_min: float, x_max: float, K: int, mean: float, sigma: float
                 ) -> "GridDistribution":
        x = np.linspace(x_min, x_max, K)
        p = np.exp(-0.5 * ((x - mean) / sigma) ** 2)
        p /= np.sum(p) * (x[1] - x[0])
        return GridDistribution(x, p)

    @staticmethod
    def delta_like(x_min: float, x_max: float, K: int, center: float
                   ) -> "GridDistribution":
        """Delta initial condition, represented as a Gaussian of width
        3 dx (a true grid delta breaks the finite-difference stencil)."""
        dx = (x_max - x_min) / (K - 1)
        return GridDistribution.gaussian(x_min, x_max, K, center, 3.0 * dx)


def langevin_step(m: SdeModel, x: float, dW: float, dN, dt: float) -> float:
    """Explicit (Ito) Euler step of the SDE."""
    dN = int(dN)
    if dN not in (0, 1):
        raise ConfigError(f"dN must be 0 or 1, got {dN}")
    return float(x + m.drift(x) * dt + np.sqrt(m.D) * dW + m.e * dN)


# -- grid stencils ----------------------------------------------------------
#
# Flux form of central second-order differences.  Interior fluxes use
# midpoint averages, the two outermost fluxes are zero (reflecting
# boundaries), so the divergence telescopes and mass is conserved to
# machine precision.  `field` may carry trailing axes (operator-valued
# fields reuse the identical stencil).


def drift_divergence(field: np.ndarray, velocity: np.ndarray, dx: float) -> np.ndarray:
    """d/dx [velocity(x) * field] with zero-flux boundaries."""
    v = np.asarray(velocity, dtype=float)
    if v.ndim == 0:
        v = np.full(field.shape[0], float(v))
    v_half = 0.5 * (v[1:] + v[:-1])
    extra = field.ndim - 1
    v_half = v_half.reshape((-1,) + (1,) * extra)
    flux_interior = v_half * 0.5 * (field[1:] + field[:-1])
    flux = np.zeros((field.shape[0] + 1,) + field.shape[1:], dtype=field.dtype)
    flux[1:-1] = flux_interior
    return (flux[1:] - flux[:-1]) / dx


def diffusion_divergence(field: np.ndarray, dx: float) -> np.ndarray:
    """d2/dx2 [field] with zero-flux boundaries."""
    grad = np.zeros((field.shape[0] + 1,) + field.shape[1:], dtype=field.dtype)
    grad[1:-1] = (field[1:] - field[:-1]) / dx
    return (grad[1:] - grad[:-1]) / dx


def shift_cells(field: np.ndarray, m: int) -> np.ndarray:
    """field evaluated at (x - m*dx); cells shifted beyond the edge are 0."""
    out = np.zeros_like(field)
    if m == 0:
        out[...] = field
    elif m > 0:
        out[m:] = field[:-m]
    else:
        out[:m] = field[-m:]
    return out


def _jump_cells(e: float, dx: float) -> int:
    if e == 0.0:
        return 0
    m = e / dx
    m_int = int(round(m))
    if abs(m - m_int) > 1e-9 * max(1.0, abs(m)):
        raise JumpNotGridAligned(
            f"jump amplitude {e} is {m:.12g} cells; must be an integer"
        )
    return m_int


def _check_cfl(D: float, dt: float, dx: float) -> None:
    if D * dt / dx**2 > 0.5:
        raise CflViolation(
            f"D*dt/dx^2 = {D * dt / dx ** 2:.3g} > 0.5; reduce dt or refine grid"
        )


def _finish_step(x: np.ndarray, p_new: np.ndarray, mass_before: float
                 ) -> GridDistribution:
    # Clip dispersive undershoot; anything beyond round-off scale means the
    # scheme is being used outside its stability envelope.
    clipped = np.where(p_new < 0.0, p_new, 0.0)
    clipped_mass = -float(np.sum(clipped)) * float(x[1] - x[0])
    if clipped_mass > TOL_NORM:
        raise MassNotConserved(
            f"negative density of mass {clipped_mass:.3e} clipped; "
            "step too coarse for this profile"
        )
    p_new = np.maximum(p_new, 0.0)
    out = GridDistribution(x, p_new)
    if abs(out.mass() - mass_before) > TOL_NORM * max(1.0, mass_before):
        raise MassNotConserved(
            f"mass changed from {mass_before!r} to {out.mass()!r} in one step"
        )
    return out


def sdcke_step(m: SdeModel, P: GridDistribution, dW: float, dN, dt: float
               ) -> GridDistribution:
    """One explicit step of the stochastic differential Chapman-Kolmogorov
    equation, conditioned on known increments dW and dN:

    dP = -d/dx[a dt + sqrt(D) dW] P + (D/2) d2/dx2 P dt + dN [P(x-e) - P(x)]
    """
    dN = int(dN)
    dx = P.dx
    _check_cfl(m.D, dt, dx)
    mass0 = P.mass()
    p_new = (
        P.p
        - drift_divergence(P.p, m.drift(P.x), dx) * dt
        - np.sqrt(m.D) * dW * drift_divergence(P.p, 1.0, dx)
        + 0.5 * m.D * diffusion_divergence(P.p, dx) * dt
    )
    if dN:
        # The jump happened: the whole distribution translates by e.
        p_new = shift_cells(p_new, _jump_cells(m.e, dx))
    return _finish_step(P.x, p_new, mass0)


def dcke_step(m: SdeModel, P: GridDistribution, dt: float) -> GridDistribution:
    """One explicit step of the deterministic differential
    Chapman-Kolmogorov equation (the expectation of sdcke_step):

    dP/dt = -d/dx[a P] + (D/2) d2/dx2 P + g(x-e) P(x-e) - g(x) P
    """
    dx = P.dx
    _check_cfl(m.D, dt, dx)
    mass0 = P.mass()
    p_new = (
        P.p
        - drift_divergence(P.p, m.drift(P.x), dx) * dt
        + 0.5 * m.D * diffusion_divergence(P.p, dx) * dt
    )
    if m.g is not None:
        cells = _jump_cells(m.e, dx)
        gp = m.rate(P.x) * P.p
        p_new = p_new + dt * (shift_cells(gp, cells) - gp)
    return _finish_step(P.x, p_new, mass0)


def bayes_update(P: GridDistribution, likelihood) -> GridDistribution:
    """Pointwise Bayes rule P(x|r) = P(r|x) P(x) / P(r).

    `likelihood` is either a callable x -> density or an array on the
    grid.  An x-independent likelihood returns the prior unchanged.
    """
    if callable(likelihood):
        lk = np.asarray(likelihood(P.x), dtype=float)
    else:
        lk = np.asarray(likelihood, dtype=float)
    if lk.shape != P.x.shape:
        raise ConfigError("likelihood shape does not match grid")
    if np.any(lk < 0):
        raise ConfigError("likelihood must be nonnegative")
    post = P.p * lk
    evidence = float(np.sum(post) * P.dx)
    if evidence <= 1e-300:
        raise ZeroEvidence(f"P(r) = {evidence!r}")
    return GridDistribution(P.x, post * (P.mass() / evidence))


def kalman_bucy_oracle(k: float, D: float, obs_noise_power: float, t: float,
                       p0: float | None = None) -> tuple[float, float]:
    """Conditional (gain, variance) for a continuously observed OU process.

    Model: dX = -k X dt + sqrt(D) dW, observed as y dt = X dt + sqrt(beta) dV
    with beta = obs_noise_power.  The conditional variance obeys the
    Riccati equation dP/dt = D - 2 k P - P^2 / beta, solved in closed form
    with P(0) = p0 (default: the unconditioned stationary variance
    D / (2 k)).  Returns (Kalman gain P/beta, variance) at time t.
    """
    if k <= 0:
        raise ConfigError("drift rate k must be positive")
    if D < 0 or obs_noise_power <= 0 or t < 0:
        raise ConfigError("need D >= 0, obs_noise_power > 0, t >= 0")
    beta = obs_noise_power
    if p0 is None:
        p0 = D / (2.0 * k)
    alpha = np.sqrt(k * k + D / beta)
    # P(t) = beta (alpha tanh(alpha t + phi0) - k); artanh argument is in
    # (-1, 1) for any p0 >= 0 ... except p0 large enough that the solution
    # starts on the coth branch.
    u0 = (p0 / beta + k) / alpha
    if u0 < 1.0:
        phi0 = np.arctanh(u0)
        p_t = beta * (alpha * np.tanh(alpha * t + phi0) - k)
    elif u0 == 1.0:
        p_t = beta * (alpha - k)
    else:
        phi0 = np.arctanh(1.0 / u0)
        p_t = beta * (alpha / np.tanh(alpha * t + phi0) - k)
    return float(p_t / beta), float(p_t)


def kalman_bucy_stationary_variance(k: float, D: float, obs_noise_power: float
                                    ) -> float:
    """t -> infinity limit: the positive root of P^2/beta + 2kP - D = 0."""
    beta = obs_noise_power
    return float(beta * (np.sqrt(k * k + D / beta) - k))

"""Ideal (perfect-detector) quantum trajectories.

Two unravelings of the master equation: the jump trajectory driven by a
point process dN, and the diffusive homodyne trajectory driven by the
measured photocurrent.  Both are Ito-form explicit steps: increments are
evaluated at the left endpoint, the nonlinear normalized form is stepped
and the result is hard-renormalized and re-symmetrized.

These serve both as generators of hidden truth for the realistic
detectors and as the limit oracles they must reduce to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProbabilityOverflow
from .operators import (
    LindbladModel,
    apply_D,
    apply_G,
    apply_J,
    apply_H,
    herm_part,
    liouvillian,
)

#: Per-step jump probabilities above this raise ProbabilityOverflow.
MAX_JUMP_PROBABILITY = 0.5


@dataclass(frozen=True)
class StepSize:
    """A time step validated against the fastest expected jump rate.

    Construction fails unless dt * max_rate < cap (default 0.1), which
    keeps the one-jump-per-step Bernoulli sampling honest.
    """

    dt: float
    max_rate: float = 0.0
    cap: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.max_rate < 0:
            raise ConfigError("max_rate must be nonnegative")
        if self.dt * self.max_rate >= self.cap:
            raise ConfigError(
                f"dt={self.dt} too coarse: dt*rate={self.dt * self.max_rate:.3g} "
                f">= cap {self.cap}"
            )


def _check_flag(dN) -> int:
    dN = int(dN)
    if dN not in (0, 1):
        raise ConfigError(f"dN must be 0 or 1, got {dN}")
    return dN


def jump_expected_dN(
    model: LindbladModel, rho: np.ndarray, eta: float, dt: float
) -> float:
    """E[dN] = eta Tr[(c' + mu*)(c + mu) rho] dt for one step.

    Raises ProbabilityOverflow above 0.5: dt is then too coarse for the
    at-most-one-jump-per-step sampling.
    """
    b = model.c + model.mu * np.eye(model.dim)
    p = eta * float(np.real(np.trace(apply_J(b, rho)))) * dt
    if p > MAX_JUMP_PROBABILITY:
        raise ProbabilityOverflow(
            f"E[dN]={p:.3g} > {MAX_JUMP_PROBABILITY}; reduce dt"
        )
    return p


def jump_sme_step(
    model: LindbladModel, rho: np.ndarray, eta: float, dN, dt: float
) -> np.ndarray:
    """One Euler step of the jump SME at efficiency eta.

    d rho = -dt H[iH + eta c'c/2 + eta mu* c + eta |mu|^2 / 2] rho
            + dN G[sqrt(eta) (c + mu)] rho
            + dt (1 - eta) D[c] rho
    """
    dN = _check_flag(dN)
    n = model.dim
    eye = np.eye(n)
    c, mu = model.c, model.mu
    drive = (
        1j * model.H
        + 0.5 * eta * (c.conj().T @ c)
        + eta * np.conj(mu) * c
        + 0.5 * eta * abs(mu) ** 2 * eye
    )
    new = rho - dt * apply_H(drive, rho) + dt * (1.0 - eta) * apply_D(c, rho)
    if dN:
        new = new + apply_G(np.sqrt(eta) * (c + mu * eye), rho)
    new = herm_part(new)
    return new / np.real(np.trace(new))


def homodyne_mean_current(model: LindbladModel, rho: np.ndarray, eta: float) -> float:
    """E[J] = eta <c e^{-i phi} + c' e^{i phi}>."""
    return eta * float(np.real(np.trace(model.quadrature() @ rho)))


def homodyne_current(
    model: LindbladModel, rho: np.ndarray, eta: float, dW: float, dt: float
) -> float:
    """Sampled photocurrent: J dt = eta <x_phi> dt + sqrt(eta) dW."""
    return homodyne_mean_current(model, rho, eta) + np.sqrt(eta) * dW / dt


def homodyne_sme_step(
    model: LindbladModel, rho: np.ndarray, eta: float, J_record: float, dt: float
) -> np.ndarray:
    """One Euler step of the diffusive SME conditioned on the current J.

    d rho = dt L rho + (J - E[J]) dt H[e^{-i phi} c] rho
    """
    if not np.isfinite(J_record):
        raise ConfigError(f"nonfinite current sample {J_record!r}")
    innovation = (J_record - homodyne_mean_current(model, rho, eta)) * dt
    a = np.exp(-1j * model.lo_phase) * model.c
    new = rho + dt * liouvillian(model, rho) + innovation * apply_H(a, rho)
    new = herm_part(new)
    return new / np.real(np.trace(new))


def sample_jump_flag(p: float, rng: np.random.Generator) -> int:
    """Bernoulli draw for one step; at most one jump per dt."""
    return int(rng.random() < p)


def sample_wiener(rng: np.random.Generator, dt: float) -> float:
    """dW ~ Normal(0, dt)."""
    return float(rng.normal(0.0, np.sqrt(dt)))

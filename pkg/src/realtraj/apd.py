"""Realistic photon counting: an avalanche photodiode with efficiency,
dark counts, Poissonian response time and a fixed dead time.

The detector has three classical states: 0 (ready), 1 (avalanche
building, not yet detected), 2 (dead after a detected avalanche).  The
supersystem (rho0, rho1, rho2) holds the unnormalized system state
conditioned on each detector state; Tr[rho_i] is the detector-state
probability and rho0 + rho1 + rho2 the conditioned system state.

Conditioning on an observed avalanche collapses the supersystem onto
state 2; the dead time is handled by a single pending-reset timestamp,
valid because at all times either the detector is known dead or known
not-dead (never a mixture).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AvalancheDuringDeadTime,
    ConfigError,
    InvalidState,
    ProbabilityOverflow,
    VanishingJumpProbability,
)
from .ideal import MAX_JUMP_PROBABILITY
from .operators import (
    TOL_JUMP_TRACE,
    TOL_POS,
    LindbladModel,
    apply_J,
    herm_part,
    liouvillian,
    liouvillian_matrix,
)

#: Detector-state probabilities below this count as "empty" for the
#: exclusivity bookkeeping.
TOL_OCCUPATION = 1e-10
TOL_TOTAL_TRACE = 1e-8


@dataclass(frozen=True)
class ApdParams:
    """APD parameters: quantum efficiency, dark-count rate, response
    (avalanche-detection) rate and fixed dead time, in system-decay units.
    """

    eta: float
    gamma_dk: float
    gamma_r: float
    tau_dd: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if self.gamma_dk < 0:
            raise ConfigError("gamma_dk must be nonnegative")
        if self.gamma_r <= 0:
            raise ConfigError("gamma_r must be positive")
        if self.tau_dd < 0:
            raise ConfigError("tau_dd must be nonnegative")

    def dead_steps(self, dt: float) -> int:
        """tau_dd expressed in steps; must be an integer multiple of dt so
        the delayed reset lands on a step boundary."""
        m = self.tau_dd / dt
        m_int = int(round(m))
        if abs(m - m_int) > 1e-9 * max(1.0, m):
            raise ConfigError(
                f"tau_dd={self.tau_dd} is {m:.12g} steps of dt={dt}; "
                "must be an integer multiple"
            )
        return m_int


@dataclass(frozen=True)
class ApdSupersystem:
    """Unnormalized conditional states per detector state, plus the time at
    which a pending dead-time reset fires (None when the detector is live).
    """

    rho0: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    pending_reset: float | None = None

    @staticmethod
    def ready(rho: np.ndarray) -> "ApdSupersystem":
        """Detector in the ready state, system in rho."""
        z = np.zeros_like(np.asarray(rho, dtype=complex))
        return ApdSupersystem(np.asarray(rho, dtype=complex), z.copy(), z.copy())

    def traces(self) -> tuple[float, float, float]:
        return (
            float(np.real(np.trace(self.rho0))),
            float(np.real(np.trace(self.rho1))),
            float(np.real(np.trace(self.rho2))),
        )

    def conditioned_state(self) -> np.ndarray:
        """The normalized system state rho0 + rho1 + rho2."""
        return self.rho0 + self.rho1 + self.rho2

    def validate(self) -> "ApdSupersystem":
        t0, t1, t2 = self.traces()
        if abs(t0 + t1 + t2 - 1.0) > TOL_TOTAL_TRACE:
            raise InvalidState(f"total trace {t0 + t1 + t2!r} not 1")
        for name, rho in (("rho0", self.rho0), ("rho1", self.rho1), ("rho2", self.rho2)):
            evals = np.linalg.eigvalsh(herm_part(rho))
            if evals.min() < -TOL_POS:
                raise InvalidState(f"{name} has eigenvalue {evals.min():.3e}")
        # Either the detector is known dead or known not-dead.
        if t2 > TOL_OCCUPATION and t0 + t1 > TOL_OCCUPATION:
            raise InvalidState(f"exclusivity violated: P0+P1={t0 + t1}, P2={t2}")
        if (self.pending_reset is not None) != (t2 > TOL_OCCUPATION):
            raise InvalidState(
                f"pending_reset={self.pending_reset} inconsistent with P2={t2}"
            )
        return self


def validate_record(flags: np.ndarray, dead_steps: int) -> np.ndarray:
    """Check an avalanche record: binary flags, no two 1s closer than the
    dead time."""
    flags = np.asarray(flags)
    if not np.all((flags == 0) | (flags == 1)):
        raise ConfigError("record flags must be 0 or 1")
    hits = np.flatnonzero(flags)
    if hits.size > 1 and int(np.min(np.diff(hits))) < dead_steps:
        raise AvalancheDuringDeadTime(
            f"record has avalanches {int(np.min(np.diff(hits)))} steps apart "
            f"< dead time {dead_steps} steps"
        )
    return flags


def apd_expected_avalanche(p: ApdParams, s: ApdSupersystem, dt: float) -> float:
    """E[dN] = gamma_r Tr[rho1] dt."""
    prob = p.gamma_r * s.traces()[1] * dt
    if prob > MAX_JUMP_PROBABILITY:
        raise ProbabilityOverflow(f"E[dN]={prob:.3g} > {MAX_JUMP_PROBABILITY}")
    return prob


def _apply_reset_if_due(s: ApdSupersystem, t: float, dt: float) -> ApdSupersystem:
    # The delayed reset fires at the step whose start time reaches the
    # pending timestamp (half-step tolerance absorbs float accumulation).
    if s.pending_reset is not None and t >= s.pending_reset - 0.5 * dt:
        return ApdSupersystem(s.rho0 + s.rho2, s.rho1, np.zeros_like(s.rho2), None)
    return s


def _jump_trace(rho: np.ndarray) -> float:
    tr = float(np.real(np.trace(rho)))
    if tr <= TOL_JUMP_TRACE:
        raise VanishingJumpProbability(f"jump trace {tr:.3e} <= {TOL_JUMP_TRACE}")
    return tr


def apd_skse_step(
    model: LindbladModel,
    p: ApdParams,
    s: ApdSupersystem,
    dN,
    t: float,
    dt: float,
    form: str = "normalized",
) -> ApdSupersystem:
    """One step of the full three-state filter conditioned on dN.

    Between avalanches the components drift as

      d rho0 = dt (L - gamma_dk - eta J[c+mu] + gamma_r Tr[rho1]) rho0
      d rho1 = dt [(L - gamma_r + gamma_r Tr[rho1]) rho1
                   + (eta J[c+mu] + gamma_dk) rho0]
      d rho2 = dt L rho2

    and the total trace is renormalized.  On dN=1 the supersystem
    collapses onto state 2 (rho2 <- rho1/Tr[rho1], rho0 = rho1 = 0,
    dropping the O(dt) drift remnant so the dead/not-dead exclusivity is
    exact) and a reset is scheduled at t + tau_dd.  A pending reset fires
    before anything else in its step.

    form="linear" drops the nonlinear keep-alive terms
    gamma_r Tr[rho1] rho_i (the unnormalized cross-check form); the
    per-step rescale then does all the normalizing.
    """
    if form not in ("normalized", "linear"):
        raise ConfigError(f"unknown form {form!r}")
    dN = int(dN)
    s = _apply_reset_if_due(s, t, dt)

    if dN:
        if s.pending_reset is not None:
            raise AvalancheDuringDeadTime(f"avalanche at t={t} during dead time")
        tr1 = _jump_trace(s.rho1)
        rho2 = herm_part(s.rho1) / tr1
        z = np.zeros_like(rho2)
        return ApdSupersystem(z, z.copy(), rho2, t + p.tau_dd)

    b = model.c + model.mu * np.eye(model.dim)
    j0 = p.eta * apply_J(b, s.rho0)
    tr1 = float(np.real(np.trace(s.rho1)))
    keep = p.gamma_r * tr1 if form == "normalized" else 0.0
    new0 = s.rho0 + dt * (
        liouvillian(model, s.rho0) - p.gamma_dk * s.rho0 - j0 + keep * s.rho0
    )
    new1 = s.rho1 + dt * (
        liouvillian(model, s.rho1)
        - p.gamma_r * s.rho1
        + keep * s.rho1
        + j0
        + p.gamma_dk * s.rho0
    )
    new2 = s.rho2 + dt * liouvillian(model, s.rho2)
    new0, new1, new2 = herm_part(new0), herm_part(new1), herm_part(new2)
    total = float(np.real(np.trace(new0) + np.trace(new1) + np.trace(new2)))
    return ApdSupersystem(new0 / total, new1 / total, new2 / total, s.pending_reset)


def apd_adiabatic_rho1(
    model: LindbladModel, p: ApdParams, rho0: np.ndarray
) -> np.ndarray:
    """Slaved value of rho1 when gamma_r dominates the system rates:
    rho1 = (eta J[c+mu] + gamma_dk) rho0 / gamma_r.

    Warns (does not fail) when gamma_r is less than 10x the spectral
    radius of the Liouvillian, where slaving is dubious.
    """
    radius = float(np.max(np.abs(np.linalg.eigvals(liouvillian_matrix(model)))))
    if p.gamma_r < 10.0 * radius:
        warnings.warn(
            f"gamma_r={p.gamma_r} < 10x Liouvillian spectral radius {radius:.3g}; "
            "adiabatic elimination of state 1 is inaccurate",
            stacklevel=2,
        )
    b = model.c + model.mu * np.eye(model.dim)
    return (p.eta * apply_J(b, rho0) + p.gamma_dk * rho0) / p.gamma_r


def no_state1_expected_avalanche(
    model: LindbladModel, p: ApdParams, s: ApdSupersystem, dt: float
) -> float:
    """E[dN] = dt Tr[(eta J[c+mu] + gamma_dk) rho0] in the fast-response
    limit."""
    b = model.c + model.mu * np.eye(model.dim)
    kappa = p.eta * apply_J(b, s.rho0) + p.gamma_dk * s.rho0
    prob = float(np.real(np.trace(kappa))) * dt
    if prob > MAX_JUMP_PROBABILITY:
        raise ProbabilityOverflow(f"E[dN]={prob:.3g} > {MAX_JUMP_PROBABILITY}")
    return prob


def apd_step_no_state1(
    model: LindbladModel,
    p: ApdParams,
    s: ApdSupersystem,
    dN,
    t: float,
    dt: float,
) -> ApdSupersystem:
    """Fast-response limit (gamma_r -> infinity): the detector jumps
    straight from ready to dead.  State-1 component must be empty.
    """
    dN = int(dN)
    if s.traces()[1] > TOL_OCCUPATION:
        raise InvalidState("no-state-1 stepper requires an empty rho1 component")
    s = _apply_reset_if_due(s, t, dt)
    b = model.c + model.mu * np.eye(model.dim)

    if dN:
        if s.pending_reset is not None:
            raise AvalancheDuringDeadTime(f"avalanche at t={t} during dead time")
        kappa = p.eta * apply_J(b, s.rho0) + p.gamma_dk * s.rho0
        tr = _jump_trace(kappa)
        z = np.zeros_like(s.rho0)
        return ApdSupersystem(z, z.copy(), herm_part(kappa) / tr, t + p.tau_dd)

    j0 = p.eta * apply_J(b, s.rho0)
    rate = float(np.real(np.trace(j0))) + p.gamma_dk * float(np.real(np.trace(s.rho0)))
    new0 = s.rho0 + dt * (
        liouvillian(model, s.rho0) - p.gamma_dk * s.rho0 - j0 + rate * s.rho0
    )
    new2 = s.rho2 + dt * liouvillian(model, s.rho2)
    new0, new2 = herm_part(new0), herm_part(new2)
    total = float(np.real(np.trace(new0) + np.trace(new2)))
    return ApdSupersystem(
        new0 / total, np.zeros_like(new0), new2 / total, s.pending_reset
    )


def apd_step_no_deadtime(
    model: LindbladModel,
    p: ApdParams,
    s: ApdSupersystem,
    dN,
    dt: float,
) -> ApdSupersystem:
    """Zero dead time: state 2 is removed and an avalanche returns the
    detector directly to ready (rho0 <- rho1/Tr[rho1], rho1 <- 0).
    """
    if p.tau_dd != 0.0:
        raise ConfigError("no-dead-time stepper requires tau_dd = 0")
    dN = int(dN)
    if s.traces()[2] > TOL_OCCUPATION or s.pending_reset is not None:
        raise InvalidState("no-dead-time stepper requires an empty rho2 component")

    if dN:
        tr1 = _jump_trace(s.rho1)
        z = np.zeros_like(s.rho1)
        return ApdSupersystem(herm_part(s.rho1) / tr1, z, z.copy(), None)

    b = model.c + model.mu * np.eye(model.dim)
    j0 = p.eta * apply_J(b, s.rho0)
    tr1 = float(np.real(np.trace(s.rho1)))
    keep = p.gamma_r * tr1
    new0 = s.rho0 + dt * (
        liouvillian(model, s.rho0) - p.gamma_dk * s.rho0 - j0 + keep * s.rho0
    )
    new1 = s.rho1 + dt * (
        liouvillian(model, s.rho1)
        - p.gamma_r * s.rho1
        + keep * s.rho1
        + j0
        + p.gamma_dk * s.rho0
    )
    new0, new1 = herm_part(new0), herm_part(new1)
    total = float(np.real(np.trace(new0) + np.trace(new1)))
    return ApdSupersystem(new0 / total, new1 / total, np.zeros_like(new0), None)


def ideal_limit_expected_avalanche(
    model: LindbladModel, p: ApdParams, rho0: np.ndarray, dt: float
) -> float:
    """E[dN] for the single-component limit, identical in form to the
    fast-response expression."""
    b = model.c + model.mu * np.eye(model.dim)
    kappa = p.eta * apply_J(b, rho0) + p.gamma_dk * rho0
    prob = float(np.real(np.trace(kappa))) * dt
    if prob > MAX_JUMP_PROBABILITY:
        raise ProbabilityOverflow(f"E[dN]={prob:.3g} > {MAX_JUMP_PROBABILITY}")
    return prob


def apd_step_ideal_limit(
    model: LindbladModel,
    p: ApdParams,
    rho0: np.ndarray,
    dN,
    dt: float,
) -> np.ndarray:
    """Fast response and zero dead time: a single-component equation

      d rho = dt (L - gamma_dk - eta J[c+mu] + r) rho
              + dN ((eta J[c+mu] + gamma_dk) rho / r - rho),
      r = Tr[(eta J[c+mu] + gamma_dk) rho].

    With gamma_dk = 0 this is step-for-step the ideal jump SME, so the
    drift terms are retained on jump steps exactly as there.
    """
    dN = int(dN)
    b = model.c + model.mu * np.eye(model.dim)
    j0 = p.eta * apply_J(b, rho0)
    kappa = j0 + p.gamma_dk * rho0
    rate = float(np.real(np.trace(kappa)))
    new = rho0 + dt * (
        liouvillian(model, rho0) - p.gamma_dk * rho0 - j0 + rate * rho0
    )
    if dN:
        tr = _jump_trace(kappa)
        new = new + kappa / tr - rho0
    new = herm_part(new)
    return new / np.real(np.trace(new))

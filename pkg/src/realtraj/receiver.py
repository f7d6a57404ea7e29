"""Realistic homodyne detection with a photoreceiver.

The detector state is the (dimensionless) voltage v across the feedback
RC stage; the supersystem is an operator-valued density rho(v) on a
uniform voltage grid.  Conditioning on the measured output voltage, which
is the filtered signal plus Johnson noise, enters through the innovation
dW_J = sqrt(gamma) dt (V_obs - <v>).

Everything runs in dimensionless units: voltage in sqrt(C / 4 kB T),
time in system-decay units, so the device is fully described by the
filter rate gamma = 1/RC and the noise power ratio N.  A units helper
converts physical receiver parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants, signal

from .classical import (
    GridDistribution,
    drift_divergence,
    diffusion_divergence,
)
from .errors import (
    CflViolation,
    ConfigError,
    GridMassLeak,
    InvalidState,
    NonfiniteInnovation,
    NoRealSolution,
)
from .ideal import homodyne_current, homodyne_sme_step
from .operators import LindbladModel, herm_part

TOL_TOTAL_WEIGHT = 1e-8
TOL_NEG_WEIGHT = 1e-12
BOUNDARY_WEIGHT_LIMIT = 1e-6
#: Fraction of cells on each side counted as "boundary" for the mass guard.
BOUNDARY_FRACTION = 0.025


@dataclass(frozen=True)
class ReceiverParams:
    """eta: photodiode efficiency; gamma = 1/RC filter rate; noise_power:
    Johnson-to-vacuum power ratio N; phi: local-oscillator phase."""

    eta: float
    gamma: float
    noise_power: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must be in [0, 1], got {self.eta}")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if self.noise_power <= 0:
            raise ConfigError("noise_power must be positive")


def effective_bandwidth(gamma: float, noise_power: float) -> float:
    """B = gamma sqrt((1 - N) / N): the frequency where the filtered vacuum
    signal falls to the Johnson noise floor.  Only defined for N < 1."""
    if gamma <= 0 or noise_power <= 0:
        raise ConfigError("need gamma > 0 and noise_power > 0")
    if noise_power >= 1.0:
        raise NoRealSolution(
            f"noise power {noise_power} >= 1: the vacuum signal never rises "
            "above the noise floor"
        )
    return gamma * np.sqrt((1.0 - noise_power) / noise_power)


def filter_transfer(gamma: float, omega: float) -> complex:
    """One-pole low-pass response -1 / (1 + i omega / gamma), in units of
    the DC transimpedance gain."""
    if gamma <= 0:
        raise ConfigError("gamma must be positive")
    return -1.0 / (1.0 + 1j * omega / gamma)


def noise_only_efficiency(eta: float, noise_power: float) -> float:
    """Unfiltered noise addition reduces the efficiency to eta / (1 + N)."""
    if noise_power < 0:
        raise ConfigError("noise_power must be nonnegative")
    return eta / (1.0 + noise_power)


def physical_receiver_params(
    resistance: float,
    capacitance: float,
    temperature: float,
    lo_power: float,
    omega0: float,
    eta: float,
) -> dict:
    """Convert physical receiver parameters (SI units) to the dimensionless
    engine parameters: gamma = 1/RC, N = 4 kB T hbar w0 / (eta R P e^2),
    and the effective bandwidth B (in rad/s)."""
    if min(resistance, capacitance, temperature, lo_power, omega0) <= 0:
        raise ConfigError("physical parameters must be positive")
    if not 0.0 < eta <= 1.0:
        raise ConfigError("eta must be in (0, 1]")
    gamma = 1.0 / (resistance * capacitance)
    n_power = (4.0 * constants.k * temperature * constants.hbar * omega0) / (
        eta * resistance * lo_power * constants.e**2
    )
    return {
        "gamma": gamma,
        "noise_power": n_power,
        "bandwidth": effective_bandwidth(gamma, n_power),
    }


@dataclass(frozen=True)
class ReceiverSupersystem:
    """Operator-valued weight density rho_k = rho(v_k) on a uniform grid."""

    v: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        rho = np.asarray(self.rho, dtype=complex)
        if v.ndim != 1 or rho.ndim != 3 or rho.shape[0] != v.size:
            raise ConfigError("need v of shape (K,) and rho of shape (K, n, n)")
        if rho.shape[1] != rho.shape[2]:
            raise ConfigError("cell operators must be square")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "rho", rho)

    @property
    def dv(self) -> float:
        return float(self.v[1] - self.v[0])

    @property
    def dim(self) -> int:
        return self.rho.shape[1]

    def weights(self) -> np.ndarray:
        return np.real(np.einsum("kii->k", self.rho))

    def mass(self) -> float:
        return float(np.sum(self.weights()) * self.dv)

    def mean_voltage(self) -> float:
        """<v> = integral dv Tr[rho(v)] v (trapezoidal moment)."""
        w = self.weights()
        return float(np.trapezoid(w * self.v, dx=self.dv)
                     / np.trapezoid(w, dx=self.dv))

    def marginal_state(self) -> np.ndarray:
        """rho_V = integral rho(v) dv, renormalized to trace 1."""
        m = np.trapezoid(self.rho, dx=self.dv, axis=0)
        m = herm_part(m)
        return m / np.real(np.trace(m))

    def boundary_weight_fraction(self) -> float:
        w = np.abs(self.weights())
        edge = max(1, int(round(BOUNDARY_FRACTION * w.size)))
        return float((w[:edge].sum() + w[-edge:].sum()) / w.sum())

    def validate(self) -> "ReceiverSupersystem":
        if abs(self.mass() - 1.0) > TOL_TOTAL_WEIGHT:
            raise InvalidState(f"total weight {self.mass()!r} not 1")
        w = self.weights()
        if w.min() < -TOL_NEG_WEIGHT:
            raise InvalidState(f"negative cell weight {w.min():.3e}")
        asym = np.max(np.abs(self.rho - np.conj(np.swapaxes(self.rho, 1, 2))))
        if asym > 1e-10:
            raise InvalidState(f"cell operators not Hermitian: {asym:.3e}")
        if self.boundary_weight_fraction() > BOUNDARY_WEIGHT_LIMIT:
            raise GridMassLeak(
                f"boundary weight fraction {self.boundary_weight_fraction():.3e} "
                f"> {BOUNDARY_WEIGHT_LIMIT}; enlarge the grid"
            )
        return self


def default_grid(noise_power: float, K: int = 256) -> np.ndarray:
    """Symmetric grid spanning six stationary standard deviations of the
    decoupled voltage distribution (variance 1/(2N))."""
    if K < 8:
        raise ConfigError("grid needs at least 8 points")
    v_max = 6.0 * np.sqrt(1.0 / (2.0 * noise_power))
    return np.linspace(-v_max, v_max, K)


def default_dt(p: ReceiverParams, v: np.ndarray) -> float:
    """min(1e-3, 0.4 dv^2 N / gamma) from the explicit-scheme CFL guard."""
    dv = float(v[1] - v[0])
    return min(1e-3, 0.4 * dv**2 * p.noise_power / p.gamma)


def product_state(rho: np.ndarray, dist: GridDistribution) -> ReceiverSupersystem:
    """Factorized supersystem rho (x) P(v)."""
    rho = np.asarray(rho, dtype=complex)
    grid = dist.p[:, None, None] * rho[None, :, :]
    return ReceiverSupersystem(dist.x, grid)


def vacuum_product_state(
    rho: np.ndarray, noise_power: float, K: int = 256
) -> ReceiverSupersystem:
    """System state rho with the voltage in its decoupled stationary
    Gaussian, variance 1/(2N)."""
    v = default_grid(noise_power, K)
    sigma = np.sqrt(1.0 / (2.0 * noise_power))
    dist = GridDistribution.gaussian(v[0], v[-1], K, 0.0, sigma)
    return product_state(rho, dist)


def _check_receiver_cfl(p: ReceiverParams, dv: float, dt: float) -> None:
    ratio = (p.gamma / (2.0 * p.noise_power)) * dt / dv**2
    if ratio > 0.5:
        raise CflViolation(
            f"(gamma/2N) dt/dv^2 = {ratio:.3g} > 0.5; reduce dt or refine grid"
        )


def receiver_skse_step(
    model: LindbladModel,
    p: ReceiverParams,
    s: ReceiverSupersystem,
    V_obs: float,
    dt: float,
    innovation: str = "exact",
) -> ReceiverSupersystem:
    """One step of the voltage-grid filter conditioned on the measured
    dimensionless output voltage V_obs.

    Three stages (operator splitting):

    1. deterministic drift: dt [L + (gamma/2N) d2/dv2 + gamma d/dv v] rho(v)
       + dt sqrt(gamma eta / N) d/dv [e^{-i phi} c rho(v) + h.c.],
       flux-form central differences, zero-flux boundaries;
    2. multiplicative innovation update.  innovation="exact" applies the
       Gaussian Bayes factor exp(-gamma dt (v - V_obs)^2 / 2), whose O(dt)
       expansion is the Ito term sqrt(gamma) dW_J (v - <v>) rho(v) and
       which keeps every cell weight nonnegative; innovation="linear"
       applies that Ito term literally (positivity then holds only for
       small enough dt);
    3. renormalize total weight and re-symmetrize each cell.
    """
    if innovation not in ("exact", "linear"):
        raise ConfigError(f"unknown innovation form {innovation!r}")
    if not np.isfinite(V_obs):
        raise NonfiniteInnovation(f"observed voltage {V_obs!r}")
    dv = s.dv
    _check_receiver_cfl(p, dv, dt)
    v = s.v
    rho = s.rho
    vm = s.mean_voltage()

    # Stage 1: deterministic terms.
    H, c = model.H, model.c
    cdc = c.conj().T @ c
    lrho = (
        -1j * (np.einsum("ij,kjl->kil", H, rho) - np.einsum("kij,jl->kil", rho, H))
        + np.einsum("ij,kjl,ml->kim", c, rho, c.conj())
        - 0.5 * (np.einsum("ij,kjl->kil", cdc, rho)
                 + np.einsum("kij,jl->kil", rho, cdc))
    )
    e_phi = np.exp(-1j * p.phi)
    xrho = e_phi * np.einsum("ij,kjl->kil", c, rho) + np.conj(e_phi) * np.einsum(
        "kij,lj->kil", rho, c.conj()
    )
    new = (
        rho
        + dt * lrho
        + dt * drift_divergence(rho, p.gamma * v, dv)
        + dt * (p.gamma / (2.0 * p.noise_power)) * diffusion_divergence(rho, dv)
        + dt * np.sqrt(p.gamma * p.eta / p.noise_power)
        * drift_divergence(xrho, 1.0, dv)
    )

    # Stage 2: innovation update.
    if innovation == "exact":
        mult = np.exp(-0.5 * p.gamma * dt * (v - V_obs) ** 2)
    else:
        dwj = np.sqrt(p.gamma) * dt * (V_obs - vm)
        mult = 1.0 + np.sqrt(p.gamma) * dwj * (v - vm)
    new = mult[:, None, None] * new

    # Stage 3: renormalize and re-symmetrize.
    new = 0.5 * (new + np.conj(np.swapaxes(new, 1, 2)))
    total = float(np.sum(np.real(np.einsum("kii->k", new))) * dv)
    if not np.isfinite(total) or total <= 0:
        raise NonfiniteInnovation(f"total weight {total!r} after update")
    out = ReceiverSupersystem(v, new / total)
    if out.boundary_weight_fraction() > BOUNDARY_WEIGHT_LIMIT:
        raise GridMassLeak(
            f"boundary weight fraction {out.boundary_weight_fraction():.3e} "
            f"> {BOUNDARY_WEIGHT_LIMIT}"
        )
    return out


def innovation_increment(
    p: ReceiverParams, s: ReceiverSupersystem, V_obs: float, dt: float
) -> float:
    """dW_J = sqrt(gamma) dt (V_obs - <v>): white under a correct filter."""
    return float(np.sqrt(p.gamma) * dt * (V_obs - s.mean_voltage()))


# -- generate mode -----------------------------------------------------------
#
# Hidden truth: the ideal diffusive trajectory at efficiency eta driven by
# xi, plus the voltage Langevin dv = -gamma v dt - sqrt(gamma eta / N) <x> dt
# - sqrt(gamma / N) dW (the dimensionless RC equation driven by the
# photocurrent).  The record is V = v + Johnson sample.


def hidden_truth_step(
    model: LindbladModel,
    p: ReceiverParams,
    rho: np.ndarray,
    v_true: float,
    dW: float,
    dt: float,
) -> tuple[np.ndarray, float]:
    """Advance the hidden (ideal-trajectory, true-voltage) pair one step."""
    J = homodyne_current(model, rho, p.eta, dW, dt)
    rho_new = homodyne_sme_step(model, rho, p.eta, J, dt)
    x_mean = float(np.real(np.trace(model.quadrature() @ rho)))
    v_new = (
        v_true
        - dt * (p.gamma * v_true + np.sqrt(p.gamma * p.eta / p.noise_power) * x_mean)
        - np.sqrt(p.gamma / p.noise_power) * dW
    )
    return rho_new, v_new


def observe_voltage(p: ReceiverParams, v_true: float, dW_johnson: float,
                    dt: float) -> float:
    """V = v + dW_J / (sqrt(gamma) dt): filtered signal plus Johnson noise."""
    return v_true + dW_johnson / (np.sqrt(p.gamma) * dt)


def simulate_vacuum_record(
    p: ReceiverParams, n_steps: int, dt: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Generate-mode output for vacuum input (system decoupled, c = 0).

    The true voltage is the OU recursion v' = (1 - gamma dt) v
    - sqrt(gamma/N) dW; the record adds the Johnson term.  Returns
    (v_true, V_obs), each of length n_steps.  Identical draws produce the
    same path as the step-by-step generate loop.
    """
    if p.gamma * dt >= 1.0:
        raise CflViolation(f"gamma dt = {p.gamma * dt:.3g} >= 1: unstable recursion")
    dW = rng.normal(0.0, np.sqrt(dt), size=n_steps)
    xi_j = rng.normal(0.0, np.sqrt(dt), size=n_steps)
    drive = -np.sqrt(p.gamma / p.noise_power) * dW
    v = np.empty(n_steps)
    v[0] = 0.0
    if n_steps > 1:
        v[1:] = signal.lfilter([1.0], [1.0, -(1.0 - p.gamma * dt)], drive[:-1])
    V_obs = v + xi_j / (np.sqrt(p.gamma) * dt)
    return v, V_obs


def spectrum_crossing_frequency(
    V_obs: np.ndarray, dt: float, nperseg: int = 8192, smooth: int = 31
) -> float:
    """Angular frequency at which the periodogram of the output record
    falls to twice the high-frequency (Johnson) floor, i.e. where the
    filtered vacuum signal power equals the noise power."""
    f, psd = signal.welch(V_obs, fs=1.0 / dt, nperseg=nperseg)
    if smooth > 1:
        kernel = np.ones(smooth) / smooth
        psd = np.convolve(psd, kernel, mode="same")
    omega = 2.0 * np.pi * f
    floor = float(np.median(psd[int(0.8 * psd.size):]))
    target = 2.0 * floor
    below = np.flatnonzero(psd[1:] <= target) + 1
    if below.size == 0:
        raise NoRealSolution("spectrum never reaches the noise floor")
    i = int(below[0])
    if i == 0:
        return float(omega[0])
    # log-linear interpolation between the bracketing bins
    w0, w1 = omega[i - 1], omega[i]
    p0, p1 = np.log(psd[i - 1]), np.log(psd[i])
    frac = (np.log(target) - p0) / (p1 - p0)
    return float(w0 + frac * (w1 - w0))

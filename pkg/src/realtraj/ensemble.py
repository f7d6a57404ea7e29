"""Seeded, reproducible trajectory ensembles.

Noise streams are derived counter-style: stream i of a master seed is
Philox keyed by SeedSequence(master_seed, spawn_key=(i,)), so trajectory
i's noise never depends on how many other trajectories ran or in what
order.  The batched runners consume exactly those per-trajectory streams
and reduce in fixed index order, which makes parallel and serial
execution bit-identical.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .apd import ApdParams, ApdSupersystem
from .errors import (
    GridMassLeak,
    NonfiniteInnovation,
    ProbabilityOverflow,
    VanishingJumpProbability,
)
from .ideal import MAX_JUMP_PROBABILITY
from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z, LindbladModel, liouvillian
from .realbasis import (
    from_real_many,
    hermitian_basis,
    superop_real,
    to_real,
    to_real_many,
)
from .receiver import ReceiverParams, ReceiverSupersystem

DEFAULT_CHUNK = 256


def seed_stream(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Independent noise stream for one trajectory of one master seed."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trajectory_index),))
    return np.random.Generator(np.random.Philox(ss))


def bin_times(n_steps: int, dt: float, bin_stride: int) -> np.ndarray:
    if n_steps % bin_stride != 0:
        raise ValueError("bin_stride must divide n_steps")
    return np.arange(n_steps // bin_stride + 1) * (bin_stride * dt)


def _herm_many(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + np.conj(np.swapaxes(rho, -1, -2)))


def _traces(rho: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("...ii->...", rho))


class _BinStats:
    """Fixed-order accumulation of per-bin ensemble statistics."""

    def __init__(self, n_bins: int, dim: int):
        self.sum_rho = np.zeros((n_bins, dim, dim), dtype=complex)
        self.sum_purity = np.zeros(n_bins)
        self.sumsq_purity = np.zeros(n_bins)
        self.dim = dim
        if dim == 2:
            self.sum_bloch = np.zeros((n_bins, 3))
            self.sumsq_bloch = np.zeros((n_bins, 3))
        else:
            self.sum_bloch = None
            self.sumsq_bloch = None
        self.count = 0

    def add(self, b: int, states: np.ndarray) -> None:
        """states: (M, n, n) normalized conditioned states at bin b."""
        self.sum_rho[b] += states.sum(axis=0)
        pur = np.real(np.einsum("kij,kji->k", states, states))
        self.sum_purity[b] += pur.sum()
        self.sumsq_purity[b] += (pur**2).sum()
        if self.dim == 2:
            for i, pauli in enumerate((SIGMA_X, SIGMA_Y, SIGMA_Z)):
                comp = np.real(np.einsum("ij,kji->k", pauli, states))
                self.sum_bloch[b, i] += comp.sum()
                self.sumsq_bloch[b, i] += (comp**2).sum()

    def finalize(self, M: int) -> dict:
        out = {
            "mean_rho": self.sum_rho / M,
            "purity_mean": self.sum_purity / M,
            "purity_se": _standard_error(self.sum_purity, self.sumsq_purity, M),
        }
        if self.dim == 2:
            out["bloch_mean"] = self.sum_bloch / M
            out["bloch_se"] = _standard_error(self.sum_bloch, self.sumsq_bloch, M)
        return out


def _standard_error(s: np.ndarray, sq: np.ndarray, M: int) -> np.ndarray:
    if M < 2:
        return np.zeros_like(s)
    var = np.maximum(sq / M - (s / M) ** 2, 0.0) * M / (M - 1)
    return np.sqrt(var / M)


# -- ideal-detector ensembles ------------------------------------------------


def _jump_step_batched(model, rho, eta, jump_mask, dt):
    n = model.dim
    eye = np.eye(n)
    c, mu = model.c, model.mu
    drive = (
        1j * model.H
        + 0.5 * eta * (c.conj().T @ c)
        + eta * np.conj(mu) * c
        + 0.5 * eta * abs(mu) ** 2 * eye
    )
    hterm = np.einsum("ij,kjl->kil", drive, rho) + np.einsum(
        "kij,lj->kil", rho, drive.conj()
    )
    hterm -= _traces(hterm)[:, None, None] * rho
    dterm = (
        np.einsum("ij,kjl,ml->kim", c, rho, c.conj())
        - 0.5 * np.einsum("ij,kjl->kil", c.conj().T @ c, rho)
        - 0.5 * np.einsum("kij,jl->kil", rho, c.conj().T @ c)
    )
    new = rho - dt * hterm + dt * (1.0 - eta) * dterm
    if np.any(jump_mask):
        b = np.sqrt(eta) * (c + mu * eye)
        jrho = np.einsum("ij,kjl,ml->kim", b, rho, b.conj())
        tr = _traces(jrho)
        if np.any(tr[jump_mask] <= 1e-14):
            raise VanishingJumpProbability("sampled a jump with vanishing trace")
        safe = np.where(tr > 1e-14, tr, 1.0)
        new = np.where(
            jump_mask[:, None, None], new + jrho / safe[:, None, None] - rho, new
        )
    new = _herm_many(new)
    return new / _traces(new)[:, None, None]


def run_jump_ensemble(
    model: LindbladModel,
    rho0: np.ndarray,
    eta: float,
    dt: float,
    n_steps: int,
    M: int,
    master_seed: int,
    bin_stride: int,
    chunk: int = DEFAULT_CHUNK,
) -> dict:
    """Sampled jump-SME ensemble; returns per-bin statistics of the
    conditioned state."""
    n = model.dim
    n_bins = n_steps // bin_stride + 1
    stats = _BinStats(n_bins, n)
    b_op = model.c + model.mu * np.eye(n)
    for start in range(0, M, chunk):
        mc = min(chunk, M - start)
        uni = np.empty((mc, n_steps))
        for i in range(mc):
            uni[i] = seed_stream(master_seed, start + i).random(n_steps)
        rho = np.broadcast_to(rho0, (mc, n, n)).copy().astype(complex)
        for s in range(n_steps):
            if s % bin_stride == 0:
                stats.add(s // bin_stride, rho)
            jrho = np.einsum("ij,kjl,ml->kim", b_op, rho, b_op.conj())
            p = eta * _traces(jrho) * dt
            if np.any(p > MAX_JUMP_PROBABILITY):
                raise ProbabilityOverflow(f"max E[dN]={p.max():.3g}")
            rho = _jump_step_batched(model, rho, eta, uni[:, s] < p, dt)
        stats.add(n_bins - 1, rho)
        stats.count += mc
    out = stats.finalize(M)
    out["times"] = bin_times(n_steps, dt, bin_stride)
    return out


def run_homodyne_ensemble(
    model: LindbladModel,
    rho0: np.ndarray,
    eta: float,
    dt: float,
    n_steps: int,
    M: int,
    master_seed: int,
    bin_stride: int,
    chunk: int = DEFAULT_CHUNK,
) -> dict:
    """Sampled diffusive-SME ensemble (self-consistent generate mode)."""
    n = model.dim
    n_bins = n_steps // bin_stride + 1
    stats = _BinStats(n_bins, n)
    x_op = model.quadrature()
    a_op = np.exp(-1j * model.lo_phase) * model.c
    sq_dt = np.sqrt(dt)
    for start in range(0, M, chunk):
        mc = min(chunk, M - start)
        dw = np.empty((mc, n_steps))
        for i in range(mc):
            dw[i] = seed_stream(master_seed, start + i).normal(0.0, sq_dt, n_steps)
        rho = np.broadcast_to(rho0, (mc, n, n)).copy().astype(complex)
        for s in range(n_steps):
            if s % bin_stride == 0:
                stats.add(s // bin_stride, rho)
            lrho = _liouville_batched(model, rho)
            hterm = np.einsum("ij,kjl->kil", a_op, rho) + np.einsum(
                "kij,lj->kil", rho, a_op.conj()
            )
            hterm -= _traces(hterm)[:, None, None] * rho
            innov = np.sqrt(eta) * dw[:, s]
            new = rho + dt * lrho + innov[:, None, None] * hterm
            new = _herm_many(new)
            rho = new / _traces(new)[:, None, None]
        stats.add(n_bins - 1, rho)
        stats.count += mc
    out = stats.finalize(M)
    out["times"] = bin_times(n_steps, dt, bin_stride)
    return out


# -- APD ensemble -------------------------------------------------------------

_NO_RESET = np.iinfo(np.int64).max


def run_apd_ensemble(
    model: LindbladModel,
    params: ApdParams,
    rho0: np.ndarray,
    dt: float,
    n_steps: int,
    M: int,
    master_seed: int,
    bin_stride: int,
    chunk: int = DEFAULT_CHUNK,
) -> dict:
    """Sampled full-APD ensemble.  Mirrors apd_skse_step trajectory for
    trajectory; also returns avalanche statistics (total count, minimum
    gap in steps) for the dead-time exclusion check."""
    n = model.dim
    n_bins = n_steps // bin_stride + 1
    stats = _BinStats(n_bins, n)
    dead = params.dead_steps(dt)
    b_op = model.c + model.mu * np.eye(n)
    min_gap = None
    total_avalanches = 0
    for start in range(0, M, chunk):
        mc = min(chunk, M - start)
        uni = np.empty((mc, n_steps))
        for i in range(mc):
            uni[i] = seed_stream(master_seed, start + i).random(n_steps)
        r0 = np.broadcast_to(rho0, (mc, n, n)).copy().astype(complex)
        r1 = np.zeros_like(r0)
        r2 = np.zeros_like(r0)
        pending = np.full(mc, _NO_RESET, dtype=np.int64)
        last_hit = np.full(mc, -_NO_RESET, dtype=np.int64)
        for s in range(n_steps):
            if s % bin_stride == 0:
                stats.add(s // bin_stride, r0 + r1 + r2)
            # pending reset fires before anything else in its step
            due = pending <= s
            if np.any(due):
                r0 = np.where(due[:, None, None], r0 + r2, r0)
                r2 = np.where(due[:, None, None], 0.0, r2)
                pending = np.where(due, _NO_RESET, pending)
            tr1 = _traces(r1)
            p = params.gamma_r * tr1 * dt
            if np.any(p > MAX_JUMP_PROBABILITY):
                raise ProbabilityOverflow(f"max E[dN]={p.max():.3g}")
            hit = uni[:, s] < p
            # no-avalanche drift (normalized nonlinear form)
            j0 = params.eta * np.einsum("ij,kjl,ml->kim", b_op, r0, b_op.conj())
            keep = (params.gamma_r * tr1)[:, None, None]
            l0 = _liouville_batched(model, r0)
            l1 = _liouville_batched(model, r1)
            l2 = _liouville_batched(model, r2)
            n0 = r0 + dt * (l0 - params.gamma_dk * r0 - j0 + keep * r0)
            n1 = r1 + dt * (
                l1 - params.gamma_r * r1 + keep * r1 + j0 + params.gamma_dk * r0
            )
            n2 = r2 + dt * l2
            n0, n1, n2 = _herm_many(n0), _herm_many(n1), _herm_many(n2)
            tot = (_traces(n0) + _traces(n1) + _traces(n2))[:, None, None]
            n0, n1, n2 = n0 / tot, n1 / tot, n2 / tot
            if np.any(hit):
                safe = np.where(tr1 > 1e-14, tr1, 1.0)[:, None, None]
                jumped = _herm_many(r1) / safe
                hit3 = hit[:, None, None]
                n0 = np.where(hit3, 0.0, n0)
                n1 = np.where(hit3, 0.0, n1)
                n2 = np.where(hit3, jumped, n2)
                pending = np.where(hit, s + dead, pending)
                gaps = (s - last_hit)[hit & (last_hit >= 0)]
                if gaps.size:
                    g = int(gaps.min())
                    min_gap = g if min_gap is None else min(min_gap, g)
                last_hit = np.where(hit, s, last_hit)
                total_avalanches += int(hit.sum())
            r0, r1, r2 = n0, n1, n2
        stats.add(n_bins - 1, r0 + r1 + r2)
        stats.count += mc
    out = stats.finalize(M)
    out["times"] = bin_times(n_steps, dt, bin_stride)
    out["avalanche_count"] = total_avalanches
    out["min_gap_steps"] = min_gap
    out["dead_steps"] = dead
    return out


def _liouville_batched(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    H, c = model.H, model.c
    cdc = c.conj().T @ c
    return (
        -1j * (np.einsum("ij,kjl->kil", H, rho) - np.einsum("kij,jl->kil", rho, H))
        + np.einsum("ij,kjl,ml->kim", c, rho, c.conj())
        - 0.5 * np.einsum("ij,kjl->kil", cdc, rho)
        - 0.5 * np.einsum("kij,jl->kil", rho, cdc)
    )


# -- photoreceiver ------------------------------------------------------------


def _receiver_real_mats(model: LindbladModel, params: ReceiverParams):
    basis = hermitian_basis(model.dim)
    l_real = superop_real(lambda m: liouvillian(model, m), basis)
    e_phi = np.exp(-1j * params.phi)
    x_real = superop_real(
        lambda m: e_phi * model.c @ m + np.conj(e_phi) * m @ model.c.conj().T, basis
    )
    return basis, l_real, x_real


def _raise_for_status(status: int) -> None:
    if status == kernels.STATUS_MASS_LEAK:
        raise GridMassLeak("boundary weight fraction exceeded 1e-6 during the run")
    if status == kernels.STATUS_NONFINITE:
        raise NonfiniteInnovation("total weight became nonfinite")


def run_receiver_trajectory(
    model: LindbladModel,
    params: ReceiverParams,
    s0: ReceiverSupersystem,
    dt: float,
    n_steps: int,
    bin_stride: int,
    rng: np.random.Generator | None = None,
    record: np.ndarray | None = None,
    hidden0: tuple[np.ndarray, float] | None = None,
    exact_innovation: bool = True,
) -> dict:
    """One voltage-grid trajectory through the numba kernel.

    Generate mode (rng given): samples the hidden truth and the record.
    Filter mode (record given): conditions on the supplied record.
    """
    if (rng is None) == (record is None):
        raise ValueError("pass exactly one of rng (generate) or record (filter)")
    basis, l_real, x_real = _receiver_real_mats(model, params)
    d = basis.shape[0]
    R = np.ascontiguousarray(to_real_many(s0.rho, basis))
    n_bins = n_steps // bin_stride + 1
    out_marg = np.empty((n_bins, d))
    out_hidden = np.empty((n_bins, d))
    out_innov = np.empty(n_steps)
    generate = rng is not None
    if generate:
        if hidden0 is None:
            hidden0 = (s0.marginal_state(), 0.0)
        hidden_r = np.ascontiguousarray(to_real(hidden0[0], basis))
        hidden_v0 = float(hidden0[1])
        noise = rng.normal(size=(n_steps, 2))
        rec = np.empty(n_steps)
    else:
        hidden_r = np.zeros(d)
        hidden_v0 = 0.0
        noise = np.zeros((1, 2))
        rec = np.ascontiguousarray(np.asarray(record, dtype=float))
        if rec.shape != (n_steps,):
            raise ValueError(f"record must have shape ({n_steps},)")
    status = kernels._receiver_traj(
        l_real, x_real, s0.v, np.sqrt(model.dim), params.gamma,
        params.noise_power, params.eta, dt, n_steps, bin_stride, generate,
        noise, rec, R, hidden_r, hidden_v0, exact_innovation, out_marg,
        out_hidden, out_innov,
    )
    _raise_for_status(status)
    marg = from_real_many(out_marg, basis)
    marg /= _traces(marg)[:, None, None]
    out = {
        "times": bin_times(n_steps, dt, bin_stride),
        "marginal": marg,
        "innovations": out_innov,
        "record": rec,
        "final_state": ReceiverSupersystem(s0.v, from_real_many(R, basis)),
    }
    if generate:
        out["hidden"] = from_real_many(out_hidden, basis)
    return out


def run_receiver_ensemble(
    model: LindbladModel,
    params: ReceiverParams,
    s0: ReceiverSupersystem,
    dt: float,
    n_steps: int,
    M: int,
    master_seed: int,
    bin_stride: int,
    chunk: int = 64,
    sample_v0: bool = True,
    exact_innovation: bool = True,
) -> dict:
    """Generate-mode photoreceiver ensemble; returns the per-bin mean of
    the normalized filter marginal."""
    basis, l_real, x_real = _receiver_real_mats(model, params)
    d = basis.shape[0]
    R0 = np.ascontiguousarray(to_real_many(s0.rho, basis))
    hidden_r0 = np.ascontiguousarray(to_real(s0.marginal_state(), basis))
    n_bins = n_steps // bin_stride + 1
    sum_marg = np.zeros((n_bins, d))
    sigma_v = np.sqrt(1.0 / (2.0 * params.noise_power))
    for start in range(0, M, chunk):
        mc = min(chunk, M - start)
        noise = np.empty((mc, n_steps, 2))
        v0 = np.zeros(mc)
        for i in range(mc):
            rng = seed_stream(master_seed, start + i)
            if sample_v0:
                v0[i] = rng.normal(0.0, sigma_v)
            noise[i] = rng.normal(size=(n_steps, 2))
        out_marg = np.empty((mc, n_bins, d))
        status = np.empty(mc, dtype=np.int64)
        kernels._receiver_ensemble(
            l_real, x_real, s0.v, np.sqrt(model.dim), params.gamma,
            params.noise_power, params.eta, dt, n_steps, bin_stride, noise,
            R0, hidden_r0, v0, exact_innovation, out_marg, status,
        )
        for st in status:
            _raise_for_status(int(st))
        # normalize each marginal to unit trace, accumulate in index order
        tr = np.sqrt(model.dim) * out_marg[:, :, 0]
        sum_marg += np.sum(out_marg / tr[:, :, None], axis=0)
    mean_marg = from_real_many(sum_marg / M, basis)
    return {
        "times": bin_times(n_steps, dt, bin_stride),
        "mean_marginal": mean_marg,
    }

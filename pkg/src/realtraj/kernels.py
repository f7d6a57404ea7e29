"""Numba kernels for the voltage-grid filter.

The per-cell operators are carried as real coordinates in an orthonormal
Hermitian basis (see realbasis), so one filter step is pure float64
arithmetic: a dxd matrix apply per cell, flux-form stencils along the
grid, and the multiplicative innovation update.  The kernels mirror
receiver.receiver_skse_step operation for operation and are validated
against it in the test suite.

Status codes returned by the kernels: 0 ok, 1 grid mass leak,
2 nonfinite total weight.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

STATUS_OK = 0
STATUS_MASS_LEAK = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def _receiver_traj(
    L_real,        # (d, d) Liouvillian in the real basis
    X_real,        # (d, d) rho -> e^{-i phi} c rho + h.c.
    v,             # (K,) grid
    sqrt_n,        # trace coefficient: Tr[rho] = sqrt_n * r[0]
    gamma,
    noise_power,
    eta,
    dt,
    n_steps,
    bin_stride,
    generate,      # True: sample observations from the hidden truth
    noise,         # (n_steps, 2) standard normals, used in generate mode
    record,        # (n_steps,) observed voltages; written in generate mode
    R,             # (K, d) filter state, evolved in place
    hidden_r,      # (d,) hidden ideal-trajectory coordinates (generate)
    hidden_v0,     # initial true voltage
    exact_innovation,
    out_marg,      # (n_bins, d) trapezoid-integrated filter marginal
    out_hidden,    # (n_bins, d) hidden state at bin times (generate)
    out_innov,     # (n_steps,) innovation increments dW_J
):
    K, d = R.shape
    dv = v[1] - v[0]
    sq_dt = math.sqrt(dt)
    sq_gamma = math.sqrt(gamma)
    coup = math.sqrt(gamma * eta / noise_power)
    d_diff = gamma / (2.0 * noise_power)
    sq_vac = math.sqrt(gamma / noise_power)
    sq_eta = math.sqrt(eta)
    edge = max(1, int(round(0.025 * K)))

    tw = np.full(K, dv)
    tw[0] = 0.5 * dv
    tw[K - 1] = 0.5 * dv

    gv_half = np.empty(K - 1)
    for k in range(K - 1):
        gv_half[k] = gamma * 0.5 * (v[k] + v[k + 1])

    scratch = np.empty((K, d))
    xr = np.empty((K, d))
    hv = hidden_v0

    for s in range(n_steps):
        # <v> via the trapezoidal moment
        num = 0.0
        den = 0.0
        for k in range(K):
            w = sqrt_n * R[k, 0]
            num += tw[k] * w * v[k]
            den += tw[k] * w
        vm = num / den

        if generate:
            dW = noise[s, 0] * sq_dt
            dWJ = noise[s, 1] * sq_dt
            V = hv + dWJ / (sq_gamma * dt)
            record[s] = V
        else:
            dW = 0.0
            V = record[s]
        out_innov[s] = sq_gamma * dt * (V - vm)

        if s % bin_stride == 0:
            b = s // bin_stride
            for a in range(d):
                acc = 0.0
                for k in range(K):
                    acc += tw[k] * R[k, a]
                out_marg[b, a] = acc
            if generate:
                for a in range(d):
                    out_hidden[b, a] = hidden_r[a]

        # stage 1: Liouvillian + drift/diffusion/coupling stencils
        for k in range(K):
            for a in range(d):
                acc_l = 0.0
                acc_x = 0.0
                for bb in range(d):
                    acc_l += L_real[a, bb] * R[k, bb]
                    acc_x += X_real[a, bb] * R[k, bb]
                scratch[k, a] = acc_l
                xr[k, a] = acc_x
        for a in range(d):
            f_prev = 0.0  # zero-flux boundaries
            for k in range(K):
                if k < K - 1:
                    f_next = (
                        gv_half[k] * 0.5 * (R[k, a] + R[k + 1, a])
                        + coup * 0.5 * (xr[k, a] + xr[k + 1, a])
                        + d_diff * (R[k + 1, a] - R[k, a]) / dv
                    )
                else:
                    f_next = 0.0
                scratch[k, a] = (
                    R[k, a] + dt * scratch[k, a] + dt * (f_next - f_prev) / dv
                )
                f_prev = f_next

        # stage 2: innovation update
        if exact_innovation:
            for k in range(K):
                m = math.exp(-0.5 * gamma * dt * (v[k] - V) ** 2)
                for a in range(d):
                    scratch[k, a] *= m
        else:
            dwj = sq_gamma * dt * (V - vm)
            for k in range(K):
                m = 1.0 + sq_gamma * dwj * (v[k] - vm)
                for a in range(d):
                    scratch[k, a] *= m

        # stage 3: renormalize; boundary guard
        total = 0.0
        for k in range(K):
            total += sqrt_n * scratch[k, 0] * dv
        if not math.isfinite(total) or total <= 0.0:
            return STATUS_NONFINITE
        w_all = 0.0
        w_edge = 0.0
        for k in range(K):
            for a in range(d):
                R[k, a] = scratch[k, a] / total
            w = abs(sqrt_n * R[k, 0])
            w_all += w
            if k < edge or k >= K - edge:
                w_edge += w
        if w_edge > 1e-6 * w_all:
            return STATUS_MASS_LEAK

        # hidden truth: ideal diffusive trajectory + voltage Langevin
        if generate:
            for a in range(d):
                acc = 0.0
                for bb in range(d):
                    acc += X_real[a, bb] * hidden_r[bb]
                xr[0, a] = acc
            xbar = sqrt_n * xr[0, 0]
            for a in range(d):
                acc = 0.0
                for bb in range(d):
                    acc += L_real[a, bb] * hidden_r[bb]
                scratch[0, a] = (
                    hidden_r[a] + dt * acc + sq_eta * dW * (xr[0, a] - xbar * hidden_r[a])
                )
            tr = sqrt_n * scratch[0, 0]
            for a in range(d):
                hidden_r[a] = scratch[0, a] / tr
            hv = hv - dt * (gamma * hv + coup * xbar) - sq_vac * dW

    if n_steps % bin_stride == 0:
        b = n_steps // bin_stride
        for a in range(d):
            acc = 0.0
            for k in range(K):
                acc += tw[k] * R[k, a]
            out_marg[b, a] = acc
        if generate:
            for a in range(d):
                out_hidden[b, a] = hidden_r[a]
    return STATUS_OK


@njit(parallel=True, cache=True)
def _receiver_ensemble(
    L_real,
    X_real,
    v,
    sqrt_n,
    gamma,
    noise_power,
    eta,
    dt,
    n_steps,
    bin_stride,
    noise_all,     # (M, n_steps, 2)
    R0,            # (K, d) shared initial filter state
    hidden_r0,     # (d,) shared initial hidden state
    hidden_v0_all, # (M,) initial true voltages
    exact_innovation,
    out_marg_all,  # (M, n_bins, d)
    out_status,    # (M,)
):
    M = noise_all.shape[0]
    n_bins = out_marg_all.shape[1]
    for i in prange(M):
        R = R0.copy()
        hidden = hidden_r0.copy()
        record = np.empty(n_steps)
        innov = np.empty(n_steps)
        out_hidden = np.empty((n_bins, hidden_r0.shape[0]))
        out_status[i] = _receiver_traj(
            L_real, X_real, v, sqrt_n, gamma, noise_power, eta, dt,
            n_steps, bin_stride, True, noise_all[i], record, R, hidden,
            hidden_v0_all[i], exact_innovation, out_marg_all[i], out_hidden,
            innov,
        )

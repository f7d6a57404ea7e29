"""Real coordinates for Hermitian operators.

Any Hermiticity-preserving linear map acts as a real matrix on the
coordinates of an operator in an orthonormal Hermitian basis (the
generalized Gell-Mann basis plus identity).  The numba kernels run
entirely in these real coordinates; this module builds the basis and
converts operators and superoperators.
"""

from __future__ import annotations

import numpy as np

from .operators import check_dim


def hermitian_basis(n: int) -> np.ndarray:
    """Orthonormal Hermitian basis F_a, shape (n^2, n, n), with
    Tr[F_a F_b] = delta_ab and F_0 = I/sqrt(n)."""
    check_dim(n)
    mats = [np.eye(n, dtype=complex) / np.sqrt(n)]
    for i in range(n):
        for j in range(i + 1, n):
            s = np.zeros((n, n), dtype=complex)
            s[i, j] = s[j, i] = 1.0 / np.sqrt(2.0)
            mats.append(s)
            a = np.zeros((n, n), dtype=complex)
            a[i, j] = -1j / np.sqrt(2.0)
            a[j, i] = 1j / np.sqrt(2.0)
            mats.append(a)
    for l in range(1, n):
        d = np.zeros((n, n), dtype=complex)
        d[:l, :l] = np.eye(l)
        d[l, l] = -l
        mats.append(d / np.sqrt(l * (l + 1)))
    return np.stack(mats)


def to_real(rho: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Coordinates r_a = Tr[F_a rho] (real for Hermitian rho)."""
    return np.real(np.einsum("aij,ji->a", basis, rho))


def to_real_many(rhos: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Vectorized to_real over a leading axis: (K, n, n) -> (K, n^2)."""
    return np.real(np.einsum("aij,kji->ka", basis, rhos))


def from_real(r: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Reconstruct the Hermitian operator sum_a r_a F_a."""
    return np.einsum("a,aij->ij", np.asarray(r, dtype=float), basis)


def from_real_many(r: np.ndarray, basis: np.ndarray) -> np.ndarray:
    return np.einsum("ka,aij->kij", np.asarray(r, dtype=float), basis)


def superop_real(map_fn, basis: np.ndarray) -> np.ndarray:
    """Real matrix S with S[a, b] = Tr[F_a map(F_b)], for a map that sends
    Hermitian operators to Hermitian operators."""
    d = basis.shape[0]
    out = np.empty((d, d), dtype=float)
    for b in range(d):
        image = map_fn(basis[b])
        col = np.einsum("aij,ji->a", basis, image)
        if np.max(np.abs(col.imag)) > 1e-12:
            raise ValueError("map is not Hermiticity-preserving")
        out[:, b] = col.real
    return out


def trace_of_real(r: np.ndarray, n: int) -> float:
    """Tr[rho] = sqrt(n) * r_0 in this basis."""
    return float(np.sqrt(n) * r[..., 0])

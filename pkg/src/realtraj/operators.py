"""Dense operator and superoperator algebra on small Hilbert spaces.

Everything here works on plain complex numpy arrays of shape (n, n).
Functions are pure: inputs are never mutated.  Time is measured in units
where the photon flux out of the system is <c'c>, so a bare two-level
lowering operator decays at rate 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import (
    ConfigError,
    DimensionMismatch,
    InvalidState,
    VanishingJumpProbability,
)

# Tolerances: comfortably above double-precision noise, below physical scales.
TOL_HERM = 1e-10
TOL_POS = 1e-8
TOL_TR = 1e-9
TOL_JUMP_TRACE = 1e-14

MAX_DIM = 64

# Pauli matrices and the two-level lowering operator sigma_- = |g><e|,
# with basis ordering (|g>, |e>).
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)
for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_MINUS):
    _m.setflags(write=False)


def check_dim(n: int) -> int:
    """Validate a Hilbert-space dimension (desk-scale engine: 1 <= n <= 64)."""
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ConfigError(f"dimension must be an integer, got {n!r}")
    if n < 1 or n > MAX_DIM:
        raise ConfigError(f"dimension must be in [1, {MAX_DIM}], got {n}")
    return int(n)


def as_operator(a: np.ndarray) -> np.ndarray:
    """Coerce to a square complex matrix and validate its dimension."""
    mat = np.asarray(a, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"operator must be square, got shape {mat.shape}")
    check_dim(mat.shape[0])
    return mat


def _check_same_dim(*ops: np.ndarray) -> None:
    dims = {op.shape for op in ops}
    if len(dims) > 1:
        raise DimensionMismatch(f"operator shapes differ: {sorted(dims)}")


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def herm_part(a: np.ndarray) -> np.ndarray:
    """(a + a')/2 -- used after every step to control Hermiticity drift."""
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: np.ndarray, tol: float = TOL_HERM) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """(1/2)||a - b||_1 for Hermitian a, b (eigenvalue sum of |difference|)."""
    diff = herm_part(a - b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))


def validate_density(
    rho: np.ndarray,
    trace_target: float | None = 1.0,
    tol_herm: float = TOL_HERM,
    tol_pos: float = TOL_POS,
    tol_tr: float = TOL_TR,
) -> np.ndarray:
    """Check the density-operator role invariants.

    trace_target=None accepts any nonnegative trace (unnormalized
    conditional states); otherwise the trace must match the target.
    Returns the validated array, raises InvalidState otherwise.
    """
    rho = as_operator(rho)
    herm_err = np.max(np.abs(rho - rho.conj().T))
    if herm_err > tol_herm:
        raise InvalidState(f"not Hermitian: max asymmetry {herm_err:.3e}")
    evals = np.linalg.eigvalsh(herm_part(rho))
    if evals.min() < -tol_pos:
        raise InvalidState(f"not positive semidefinite: min eigenvalue {evals.min():.3e}")
    tr = float(np.real(np.trace(rho)))
    if trace_target is None:
        if tr < -tol_tr:
            raise InvalidState(f"negative trace {tr:.3e}")
    elif abs(tr - trace_target) > tol_tr:
        raise InvalidState(f"trace {tr!r} does not match target {trace_target!r}")
    return rho


@dataclass(frozen=True)
class LindbladModel:
    """System model: Hamiltonian H, lowering operator c, local-oscillator
    amplitude mu and phase phi.

    H is Hermitian with hbar = 1.  c is normalized so the photon flux is
    <c'c>.  phi defaults to arg(mu) when mu is nonzero (the jump and
    diffusive pictures must agree); an explicit phi that contradicts
    arg(mu) is rejected.
    """

    H: np.ndarray
    c: np.ndarray
    mu: complex = 0j
    phi: float | None = None
    _phi: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        H = as_operator(self.H)
        c = as_operator(self.c)
        _check_same_dim(H, c)
        if not is_hermitian(H):
            raise ConfigError("H must be Hermitian")
        mu = complex(self.mu)
        if self.phi is None:
            phi = float(np.angle(mu)) if mu != 0 else 0.0
        else:
            phi = float(self.phi)
            if mu != 0:
                delta = (phi - np.angle(mu) + np.pi) % (2 * np.pi) - np.pi
                if abs(delta) > 1e-9:
                    raise ConfigError(
                        f"phi={phi} inconsistent with arg(mu)={np.angle(mu)}"
                    )
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "_phi", phi)

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @property
    def lo_phase(self) -> float:
        return self._phi

    def quadrature(self) -> np.ndarray:
        """Measured quadrature operator c e^{-i phi} + c' e^{i phi}."""
        e = np.exp(-1j * self._phi)
        return e * self.c + np.conj(e) * self.c.conj().T


def apply_J(B: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Jump superoperator: J[B] rho = B rho B'."""
    _check_same_dim(B, rho)
    return B @ rho @ B.conj().T


def apply_A(B: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Anticommutator half: A[B] rho = (B'B rho + rho B'B)/2."""
    _check_same_dim(B, rho)
    BdB = B.conj().T @ B
    return 0.5 * (BdB @ rho + rho @ BdB)


def apply_D(B: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Dissipator: D[B] rho = J[B] rho - A[B] rho.  Trace-annihilating."""
    return apply_J(B, rho) - apply_A(B, rho)


def apply_G(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Normalized-jump superoperator: G[A]B = J[A]B / Tr[J[A]B] - B.

    Raises VanishingJumpProbability when Tr[J[A]B] is numerically zero:
    a jump into a zero-probability outcome is ill-defined.
    """
    jb = apply_J(A, B)
    tr = float(np.real(np.trace(jb)))
    if tr <= TOL_JUMP_TRACE:
        raise VanishingJumpProbability(f"Tr[J[A]B] = {tr:.3e} <= {TOL_JUMP_TRACE}")
    return jb / tr - B


def apply_H(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """H[A]B = AB + BA' - Tr[AB + BA'] B."""
    _check_same_dim(A, B)
    m = A @ B + B @ A.conj().T
    return m - np.real(np.trace(m)) * B


def liouvillian(model: LindbladModel, rho: np.ndarray) -> np.ndarray:
    """L rho = -i[H, rho] + D[c] rho."""
    rho = np.asarray(rho, dtype=complex)
    _check_same_dim(model.H, rho)
    return -1j * (model.H @ rho - rho @ model.H) + apply_D(model.c, rho)


def liouvillian_matrix(model: LindbladModel) -> np.ndarray:
    """The n^2 x n^2 matrix of L acting on row-major vectorized operators.

    With vec(rho) = rho.reshape(-1) (C order), vec(A rho B) =
    (A kron B^T) vec(rho).
    """
    n = model.dim
    eye = np.eye(n, dtype=complex)
    H, c = model.H, model.c
    cdc = c.conj().T @ c
    out = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    out += np.kron(c, c.conj())
    out -= 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return out


def me_propagate(model: LindbladModel, rho0: np.ndarray, t: float) -> np.ndarray:
    """Exact master-equation propagation rho(t) = e^{Lt} rho0.

    Uses the matrix exponential of the vectorized Liouvillian
    (scaling-and-squaring), independent of the explicit time steppers it
    serves as an oracle for.
    """
    rho0 = validate_density(rho0, trace_target=1.0)
    _check_same_dim(model.H, rho0)
    if t < 0:
        raise ConfigError("propagation time must be nonnegative")
    n = model.dim
    prop = expm(liouvillian_matrix(model) * t)
    rho_t = (prop @ rho0.reshape(-1)).reshape(n, n)
    return herm_part(rho_t)


def operator_to_json(a: np.ndarray) -> str:
    """Serialize to the golden-file JSON matrix format."""
    a = as_operator(a)
    return json.dumps(
        {"dim": a.shape[0], "re": a.real.tolist(), "im": a.imag.tolist()}
    )


def operator_from_json(text: str) -> np.ndarray:
    """Parse the JSON matrix format {"dim": n, "re": [[..]], "im": [[..]]}."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad operator JSON: {exc}") from exc
    try:
        n = check_dim(obj["dim"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj["im"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad operator JSON fields: {exc}") from exc
    if re.shape != (n, n) or im.shape != (n, n):
        raise ConfigError(
            f"operator JSON shape mismatch: dim={n}, re {re.shape}, im {im.shape}"
        )
    return re + 1j * im

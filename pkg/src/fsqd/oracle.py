"""Dense statevector references for verification at small n.

Amplitude index ``I - 1`` of a basis state is the integer whose binary digits
read site 0 (most significant) to site n-1, the same map used for bitstrings.
These routines are deliberately written without any tensor-network code so
that they can serve as independent checks.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ValidationError
from .mps import MPO, MPS

MAX_STATE_SITES = 24
MAX_MATRIX_SITES = 14

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_state_size(n: int) -> None:
    if n > MAX_STATE_SITES:
        raise ValidationError(f"dense states are limited to n <= {MAX_STATE_SITES}, got {n}")


def z_diagonal(n: int, site: int) -> np.ndarray:
    """Diagonal of ``Z_site`` in the computational basis."""
    idx = np.arange(2**n)
    bit = (idx >> (n - 1 - site)) & 1
    return 1.0 - 2.0 * bit


def ising_diagonal(n: int, J: float, hz: float) -> np.ndarray:
    """Diagonal part ``-J sum Z Z - hz sum Z`` of the Ising Hamiltonian."""
    diag = np.zeros(2**n)
    zs = [z_diagonal(n, k) for k in range(n)]
    for k in range(n - 1):
        diag -= J * zs[k] * zs[k + 1]
    for k in range(n):
        diag -= hz * zs[k]
    return diag


def ising_matvec(v: np.ndarray, n: int, J: float, hx: float, hz: float) -> np.ndarray:
    """``H v`` for the open Ising chain without forming the matrix (n <= 24)."""
    _check_state_size(n)
    v = np.asarray(v, dtype=complex)
    out = ising_diagonal(n, J, hz) * v
    t = v.reshape((2,) * n)
    for k in range(n):
        out -= hx * np.flip(t, axis=k).reshape(-1)
    return out


def dense_hamiltonian(n: int, J: float, hx: float, hz: float) -> np.ndarray:
    """Dense ``-J sum Z_i Z_i+1 - hx sum X_i - hz sum Z_i`` (open chain, n <= 14)."""
    if n < 1:
        raise ValidationError("n must be positive")
    if n > MAX_MATRIX_SITES:
        raise ValidationError(f"dense Hamiltonians are limited to n <= {MAX_MATRIX_SITES}, got {n}")
    dim = 2**n
    h = np.diag(ising_diagonal(n, J, hz)).astype(complex)
    idx = np.arange(dim)
    for k in range(n):
        flipped = idx ^ (1 << (n - 1 - k))
        h[flipped, idx] -= hx
    return h


def mps_to_dense(s: MPS) -> np.ndarray:
    """Full statevector of an MPS by sequential contraction."""
    _check_state_size(s.n)
    v = np.ones((1, 1), dtype=complex)
    for t in s.tensors:
        l, d, r = t.shape
        v = (v.reshape(-1, l) @ t.reshape(l, d * r)).reshape(-1, r)
    return v.reshape(-1)


def mpo_to_dense(m: MPO) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix of an MPO (row = output index)."""
    if m.n > MAX_MATRIX_SITES:
        raise ValidationError(f"dense operators are limited to n <= {MAX_MATRIX_SITES}")
    acc = np.ones((1, 1, 1), dtype=complex)  # (out, in, bond)
    for w in m.tensors:
        t = np.tensordot(acc, w, axes=(2, 0))  # (o, i, t, s, r)
        o, i, tt, ss, r = t.shape
        acc = t.transpose(0, 2, 1, 3, 4).reshape(o * tt, i * ss, r)
    return acc[:, :, 0]


def apply_two_site(v: np.ndarray, n: int, site: int, u: np.ndarray) -> np.ndarray:
    """Apply a 4x4 matrix on sites ``(site, site + 1)`` of a statevector."""
    t = np.asarray(v, dtype=complex).reshape(2**site, 4, 2 ** (n - site - 2))
    return np.einsum("ts,asb->atb", u, t).reshape(-1)


def dense_apply_gates(
    sites_and_mats: Sequence[tuple[int, np.ndarray]], v: np.ndarray, n: int, adjoint: bool = False
) -> np.ndarray:
    seq = list(sites_and_mats)
    if adjoint:
        seq = [(k, u.conj().T) for k, u in reversed(seq)]
    for k, u in seq:
        v = apply_two_site(v, n, k, u)
    return v


def dense_apply_circuit(c, v: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Gate-by-gate statevector application of a :class:`BrickwallCircuit`."""
    _check_state_size(c.n)
    return dense_apply_gates([(g.site, g.matrix) for g in c.gates], v, c.n, adjoint)


def dense_ground_state(h: np.ndarray) -> tuple[float, np.ndarray]:
    w, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    return float(w[0]), vecs[:, 0]


def ising_ground_state(n: int, J: float, hx: float, hz: float, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Exact ground pair; dense eigh up to 10 sites, sparse Lanczos (ARPACK) above."""
    if n <= 10:
        return dense_ground_state(dense_hamiltonian(n, J, hx, hz))
    _check_state_size(n)
    import scipy.sparse.linalg as spla

    dim = 2**n
    op = spla.LinearOperator((dim, dim), matvec=lambda x: ising_matvec(x, n, J, hx, hz), dtype=complex)
    v0 = np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)
    w, vecs = spla.eigsh(op, k=1, which="SA", v0=v0, tol=tol)
    return float(w[0]), vecs[:, 0]


def dense_project_out_zero(v: np.ndarray) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=complex) / np.linalg.norm(v)
    w = float(abs(v[0]) ** 2)
    out = v.copy()
    out[0] = 0.0
    return out / np.linalg.norm(out), w


def dense_fidelity_tensor(left: np.ndarray, right: np.ndarray, n: int, site: int) -> np.ndarray:
    """``F[s, t] = sum_rest left[.., s, ..] conj(right[.., t, ..])``."""
    a = left.reshape(2**site, 4, -1)
    b = right.reshape(2**site, 4, -1)
    return np.einsum("asb,atb->st", a, b.conj())

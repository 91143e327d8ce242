"""Dense multilinear algebra used by every other module.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C (row-major) order: the last axis varies fastest. All reshapes in the package
rely on this convention, so a site tensor of shape ``(l, d, r)`` flattens to
``data[(i * d + s) * r + j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError, ValidationError

DTYPE = np.complex128


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``m = left_unitary @ diag(singular_values) @ right_unitary``."""

    left_unitary: np.ndarray
    singular_values: np.ndarray
    right_unitary: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_unitary * self.singular_values) @ self.right_unitary


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Build a complex tensor, optionally from flat data and a shape."""
    arr = np.asarray(data, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise DimensionError(f"all extents must be >= 1, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise DimensionError(f"{arr.size} entries cannot fill shape {shape}")
        arr = arr.reshape(shape)
    return arr


def contract(a: np.ndarray, b: np.ndarray, axis_pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the free axes of ``a`` followed by the free axes of
    ``b``, each in their original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [p[0] for p in axis_pairs]
    axes_b = [p[1] for p in axis_pairs]
    for ia, ib in axis_pairs:
        if a.shape[ia] != b.shape[ib]:
            raise DimensionError(
                f"axis {ia} of a has extent {a.shape[ia]} but axis {ib} of b has {b.shape[ib]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def svd(m: np.ndarray) -> SvdResult:
    """Thin singular value decomposition with a robust LAPACK fallback."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionError(f"svd expects a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("svd input contains non-finite entries")
    try:
        u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, s, vh = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            norm = np.linalg.norm(m)
            raise NumericalError(
                f"SVD did not converge for {m.shape} matrix with Frobenius norm {norm:.3e}, "
                f"max |entry| {np.abs(m).max():.3e}"
            ) from exc
    return SvdResult(u, s, vh)


def truncation_rank(s: np.ndarray, max_bond: int | None, cutoff: float) -> int:
    """Smallest rank whose discarded squared weight is at most ``cutoff`` (relative).

    The rank is additionally capped at ``max_bond`` and is always at least 1.
    """
    total = float(np.sum(s**2))
    if total == 0.0:
        return 1
    # tail[k] = sum_{i >= k} s_i^2
    tail = np.concatenate([np.cumsum((s**2)[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail <= cutoff * total))
    keep = max(keep, 1)
    if max_bond is not None:
        keep = min(keep, int(max_bond))
    return keep


def truncated_svd(
    m: np.ndarray, max_bond: int | None = None, cutoff: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """SVD truncated to ``max_bond``; returns ``(u, s, vh, discarded_weight)``.

    ``discarded_weight`` is the discarded squared singular-value mass relative
    to the total.
    """
    res = svd(m)
    s = res.singular_values
    k = truncation_rank(s, max_bond, cutoff)
    total = float(np.sum(s**2))
    discarded = float(np.sum(s[k:] ** 2) / total) if total > 0 else 0.0
    return res.left_unitary[:, :k], s[:k], res.right_unitary[:k, :], discarded


def hermitian_defect(m: np.ndarray) -> float:
    norm = np.linalg.norm(m)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(m - m.conj().T) / norm)


def eigh(m: np.ndarray, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"eigh expects a square matrix, got {m.shape}")
    defect = hermitian_defect(m)
    if defect > tol:
        raise ValidationError(f"matrix is not Hermitian: relative defect {defect:.2e}")
    sym = 0.5 * (m + m.conj().T)
    w, v = scipy.linalg.eigh(sym)
    return w, v


def lanczos_ground(
    matvec: Callable[[np.ndarray], np.ndarray],
    v0: np.ndarray,
    krylov_dim: int = 8,
    tol: float = 1e-12,
    max_restarts: int = 50,
) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of a Hermitian operator by explicitly restarted Lanczos.

    Each cycle builds a Krylov space of dimension ``krylov_dim`` from the
    current Ritz vector with full reorthogonalisation and restarts from the
    new Ritz vector. Stops when the residual norm drops below ``tol`` (scaled
    by ``max(1, |E|)``) or the Krylov space becomes invariant.
    """
    shape = v0.shape
    v = np.asarray(v0, dtype=DTYPE).ravel().copy()
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise ValidationError("Lanczos start vector is zero")
    v /= nrm
    energy = np.inf
    for _ in range(max_restarts):
        basis = [v]
        alphas: list[float] = []
        betas: list[float] = []
        w = matvec(v.reshape(shape)).ravel()
        invariant = False
        for j in range(krylov_dim):
            alpha = float(np.real(np.vdot(basis[j], w)))
            alphas.append(alpha)
            w = w - alpha * basis[j]
            if j > 0:
                w = w - betas[-1] * basis[j - 1]
            for q in basis:
                w = w - np.vdot(q, w) * q
            beta = float(np.linalg.norm(w))
            if j == krylov_dim - 1:
                break
            if beta < 1e-14 * max(1.0, abs(alpha)):
                invariant = True
                break
            betas.append(beta)
            nxt = w / beta
            basis.append(nxt)
            w = matvec(nxt.reshape(shape)).ravel()
        k = len(alphas)
        tri = np.diag(alphas)
        if k > 1:
            off = np.asarray(betas[: k - 1])
            tri += np.diag(off, 1) + np.diag(off, -1)
        evals, evecs = scipy.linalg.eigh(tri)
        energy = float(evals[0])
        coeffs = evecs[:, 0]
        v = np.zeros_like(v)
        for c, q in zip(coeffs, basis):
            v += c * q
        v /= np.linalg.norm(v)
        if invariant:
            break
        # Ritz residual from the last Lanczos coefficient.
        resid = beta * abs(coeffs[-1])
        if resid < tol * max(1.0, abs(energy)):
            break
    return energy, v.reshape(shape)

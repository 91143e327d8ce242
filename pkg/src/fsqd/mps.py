"""Matrix product states and operators on qubit chains.

Index conventions (C order throughout):

* MPS site tensors have shape ``(left_bond, 2, right_bond)``.
* MPO site tensors have shape ``(left_bond, phys_out, phys_in, right_bond)``,
  so that ``(M|psi>)_t = sum_s W[., t, s, .] psi_s``.
* Site 0 is the leftmost character of a bitstring and the most significant
  bit of its integer value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateInputError, DimensionError, NumericalError, ValidationError
from .tensor import DTYPE, truncated_svd

DEFAULT_CUTOFF = 1e-12
SAMPLE_BATCH = 8192

_I2 = np.eye(2, dtype=DTYPE)
_X = np.array([[0, 1], [1, 0]], dtype=DTYPE)
_Z = np.array([[1, 0], [0, -1]], dtype=DTYPE)


# --------------------------------------------------------------------------
# chain primitives on lists of (l, d, r) tensors


def _qr_right(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left-isometric factor of ``t`` and the remainder pushed to the right."""
    l, d, r = t.shape
    q, rr = scipy.linalg.qr(t.reshape(l * d, r), mode="economic")
    return q.reshape(l, d, q.shape[1]), rr


def _qr_left(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-isometric factor of ``t`` and the remainder pushed to the left."""
    l, d, r = t.shape
    q, rr = scipy.linalg.qr(t.reshape(l, d * r).T, mode="economic")
    return q.T.reshape(q.shape[1], d, r), rr.T


def _canonicalize(tensors: list[np.ndarray], center: int) -> list[np.ndarray]:
    ts = list(tensors)
    for k in range(center):
        q, r = _qr_right(ts[k])
        ts[k] = q
        ts[k + 1] = np.tensordot(r, ts[k + 1], axes=(1, 0))
    for k in range(len(ts) - 1, center, -1):
        q, r = _qr_left(ts[k])
        ts[k] = q
        ts[k - 1] = np.tensordot(ts[k - 1], r, axes=(2, 0))
    return ts


def _compress_chain(
    tensors: list[np.ndarray], max_bond: int | None, cutoff: float
) -> tuple[list[np.ndarray], list[float]]:
    """Optimal (canonical-form) SVD truncation; result has centre at site 0."""
    n = len(tensors)
    ts = _canonicalize(tensors, n - 1)
    discarded = [0.0] * (n - 1)
    for k in range(n - 1, 0, -1):
        l, d, r = ts[k].shape
        u, s, vh, w = truncated_svd(ts[k].reshape(l, d * r), max_bond, cutoff)
        ts[k] = vh.reshape(len(s), d, r)
        ts[k - 1] = np.tensordot(ts[k - 1], u * s, axes=(2, 0))
        discarded[k - 1] = w
    return ts, discarded


def _check_chain(tensors: Sequence[np.ndarray], rank: int) -> None:
    if len(tensors) == 0:
        raise ValidationError("a chain needs at least one site")
    for k, t in enumerate(tensors):
        if t.ndim != rank:
            raise DimensionError(f"site {k} has rank {t.ndim}, expected {rank}")
    if tensors[0].shape[0] != 1 or tensors[-1].shape[-1] != 1:
        raise DimensionError("boundary bonds must have extent 1")
    for k in range(len(tensors) - 1):
        if tensors[k].shape[-1] != tensors[k + 1].shape[0]:
            raise DimensionError(
                f"bond mismatch between sites {k} and {k + 1}: "
                f"{tensors[k].shape[-1]} != {tensors[k + 1].shape[0]}"
            )


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class MPS:
    """Open-boundary matrix product state.

    ``ortho_center`` is the site index of the orthogonality centre, or
    ``None`` when no canonical form is known. ``discarded_weight`` records the
    total relative squared singular-value weight dropped by the operation that
    produced this state.
    """

    tensors: tuple[np.ndarray, ...]
    ortho_center: int | None = None
    max_bond: int | None = None
    discarded_weight: float = 0.0

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=DTYPE) for t in self.tensors)
        _check_chain(ts, 3)
        for k, t in enumerate(ts):
            if t.shape[1] != 2:
                raise DimensionError(f"site {k} has physical dimension {t.shape[1]}, expected 2")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    @property
    def max_bond_dim(self) -> int:
        return max([1] + self.bond_dims)

    def norm(self) -> float:
        if self.ortho_center is not None:
            return float(np.linalg.norm(self.tensors[self.ortho_center]))
        return float(np.sqrt(abs(overlap(self, self))))

    def normalized(self) -> "MPS":
        nrm = self.norm()
        if not np.isfinite(nrm) or nrm == 0:
            raise NumericalError(f"cannot normalise a state with norm {nrm}")
        c = 0 if self.ortho_center is None else self.ortho_center
        ts = list(self.tensors)
        ts[c] = ts[c] / nrm
        return MPS(ts, self.ortho_center, self.max_bond, self.discarded_weight)

    def scaled(self, factor: complex) -> "MPS":
        c = 0 if self.ortho_center is None else self.ortho_center
        ts = list(self.tensors)
        ts[c] = ts[c] * factor
        return MPS(ts, self.ortho_center, self.max_bond, self.discarded_weight)

    def canonical(self, center: int = 0) -> "MPS":
        if not 0 <= center < self.n:
            raise ValidationError(f"centre {center} out of range for n={self.n}")
        if self.ortho_center == center:
            return self
        return MPS(_canonicalize(list(self.tensors), center), center, self.max_bond)

    def is_canonical(self, tol: float = 1e-10) -> bool:
        """Check the isometry conditions implied by ``ortho_center``."""
        if self.ortho_center is None:
            return False
        for k, t in enumerate(self.tensors):
            l, d, r = t.shape
            if k < self.ortho_center:
                m = t.reshape(l * d, r)
                if np.linalg.norm(m.conj().T @ m - np.eye(r)) > tol:
                    return False
            elif k > self.ortho_center:
                m = t.reshape(l, d * r)
                if np.linalg.norm(m @ m.conj().T - np.eye(l)) > tol:
                    return False
        return True


@dataclass(frozen=True)
class MPO:
    """Open-boundary matrix product operator."""

    tensors: tuple[np.ndarray, ...]
    hermitian: bool = False
    max_bond: int | None = None
    discarded: tuple[float, ...] = field(default=())

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=DTYPE) for t in self.tensors)
        _check_chain(ts, 4)
        for k, t in enumerate(ts):
            if t.shape[1] != 2 or t.shape[2] != 2:
                raise DimensionError(f"site {k} has physical dims {t.shape[1:3]}, expected (2, 2)")
        object.__setattr__(self, "tensors", ts)

    @property
    def n(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.tensors[:-1]]

    def adjoint(self) -> "MPO":
        return MPO(
            [t.conj().transpose(0, 2, 1, 3) for t in self.tensors], self.hermitian, self.max_bond
        )

    def compressed(self, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF) -> "MPO":
        chain = [t.reshape(t.shape[0], 4, t.shape[3]) for t in self.tensors]
        chain, disc = _compress_chain(chain, max_bond, cutoff)
        ts = [t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in chain]
        return MPO(ts, self.hermitian, max_bond, tuple(disc))


@dataclass(frozen=True)
class SampleCounts:
    """Distinct measured bitstrings (rows, sorted by integer value) and counts."""

    bits: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        counts = np.asarray(self.counts, dtype=np.int64)
        if bits.ndim != 2 or bits.shape[0] != counts.shape[0]:
            raise DimensionError("bits must be (k, n) with one count per row")
        if np.any(counts <= 0):
            raise ValidationError("counts must be positive")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return self.bits.shape[1]

    @property
    def total_shots(self) -> int:
        return int(self.counts.sum())

    def __len__(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def from_shots(cls, shots: np.ndarray) -> "SampleCounts":
        shots = np.asarray(shots, dtype=np.uint8)
        if shots.shape[0] == 0:
            return cls(np.zeros((0, shots.shape[1]), np.uint8), np.zeros(0, np.int64))
        uniq, counts = np.unique(shots, axis=0, return_counts=True)
        return cls(uniq, counts)

    @classmethod
    def from_dict(cls, counts: dict[str, int]) -> "SampleCounts":
        keys = sorted(counts, key=lambda b: int(b, 2))
        if not keys:
            raise ValidationError("empty counts")
        bits = np.array([str_to_bits(k) for k in keys], dtype=np.uint8)
        return cls(bits, np.array([counts[k] for k in keys]))

    def as_dict(self) -> dict[str, int]:
        return {bits_to_str(b): int(c) for b, c in zip(self.bits, self.counts)}


# --------------------------------------------------------------------------
# bitstring helpers


def str_to_bits(s: str) -> np.ndarray:
    if not s or any(ch not in "01" for ch in s):
        raise ValidationError(f"invalid bitstring {s!r}")
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


def bits_to_str(bits: Iterable[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def bits_to_int(bits: Iterable[int]) -> int:
    """Integer value ``I - 1`` of a bitstring (site 0 most significant)."""
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def int_to_bits(value: int, n: int) -> np.ndarray:
    return np.array([(value >> (n - 1 - k)) & 1 for k in range(n)], dtype=np.uint8)


# --------------------------------------------------------------------------
# constructors


def product_state(bits: str | Sequence[int]) -> MPS:
    """Computational basis state ``|x>`` as a bond-1 MPS."""
    if isinstance(bits, str):
        bits = str_to_bits(bits)
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size == 0 or np.any((bits != 0) & (bits != 1)):
        raise ValidationError("bitstring must be a non-empty 0/1 sequence")
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=DTYPE)
        t[0, int(b), 0] = 1.0
        tensors.append(t)
    return MPS(tensors, ortho_center=0, max_bond=1)


def zero_state(n: int) -> MPS:
    return product_state(np.zeros(n, dtype=np.uint8))


def product_state_from_vectors(vectors: Sequence[np.ndarray]) -> MPS:
    tensors = [np.asarray(v, dtype=DTYPE).reshape(1, 2, 1) for v in vectors]
    return MPS(tensors)


def random_mps(n: int, bond: int, rng: np.random.Generator, real: bool = False) -> MPS:
    """Normalised random MPS with bonds ``min(bond, 2^k, 2^(n-k))``."""
    dims = [1] + [min(bond, 2**k, 2 ** (n - k)) for k in range(1, n)] + [1]
    tensors = []
    for k in range(n):
        shape = (dims[k], 2, dims[k + 1])
        t = rng.standard_normal(shape)
        if not real:
            t = t + 1j * rng.standard_normal(shape)
        tensors.append(t)
    return MPS(_canonicalize(tensors, 0), ortho_center=0, max_bond=bond).normalized()


def mps_from_dense(vec: np.ndarray, max_bond: int | None = None, cutoff: float = 0.0) -> MPS:
    """Exact (or truncated) MPS of a length-``2**n`` statevector."""
    vec = np.asarray(vec, dtype=DTYPE)
    n = int(round(np.log2(vec.size)))
    if 2**n != vec.size:
        raise DimensionError(f"statevector length {vec.size} is not a power of two")
    tensors = []
    rest = vec.reshape(1, -1)
    for k in range(n - 1):
        l = rest.shape[0]
        u, s, vh, _ = truncated_svd(rest.reshape(l * 2, -1), max_bond, cutoff)
        tensors.append(u.reshape(l, 2, len(s)))
        rest = s[:, None] * vh
    tensors.append(rest.reshape(rest.shape[0], 2, 1))
    return MPS(tensors, ortho_center=n - 1, max_bond=max_bond)


def ising_mpo(n: int, J: float, hx: float, hz: float) -> MPO:
    """Bond-3 MPO of ``-J sum Z_i Z_{i+1} - hx sum X_i - hz sum Z_i`` (open chain)."""
    if n < 2:
        raise ValidationError(f"the Ising chain needs n >= 2 sites, got {n}")
    local = -hx * _X - hz * _Z
    w = np.zeros((3, 2, 2, 3), dtype=DTYPE)
    w[0, :, :, 0] = _I2
    w[0, :, :, 1] = _Z
    w[0, :, :, 2] = local
    w[1, :, :, 2] = -J * _Z
    w[2, :, :, 2] = _I2
    tensors = [w[0:1]] + [w.copy() for _ in range(n - 2)] + [w[:, :, :, 2:3]]
    return MPO(tensors, hermitian=True, max_bond=3)


def identity_mpo(n: int) -> MPO:
    return MPO([_I2.reshape(1, 2, 2, 1).copy() for _ in range(n)], hermitian=True, max_bond=1)


# --------------------------------------------------------------------------
# contractions


def overlap(a: MPS, b: MPS) -> complex:
    """``<a|b>`` (``a`` is conjugated)."""
    if a.n != b.n:
        raise ValidationError(f"overlap of states with n={a.n} and n={b.n}")
    env = np.ones((1, 1), dtype=DTYPE)
    for ta, tb in zip(a.tensors, b.tensors):
        env = np.tensordot(env, tb, axes=(1, 0))  # (a, s, b')
        env = np.tensordot(ta.conj(), env, axes=([0, 1], [0, 1]))  # (a', b')
    return complex(env[0, 0])


def _check_sizes(m: MPO, s: MPS) -> None:
    if m.n != s.n:
        raise ValidationError(f"operator has n={m.n} but state has n={s.n}")


def _zipup(
    w_tensors: Sequence[np.ndarray],
    b_tensors: Sequence[np.ndarray],
    max_bond: int | None,
    cutoff: float,
) -> list[np.ndarray]:
    """Contract operator tensors ``(w, t, s, w')`` onto ``(b, s, p, b')`` left to right.

    Returns tensors ``(a, t, p, a')`` truncated on the fly; the final tensor
    absorbs the remainder so the result is left-canonical up to the last site.
    """
    carry = np.ones((1, 1, 1), dtype=DTYPE)  # (a, w, b)
    out = []
    n = len(w_tensors)
    for k in range(n):
        w, b = w_tensors[k], b_tensors[k]
        t = np.tensordot(carry, w, axes=(1, 0))  # (a, b, t, s, w')
        t = np.tensordot(t, b, axes=([1, 3], [0, 1]))  # (a, t, w', p, b')
        a_dim, t_dim, wr, p_dim, br = t.shape
        t = t.transpose(0, 1, 3, 2, 4)  # (a, t, p, w', b')
        if k == n - 1:
            out.append(t.reshape(a_dim, t_dim, p_dim, wr * br))
            break
        u, sv, vh, _ = truncated_svd(t.reshape(a_dim * t_dim * p_dim, wr * br), max_bond, cutoff)
        out.append(u.reshape(a_dim, t_dim, p_dim, len(sv)))
        carry = (sv[:, None] * vh).reshape(len(sv), wr, br)
    return out


def apply_mpo(
    m: MPO, s: MPS, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF
) -> MPS:
    """Compressed ``M|s>`` via zip-up followed by a canonical truncation sweep."""
    _check_sizes(m, s)
    src = s.canonical(0)
    b_tensors = [t[:, :, None, :] for t in src.tensors]
    zip_cap = None if max_bond is None else 2 * max_bond
    raw = _zipup(m.tensors, b_tensors, zip_cap, 0.1 * cutoff)
    chain = [t.reshape(t.shape[0], 2, t.shape[3]) for t in raw]
    chain, disc = _compress_chain(chain, max_bond, cutoff)
    return MPS(chain, ortho_center=0, max_bond=max_bond, discarded_weight=float(sum(disc)))


def compress(s: MPS, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF) -> MPS:
    """Canonical-form SVD truncation of ``s``; the result has centre 0."""
    chain, disc = _compress_chain(list(s.tensors), max_bond, cutoff)
    return MPS(chain, ortho_center=0, max_bond=max_bond, discarded_weight=float(sum(disc)))


def mpo_expectation_raw(s: MPS, m: MPO, bra: MPS | None = None) -> complex:
    """``<bra|M|s>`` without normalisation (``bra`` defaults to ``s``)."""
    _check_sizes(m, s)
    bra = s if bra is None else bra
    env = np.ones((1, 1, 1), dtype=DTYPE)  # (a, w, b)
    for ta, w, tb in zip(bra.tensors, m.tensors, s.tensors):
        env = np.tensordot(env, tb, axes=(2, 0))  # (a, w, s, b')
        env = np.tensordot(env, w, axes=([1, 2], [0, 2]))  # (a, b', t, w')
        env = np.tensordot(ta.conj(), env, axes=([0, 1], [0, 2]))  # (a', b', w')
        env = env.transpose(0, 2, 1)
    return complex(env[0, 0, 0])


def expectation(s: MPS, m: MPO, tol: float = 1e-10) -> float:
    """``<s|M|s> / <s|s>`` for a Hermitian MPO."""
    if not m.hermitian:
        raise ValidationError("expectation requires a Hermitian-flagged MPO")
    value = mpo_expectation_raw(s, m) / overlap(s, s)
    if abs(value.imag) > tol * max(1.0, abs(value.real)):
        raise NumericalError(f"expectation has imaginary residue {value.imag:.3e}")
    return float(value.real)


def mpo_square(m: MPO, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF) -> MPO:
    """Compressed MPO of ``M @ M``; ``discarded`` holds per-bond truncated weight."""
    if not m.hermitian:
        raise ValidationError("mpo_square requires a Hermitian-flagged MPO")
    zip_cap = None if max_bond is None else 2 * max_bond
    raw = _zipup(m.tensors, m.tensors, zip_cap, 0.1 * cutoff)
    sq = MPO(raw, hermitian=True)
    return sq.compressed(max_bond, cutoff)


def mps_add(a: MPS, b: MPS, ca: complex = 1.0, cb: complex = 1.0) -> MPS:
    """Uncompressed MPS of ``ca|a> + cb|b>`` (bond dims add)."""
    if a.n != b.n:
        raise ValidationError("cannot add states of different size")
    n = a.n
    out = []
    for k, (ta, tb) in enumerate(zip(a.tensors, b.tensors)):
        if k == 0:
            ta = ta * ca
            tb = tb * cb
        la, _, ra = ta.shape
        lb, _, rb = tb.shape
        if n == 1:
            out.append(ta + tb)
        elif k == 0:
            out.append(np.concatenate([ta, tb], axis=2))
        elif k == n - 1:
            out.append(np.concatenate([ta, tb], axis=0))
        else:
            t = np.zeros((la + lb, 2, ra + rb), dtype=DTYPE)
            t[:la, :, :ra] = ta
            t[la:, :, ra:] = tb
            out.append(t)
    return MPS(out)


def project_out_zero(
    s: MPS, max_bond: int | None = None, cutoff: float = DEFAULT_CUTOFF
) -> tuple[MPS, float]:
    """Normalised ``(1 - |0><0|)|s>`` and the removed weight ``|<0|s>|^2``."""
    zero = zero_state(s.n)
    s = s.normalized()
    amp = overlap(zero, s)
    removed = float(abs(amp) ** 2)
    if removed > 1.0 - 1e-12:
        raise DegenerateInputError(
            f"state is |0...0> up to weight {1 - removed:.2e}; nothing left after projection"
        )
    if removed == 0.0:
        return s, 0.0
    out = compress(mps_add(s, zero, 1.0, -amp), max_bond, cutoff)
    # Truncation can leak a tiny |0> component back in; remove it exactly.
    for _ in range(3):
        leak = overlap(zero, out)
        if abs(leak) <= 1e-14:
            break
        out = compress(mps_add(out, zero, 1.0, -leak), max_bond, cutoff)
    return out.normalized(), removed


# --------------------------------------------------------------------------
# sampling


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(batch)])))


def sample_shots(s: MPS, n_shots: int, seed: int, batch_size: int = SAMPLE_BATCH) -> np.ndarray:
    """Ordered shots ``(n_shots, n)`` drawn by sequential conditional sampling.

    Batch ``b`` draws its uniforms from an independent Philox stream keyed by
    ``(seed, b)`` and always consumes a full ``(batch_size, n)`` block, so the
    first ``N`` shots are identical for every ``n_shots >= N``.
    """
    if n_shots < 1:
        raise ValidationError("n_shots must be positive")
    nrm = s.norm()
    if abs(nrm - 1.0) > 1e-6:
        raise ValidationError(f"sampling needs a normalised state, norm is {nrm:.8f}")
    rc = s.canonical(0)
    n = s.n
    shots = np.empty((n_shots, n), dtype=np.uint8)
    for b, start in enumerate(range(0, n_shots, batch_size)):
        stop = min(start + batch_size, n_shots)
        u = _batch_rng(seed, b).random((batch_size, n))[: stop - start]
        shots[start:stop] = _sample_block(rc.tensors, u)
    return shots


def _sample_block(tensors: Sequence[np.ndarray], u: np.ndarray) -> np.ndarray:
    m, n = u.shape
    out = np.empty((m, n), dtype=np.uint8)
    env = np.ones((m, 1), dtype=DTYPE)
    for k, t in enumerate(tensors):
        v0 = env @ t[:, 0, :]
        v1 = env @ t[:, 1, :]
        p0 = np.einsum("ij,ij->i", v0.conj(), v0).real
        p1 = np.einsum("ij,ij->i", v1.conj(), v1).real
        tot = p0 + p1
        pick = u[:, k] * tot >= p0
        out[:, k] = pick
        chosen = np.where(pick[:, None], v1, v0)
        pc = np.where(pick, p1, p0)
        env = chosen / np.sqrt(pc)[:, None]
    return out


def sample(s: MPS, n_shots: int, seed: int) -> SampleCounts:
    """Draw ``n_shots`` computational-basis measurements of ``s``."""
    return SampleCounts.from_shots(sample_shots(s, n_shots, seed))

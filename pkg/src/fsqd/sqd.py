"""Sample-based subspace diagonalization: subspace selection, projected
Hamiltonians, subspace ground states, variances and error analysis."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .errors import NumericalError, ValidationError
from .mps import MPO, MPS, SampleCounts, bits_to_int, bits_to_str, sample_shots
from .tensor import eigh

DENSE_EIGH_CAP = 1000
RESULT_COLUMNS = ["N_S", "N_R", "E_sqd", "epsilon", "variance", "seed", "sampler_id", "hamiltonian_id"]


@dataclass(frozen=True)
class SampledSubspace:
    """Selected basis bitstrings, most frequent first."""

    bits: np.ndarray
    source_shots: int = 0
    force_include_zero: bool = False

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValidationError("subspace bits must be a (N_R, n) array")
        if len({b.tobytes() for b in bits}) != len(bits):
            raise ValidationError("subspace bitstrings must be distinct")
        object.__setattr__(self, "bits", bits)

    @property
    def n(self) -> int:
        return self.bits.shape[1]

    def __len__(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def from_strings(cls, strings: Sequence[str], **kw) -> "SampledSubspace":
        from .mps import str_to_bits

        return cls(np.array([str_to_bits(s) for s in strings], dtype=np.uint8), **kw)

    def strings(self) -> list[str]:
        return [bits_to_str(b) for b in self.bits]


@dataclass(frozen=True)
class TruncatedHamiltonian:
    matrix: np.ndarray
    basis: SampledSubspace


@dataclass
class SqdResult:
    n_shots: int
    n_r: int
    energy: float
    epsilon: float
    variance: float | None = None
    ground_vector: np.ndarray | None = None
    basis: SampledSubspace | None = None
    seed: int = 0

    def record(self, sampler_id: str = "", hamiltonian_id: str = "") -> dict:
        return {
            "N_S": self.n_shots,
            "N_R": self.n_r,
            "E_sqd": self.energy,
            "epsilon": self.epsilon,
            "variance": self.variance,
            "seed": self.seed,
            "sampler_id": sampler_id,
            "hamiltonian_id": hamiltonian_id,
        }


@dataclass(frozen=True)
class VarianceFit:
    points: tuple[tuple[float, float], ...]
    order: int
    epsilon0: float
    stderr: float
    coefficients: tuple[float, ...] = field(default=())


# --------------------------------------------------------------------------
# subspace selection


def select_subspace(counts: SampleCounts, n_r: int, force_include_zero: bool = False) -> SampledSubspace:
    """The ``n_r`` most frequent bitstrings; ties go to the smaller integer.

    With ``force_include_zero`` the all-zero string is placed first (if it was
    not selected already) and the least frequent selection is dropped so that
    the size stays at most ``n_r``.
    """
    if len(counts) == 0:
        raise ValidationError("cannot select a subspace from empty counts")
    if n_r < 1:
        raise ValidationError("N_R cap must be positive")
    # counts.bits is sorted by integer value, so a stable sort on -count
    # realises the (count desc, integer asc) order.
    order = np.argsort(-counts.counts, kind="stable")
    chosen = counts.bits[order[:n_r]]
    if force_include_zero:
        is_zero = ~chosen.any(axis=1)
        if not is_zero.any():
            zero = np.zeros((1, counts.n), dtype=np.uint8)
            chosen = np.concatenate([zero, chosen[: n_r - 1]], axis=0)
    return SampledSubspace(chosen, counts.total_shots, force_include_zero)


# --------------------------------------------------------------------------
# matrix elements between product states


def _prefix_trie(bits: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
    """Trie over the rows of ``bits`` read left to right.

    Returns per-depth ``parents`` and ``branch_bits`` arrays (depth ``k`` nodes
    are the distinct length-``k`` prefixes) and the leaf id of every row.
    """
    m, depth = bits.shape
    codes = np.zeros(m, dtype=np.int64)
    prev_ids = np.zeros(m, dtype=np.int64)
    parents, branch = [], []
    for k in range(depth):
        codes = codes * 2 + bits[:, k]
        uniq, first, ids = np.unique(codes, return_index=True, return_inverse=True)
        parents.append(prev_ids[first])
        branch.append((uniq & 1).astype(np.uint8))
        prev_ids = ids
    return parents, branch, prev_ids


def _walk(parents, branch, mats: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Propagate boundary vectors down a trie; ``mats[k][b]`` is applied on branch ``b``."""
    vec = np.ones((1, 1), dtype=complex)
    for par, br, (m0, m1) in zip(parents, branch, mats):
        new = np.empty((len(par), m0.shape[1]), dtype=complex)
        for b, mb in ((0, m0), (1, m1)):
            mask = br == b
            if mask.any():
                new[mask] = vec[par[mask]] @ mb
        vec = new
    return vec


def mpo_matrix_elements(m: MPO, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """``A[i, j] = <rows_i| M |cols_j>`` for computational basis states.

    The chain is cut in the middle. Left boundary vectors are shared across
    all row prefixes through a trie and reused for every column with the
    same left half; right vectors are built per column over the row-suffix
    trie. Element ``(i, j)`` is the dot product of the two at the cut.
    """
    rows = np.asarray(rows, dtype=np.uint8)
    cols = np.asarray(cols, dtype=np.uint8)
    n = m.n
    if rows.shape[1] != n or cols.shape[1] != n:
        raise ValidationError("bitstring length does not match the operator")
    if n > 124:
        raise ValidationError("matrix elements support n <= 124")
    c = max(1, n // 2)
    ws = m.tensors
    lpar, lbr, lid = _prefix_trie(rows[:, :c])
    rpar, rbr, rid = _prefix_trie(rows[:, c:][:, ::-1])
    out = np.empty((rows.shape[0], cols.shape[0]), dtype=complex)

    left_codes = np.array([bits_to_int(b) for b in cols[:, :c]], dtype=object)
    groups: dict[int, list[int]] = {}
    for j, code in enumerate(left_codes):
        groups.setdefault(code, []).append(j)
    for js in groups.values():
        pj = cols[js[0], :c]
        lmats = [(ws[k][:, 0, pj[k], :], ws[k][:, 1, pj[k], :]) for k in range(c)]
        left = _walk(lpar, lbr, lmats)[lid]
        for j in js:
            sj = cols[j]
            rmats = [(ws[k][:, 0, sj[k], :].T, ws[k][:, 1, sj[k], :].T) for k in range(n - 1, c - 1, -1)]
            right = _walk(rpar, rbr, rmats)[rid]
            out[:, j] = np.einsum("ij,ij->i", left, right)
    return out


def truncated_hamiltonian(h: MPO, basis: SampledSubspace) -> TruncatedHamiltonian:
    """Projected matrix ``<x_I|H|x_J>`` symmetrised to ``(A + A^dag) / 2``."""
    if not h.hermitian:
        raise ValidationError("truncated_hamiltonian requires a Hermitian-flagged MPO")
    a = mpo_matrix_elements(h, basis.bits, basis.bits)
    return TruncatedHamiltonian(0.5 * (a + a.conj().T), basis)


class SubspaceMatrixCache:
    """Incrementally grown projected matrix for nested or overlapping subspaces."""

    def __init__(self, h: MPO):
        if not h.hermitian:
            raise ValidationError("SubspaceMatrixCache requires a Hermitian-flagged MPO")
        self.h = h
        self.index: dict[bytes, int] = {}
        self.bits = np.zeros((0, h.n), dtype=np.uint8)
        self.matrix = np.zeros((0, 0), dtype=complex)

    def _extend(self, new_bits: np.ndarray) -> None:
        old = len(self.index)
        allbits = np.concatenate([self.bits, new_bits], axis=0)
        cols = mpo_matrix_elements(self.h, allbits, new_bits)  # (old + k, k)
        k = new_bits.shape[0]
        mat = np.empty((old + k, old + k), dtype=complex)
        mat[:old, :old] = self.matrix
        mat[:, old:] = cols
        mat[old:, :old] = cols[:old].conj().T
        self.matrix = mat
        self.bits = allbits
        for i, b in enumerate(new_bits):
            self.index[b.tobytes()] = old + i

    def __call__(self, basis: SampledSubspace) -> TruncatedHamiltonian:
        keys = [b.tobytes() for b in basis.bits]
        missing = [i for i, key in enumerate(keys) if key not in self.index]
        if missing:
            self._extend(basis.bits[missing])
        idx = np.array([self.index[key] for key in keys], dtype=np.int64)
        a = self.matrix[np.ix_(idx, idx)]
        return TruncatedHamiltonian(0.5 * (a + a.conj().T), basis)


# --------------------------------------------------------------------------
# diagonalisation and variance


def subspace_ground(th: TruncatedHamiltonian | np.ndarray, dense_cap: int = DENSE_EIGH_CAP) -> tuple[float, np.ndarray]:
    """Lowest eigenpair; dense ``eigh`` up to ``dense_cap``, ARPACK Lanczos above."""
    a = th.matrix if isinstance(th, TruncatedHamiltonian) else np.asarray(th)
    dim = a.shape[0]
    if dim <= dense_cap:
        w, v = eigh(a)
        e, vec = float(w[0]), v[:, 0]
    else:
        v0 = np.ones(dim, dtype=a.dtype) / np.sqrt(dim)
        w, v = spla.eigsh(a, k=1, which="SA", v0=v0, tol=1e-13, maxiter=20 * dim)
        e, vec = float(w[0]), v[:, 0]
    resid = np.linalg.norm(a @ vec - e * vec)
    if resid > 1e-8 * max(1.0, abs(e)):
        raise NumericalError(f"subspace eigenvector residual {resid:.2e} exceeds tolerance")
    return e, vec


def _clip_variance(var: float) -> float:
    if var < -1e-6:
        raise NumericalError(f"variance {var:.3e} is negative beyond tolerance; increase the H^2 bond cap")
    if var < -1e-9:
        warnings.warn(f"negative variance {var:.3e} clipped to -1e-9", RuntimeWarning)
        return -1e-9
    return var


def energy_variance(
    h: MPO,
    h_sq: MPO,
    basis: SampledSubspace,
    nu0: np.ndarray,
    h_matrix: np.ndarray | None = None,
) -> float:
    """``<nu|H^2|nu> - <nu|H|nu>^2`` for ``nu = sum_I nu_I |x_I>`` via MPO matrix elements."""
    nu0 = np.asarray(nu0, dtype=complex)
    if abs(np.linalg.norm(nu0) - 1.0) > 1e-8:
        raise ValidationError("nu0 must be normalised")
    if h_matrix is None:
        h_matrix = mpo_matrix_elements(h, basis.bits, basis.bits)
    first = np.vdot(nu0, h_matrix @ nu0).real
    second = np.vdot(nu0, mpo_matrix_elements(h_sq, basis.bits, basis.bits) @ nu0).real
    return _clip_variance(float(second - first**2))


def subspace_vector(basis: SampledSubspace, nu0: np.ndarray) -> np.ndarray:
    """Dense statevector ``sum_I nu_I |x_I>`` (n <= 24)."""
    n = basis.n
    if n > 24:
        raise ValidationError("dense subspace vectors are limited to n <= 24")
    v = np.zeros(2**n, dtype=complex)
    idx = np.array([bits_to_int(b) for b in basis.bits], dtype=np.int64)
    v[idx] = nu0
    return v


def statevector_variance(
    basis: SampledSubspace,
    nu0: np.ndarray,
    matvec: Callable[[np.ndarray], np.ndarray],
    transform: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Variance of ``H`` (or of ``U^dag H U`` when ``transform`` is ``U``) in ``nu``.

    ``Var = ||H U nu||^2 - <U nu|H|U nu>^2``, evaluated exactly on the full
    statevector.
    """
    v = subspace_vector(basis, nu0)
    if transform is not None:
        v = transform(v)
    hv = matvec(v)
    first = np.vdot(v, hv).real
    return _clip_variance(float(np.vdot(hv, hv).real - first**2))


# --------------------------------------------------------------------------
# protocol


def _point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1, np.uint64)[0])


def run_protocol(
    h: MPO,
    sampler: MPS,
    shot_schedule: Sequence[int],
    n_r_cap: int,
    seed: int,
    force_include_zero: bool = False,
    e_exact: float | None = None,
    cumulative: bool = True,
    variance: Callable[[SampledSubspace, np.ndarray], float] | None = None,
    dense_cap: int = DENSE_EIGH_CAP,
    anchor_energy: float | None = None,
) -> list[SqdResult]:
    """Run (F)SQD for each number of shots in ``shot_schedule``.

    With ``cumulative`` the shots of a schedule point are a prefix of one
    stream, so larger ``N_S`` reuse the shots of smaller ones; otherwise each
    point draws an independent stream. ``epsilon`` is ``E_sqd - e_exact``
    (NaN when ``e_exact`` is not given). If ``anchor_energy`` is given (the
    energy of ``|0...0>`` under ``h``), every energy is checked not to exceed it.
    """
    schedule = [int(s) for s in shot_schedule]
    if not schedule or any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 1:
        raise ValidationError("shot schedule must be positive and strictly increasing")
    if abs(sampler.norm() - 1.0) > 1e-6:
        raise ValidationError("sampler must be normalised")
    cache = SubspaceMatrixCache(h)
    stream = sample_shots(sampler, schedule[-1], seed) if cumulative else None
    results = []
    for i, n_s in enumerate(schedule):
        shots = stream[:n_s] if cumulative else sample_shots(sampler, n_s, _point_seed(seed, i))
        counts = SampleCounts.from_shots(shots)
        basis = select_subspace(counts, n_r_cap, force_include_zero)
        th = cache(basis)
        e0, nu0 = subspace_ground(th, dense_cap)
        if anchor_energy is not None and e0 > anchor_energy + 1e-9 * max(1.0, abs(anchor_energy)):
            raise NumericalError(
                f"subspace energy {e0:.12f} exceeds the |0...0> anchor energy {anchor_energy:.12f}"
            )
        var = variance(basis, nu0) if variance is not None else None
        eps = e0 - e_exact if e_exact is not None else float("nan")
        results.append(SqdResult(n_s, len(basis), e0, eps, var, nu0, basis, seed))
    return results


# --------------------------------------------------------------------------
# analysis


def fit_decay_exponent(
    series: Iterable[tuple[float, float]], n: int, min_shots: float = 1000
) -> tuple[float, float]:
    """Fit ``eps / n ~ N_S^(-tau)`` by least squares in log-log; returns ``(tau, stderr)``."""
    pts = [(float(s), float(e)) for s, e in series if s >= min_shots and e > 0]
    if len(pts) < 3:
        raise ValidationError(f"need at least 3 points with N_S >= {min_shots} and eps > 0, got {len(pts)}")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] / n for p in pts])
    design = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = len(pts) - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return float(-coef[0]), float(np.sqrt(max(cov[0, 0], 0.0)))


def variance_extrapolate(points: Iterable[tuple[float, float]], order: int = 2) -> VarianceFit:
    """Polynomial least-squares fit of ``eps`` against variance, evaluated at zero variance."""
    if order not in (1, 2):
        raise ValidationError("order must be 1 or 2")
    pts = tuple((float(v), float(e)) for v, e in points)
    if len(pts) < order + 2:
        raise ValidationError(f"order-{order} extrapolation needs at least {order + 2} points")
    var = np.array([p[0] for p in pts])
    eps = np.array([p[1] for p in pts])
    design = np.vander(var, order + 1, increasing=True)
    if np.linalg.matrix_rank(design) < order + 1:
        raise ValidationError("rank-deficient design: variances are not distinct enough")
    coef, *_ = np.linalg.lstsq(design, eps, rcond=None)
    resid = eps - design @ coef
    dof = len(pts) - (order + 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.pinv(design.T @ design)
    return VarianceFit(pts, order, float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), tuple(coef))


def target_fraction(target: SampledSubspace, runs: Sequence[SampleCounts]) -> tuple[float, float]:
    """Mean and sample standard deviation of the recovered-target fraction over runs."""
    if len(target) == 0:
        raise ValidationError("target subspace is empty")
    if not runs:
        raise ValidationError("need at least one run")
    keys = {b.tobytes() for b in target.bits}
    thetas = []
    for run in runs:
        found = {b.tobytes() for b in run.bits}
        thetas.append(len(keys & found) / len(keys))
    thetas = np.array(thetas)
    std = float(thetas.std(ddof=1)) if len(thetas) > 1 else 0.0
    return float(thetas.mean()), std


# --------------------------------------------------------------------------
# output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def results_csv(results: Sequence[SqdResult], sampler_id: str = "", hamiltonian_id: str = "") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for r in results:
        rec = r.record(sampler_id, hamiltonian_id)
        writer.writerow([_fmt(rec[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


def results_jsonl(results: Sequence[SqdResult], sampler_id: str = "", hamiltonian_id: str = "") -> str:
    return "".join(json.dumps(r.record(sampler_id, hamiltonian_id)) + "\n" for r in results)

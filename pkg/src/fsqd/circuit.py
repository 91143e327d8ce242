"""Brick-wall circuits of two-qubit unitaries and MPS circuit encoding.

Gate matrices act on the pair ``(m1, m2 = m1 + 1)`` with row/column index
``2 * b1 + b2`` (the left site is the more significant bit), matching the
bitstring convention of :mod:`fsqd.mps`.

The encoder maximises ``|<target| U_M ... U_1 |input>|`` by sweeping over the
gates and replacing each one with the unitary that maximises the overlap
with all other gates held fixed. Gates inside one brick-wall sublayer act on
disjoint pairs, so a sublayer is updated in a single left/right environment
sweep over the network ``<bra| G_s |ket>`` where ``ket`` carries the
sublayers before ``s`` applied to the input and ``bra`` carries the adjoints
of the sublayers after ``s`` applied to the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, ValidationError
from .mps import MPO, MPS, _canonicalize, overlap, project_out_zero
from .tensor import DTYPE, svd, truncated_svd

UNITARY_TOL = 1e-10
#: Relative squared weight dropped when caching partially-applied states.
CACHE_CUTOFF = 1e-20


@dataclass(frozen=True)
class TwoQubitGate:
    """A 4x4 unitary acting on the adjacent sites ``(site, site + 1)``."""

    site: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=DTYPE)
        if m.shape != (4, 4):
            raise DimensionError(f"gate matrix must be 4x4, got {m.shape}")
        if self.site < 0:
            raise ValidationError("gate site must be non-negative")
        defect = np.linalg.norm(m.conj().T @ m - np.eye(4))
        if defect > UNITARY_TOL:
            raise ValidationError(f"gate is not unitary: ||U^dag U - I|| = {defect:.2e}")
        object.__setattr__(self, "matrix", m)

    @property
    def sites(self) -> tuple[int, int]:
        return (self.site, self.site + 1)

    def adjoint(self) -> "TwoQubitGate":
        return TwoQubitGate(self.site, self.matrix.conj().T)


def brickwall_sites(n: int, layers: int) -> list[list[int]]:
    """Left sites of the gates in each sublayer: odd pairs then even pairs, per layer."""
    if n < 2:
        raise ValidationError("a brick-wall circuit needs n >= 2")
    odd = list(range(0, n - 1, 2))
    even = list(range(1, n - 1, 2))
    out = []
    for _ in range(layers):
        out.append(odd)
        if even:
            out.append(even)
    return out


@dataclass(frozen=True)
class BrickwallCircuit:
    """Ordered product ``U_M ... U_1`` of gates in brick-wall layout."""

    n: int
    layers: int
    gates: tuple[TwoQubitGate, ...]

    def __post_init__(self):
        gates = tuple(self.gates)
        expected = [s for sub in brickwall_sites(self.n, self.layers) for s in sub]
        if [g.site for g in gates] != expected:
            raise ValidationError(
                f"gate order does not match a {self.layers}-layer brick wall on {self.n} sites"
            )
        object.__setattr__(self, "gates", gates)

    @classmethod
    def identity(cls, n: int, layers: int) -> "BrickwallCircuit":
        eye = np.eye(4, dtype=DTYPE)
        sites = [s for sub in brickwall_sites(n, layers) for s in sub]
        return cls(n, layers, tuple(TwoQubitGate(s, eye) for s in sites))

    @property
    def n_gates(self) -> int:
        return len(self.gates)

    def sublayers(self) -> list[list[TwoQubitGate]]:
        out, pos = [], 0
        for sub in brickwall_sites(self.n, self.layers):
            out.append(list(self.gates[pos : pos + len(sub)]))
            pos += len(sub)
        return out

    def with_gates(self, matrices: Sequence[np.ndarray]) -> "BrickwallCircuit":
        return BrickwallCircuit(
            self.n, self.layers, tuple(TwoQubitGate(g.site, m) for g, m in zip(self.gates, matrices))
        )


@dataclass
class EncodeTrajectory:
    """|f| after every backward sweep plus the |f| after every single gate update."""

    n: int
    fidelities: list[float] = field(default_factory=list)
    update_fidelities: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def infidelity_per_site(self) -> list[float]:
        return [1.0 - f ** (1.0 / self.n) for f in self.fidelities]

    @property
    def iterations(self) -> int:
        return len(self.fidelities) - 1

    @property
    def final_fidelity(self) -> float:
        return self.fidelities[-1]


# --------------------------------------------------------------------------
# applying gates to states


def random_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a complex Gaussian matrix."""
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def _gate_tensor(u: np.ndarray) -> np.ndarray:
    return u.reshape(2, 2, 2, 2)  # (t1, t2, s1, s2)


class _Chain:
    """Mutable working copy of an MPS that tracks its orthogonality centre."""

    def __init__(self, tensors: Sequence[np.ndarray], center: int | None):
        self.ts = list(tensors)
        if center is None:
            self.ts = _canonicalize(self.ts, 0)
            center = 0
        self.center = center
        self.discarded = 0.0

    def move_to(self, k: int) -> None:
        while self.center < k:
            c = self.center
            l, d, r = self.ts[c].shape
            q, rr = np.linalg.qr(self.ts[c].reshape(l * d, r))
            self.ts[c] = q.reshape(l, d, q.shape[1])
            self.ts[c + 1] = np.tensordot(rr, self.ts[c + 1], axes=(1, 0))
            self.center += 1
        while self.center > k:
            c = self.center
            l, d, r = self.ts[c].shape
            q, rr = np.linalg.qr(self.ts[c].reshape(l, d * r).T)
            self.ts[c] = q.T.reshape(q.shape[1], d, r)
            self.ts[c - 1] = np.tensordot(self.ts[c - 1], rr.T, axes=(2, 0))
            self.center -= 1

    def apply(self, site: int, u: np.ndarray, max_bond: int | None, cutoff: float) -> None:
        """Apply a gate with the centre on one of its sites and re-split by SVD."""
        left_to_right = self.center <= site
        self.move_to(site if left_to_right else site + 1)
        a, b = self.ts[site], self.ts[site + 1]
        theta = np.tensordot(a, b, axes=(2, 0))  # (l, s1, s2, r)
        theta = np.tensordot(_gate_tensor(u), theta, axes=([2, 3], [1, 2]))  # (t1, t2, l, r)
        theta = theta.transpose(2, 0, 1, 3)
        l, r = theta.shape[0], theta.shape[3]
        uu, s, vh, w = truncated_svd(theta.reshape(2 * l, 2 * r), max_bond, cutoff)
        self.discarded += w
        if left_to_right:
            self.ts[site] = uu.reshape(l, 2, len(s))
            self.ts[site + 1] = (s[:, None] * vh).reshape(len(s), 2, r)
            self.center = site + 1
        else:
            self.ts[site] = (uu * s).reshape(l, 2, len(s))
            self.ts[site + 1] = vh.reshape(len(s), 2, r)
            self.center = site

    def to_mps(self, max_bond: int | None) -> MPS:
        return MPS(self.ts, ortho_center=self.center, max_bond=max_bond, discarded_weight=self.discarded)


def apply_gates(
    gates: Sequence[TwoQubitGate],
    s: MPS,
    max_bond: int | None = None,
    cutoff: float = CACHE_CUTOFF,
    adjoint: bool = False,
) -> MPS:
    """Apply ``gates`` in list order (or their adjoints in reverse order)."""
    chain = _Chain(s.tensors, s.ortho_center)
    seq = reversed(gates) if adjoint else gates
    for g in seq:
        if g.site + 1 >= s.n:
            raise ValidationError(f"gate on sites {g.sites} does not fit n={s.n}")
        chain.apply(g.site, g.matrix.conj().T if adjoint else g.matrix, max_bond, cutoff)
    return chain.to_mps(max_bond)


def apply_circuit(
    c: BrickwallCircuit,
    s: MPS,
    adjoint: bool = False,
    max_bond: int | None = None,
    cutoff: float = CACHE_CUTOFF,
) -> MPS:
    """``C|s>`` or ``C^dag|s>`` with per-gate SVD re-truncation to ``max_bond``."""
    if c.n != s.n:
        raise ValidationError(f"circuit has n={c.n} but state has n={s.n}")
    return apply_gates(c.gates, s, max_bond, cutoff, adjoint)


def conjugate_mpo(
    m: MPO, c: BrickwallCircuit, max_bond: int | None = 50, cutoff: float = 1e-12
) -> tuple[MPO, list[float]]:
    """MPO of ``C^dag M C`` and the truncated weight accumulated per sublayer.

    Gates are absorbed from the last one inwards (``M <- U_m^dag M U_m``),
    each followed by a two-site SVD split capped at ``max_bond``.
    """
    if c.n != m.n:
        raise ValidationError(f"circuit has n={c.n} but operator has n={m.n}")
    # An MPO is handled as a chain with physical dimension 4 = (out, in).
    chain = _Chain([t.reshape(t.shape[0], 4, t.shape[3]) for t in m.tensors], None)
    per_layer = []
    for sub in reversed(c.sublayers()):
        before = chain.discarded
        for g in reversed(sub):
            k = g.site
            left_to_right = chain.center <= k
            chain.move_to(k if left_to_right else k + 1)
            a = chain.ts[k].reshape(-1, 2, 2, chain.ts[k].shape[2])
            b = chain.ts[k + 1].reshape(chain.ts[k + 1].shape[0], 2, 2, -1)
            theta = np.tensordot(a, b, axes=(3, 0))  # (l, t1, s1, t2, s2, r)
            u = _gate_tensor(g.matrix)
            ud = _gate_tensor(g.matrix.conj().T)
            theta = np.tensordot(ud, theta, axes=([2, 3], [1, 3]))  # (t1, t2, l, s1, s2, r)
            theta = np.tensordot(theta, u, axes=([3, 4], [0, 1]))  # (t1, t2, l, r, s1, s2)
            theta = theta.transpose(2, 0, 4, 1, 5, 3)  # (l, t1, s1, t2, s2, r)
            l, r = theta.shape[0], theta.shape[5]
            uu, s, vh, w = truncated_svd(theta.reshape(4 * l, 4 * r), max_bond, cutoff)
            chain.discarded += w
            if left_to_right:
                chain.ts[k] = uu.reshape(l, 4, len(s))
                chain.ts[k + 1] = (s[:, None] * vh).reshape(len(s), 4, r)
                chain.center = k + 1
            else:
                chain.ts[k] = (uu * s).reshape(l, 4, len(s))
                chain.ts[k + 1] = vh.reshape(len(s), 4, r)
                chain.center = k
        per_layer.append(chain.discarded - before)
    ts = [t.reshape(t.shape[0], 2, 2, t.shape[2]) for t in chain.ts]
    return MPO(ts, hermitian=m.hermitian, max_bond=max_bond), per_layer[::-1]


# --------------------------------------------------------------------------
# local optimisation


def _env_left(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    t = np.tensordot(env, ket, axes=(1, 0))  # (a, s, b')
    return np.tensordot(bra.conj(), t, axes=([0, 1], [0, 1]))  # (a', b')


def _env_right(env: np.ndarray, bra: np.ndarray, ket: np.ndarray) -> np.ndarray:
    t = np.tensordot(ket, env, axes=(2, 1))  # (b, s, a')
    return np.tensordot(bra.conj(), t, axes=([1, 2], [1, 2]))  # (a, b)


def _pair_env(left, right, bra_pair, ket_pair) -> np.ndarray:
    """4x4 ``F[s, t] = sum ket[.., s, ..] conj(bra[.., t, ..])`` with environments."""
    x = np.tensordot(left, ket_pair, axes=(1, 0))  # (a, s1, s2, b')
    x = np.tensordot(x, right, axes=(3, 1))  # (a, s1, s2, a')
    f = np.tensordot(x, bra_pair.conj(), axes=([0, 3], [0, 3]))  # (s1, s2, t1, t2)
    return f.reshape(4, 4)


def _pair(ts: Sequence[np.ndarray], k: int) -> np.ndarray:
    return np.tensordot(ts[k], ts[k + 1], axes=(2, 0))


def _apply_pair(u: np.ndarray, pair: np.ndarray) -> np.ndarray:
    t = np.tensordot(_gate_tensor(u), pair, axes=([2, 3], [1, 2]))  # (t1, t2, l, r)
    return t.transpose(2, 0, 1, 3)


def fidelity_tensor(psi_left: MPS, psi_right: MPS, gate_site: int | tuple[int, int]) -> np.ndarray:
    """Environment of a gate in ``<psi_right| U |psi_left>`` as a 4x4 matrix.

    ``F[s, t]`` has the ket index ``s`` as row and the bra index ``t`` as
    column, so that ``<psi_right| U |psi_left> = trace(F @ U)``.
    """
    k = gate_site[0] if isinstance(gate_site, tuple) else int(gate_site)
    if isinstance(gate_site, tuple) and gate_site[1] != k + 1:
        raise ValidationError("gate sites must be adjacent")
    if psi_left.n != psi_right.n:
        raise ValidationError("states have different sizes")
    n = psi_left.n
    if not 0 <= k < n - 1:
        raise ValidationError(f"gate site {k} out of range")
    left = np.ones((1, 1), dtype=DTYPE)
    for j in range(k):
        left = _env_left(left, psi_right.tensors[j], psi_left.tensors[j])
    right = np.ones((1, 1), dtype=DTYPE)
    for j in range(n - 1, k + 1, -1):
        right = _env_right(right, psi_right.tensors[j], psi_left.tensors[j])
    return _pair_env(left, right, _pair(psi_right.tensors, k), _pair(psi_left.tensors, k))


def optimal_local_unitary(F: np.ndarray) -> np.ndarray:
    """Unitary ``U`` maximising ``|trace(F @ U)|``: with ``F = X D Y`` it is ``Y^dag X^dag``."""
    F = np.asarray(F, dtype=DTYPE)
    if F.shape != (4, 4):
        raise DimensionError(f"fidelity tensor must be 4x4, got {F.shape}")
    res = svd(F)
    return res.right_unitary.conj().T @ res.left_unitary.conj().T


def _optimize_sublayer(
    sites: list[int],
    mats: list[np.ndarray],
    ket: Sequence[np.ndarray],
    bra: Sequence[np.ndarray],
    forward: bool,
    log: list[float],
) -> None:
    """Sequentially re-optimise the disjoint gates of one sublayer in place."""
    n = len(ket)
    gate_at = {k: i for i, k in enumerate(sites)}
    # Blocks are single sites or gate pairs, in left-to-right order.
    blocks: list[tuple[int, int | None]] = []
    k = 0
    while k < n:
        if k in gate_at:
            blocks.append((k, gate_at[k]))
            k += 2
        else:
            blocks.append((k, None))
            k += 1

    def absorb_left(env, block):
        k, gi = block
        if gi is None:
            return _env_left(env, bra[k], ket[k])
        kp = _apply_pair(mats[gi], _pair(ket, k))
        x = np.tensordot(env, kp, axes=(1, 0))
        return np.tensordot(_pair(bra, k).conj(), x, axes=([0, 1, 2], [0, 1, 2]))

    def absorb_right(env, block):
        k, gi = block
        if gi is None:
            return _env_right(env, bra[k], ket[k])
        kp = _apply_pair(mats[gi], _pair(ket, k))
        x = np.tensordot(kp, env, axes=(3, 1))
        return np.tensordot(_pair(bra, k).conj(), x, axes=([1, 2, 3], [1, 2, 3]))

    nb = len(blocks)
    one = np.ones((1, 1), dtype=DTYPE)
    order = range(nb) if forward else range(nb - 1, -1, -1)
    # Environments on the far side hold the not-yet-updated gates.
    far = [one] * (nb + 1)
    if forward:
        for i in range(nb - 1, -1, -1):
            far[i] = absorb_right(far[i + 1], blocks[i])
    else:
        for i in range(nb):
            far[i + 1] = absorb_left(far[i], blocks[i])
    near = one
    for i in order:
        k, gi = blocks[i]
        if gi is not None:
            left, right = (near, far[i + 1]) if forward else (far[i], near)
            F = _pair_env(left, right, _pair(bra, k), _pair(ket, k))
            mats[gi] = optimal_local_unitary(F)
            log.append(float(abs(np.trace(F @ mats[gi]))))
        near = absorb_left(near, blocks[i]) if forward else absorb_right(near, blocks[i])


def encode(
    target: MPS,
    input_state: MPS | None = None,
    layers: int = 1,
    n_iters: int = 2000,
    tol: float = 1e-12,
    cache_max_bond: int | None = None,
    cache_cutoff: float = CACHE_CUTOFF,
    initial: BrickwallCircuit | None = None,
    seed: int = 0,
) -> tuple[BrickwallCircuit, EncodeTrajectory]:
    """Optimise a brick-wall circuit ``C`` so that ``C|input> ~ |target>``.

    Gates start as identities. Each iteration is a forward sweep over all
    gates followed by a backward sweep; the run stops after ``n_iters``
    iterations or once |f| improves by less than ``tol`` over an iteration.
    ``fidelities[0]`` is the overlap of the initial circuit.

    If the starting circuit has vanishing overlap every fidelity tensor is
    zero and no update can move; in that case the gates are redrawn as
    Haar-random unitaries from ``seed`` before sweeping.
    """
    if layers < 1:
        raise ValidationError("layers must be >= 1")
    n = target.n
    if input_state is None:
        from .mps import zero_state

        input_state = zero_state(n)
    if input_state.n != n:
        raise ValidationError("target and input have different sizes")
    for name, st in (("target", target), ("input", input_state)):
        if abs(st.norm() - 1.0) > 1e-8:
            raise ValidationError(f"{name} state must be normalised")

    circ = initial or BrickwallCircuit.identity(n, layers)
    subs = brickwall_sites(n, layers)
    mats: list[list[np.ndarray]] = [[g.matrix for g in sub] for sub in circ.sublayers()]
    n_sub = len(subs)

    def gates_of(s: int) -> list[TwoQubitGate]:
        return [TwoQubitGate(k, m) for k, m in zip(subs[s], mats[s])]

    def step_ket(state: MPS, s: int) -> MPS:
        return apply_gates(gates_of(s), state, cache_max_bond, cache_cutoff)

    def step_bra(state: MPS, s: int) -> MPS:
        return apply_gates(gates_of(s), state, cache_max_bond, cache_cutoff, adjoint=True)

    def current_fidelity() -> float:
        gates = [g for s in range(n_sub) for g in gates_of(s)]
        full = apply_gates(gates, input_state, cache_max_bond, cache_cutoff)
        return float(abs(overlap(target, full)))

    traj = EncodeTrajectory(n)
    f0 = current_fidelity()
    if f0 > 1.0 - 1e-14:
        traj.fidelities.append(f0)
        traj.converged = True
        return circ, traj
    if f0 < 1e-12:
        rng = np.random.Generator(np.random.Philox(int(seed)))
        mats = [[random_unitary(rng) for _ in sub] for sub in subs]
        f0 = current_fidelity()
    traj.fidelities.append(f0)

    kets: list[MPS | None] = [None] * n_sub
    bras: list[MPS | None] = [None] * n_sub
    kets[0] = input_state
    bras[n_sub - 1] = target
    for s in range(n_sub - 1, 0, -1):
        bras[s - 1] = step_bra(bras[s], s)

    for _ in range(n_iters):
        for s in range(n_sub):
            _optimize_sublayer(subs[s], mats[s], kets[s].tensors, bras[s].tensors, True, traj.update_fidelities)
            if s != n_sub - 1:
                kets[s + 1] = step_ket(kets[s], s)
        for s in range(n_sub - 1, -1, -1):
            _optimize_sublayer(subs[s], mats[s], kets[s].tensors, bras[s].tensors, False, traj.update_fidelities)
            if s != 0:
                bras[s - 1] = step_bra(bras[s], s)
        traj.fidelities.append(traj.update_fidelities[-1])
        if traj.fidelities[-1] - traj.fidelities[-2] < tol:
            traj.converged = True
            break

    circ = BrickwallCircuit(n, layers, tuple(g for s in range(n_sub) for g in gates_of(s)))
    return circ, traj


def circuit_overlap(c: BrickwallCircuit, target: MPS, input_state: MPS, max_bond: int | None = None) -> complex:
    """``<target| C |input>``."""
    return overlap(target, apply_circuit(c, input_state, max_bond=max_bond))


def encode_projector_unitary(
    filtered_input: MPS,
    layers: int = 2,
    n_iters: int = 2000,
    tol: float = 1e-12,
    max_bond: int | None = None,
    seed: int = 0,
) -> tuple[BrickwallCircuit, EncodeTrajectory]:
    """Unitary approximating the normalised ``|0><0|``-complement projection of ``filtered_input``."""
    target, _ = project_out_zero(filtered_input, max_bond)
    return encode(target, filtered_input.normalized(), layers, n_iters, tol, seed=seed)


def trace_distance(a: MPS, b: MPS) -> float:
    """Pure-state trace distance ``sqrt(1 - |<a|b>|^2)``."""
    ov = abs(overlap(a, b)) ** 2 / (abs(overlap(a, a)) * abs(overlap(b, b)))
    return float(np.sqrt(max(0.0, 1.0 - ov)))

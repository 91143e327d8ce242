"""Two-site DMRG for ground states of Hermitian MPOs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .mps import MPO, MPS, expectation, random_mps
from .tensor import DTYPE, lanczos_ground, truncated_svd


@dataclass(frozen=True)
class DmrgConfig:
    """Sweep settings.

    ``convergence_tol`` is the absolute energy change between consecutive
    sweeps below which the solve stops; ``None`` means ``1e-12 * n``. The
    optional ``noise`` perturbs the two-site tensor before each split and is
    switched off for the last ``quiet_sweeps`` sweeps.
    """

    max_bond: int = 20
    n_sweeps: int = 20
    convergence_tol: float | None = None
    lanczos_dim: int = 8
    lanczos_restarts: int = 4
    cutoff: float = 1e-14
    noise: float = 0.0
    quiet_sweeps: int = 2

    def __post_init__(self):
        if self.max_bond < 1:
            raise ValidationError("max_bond must be >= 1")
        if self.n_sweeps < 1:
            raise ValidationError("n_sweeps must be >= 1")
        if self.convergence_tol is not None and self.convergence_tol <= 0:
            raise ValidationError("convergence_tol must be positive")
        if self.lanczos_dim < 2:
            raise ValidationError("lanczos_dim must be >= 2")


@dataclass
class DmrgResult:
    energy: float
    state: MPS
    sweep_energies: list[float] = field(default_factory=list)
    converged: bool = False

    def __iter__(self):
        # Allows ``energy, state, log = ground_state(...)``.
        return iter((self.energy, self.state, self.sweep_energies))


def _grow_left(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    t = np.tensordot(env, a, axes=(2, 0))  # (a, w, s, b')
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))  # (a, b', t, w')
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 2]))  # (a', b', w')
    return t.transpose(0, 2, 1)


def _grow_right(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    t = np.tensordot(a, env, axes=(2, 2))  # (b, s, a', w')
    t = np.tensordot(w, t, axes=([2, 3], [1, 3]))  # (w, t, b, a')
    t = np.tensordot(a.conj(), t, axes=([1, 2], [1, 3]))  # (a, w, b)
    return t


def _two_site_matvec(left, w1, w2, right):
    def matvec(x: np.ndarray) -> np.ndarray:
        t = np.tensordot(left, x, axes=(2, 0))  # (a, w, s1, s2, b)
        t = np.tensordot(t, w1, axes=([1, 2], [0, 2]))  # (a, s2, b, t1, w1)
        t = np.tensordot(t, w2, axes=([4, 1], [0, 2]))  # (a, b, t1, t2, w2)
        t = np.tensordot(t, right, axes=([1, 4], [2, 1]))  # (a, t1, t2, a')
        return t

    return matvec


def ground_state(h: MPO, cfg: DmrgConfig | None = None, seed: int = 0) -> DmrgResult:
    """Minimise ``<psi|h|psi>`` over MPS of bond dimension ``cfg.max_bond``.

    Non-convergence within ``cfg.n_sweeps`` is reported through
    ``DmrgResult.converged`` rather than raised.
    """
    if not h.hermitian:
        raise ValidationError("DMRG requires a Hermitian-flagged MPO")
    cfg = cfg or DmrgConfig()
    n = h.n
    tol = cfg.convergence_tol if cfg.convergence_tol is not None else 1e-12 * n
    rng = np.random.Generator(np.random.Philox(int(seed)))
    if n == 1:
        dense = h.tensors[0][0, :, :, 0]
        w, v = np.linalg.eigh(0.5 * (dense + dense.conj().T))
        state = MPS([v[:, 0].reshape(1, 2, 1)], ortho_center=0, max_bond=1)
        return DmrgResult(float(w[0]), state, [float(w[0])], True)

    psi = random_mps(n, cfg.max_bond, rng)
    ts = list(psi.tensors)  # right-canonical, centre 0
    wt = h.tensors
    lefts: list[np.ndarray | None] = [None] * n
    rights: list[np.ndarray | None] = [None] * n
    lefts[0] = np.ones((1, 1, 1), dtype=DTYPE)
    rights[n - 1] = np.ones((1, 1, 1), dtype=DTYPE)
    for k in range(n - 1, 0, -1):
        rights[k - 1] = _grow_right(rights[k], ts[k], wt[k])

    sweep_energies: list[float] = []
    converged = False
    energy = np.inf

    def update(i: int, moving_right: bool, noisy: bool) -> float:
        theta = np.tensordot(ts[i], ts[i + 1], axes=(2, 0))
        matvec = _two_site_matvec(lefts[i], wt[i], wt[i + 1], rights[i + 1])
        e, theta = lanczos_ground(
            matvec, theta, krylov_dim=cfg.lanczos_dim, tol=1e-13, max_restarts=cfg.lanczos_restarts
        )
        l, _, _, r = theta.shape
        mat = theta.reshape(2 * l, 2 * r)
        if noisy:
            mat = mat + cfg.noise * rng.standard_normal(mat.shape)
            mat /= np.linalg.norm(mat)
        u, s, vh, _ = truncated_svd(mat, cfg.max_bond, cfg.cutoff)
        s = s / np.linalg.norm(s)
        if moving_right:
            ts[i] = u.reshape(l, 2, len(s))
            ts[i + 1] = (s[:, None] * vh).reshape(len(s), 2, r)
            lefts[i + 1] = _grow_left(lefts[i], ts[i], wt[i])
        else:
            ts[i] = (u * s).reshape(l, 2, len(s))
            ts[i + 1] = vh.reshape(len(s), 2, r)
            rights[i] = _grow_right(rights[i + 1], ts[i + 1], wt[i + 1])
        return e

    for sweep in range(cfg.n_sweeps):
        noisy = cfg.noise > 0 and sweep < cfg.n_sweeps - cfg.quiet_sweeps
        for i in range(n - 1):
            update(i, True, noisy)
        for i in range(n - 2, -1, -1):
            e = update(i, False, noisy)
        sweep_energies.append(float(e))
        if not noisy and np.isfinite(energy) and abs(energy - e) < tol:
            energy = e
            converged = True
            break
        energy = e

    state = MPS(ts, ortho_center=0, max_bond=cfg.max_bond)
    final = expectation(state.normalized(), h)
    return DmrgResult(final, state.normalized(), sweep_energies, converged)

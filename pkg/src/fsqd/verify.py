"""Cross-checks of the tensor-network routines against dense references.

Each check returns ``{"name", "error"}`` with ``error`` the largest absolute
deviation found; callers compare it with their tolerance.
"""

from __future__ import annotations

import numpy as np

from .circuit import BrickwallCircuit, apply_circuit, conjugate_mpo, encode, fidelity_tensor, random_unitary
from .mps import (
    apply_mpo,
    expectation,
    ising_mpo,
    mpo_square,
    overlap,
    project_out_zero,
    random_mps,
    zero_state,
)
from .oracle import (
    dense_apply_circuit,
    dense_fidelity_tensor,
    dense_hamiltonian,
    dense_project_out_zero,
    mpo_to_dense,
    mps_to_dense,
)
from .sqd import SampledSubspace, mpo_matrix_elements


def random_circuit(n: int, layers: int, rng: np.random.Generator) -> BrickwallCircuit:
    base = BrickwallCircuit.identity(n, layers)
    return base.with_gates([random_unitary(rng) for _ in base.gates])


def oracle_checks(n: int = 8, bond: int = 4, seed: int = 0, J: float = 1.0, hx: float = 1.0, hz: float = 0.05) -> list[dict]:
    """Compare every state/operator routine with its statevector counterpart at ``n`` sites."""
    rng = np.random.Generator(np.random.Philox(int(seed)))
    a = random_mps(n, bond, rng).normalized()
    b = random_mps(n, bond, rng).normalized()
    va, vb = mps_to_dense(a), mps_to_dense(b)
    h = ising_mpo(n, J, hx, hz)
    hd = dense_hamiltonian(n, J, hx, hz)
    circ = random_circuit(n, 2, rng)
    out = []

    def add(name: str, err: float) -> None:
        out.append({"name": name, "error": float(err)})

    add("overlap", abs(overlap(a, b) - np.vdot(va, vb)))
    add("norm", abs(np.linalg.norm(va) - 1.0))
    add("mpo_dense", np.max(np.abs(mpo_to_dense(h) - hd)))
    add("apply_mpo", np.max(np.abs(mps_to_dense(apply_mpo(h, a, None, 0.0)) - hd @ va)))
    add("expectation", abs(expectation(a, h) - np.vdot(va, hd @ va).real))

    rows = rng.integers(0, 2, size=(12, n), dtype=np.uint8)
    basis = SampledSubspace(np.unique(rows, axis=0))
    idx = [int("".join(map(str, r)), 2) for r in basis.bits]
    add("matrix_elements", np.max(np.abs(mpo_matrix_elements(h, basis.bits, basis.bits) - hd[np.ix_(idx, idx)])))

    sq = mpo_square(h, None, 0.0)
    add("mpo_square", np.max(np.abs(mpo_to_dense(sq) - hd @ hd)))

    proj, w = project_out_zero(a, None, 0.0)
    pv, pw = dense_project_out_zero(va)
    phase = np.vdot(pv, mps_to_dense(proj))
    add("project_out_zero", max(abs(w - pw), np.max(np.abs(mps_to_dense(proj) - phase * pv)), abs(abs(phase) - 1)))

    add("apply_circuit", np.max(np.abs(mps_to_dense(apply_circuit(circ, a, cutoff=0.0)) - dense_apply_circuit(circ, va))))
    add(
        "apply_circuit_adjoint",
        np.max(np.abs(mps_to_dense(apply_circuit(circ, a, adjoint=True, cutoff=0.0)) - dense_apply_circuit(circ, va, adjoint=True))),
    )

    hf, _ = conjugate_mpo(h, circ, max_bond=None, cutoff=0.0)
    u = np.eye(2**n, dtype=complex)
    u = np.column_stack([dense_apply_circuit(circ, u[:, j]) for j in range(2**n)]) if n <= 8 else None
    if u is not None:
        add("conjugate_mpo", np.max(np.abs(mpo_to_dense(hf) - u.conj().T @ hd @ u)))
    else:
        # Without the full unitary compare the action on one state.
        lhs = mps_to_dense(apply_mpo(hf, a, None, 0.0))
        rhs = dense_apply_circuit(circ, hd @ dense_apply_circuit(circ, va), adjoint=True)
        add("conjugate_mpo", np.max(np.abs(lhs - rhs)))

    k = n // 2 - 1
    add("fidelity_tensor", np.max(np.abs(fidelity_tensor(a, b, k) - dense_fidelity_tensor(va, vb, n, k))))

    enc_c, traj = encode(a, zero_state(n), layers=1, n_iters=5)
    v0 = np.zeros(2**n, dtype=complex)
    v0[0] = 1.0
    add("encode_fidelity", abs(traj.final_fidelity - abs(np.vdot(va, dense_apply_circuit(enc_c, v0)))))
    return out

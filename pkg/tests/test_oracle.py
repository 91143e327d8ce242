from __future__ import annotations

import math

import numpy as np
import pytest

from fsqd.circuit import BrickwallCircuit, apply_circuit, conjugate_mpo, random_unitary
from fsqd.errors import ValidationError
from fsqd.mps import MPS, ising_mpo, overlap, product_state, random_mps
from fsqd.oracle import (
    dense_apply_circuit,
    dense_ground_state,
    dense_hamiltonian,
    dense_project_out_zero,
    ising_ground_state,
    ising_matvec,
    mpo_to_dense,
    mps_to_dense,
)
from fsqd.verify import oracle_checks


def rand_circuit(n, layers, rng):
    base = BrickwallCircuit.identity(n, layers)
    return base.with_gates([random_unitary(rng) for _ in base.gates])


def test_two_site_hamiltonian_spectrum():
    h = dense_hamiltonian(2, 1.0, 1.0, 0.0)
    s5 = math.sqrt(5)
    np.testing.assert_allclose(np.linalg.eigvalsh(h), [-s5, -1, 1, s5], atol=1e-12)


def test_diagonal_without_transverse_field():
    h = dense_hamiltonian(5, 1.0, 0.0, 0.0)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0
    h = dense_hamiltonian(5, 0.7, 0.0, 0.3)
    assert np.count_nonzero(h - np.diag(np.diag(h))) == 0


def test_hamiltonian_matches_mpo_n8():
    h = dense_hamiltonian(8, 1.0, 1.0, 0.05)
    assert np.max(np.abs(h - mpo_to_dense(ising_mpo(8, 1.0, 1.0, 0.05)))) < 1e-12
    assert np.allclose(h, h.conj().T)


def test_hamiltonian_size_cap():
    with pytest.raises(ValidationError):
        dense_hamiltonian(15, 1.0, 1.0, 0.0)


def test_matvec_matches_matrix(rng):
    n = 7
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    h = dense_hamiltonian(n, 1.0, 0.8, 0.2)
    np.testing.assert_allclose(ising_matvec(v, n, 1.0, 0.8, 0.2), h @ v, atol=1e-12)


def test_sparse_ground_state_matches_dense():
    n = 11
    e_sparse, v = ising_ground_state(n, 1.0, 1.0, 0.05)
    e_dense, _ = dense_ground_state(dense_hamiltonian(n, 1.0, 1.0, 0.05))
    assert e_sparse == pytest.approx(e_dense, abs=1e-10)
    assert np.linalg.norm(ising_matvec(v, n, 1.0, 1.0, 0.05) - e_sparse * v) < 1e-6


def test_mps_to_dense_examples(rng):
    v = mps_to_dense(product_state("10"))
    assert v[2] == 1 and np.count_nonzero(v) == 1
    a = np.zeros((1, 2, 2), dtype=complex)
    a[0, 0, 0] = a[0, 1, 1] = 1 / math.sqrt(2)
    b = np.zeros((2, 2, 1), dtype=complex)
    b[0, 0, 0] = b[1, 1, 0] = 1
    bell = mps_to_dense(MPS([a, b]))
    np.testing.assert_allclose(np.abs(bell), [1 / math.sqrt(2), 0, 0, 1 / math.sqrt(2)], atol=1e-15)
    s = random_mps(10, 6, rng).normalized()
    assert abs(np.linalg.norm(mps_to_dense(s)) - 1) < 1e-10


def test_mps_to_dense_overlap(rng):
    a, b = random_mps(9, 4, rng), random_mps(9, 3, rng)
    assert abs(overlap(a, b) - np.vdot(mps_to_dense(a), mps_to_dense(b))) < 1e-10


def test_dense_circuit_examples(rng):
    n = 10
    v = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    v /= np.linalg.norm(v)
    np.testing.assert_allclose(dense_apply_circuit(BrickwallCircuit.identity(n, 2), v), v, atol=1e-15)
    c = rand_circuit(n, 3, rng)
    back = dense_apply_circuit(c, dense_apply_circuit(c, v), adjoint=True)
    assert np.max(np.abs(back - v)) < 1e-12
    s = random_mps(n, 3, rng).normalized()
    out = mps_to_dense(apply_circuit(c, s, cutoff=0.0))
    ref = dense_apply_circuit(c, mps_to_dense(s))
    assert abs(abs(np.vdot(out, ref)) ** 2 - 1) < 1e-10


def test_dense_projection():
    v = np.array([0.6, 0.8, 0, 0], dtype=complex)
    p, w = dense_project_out_zero(v)
    assert w == pytest.approx(0.36)
    np.testing.assert_allclose(p, [0, 1, 0, 0], atol=1e-15)


def test_filtered_spectrum_invariant(rng):
    n = 8
    c = rand_circuit(n, 2, rng)
    h = ising_mpo(n, 1.0, 1.0, 0.05)
    hf, _ = conjugate_mpo(h, c, max_bond=None, cutoff=0.0)
    e_f, _ = dense_ground_state(mpo_to_dense(hf))
    e, _ = dense_ground_state(dense_hamiltonian(n, 1.0, 1.0, 0.05))
    assert abs(e_f - e) < 1e-10


@pytest.mark.parametrize("n", [4, 8, 10])
def test_oracle_checks_all_agree(n):
    for check in oracle_checks(n=n, bond=4, seed=n):
        assert check["error"] < 1e-9, check

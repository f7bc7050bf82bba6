import io
import json
import math

import numpy as np
import pytest

from tiwire.qpt import (
    KrausSet, QptOptions, ShapeError, apply_process, cost, cost_gradient, init_kraus, l1_norm, learn_process,
    measurement_set, polar, polar_lowrank_update, qubits_for,
)
from tiwire.rdm import DensityMatrix, pure_density, sector_rdm
from conftest import random_density, random_unitary

SX = np.array([[0, 1], [1, 0]], complex)


# -------------------------------------------------------------- measurements

def test_full_pauli_two_qubits():
    M = measurement_set(2, "full-pauli")
    assert len(M) == 36 and M.dim == 4
    # each Pauli string contributes a resolution of the identity
    P = M.projectors
    for k in range(9):
        assert np.allclose(P[4 * k:4 * k + 4].sum(axis=0), np.eye(4), atol=1e-14)
    assert np.allclose(np.linalg.norm(M.vectors, axis=1), 1.0)


def test_x_string_eight_qubits():
    M = measurement_set(8, "x-string")
    assert len(M) == 256
    V = M.vectors
    assert np.allclose(V @ V.conj().T, np.eye(256), atol=1e-12)
    assert np.allclose(M.projectors.sum(axis=0), np.eye(256), atol=1e-12)


def test_x_string_one_qubit():
    M = measurement_set(1, "x-string")
    s = 1 / math.sqrt(2)
    assert np.allclose(M.vectors, [[s, s], [s, -s]])
    assert np.allclose(M.projectors.sum(axis=0), np.eye(2))


def test_measurement_errors():
    with pytest.raises(ValueError):
        measurement_set(9, "full-pauli")
    with pytest.raises(ValueError):
        measurement_set(2, "z-only")
    with pytest.raises(ValueError):
        measurement_set(0)
    with pytest.raises(ShapeError):
        qubits_for(6)
    assert qubits_for(256) == 8


def test_expectations_maximally_mixed():
    M = measurement_set(3, "full-pauli")
    assert np.allclose(M.expectations(np.eye(8) / 8), 1 / 8)


# -------------------------------------------------------------- Kraus sets

def test_init_square():
    K = init_kraus(1, 4, 4, seed=3)
    assert K.completeness_defect < 1e-13
    K = init_kraus(20, 4, 4, seed=3)
    assert K.n_k == 20 and K.completeness_defect < 1e-12


def test_init_rectangular_blocks():
    K = init_kraus(20, 4, 160, seed=1)
    assert K.ops.shape == (20, 4, 160)
    for l, op in enumerate(K.ops):
        nz = [b for b in range(40) if np.any(op[:, 4 * b:4 * b + 4] != 0)]
        assert nz == [l % 40]
        blk = op[:, 4 * nz[0]:4 * nz[0] + 4] * math.sqrt(20)
        assert np.allclose(blk @ blk.conj().T, np.eye(4), atol=1e-12)


def test_init_deterministic_and_errors():
    assert np.array_equal(init_kraus(3, 4, 8, 11).ops, init_kraus(3, 4, 8, 11).ops)
    with pytest.raises(ShapeError):
        init_kraus(2, 4, 6)
    with pytest.raises(ShapeError):
        init_kraus(0, 4, 4)


def test_kraus_dump_roundtrip(tmp_path):
    K = init_kraus(3, 4, 8, 2)
    K.dump(tmp_path / "k.bin", {"seed": 2})
    assert np.array_equal(KrausSet.load(tmp_path / "k.bin").ops, K.ops)
    (tmp_path / "bad.bin").write_bytes(b"XXXX")
    with pytest.raises(ValueError):
        KrausSet.load(tmp_path / "bad.bin")


def test_polar_and_lowrank_update(rng):
    A = rng.standard_normal((40, 8)) + 1j * rng.standard_normal((40, 8))
    Q = polar(A)
    assert np.allclose(Q.conj().T @ Q, np.eye(8), atol=1e-13)
    U = rng.standard_normal((40, 2)) + 1j * rng.standard_normal((40, 2))
    V = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
    fast = polar_lowrank_update(Q, U, V, 0.3)
    assert np.max(np.abs(fast - polar(Q - 0.3 * U @ V.conj().T))) < 1e-12


# -------------------------------------------------------------- process and cost

def test_apply_process_examples():
    rho = np.diag([1.0, 0.0]).astype(complex)
    out, factor = apply_process(KrausSet(np.eye(2, dtype=complex)[None]), rho)
    assert np.allclose(out.matrix, rho) and factor == 1.0
    K = KrausSet(np.array([np.eye(2), SX], complex) / math.sqrt(2))
    out, _ = apply_process(K, rho)
    assert np.allclose(out.matrix, np.eye(2) / 2, atol=1e-15)


def test_apply_process_trace_preserved(rng):
    K = init_kraus(5, 6, 6, seed=4)
    rho = random_density(rng, 6, 2)
    out, factor = apply_process(K, rho, renormalize=False)
    assert out.trace() == pytest.approx(1.0, abs=1e-10)
    out.check()
    with pytest.raises(ShapeError):
        apply_process(K, np.eye(4) / 4)


def test_apply_process_renormalizes_incomplete_sets():
    K = KrausSet(np.array([np.eye(2) * 0.5], complex))
    out, factor = apply_process(K, np.eye(2) / 2)
    assert factor == pytest.approx(4.0) and out.trace() == pytest.approx(1.0)


def test_cost_examples(rng):
    M = measurement_set(2)
    rho = random_density(rng, 4, 1)
    ident = KrausSet(np.eye(4, dtype=complex)[None])
    assert cost(ident, rho, M.expectations(rho), M) == pytest.approx(0.0, abs=1e-12)
    assert cost(ident, rho, M.expectations(rho), M, lambda_reg=0.5) == pytest.approx(0.5, abs=1e-12)
    assert l1_norm(np.eye(4)) == 1.0
    with pytest.raises(ShapeError):
        cost(ident, rho, np.zeros(5), M)
    with pytest.raises(ShapeError):
        cost(ident, rho, M.expectations(rho), measurement_set(3))


def test_cost_phase_invariance(rng):
    M = measurement_set(2)
    K = init_kraus(3, 4, 8, 5)
    rho = random_density(rng, 8, 1)
    d = M.expectations(random_density(rng, 4))
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    Kp = KrausSet(K.ops * phases[:, None, None])
    assert abs(cost(K, rho, d, M) - cost(Kp, rho, d, M)) < 1e-12


@pytest.mark.parametrize("shape,n_k,lam", [((4, 4), 2, 0.0), ((4, 8), 3, 0.0), ((4, 4), 3, 0.4), ((4, 8), 1, 0.2)])
def test_gradient_matches_finite_differences(rng, shape, n_k, lam):
    rows, cols = shape
    M = measurement_set(2)
    ops = rng.standard_normal((n_k, rows, cols)) + 1j * rng.standard_normal((n_k, rows, cols))
    K = KrausSet(ops / np.sqrt(n_k * cols))
    rho = random_density(rng, cols, 1)
    d = M.expectations(random_density(rng, rows))
    g = cost_gradient(K, rho, d, M, lam)
    h = 1e-6
    num = np.zeros_like(g)
    for idx in np.ndindex(K.ops.shape):
        for unit in (1.0, 1j):
            up, dn = K.ops.copy(), K.ops.copy()
            up[idx] += h * unit
            dn[idx] -= h * unit
            num[idx] += unit * (cost(KrausSet(up), rho, d, M, lam) - cost(KrausSet(dn), rho, d, M, lam)) / (2 * h)
    assert np.max(np.abs(g - num)) <= 1e-5 * max(1.0, np.max(np.abs(num)))


# -------------------------------------------------------------- learning

def test_learn_identity_channel(rng):
    M = measurement_set(2)
    rho = random_density(rng, 4, 1)
    run = learn_process(rho, rho, M, n_k=4, tol=1e-4, seed=1, track_completeness=True)
    assert run.converged and run.status == "converged"
    assert max(run.defect_trace) <= 1e-8
    run.predicted.check()
    # halting at cost <= tol leaves 1 - F of order sqrt(tol); it shrinks as tol does
    assert run.fidelity_to_target > 0.99
    tight = learn_process(rho, rho, M, n_k=4, tol=1e-6, seed=1)
    assert tight.converged
    assert 1 - tight.fidelity_to_target < 0.2 * (1 - run.fidelity_to_target)


def test_learn_monotone_and_deterministic(rng):
    M = measurement_set(2)
    rho = random_density(rng, 8, 1)
    target = random_density(rng, 4, 2)
    opts = QptOptions(n_k=3, tol=1e-6, max_iters=60, seed=9, track_completeness=True)
    a = learn_process(rho, target, M, opts)
    b = learn_process(rho, target, M, opts)
    assert a.cost_trace == b.cost_trace
    assert all(y < x for x, y in zip(a.cost_trace, a.cost_trace[1:]))
    assert max(a.defect_trace) <= 1e-8
    assert opts.seed == 9 and opts.n_k == 3


def test_learn_reports_non_convergence(rng):
    M = measurement_set(2)
    rho = random_density(rng, 4, 1)
    run = learn_process(rho, random_density(rng, 4), M, n_k=1, tol=0.0, max_iters=5)
    assert not run.converged and run.status in ("max_iters", "stalled")
    assert run.iterations <= 5


def test_learn_input_checks(rng):
    M = measurement_set(2)
    with pytest.raises(ValueError):
        learn_process(np.eye(4) / 4, np.eye(4) / 4, M)
    with pytest.raises(ShapeError):
        learn_process(random_density(rng, 8, 1), np.eye(8) / 8, M)


def test_rectangular_case_reports_coisometry(topo_lower, geom):
    M = measurement_set(2)
    run = learn_process(pure_density(topo_lower), sector_rdm(topo_lower, "ABC", geom), M, n_k=20, tol=0.01, seed=0)
    assert run.converged and run.iterations <= 2000
    # 80 stacked rows cannot span 160 columns: Σ K†K is a rank-80 projector
    K = run.result.stacked()
    assert np.allclose(K @ K.conj().T, np.eye(80), atol=1e-10)
    P = K.conj().T @ K
    assert np.allclose(P @ P, P, atol=1e-10) and np.trace(P).real == pytest.approx(80.0)
    assert run.completeness_defect > 0.5
    run.predicted.check()


def test_run_serialization(tmp_path, rng):
    M = measurement_set(1)
    rho = random_density(rng, 2, 1)
    run = learn_process(rho, rho, M, n_k=2, tol=1e-6, seed=0)
    run.write(tmp_path, "x", {"seed": 0})
    summary = json.loads((tmp_path / "x_summary.json").read_text())
    assert summary["provenance"] == {"seed": 0} and summary["status"] == run.status
    lines = (tmp_path / "x_cost.csv").read_text().splitlines()
    assert lines[0] == "# seed=0" and lines[1] == "iteration,cost" and len(lines) == 2 + len(run.cost_trace)
    assert np.array_equal(KrausSet.load(tmp_path / "x_kraus.bin").ops, run.result.ops)

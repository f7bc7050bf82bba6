import io
from dataclasses import replace

import numpy as np
import pytest

from tiwire.hamiltonian import HamiltonianBlock, assemble, gap_window
from tiwire.spectrum import (
    CONDUCTION, LABELS, TOPO_LOWER, TOPO_UPPER, VALENCE, SolverError, TrackingError, VariationalState,
    band_sweep, classify, convergence_report, solve, solve_point,
)
from conftest import random_unitary


def _block(H):
    return HamiltonianBlock(0, 0.0, H.shape[0] // 4 or 1, H, None)


def _states(energies):
    return [VariationalState(0, 0.0, 1, e, np.zeros(1), i) for i, e in enumerate(energies)]


def test_solve_diagonal():
    d = [0.2726, -0.2856, 0.2717, -0.2837]
    states = solve(_block(np.diag(np.array(d, dtype=complex))))
    assert [s.energy for s in states] == sorted(d)
    for s in states:
        assert np.count_nonzero(np.abs(s.coeffs) > 1e-15) == 1
        assert np.abs(s.coeffs).max() == pytest.approx(1.0)


def test_solve_reconstructs_random_hermitian(rng):
    z = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    H = z + z.conj().T
    states = solve(_block(H))
    rebuilt = sum(s.energy * np.outer(s.coeffs, s.coeffs.conj()) for s in states)
    assert np.max(np.abs(rebuilt - H)) < 1e-10


def test_solve_orthonormal_and_residual(params, geom):
    blk = assemble(params, geom, 2, -0.06, 30)
    states = solve(blk)
    V = np.column_stack([s.coeffs for s in states])
    assert np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1]))) < 1e-10
    norm = np.linalg.norm(blk.H, 2)
    for s in states[::17]:
        assert np.linalg.norm(s.coeffs) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(blk.H @ s.coeffs - s.energy * s.coeffs) <= 1e-8 * norm


def test_solve_rejects_nonfinite():
    H = np.eye(4, dtype=complex)
    H[1, 1] = np.nan
    with pytest.raises(SolverError):
        solve(_block(H))


def test_two_in_gap_states(point_l0_kz01):
    states, window = point_l0_kz01
    inside = [s for s in states if window[0] < s.energy < window[1]]
    assert len(inside) == 2
    assert [s.label for s in inside] == [TOPO_LOWER, TOPO_UPPER]


def test_classify_rule():
    states = classify(_states([-0.4, -0.1, 0.05, 0.4]), (-0.28, 0.27), 0.005)
    assert [s.label for s in states] == [VALENCE, TOPO_LOWER, TOPO_UPPER, CONDUCTION]


def test_classify_margin_excludes_edge_states():
    states = classify(_states([-0.277, -0.05, 0.268]), (-0.28, 0.27), 0.005)
    assert [s.label for s in states] == [VALENCE, TOPO_LOWER, CONDUCTION]


def test_classify_degenerate_window():
    states = classify(_states([-0.3, 0.09, 0.11, 0.3]), (0.1, 0.1), 0.002)
    assert [s.label for s in states] == [VALENCE, VALENCE, CONDUCTION, CONDUCTION]
    states = classify(_states([-0.3, 0.3]), None, 0.002)
    assert [s.label for s in states] == [VALENCE, CONDUCTION]


def test_classify_single_in_gap_state_split_by_window_middle():
    s = classify(_states([-0.5, 0.2, 0.5]), (-0.3, 0.3), 0.002)
    assert s[1].label == TOPO_UPPER
    s = classify(_states([-0.5, -0.2, 0.5]), (-0.3, 0.3), 0.002)
    assert s[1].label == TOPO_LOWER


def test_labels_partition(params, geom):
    states, _ = solve_point(params, geom, 1, 0.04, 20)
    assert all(s.label in LABELS for s in states)
    assert sum(s.is_topological for s in states) == 2


def test_single_point_sweep_matches_solve_point(params, geom):
    table = band_sweep(params, geom, [1], [0.05], 12, keep_states=True)
    pt = table.points[(1, 0.05)]
    states, window = solve_point(params, geom, 1, 0.05, 12)
    assert np.array_equal(pt.energies, [s.energy for s in states])
    assert pt.labels == [s.label for s in states]
    assert pt.window == window
    buf = io.StringIO()
    assert table.write_csv(buf) == 48
    assert buf.getvalue().splitlines()[0] == "L,k_z,index,energy_eV,label"


def test_sweep_parallel_matches_serial(params, geom):
    a = band_sweep(params, geom, [0, 1], [-0.1, 0.1], 8)
    b = band_sweep(params, geom, [0, 1], [-0.1, 0.1], 8, workers=2)
    assert list(a.to_rows()) == list(b.to_rows())


def test_sweep_rejects_empty_grid(params, geom):
    with pytest.raises(ValueError):
        band_sweep(params, geom, [], [0.0], 4)


def test_kz_reflection_symmetry(params, geom):
    for L in range(4):
        for kz in (0.03, 0.11, 0.27):
            a = np.linalg.eigvalsh(assemble(params, geom, L, kz, 20).H)
            b = np.linalg.eigvalsh(assemble(params, geom, L, -kz, 20).H)
            assert np.max(np.abs(a - b)) < 1e-10


def test_variational_monotonicity(params, geom):
    prev = None
    for N in (10, 20, 30, 40):
        ev = np.linalg.eigvalsh(assemble(params, geom, 1, 0.08, N).H)
        if prev is not None:
            # Ritz values from a nested basis: the j-th lowest never rises
            assert np.all(ev[:10] <= prev[:10] + 1e-12)
        prev = ev


def test_convergence_identical_sizes(params, geom):
    rep = convergence_report(params, geom, 0, 0.1, [24, 24])
    assert rep[0].fidelity_to_next == pytest.approx(1.0, abs=1e-12)
    assert rep[1].fidelity_to_next is None
    assert rep[0].energy == rep[1].energy


def test_convergence_branches_and_validation(params, geom):
    up = convergence_report(params, geom, 0, 0.1, [20, 30])
    lo = convergence_report(params, geom, 0, 0.1, [20, 30], branch="lower")
    assert up[0].energy > lo[0].energy
    with pytest.raises(ValueError):
        convergence_report(params, geom, 0, 0.1, [30])
    with pytest.raises(ValueError):
        convergence_report(params, geom, 0, 0.1, [30, 20])


def test_convergence_tracking_fails_without_gap_states(params, geom):
    with pytest.raises(TrackingError):
        convergence_report(params, geom, 0, 0.29, [20, 24])


def test_window_matches_gap_window(params, geom, point_l0_kz01):
    assert point_l0_kz01[1] == gap_window(params, 0.1)

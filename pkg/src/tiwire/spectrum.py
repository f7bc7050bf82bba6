"""Eigenstates, in-gap classification and band sweeps."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import MaterialParams, WireGeometry
from .hamiltonian import HamiltonianBlock, InvertedWindowError, assemble, gap_window

log = logging.getLogger(__name__)

VALENCE = "valence"
CONDUCTION = "conduction"
TOPO_LOWER = "topological-lower"
TOPO_UPPER = "topological-upper"
LABELS = (VALENCE, TOPO_LOWER, TOPO_UPPER, CONDUCTION)

DEFAULT_MARGIN = 0.002  # eV


class SolverError(RuntimeError):
    def __init__(self, msg, L=None, k_z=None):
        super().__init__(msg if L is None else f"{msg} (L={L}, k_z={k_z})")
        self.L = L
        self.k_z = k_z


class TrackingError(RuntimeError):
    """A topological state could not be followed across basis sizes."""


@dataclass(eq=False)
class VariationalState:
    L: int
    k_z: float
    N: int
    energy: float
    coeffs: np.ndarray
    index: int = 0
    label: str = ""

    @property
    def is_topological(self) -> bool:
        return self.label in (TOPO_LOWER, TOPO_UPPER)

    def key(self) -> tuple:
        return (self.L, self.k_z, self.N, self.index)


def solve(block: HamiltonianBlock) -> list[VariationalState]:
    """All 4N eigenpairs in ascending energy."""
    H = block.H
    if not np.all(np.isfinite(H)):
        raise SolverError("matrix has non-finite entries", block.L, block.k_z)
    try:
        evals, evecs = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"eigensolver failed: {exc}", block.L, block.k_z) from exc
    scale = max(np.linalg.norm(H, 2), 1e-300)
    resid = np.linalg.norm(H @ evecs - evecs * evals[None, :], axis=0)
    if not resid.max() <= 1e-8 * scale:
        raise SolverError(f"residual {resid.max():.2e} too large", block.L, block.k_z)
    return [
        VariationalState(block.L, block.k_z, block.N, float(e), evecs[:, i].copy(), i)
        for i, e in enumerate(evals)
    ]


def classify(states, window, margin: float = DEFAULT_MARGIN):
    """Label states valence / topological-lower / topological-upper / conduction.

    Labels are written onto the states in place; the list is returned.  With
    a degenerate window (None or lo >= hi) everything is split at the midpoint.
    """
    energies = np.array([s.energy for s in states])
    if window is None or window[0] >= window[1]:
        mid = 0.5 * (window[0] + window[1]) if window is not None else 0.0
        for s in states:
            s.label = VALENCE if s.energy < mid else CONDUCTION
        return states
    lo, hi = window
    inside = (energies > lo + margin) & (energies < hi - margin)
    ing = np.flatnonzero(inside)
    if len(ing) != 2:
        k = states[0] if states else None
        log.warning("found %d in-gap states (L=%s, k_z=%s)", len(ing),
                    getattr(k, "L", None), getattr(k, "k_z", None))
    mid_index = len(ing) // 2
    for s, e, ins in zip(states, energies, inside):
        if not ins:
            s.label = VALENCE if e <= lo + margin else CONDUCTION
    for rank, i in enumerate(ing):
        # with a single in-gap state, call it lower if below the window middle
        if len(ing) == 1:
            states[i].label = TOPO_LOWER if energies[i] < 0.5 * (lo + hi) else TOPO_UPPER
        else:
            states[i].label = TOPO_LOWER if rank < max(mid_index, 1) else TOPO_UPPER
    return states


def solve_point(params: MaterialParams, geom: WireGeometry, L: int, k_z: float, N: int,
                margin: float = DEFAULT_MARGIN):
    """assemble + solve + classify at one (L, k_z); returns (states, window)."""
    block = assemble(params, geom, L, k_z, N)
    states = solve(block)
    try:
        window = gap_window(params, k_z)
    except InvertedWindowError:
        window = None
    classify(states, window, margin)
    return states, window


@dataclass
class BandPoint:
    L: int
    k_z: float
    energies: np.ndarray
    labels: list
    window: tuple | None
    states: list | None = None


@dataclass
class BandTable:
    N: int
    R: float
    params_hash: str
    points: dict = field(default_factory=dict)  # (L, k_z) -> BandPoint

    def __iter__(self):
        return iter(self.points[k] for k in sorted(self.points))

    def to_rows(self):
        for p in self:
            for i, (e, lab) in enumerate(zip(p.energies, p.labels)):
                yield (p.L, p.k_z, i, float(e), lab)

    def write_csv(self, fh) -> int:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L", "k_z", "index", "energy_eV", "label"])
        n = 0
        for L, kz, i, e, lab in self.to_rows():
            w.writerow([L, repr(float(kz)), i, f"{e:.12e}", lab])
            n += 1
        return n


def _sweep_job(args):
    params, geom, L, kz, N, margin, keep = args
    try:
        states, window = solve_point(params, geom, L, kz, N, margin)
    except SolverError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with grid context
        raise SolverError(f"{type(exc).__name__}: {exc}", L, kz) from exc
    return BandPoint(L, kz, np.array([s.energy for s in states]), [s.label for s in states],
                     window, states if keep else None)


def band_sweep(params: MaterialParams, geom: WireGeometry, L_list, kz_grid, N: int,
               margin: float = DEFAULT_MARGIN, workers: int = 1, keep_states: bool = False) -> BandTable:
    """Solve and classify every (L, k_z) grid point."""
    L_list = [int(L) for L in L_list]
    kz_grid = [float(k) for k in kz_grid]
    if not L_list or not kz_grid:
        raise ValueError("empty sweep grid")
    jobs = [(params, geom, L, kz, N, margin, keep_states) for L in L_list for kz in kz_grid]
    table = BandTable(N, geom.R, params.digest())
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    for p in results:
        table.points[(p.L, p.k_z)] = p
    return table


@dataclass
class ConvergencePoint:
    N: int
    energy: float
    fidelity_to_next: float | None


def _pick_topological(states, branch, previous_energy=None):
    topo = [s for s in states if s.is_topological]
    if not topo:
        raise TrackingError("no in-gap state to track")
    if previous_energy is None:
        wanted = TOPO_UPPER if branch == "upper" else TOPO_LOWER
        hits = [s for s in topo if s.label == wanted]
        if not hits:
            raise TrackingError(f"no {wanted} state")
        return hits[0] if branch == "lower" else hits[-1]
    return min(topo, key=lambda s: abs(s.energy - previous_energy))


def convergence_report(params: MaterialParams, geom: WireGeometry, L: int, k_z: float, sizes,
                       branch: str = "upper", margin: float = DEFAULT_MARGIN):
    """Energy of one topological state and fidelity of its ρ_ABC between consecutive sizes."""
    from .entropy import fidelity
    from .rdm import sector_rdm

    sizes = [int(n) for n in sizes]
    if len(sizes) < 2 or any(b < a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be ascending with at least two entries")
    picked, rdms = [], []
    prev = None
    for N in sizes:
        states, _ = solve_point(params, geom, L, k_z, N, margin)
        s = _pick_topological(states, branch, prev)
        prev = s.energy
        picked.append(s)
        rdms.append(sector_rdm(s, "ABC", geom))
    out = []
    for i, s in enumerate(picked):
        fid = fidelity(rdms[i], rdms[i + 1]) if i + 1 < len(picked) else None
        out.append(ConvergencePoint(s.N, s.energy, fid))
    return out

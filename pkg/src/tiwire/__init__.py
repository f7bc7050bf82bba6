"""Variational states, reduced density matrices and entropies of topological-insulator nanowires."""
__version__ = "0.1.0"

from .basis import ConfigError, MaterialParams, WireGeometry, spinor_basis
from .hamiltonian import assemble, gap_window
from .spectrum import VariationalState, band_sweep, classify, convergence_report, solve, solve_point
from .rdm import DensityMatrix, mode_rdm, pure_density, sector_rdm, sector_rdms
from .entropy import entanglement_spectrum, fidelity, kitaev_preskill, topological_entropy, von_neumann
from .qpt import KrausSet, MeasurementSet, QptRun, apply_process, cost, init_kraus, learn_process, measurement_set

__all__ = [
    "ConfigError", "MaterialParams", "WireGeometry", "spinor_basis",
    "assemble", "gap_window",
    "VariationalState", "band_sweep", "classify", "convergence_report", "solve", "solve_point",
    "DensityMatrix", "mode_rdm", "pure_density", "sector_rdm", "sector_rdms",
    "entanglement_spectrum", "fidelity", "kitaev_preskill", "topological_entropy", "von_neumann",
    "KrausSet", "MeasurementSet", "QptRun", "apply_process", "cost", "init_kraus", "learn_process",
    "measurement_set",
]

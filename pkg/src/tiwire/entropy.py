"""Von Neumann, topological and mode entropies; entanglement spectra; fidelity.

Natural logarithms throughout, so the topological plateau sits at ln 2.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import REGIONS, WireGeometry
from .rdm import CLIP, DensityMatrix, mode_rdm, sector_rdms

EIG_CUTOFF = 1e-12
ZETA_CUTOFF = 1e-12
FIT_QUALITY = 0.99


class InvalidDensityError(ValueError):
    pass


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def _spectrum(rho) -> np.ndarray:
    m = _as_matrix(rho)
    tr = float(np.trace(m).real)
    if abs(tr - 1.0) > 1e-8:
        raise InvalidDensityError(f"trace {tr} deviates from 1")
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if lam.min() < -CLIP:
        raise InvalidDensityError(f"eigenvalue {lam.min():.3e} below clipping threshold")
    return np.clip(lam, 0.0, None)


def von_neumann(rho) -> float:
    """-Σ λ ln λ over eigenvalues above 1e-12."""
    lam = _spectrum(rho)
    lam = lam[lam > EIG_CUTOFF]
    return float(-np.sum(lam * np.log(lam)))


def kitaev_preskill(S: dict) -> float:
    return S["A"] + S["B"] + S["C"] - S["AB"] - S["BC"] - S["AC"] + S["ABC"]


@dataclass
class EntropyReport:
    L: int
    k_z: float
    N: int
    label: str
    energy: float
    sector: dict  # region -> nats
    S_t: float
    Rc: float

    @property
    def abs_S_t(self) -> float:
        return abs(self.S_t)

    FIELDS = ("L", "k_z", "label", "energy_eV", *(f"S_{r}" for r in REGIONS), "S_t", "abs_S_t", "Rc")

    def row(self) -> list:
        return [self.L, repr(float(self.k_z)), self.label, f"{self.energy:.12e}",
                *(f"{self.sector[r]:.12e}" for r in REGIONS),
                f"{self.S_t:.12e}", f"{self.abs_S_t:.12e}", repr(float(self.Rc))]


def topological_entropy(state, geom: WireGeometry) -> EntropyReport:
    rdms = sector_rdms(state, geom)
    S = {r: von_neumann(m) for r, m in rdms.items()}
    return EntropyReport(state.L, state.k_z, state.N, getattr(state, "label", ""),
                         float(getattr(state, "energy", float("nan"))), S, kitaev_preskill(S), geom.Rc)


def mode_entropy(state, geom: WireGeometry) -> float:
    return von_neumann(mode_rdm(state, geom))


@dataclass
class EntanglementSpectrum:
    lambdas: np.ndarray  # descending
    zetas: np.ndarray  # -ln λ for λ above the cutoff
    intercept: float
    slope: float
    quality: float  # coefficient of determination over the fit range
    fit_length: int  # number of leading ζ values in the linear range

    def write_csv(self, fh, meta: dict | None = None) -> None:
        if meta:
            fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        fh.write(f"# fit c={self.intercept:.12e} alpha={self.slope:.12e} "
                 f"quality={self.quality:.6f} range={self.fit_length}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lambda", "zeta", "in_fit"])
        for k, lam in enumerate(self.lambdas, 1):
            z = self.zetas[k - 1] if k <= len(self.zetas) else float("nan")
            w.writerow([k, f"{lam:.12e}", f"{z:.12e}", int(k <= self.fit_length)])


def _linfit(k: np.ndarray, z: np.ndarray):
    slope, intercept = np.polyfit(k, z, 1)
    resid = z - (intercept + slope * k)
    ss_tot = float(np.sum((z - z.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-24 * max(1.0, float(np.sum(z**2))):
        quality = 1.0 if ss_res <= 1e-20 * max(1.0, float(np.sum(z**2))) else 0.0
    else:
        quality = 1.0 - ss_res / ss_tot
    return float(intercept), float(slope), quality


def entanglement_spectrum(rho, cutoff: float = ZETA_CUTOFF,
                          min_quality: float = FIT_QUALITY) -> EntanglementSpectrum:
    """Descending spectrum, ζ_k = -ln λ_k, and a linear fit ζ = c + α k.

    The fit range is the longest leading run k = 1..K whose least-squares
    line reaches the requested coefficient of determination.
    """
    lam = np.sort(_spectrum(rho))[::-1]
    keep = lam > cutoff
    zetas = -np.log(lam[keep])
    k = np.arange(1, len(zetas) + 1, dtype=float)
    best = (float(zetas[0]) if len(zetas) else float("nan"), 0.0, 1.0, min(len(zetas), 1))
    for K in range(2, len(zetas) + 1):
        c, a, q = _linfit(k[:K], zetas[:K])
        if q >= min_quality:
            best = (c, a, q, K)
    c, a, q, K = best
    return EntanglementSpectrum(lam, zetas, c, a, q, K)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    # eigenvalues at rounding level are zero; their square roots would not be
    floor = 10 * len(w) * np.finfo(float).eps * max(float(np.abs(w).max()), 1e-300)
    w = np.sqrt(np.where(w > floor, w, 0.0))
    return (v * w[None, :]) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity (Tr sqrt(sqrt(ρ) σ sqrt(ρ)))².

    Evaluated as the squared nuclear norm of sqrt(ρ) sqrt(σ), which avoids
    square roots of near-zero eigenvalues for rank-deficient inputs.
    """
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    sv = np.linalg.svd(_psd_sqrt(a) @ _psd_sqrt(b), compute_uv=False)
    f = float(np.sum(sv) ** 2)
    return min(max(f, 0.0), 1.0)

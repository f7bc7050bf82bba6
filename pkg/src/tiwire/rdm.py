"""Reduced density matrices of a variational spinor state.

Sector matrices follow the complement convention: ρ_X integrates ψψ† over
the disk *minus* region X (A, B, C are the three angular sectors of radius
Rc, AB their union and so on).  The complement is split into the annulus
Rc <= r <= R, which always contributes over the full 2π, and the inner disk
restricted to the angles not covered by X.  Only single-sector angular
integrals and two radial Gram matrices are ever needed.

The z plane wave cancels in every bilinear and is dropped.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .basis import (
    REGIONS, SECTOR_ANGLES, WireGeometry, angular_overlap, gauss_legendre, panel_count, spinor_basis,
)

TWO_PI = 2.0 * math.pi
CLIP = 1e-10


class EmptyComplementError(ValueError):
    pass


class ZeroNormError(ValueError):
    pass


@dataclass(eq=False)
class DensityMatrix:
    matrix: np.ndarray
    meta: dict = field(default_factory=dict)
    normalized: bool = True

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def check(self, herm_tol=1e-12, trace_tol=1e-10, psd_tol=CLIP) -> None:
        m = self.matrix
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.conj().T).max() > herm_tol * scale:
            raise ValueError("density matrix is not Hermitian")
        if self.normalized and abs(self.trace() - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace()} != 1")
        if self.eigenvalues().min() < -psd_tol:
            raise ValueError("density matrix has negative eigenvalues")

    def to_json(self) -> str:
        m = self.matrix
        return json.dumps({
            "dim": self.dim,
            "meta": self.meta,
            "entries": [[[float(z.real), float(z.imag)] for z in row] for row in m],
        })

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        d = json.loads(text)
        arr = np.array(d["entries"], dtype=float)
        return cls(arr[..., 0] + 1j * arr[..., 1], d.get("meta", {}))

    def write_csv(self, fh) -> None:
        """Long format: one row per entry (i, j, re, im), with a # provenance line."""
        fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "re", "im"])
        for i, row in enumerate(self.matrix):
            for j, z in enumerate(row):
                w.writerow([i, j, f"{z.real:.17e}", f"{z.imag:.17e}"])


# --------------------------------------------------------------------------
# radial Gram matrices

@dataclass(frozen=True, eq=False)
class RadialGrams:
    """∫ f_i f_j r dr over [0, Rc] (inner) and [Rc, R] (outer) for all 4N basis radial parts."""
    inner: np.ndarray
    outer: np.ndarray
    dL: np.ndarray  # L_eff(i) - L_eff(j)

    @property
    def disk(self) -> np.ndarray:
        return self.inner + self.outer


def _gram(basis, r_lo, r_hi):
    kmax = max(float(basis.alphas[0][-1]), float(basis.alphas[2][-1])) / basis.R
    x, w = gauss_legendre(r_lo, r_hi, panel_count(kmax, r_hi - r_lo))
    F = basis.radial_values(x)
    return (F * (w * x)[None, :]) @ F.T


@lru_cache(maxsize=64)
def radial_grams(L: int, N: int, R: float, Rc: float) -> RadialGrams:
    basis = spinor_basis(L, N, R)
    inner = _gram(basis, 0.0, Rc)
    outer = _gram(basis, Rc, R)
    Le = basis.L_eff_of_index()
    dL = Le[:, None] - Le[None, :]
    for a in (inner, outer, dL):
        a.setflags(write=False)
    return RadialGrams(inner, outer, dL)


def _grams_for(state, geom: WireGeometry) -> RadialGrams:
    return radial_grams(int(state.L), int(state.N), float(geom.R), float(geom.Rc))


def _slot_matrix(c: np.ndarray, N: int) -> np.ndarray:
    """4×4N matrix whose row s holds the slot-s coefficients in their own block."""
    C = np.zeros((4, 4 * N), dtype=complex)
    for s in range(4):
        C[s, s * N:(s + 1) * N] = c[s * N:(s + 1) * N]
    return C


def _slot_bilinears(state, grams: RadialGrams):
    """(inner, outer) 4×4 matrices Σ_nm c_sn c*_tm ∫ f_sn f_tm r dr."""
    C = _slot_matrix(np.asarray(state.coeffs), state.N)
    return C @ grams.inner @ C.conj().T, C @ grams.outer @ C.conj().T


def _slot_dL(L: int) -> np.ndarray:
    Le = np.array([L, L, L + 1, L + 1])
    return Le[:, None] - Le[None, :]


def _angle_table(dL: np.ndarray, names) -> np.ndarray:
    out = np.zeros(dL.shape, dtype=complex)
    for name in names:
        lo, hi = SECTOR_ANGLES[name]
        out += np.vectorize(lambda d: angular_overlap(int(d), lo, hi), otypes=[complex])(dL)
    return out


@lru_cache(maxsize=32)
def _region_angles(L: int, region: str):
    dL = _slot_dL(L)
    full = np.where(dL == 0, TWO_PI, 0.0).astype(complex)
    covered = _angle_table(dL, tuple(region))
    return full, full - covered


def unnormalized_region(state, region: str, geom: WireGeometry) -> np.ndarray:
    """∫ over (disk minus region) of ψψ† r dr dφ, before normalisation.

    ``region`` may also be "D" (whole disk, nothing removed), "Omega" (the
    annulus alone) or "in:<X>" (the integral over region X itself).
    """
    grams = _grams_for(state, geom)
    b_in, b_out = _slot_bilinears(state, grams)
    dL = _slot_dL(int(state.L))
    full = np.where(dL == 0, TWO_PI, 0.0)
    if region == "D":
        return full * (b_in + b_out)
    if region == "Omega":
        return full * b_out
    if region.startswith("in:"):
        return _angle_table(dL, tuple(region[3:])) * b_in
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    _, complement = _region_angles(int(state.L), region)
    return full * b_out + complement * b_in


def _normalize(U: np.ndarray, meta: dict) -> DensityMatrix:
    U = 0.5 * (U + U.conj().T)
    Z = float(np.trace(U).real)
    if Z <= 1e-300:
        raise EmptyComplementError("complement region carries no weight")
    return DensityMatrix(U / Z, meta)


def sector_rdm(state, region: str, geom: WireGeometry) -> DensityMatrix:
    """4×4 reduced density matrix for one of A, B, C, AB, BC, AC, ABC."""
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    U = unnormalized_region(state, region, geom)
    meta = {"L": state.L, "k_z": state.k_z, "N": state.N, "region": region, "Rc": geom.Rc,
            "label": getattr(state, "label", "")}
    return _normalize(U, meta)


def sector_rdms(state, geom: WireGeometry) -> dict[str, DensityMatrix]:
    """All seven sector matrices, sharing one pair of slot bilinears."""
    grams = _grams_for(state, geom)
    b_in, b_out = _slot_bilinears(state, grams)
    out = {}
    for region in REGIONS:
        full, complement = _region_angles(int(state.L), region)
        meta = {"L": state.L, "k_z": state.k_z, "N": state.N, "region": region, "Rc": geom.Rc,
                "label": getattr(state, "label", "")}
        out[region] = _normalize(full * b_out + complement * b_in, meta)
    return out


def pure_density(state) -> DensityMatrix:
    c = np.asarray(state.coeffs, dtype=complex)
    return DensityMatrix(np.outer(c, c.conj()),
                         {"L": state.L, "k_z": state.k_z, "N": state.N, "kind": "pure"})


def mode_rdm(state, geom: WireGeometry) -> DensityMatrix:
    """4N×4N mode-dependent matrix over the annulus outside the sectors.

    Entry (i, j) = c_i c_j* · 2π δ(ΔL_eff) ∫_Rc^R f_i f_j r dr, trace-normalised.
    """
    grams = _grams_for(state, geom)
    c = np.asarray(state.coeffs, dtype=complex)
    G = np.where(grams.dL == 0, TWO_PI * grams.outer, 0.0)
    U = np.outer(c, c.conj()) * G
    Z = float(np.trace(U).real)
    if Z < 1e-14:
        raise ZeroNormError("state has no weight in the annulus")
    U = 0.5 * (U + U.conj().T) / Z
    return DensityMatrix(U, {"L": state.L, "k_z": state.k_z, "N": state.N, "kind": "mode",
                             "Rc": geom.Rc, "label": getattr(state, "label", "")})

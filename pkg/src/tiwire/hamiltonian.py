"""Rayleigh-Ritz matrix of the four-band k·p Hamiltonian in the Bessel basis.

The bulk model (Zhang-type) reads

    H = ε(k) + [[ M,      B kz,   0,      A k- ],
                [ B kz,  -M,      A k-,   0    ],
                [ 0,      A k+,   M,     -B kz ],
                [ A k+,   0,     -B kz,  -M    ]]

with ε = C0 + C1 kz² + C2 k∥², M = M0 + M1 kz² + M2 k∥².  The (4,4) entry is
-M(k); printed versions sometimes show "-M(kz) kz", which breaks the
pattern of the other rows.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .basis import MaterialParams, SpinorBasis, WireGeometry, spinor_basis
from .kernels import bessel_j

KPAR_MAX = 0.2  # Å⁻¹, upper end of the bulk scan
KPAR_SAMPLES = 10_000


class InvertedWindowError(ValueError):
    """The bulk gap window is empty at the requested k_z."""


@dataclass(frozen=True, eq=False)
class HamiltonianBlock:
    L: int
    k_z: float
    N: int
    H: np.ndarray
    basis: SpinorBasis

    @property
    def mode_index(self):
        return self.basis.modes()


@lru_cache(maxsize=128)
def cross_overlaps(L: int, N: int, R: float) -> np.ndarray:
    """2π A_{L,n} A_{L+1,m} ∫_0^R J_L(α_n^L r/R) J_L(α_m^{L+1} r/R) r dr, shape (N, N).

    Uses the Lommel closed form; J_L(α_n^L) = 0 kills one of its two terms.
    """
    b = spinor_basis(L, N, R)
    al, au = b.alphas[0], b.alphas[2]
    Al, Au = b.norms[0], b.norms[2]
    a = al / R
    k = au / R
    # ∫ = R a J_{L+1}(α_n^L) J_L(α_m^{L+1}) / (a² - k²)
    jl_next = bessel_j(L + 1, al)
    jl_at_upper = bessel_j(L, au)
    integral = R * (a * jl_next)[:, None] * jl_at_upper[None, :] / (a[:, None] ** 2 - k[None, :] ** 2)
    out = 2 * math.pi * Al[:, None] * Au[None, :] * integral
    out.setflags(write=False)
    return out


def assemble(params: MaterialParams, geom: WireGeometry, L: int, k_z: float, N: int) -> HamiltonianBlock:
    """Build the 4N×4N Hermitian matrix ⟨basis_i|H|basis_j⟩."""
    if N < 1:
        raise ValueError("N must be >= 1")
    basis = spinor_basis(int(L), int(N), float(geom.R))
    if any(len(a) < N for a in basis.alphas):
        raise ValueError("root tables shorter than N")
    H = np.zeros((4 * N, 4 * N), dtype=complex)
    idx = np.arange(N)
    sign = (1.0, -1.0, 1.0, -1.0)
    for s in range(4):
        kpar2 = (basis.alphas[s] / geom.R) ** 2
        diag = params.epsilon(k_z, kpar2) + sign[s] * params.mass(k_z, kpar2)
        H[s * N + idx, s * N + idx] = diag

    bz = params.B0 * k_z
    blk = lambda s: slice(s * N, (s + 1) * N)  # noqa: E731
    H[idx, N + idx] = H[N + idx, idx] = bz
    H[2 * N + idx, 3 * N + idx] = H[3 * N + idx, 2 * N + idx] = -bz

    # k- J_{L+1}(k r) e^{i(L+1)φ} = -i k J_L(k r) e^{iLφ}
    kup = basis.alphas[2] / geom.R
    minus = params.A0 * (-1j) * cross_overlaps(int(L), int(N), float(geom.R)) * kup[None, :]
    H[blk(0), blk(3)] = minus
    H[blk(1), blk(2)] = minus
    H[blk(3), blk(0)] = minus.conj().T
    H[blk(2), blk(1)] = minus.conj().T
    return HamiltonianBlock(int(L), float(k_z), int(N), H, basis)


def bulk_dispersion(params: MaterialParams, k_z, k_par):
    """Lower/upper doubly degenerate bulk bands at (k_z, k_par)."""
    k_par = np.asarray(k_par, dtype=float)
    kpar2 = k_par**2
    eps = params.epsilon(k_z, kpar2)
    root = np.sqrt(params.mass(k_z, kpar2) ** 2 + (params.B0 * k_z) ** 2 + (params.A0 * k_par) ** 2)
    return eps - root, eps + root


def gap_window(params: MaterialParams, k_z: float, k_max: float = KPAR_MAX,
               samples: int = KPAR_SAMPLES) -> tuple[float, float]:
    """(max valence, min conduction) over a uniform k∥ scan on [0, k_max]."""
    kp = np.linspace(0.0, k_max, samples)
    lo, hi = bulk_dispersion(params, k_z, kp)
    e_lo, e_hi = float(lo.max()), float(hi.min())
    if e_lo >= e_hi:
        raise InvertedWindowError(f"no bulk gap at k_z={k_z}: ({e_lo}, {e_hi})")
    return e_lo, e_hi


# --------------------------------------------------------------------------
# debug dumps

_MAGIC = b"TIWH"


def dump_block(block: HamiltonianBlock, path: str | Path) -> None:
    """Binary dump: magic, little-endian uint32 header length, JSON header, then
    row-major interleaved (re, im) float64 pairs."""
    header = json.dumps({"L": block.L, "k_z": block.k_z, "N": block.N, "R": block.basis.R,
                         "shape": list(block.H.shape)}).encode()
    data = np.ascontiguousarray(block.H, dtype="<c16").view("<f8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(data.tobytes())


def load_block_dump(path: str | Path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a Hamiltonian dump")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen])
    flat = np.frombuffer(raw[8 + hlen:], dtype="<f8")
    H = flat.view("<c16").reshape(header["shape"])
    return header, H.copy()

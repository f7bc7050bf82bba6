"""Material constants, wire geometry and the Dirichlet Bessel basis.

Units are fixed throughout the package: energies in eV, lengths in Å,
wave numbers in Å⁻¹.

The tabulated Bi2Se3 coefficients are usually printed with C1, M1 in
eV·Å and A0 in eV·Å².  Those units are inconsistent with the Hamiltonian
(C1, M1 multiply k_z², A0 multiplies k±), so the dimensionally consistent
units eV·Å² (C1, M1) and eV·Å (A0) are used here.  The numbers are unchanged.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .kernels import bessel_j


class ConfigError(ValueError):
    """Raised for malformed parameter/geometry configuration."""


class RootFindingError(RuntimeError):
    """The Bessel root refiner failed to converge."""


class QuadratureError(RuntimeError):
    """Quadrature error estimate exceeded its tolerance."""


@dataclass(frozen=True)
class MaterialParams:
    C0: float = -0.0068  # eV
    C1: float = 1.3  # eV Å²
    C2: float = 19.6  # eV Å²
    M0: float = 0.28  # eV
    M1: float = -10.0  # eV Å²
    M2: float = -56.6  # eV Å²
    A0: float = 4.1  # eV Å
    B0: float = 2.2  # eV Å

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"material parameter {f.name} is not finite")

    def epsilon(self, kz, kpar2):
        return self.C0 + self.C1 * kz**2 + self.C2 * kpar2

    def mass(self, kz, kpar2):
        return self.M0 + self.M1 * kz**2 + self.M2 * kpar2

    def digest(self) -> str:
        import hashlib

        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class WireGeometry:
    R: float = 600.0
    Rc: float = 150.0

    def __post_init__(self):
        if not (math.isfinite(self.R) and math.isfinite(self.Rc)):
            raise ConfigError("geometry values must be finite")
        if not 0 < self.Rc < self.R:
            raise ConfigError(f"need 0 < Rc < R, got Rc={self.Rc}, R={self.R}")

    def with_rc(self, Rc: float) -> "WireGeometry":
        return WireGeometry(self.R, Rc)


@dataclass(frozen=True)
class AngularSector:
    phi_lo: float
    phi_hi: float
    r_lo: float
    r_hi: float

    def __post_init__(self):
        if not self.phi_hi > self.phi_lo:
            raise ValueError("sector needs phi_hi > phi_lo")
        if not 0 <= self.r_lo < self.r_hi:
            raise ValueError("sector needs 0 <= r_lo < r_hi")


#: angular extents of the three Kitaev-Preskill sectors; together they tile 2π
SECTOR_ANGLES = {
    "A": (-math.pi / 6, math.pi / 2),
    "B": (7 * math.pi / 6, 11 * math.pi / 6),
    "C": (math.pi / 2, 7 * math.pi / 6),
}
REGIONS = ("A", "B", "C", "AB", "BC", "AC", "ABC")


def sector(name: str, geom: WireGeometry) -> AngularSector:
    lo, hi = SECTOR_ANGLES[name]
    return AngularSector(lo, hi, 0.0, geom.Rc)


@dataclass(frozen=True)
class BasisMode:
    slot: int  # spinor component 1..4
    L_eff: int
    n: int
    alpha: float
    A: float


# --------------------------------------------------------------------------
# Bessel roots

_MAX_BISECT = 200
_MAX_NEWTON = 50


def _mcmahon(order: int, n: int) -> float:
    beta = (n + 0.5 * order - 0.25) * math.pi
    mu = 4.0 * order * order
    b8 = 8.0 * beta
    return (
        beta
        - (mu - 1) / b8
        - 4 * (mu - 1) * (7 * mu - 31) / (3 * b8**3)
        - 32 * (mu - 1) * (83 * mu**2 - 982 * mu + 3779) / (15 * b8**5)
    )


def _j(order: int, x: float) -> float:
    return float(bessel_j(order, np.array([x]))[0])


def _refine(order: int, lo: float, hi: float) -> float:
    """Bisection to a tight bracket, then Newton polish."""
    flo = _j(order, lo)
    fhi = _j(order, hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise RootFindingError(f"no sign change for J_{order} on [{lo}, {hi}]")
    for _ in range(_MAX_BISECT):
        if hi - lo < 1e-6:
            break
        mid = 0.5 * (lo + hi)
        fm = _j(order, mid)
        if fm == 0.0:
            return mid
        if fm * flo < 0:
            hi = mid
        else:
            lo, flo = mid, fm
    else:
        raise RootFindingError(f"bisection for J_{order} did not converge")
    x = 0.5 * (lo + hi)
    for _ in range(_MAX_NEWTON):
        f = _j(order, x)
        # J_v' = J_{v-1} - (v/x) J_v; at a root only -J_{v+1} survives
        df = _j(order - 1, x) - order / x * f if order > 0 else -_j(1, x)
        step = f / df
        x -= step
        if not lo - 1e-6 <= x <= hi + 1e-6:
            raise RootFindingError(f"Newton left the bracket for J_{order}")
        if abs(step) < 1e-15 * x:
            return x
    raise RootFindingError(f"Newton iteration for J_{order} did not converge")


@lru_cache(maxsize=None)
def _root_table(order: int, count: int) -> tuple[float, ...]:
    if order == 0:
        roots = []
        for n in range(1, count + 1):
            g = _mcmahon(0, n)
            roots.append(_refine(0, g - 0.4, g + 0.4))
        return tuple(roots)
    # interlacing: j_{v-1,n} < j_{v,n} < j_{v-1,n+1}
    prev = _root_table(order - 1, count + 1)
    return tuple(_refine(order, prev[n], prev[n + 1]) for n in range(count))


def bessel_roots(L_eff: int, count: int) -> np.ndarray:
    """First ``count`` positive zeros of J_{L_eff}."""
    if count < 1:
        raise ValueError("count must be >= 1")
    # grow in chunks so the cache is shared between neighbouring sizes
    size = max(16, 1 << (count - 1).bit_length())
    return np.array(_root_table(abs(int(L_eff)), size)[:count])


def bessel_root(L_eff: int, n: int) -> float:
    """n-th positive zero of J_{L_eff} (n >= 1)."""
    if n < 1:
        raise ValueError("root index starts at 1")
    return float(bessel_roots(L_eff, n)[n - 1])


def normalization(L_eff: int, n: int, R: float) -> float:
    """A = 1 / (sqrt(pi) R J_{L_eff+1}(alpha)); makes the mode unit-normalised on the disk."""
    if R <= 0:
        raise ValueError("R must be positive")
    alpha = bessel_root(L_eff, n)
    return 1.0 / (math.sqrt(math.pi) * R * _j(L_eff + 1, alpha))


# --------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=64)
def _gl_nodes(degree: int):
    return np.polynomial.legendre.leggauss(degree)


def gauss_legendre(a: float, b: float, panels: int, degree: int = 16):
    """Composite Gauss-Legendre nodes/weights on [a, b]."""
    x, w = _gl_nodes(degree)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def panel_count(kmax: float, length: float) -> int:
    """Panels so that each covers at most about half an oscillation of J(kmax r)."""
    return max(4, int(math.ceil(2.0 * kmax * length / math.pi)) + 4)


def radial_overlap(L: int, a: float, b: float, r_lo: float, r_hi: float,
                   degree: int = 16) -> float:
    """∫_{r_lo}^{r_hi} J_L(a r) J_L(b r) r dr by composite Gauss-Legendre.

    The error is estimated by repeating with doubled panel count.
    """
    if a <= 0 or b <= 0:
        raise ValueError("wave numbers must be positive")
    if not 0 <= r_lo < r_hi:
        raise ValueError("need 0 <= r_lo < r_hi")
    panels = panel_count(max(a, b), r_hi - r_lo)

    def integrate(p):
        x, w = gauss_legendre(r_lo, r_hi, p, degree)
        f = bessel_j(L, a * x) * bessel_j(L, b * x) * x
        return float(np.dot(w, f)), np.abs(f).max()

    coarse, _ = integrate(panels)
    fine, fmax = integrate(2 * panels)
    if abs(fine - coarse) > 1e-10 * (r_hi - r_lo) * max(fmax, 1e-300):
        raise QuadratureError(
            f"radial overlap error estimate {abs(fine - coarse):.3e} above tolerance"
        )
    return fine


def lommel_overlap(L: int, a: float, b: float, r_lo: float, r_hi: float) -> float:
    """Closed-form (Lommel) value of the same-order radial overlap."""
    def anti(r):
        if r == 0.0:
            return 0.0
        if a == b:
            ja = _j(L, a * r)
            return 0.5 * r * r * (ja * ja - _j(L - 1, a * r) * _j(L + 1, a * r))
        return r * (b * _j(L, a * r) * _j(L - 1, b * r)
                    - a * _j(L - 1, a * r) * _j(L, b * r)) / (a * a - b * b)

    return anti(r_hi) - anti(r_lo)


def angular_overlap(dL: int, phi_lo: float, phi_hi: float) -> complex:
    """∫_{phi_lo}^{phi_hi} exp(i dL φ) dφ."""
    if not phi_hi > phi_lo:
        raise ValueError("need phi_hi > phi_lo")
    if dL == 0:
        return complex(phi_hi - phi_lo)
    full = (phi_hi - phi_lo) * dL / (2 * math.pi)
    if abs(full - round(full)) < 1e-14:
        return 0j
    return (np.exp(1j * dL * phi_hi) - np.exp(1j * dL * phi_lo)) / (1j * dL)


# --------------------------------------------------------------------------
# the spinor basis


@dataclass(frozen=True, eq=False)
class SpinorBasis:
    """The 4N spinor basis for angular number L.

    Ordering is slot-major: rows 0..N-1 are slot 1, N..2N-1 slot 2, then slots
    3 and 4; root index ascends within a slot.  Slots 1-2 carry angular index
    L, slots 3-4 carry L+1.
    """

    L: int
    N: int
    R: float
    alphas: tuple  # per slot arrays of roots
    norms: tuple  # per slot normalisation constants

    @property
    def L_eff(self) -> tuple[int, int, int, int]:
        return (self.L, self.L, self.L + 1, self.L + 1)

    @property
    def dim(self) -> int:
        return 4 * self.N

    def slot_of_index(self) -> np.ndarray:
        return np.repeat(np.arange(1, 5), self.N)  # 1-based, as in BasisMode.slot

    def L_eff_of_index(self) -> np.ndarray:
        return np.repeat(np.array(self.L_eff), self.N)

    def modes(self) -> list[BasisMode]:
        return [
            BasisMode(s + 1, self.L_eff[s], n + 1, float(self.alphas[s][n]), float(self.norms[s][n]))
            for s in range(4)
            for n in range(self.N)
        ]

    def radial_values(self, r) -> np.ndarray:
        """A J_{L_eff}(alpha r / R) for every basis index; shape (4N, len(r))."""
        r = np.asarray(r, dtype=float)
        rows = []
        for s in (0, 2):  # slots 1/2 and 3/4 share their radial functions
            arg = np.outer(self.alphas[s] / self.R, r)
            vals = self.norms[s][:, None] * bessel_j(self.L_eff[s], arg)
            rows.append(vals)
        lower, upper = rows
        return np.vstack([lower, lower, upper, upper])


@lru_cache(maxsize=256)
def spinor_basis(L: int, N: int, R: float) -> SpinorBasis:
    if N < 1:
        raise ValueError("N must be >= 1")
    if R <= 0:
        raise ValueError("R must be positive")
    alphas, norms = [], []
    for order in (L, L, L + 1, L + 1):
        al = bessel_roots(order, N)
        nxt = bessel_j(order + 1, al)
        A = 1.0 / (math.sqrt(math.pi) * R * nxt)
        al.setflags(write=False)
        A.setflags(write=False)
        alphas.append(al)
        norms.append(A)
    return SpinorBasis(int(L), int(N), float(R), tuple(alphas), tuple(norms))


# --------------------------------------------------------------------------
# config loading

_PARAM_KEYS = {f.name for f in fields(MaterialParams)}
_GEOM_KEYS = {"R", "Rc"}


def parse_params(data: dict) -> tuple[MaterialParams, WireGeometry]:
    """Build params/geometry from a flat mapping; unknown keys are an error."""
    unknown = set(data) - _PARAM_KEYS - _GEOM_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        p = {k: float(v) for k, v in data.items() if k in _PARAM_KEYS}
        g = {k: float(v) for k, v in data.items() if k in _GEOM_KEYS}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric config value: {exc}") from None
    return MaterialParams(**p), WireGeometry(**g)


def read_mapping(path: str | Path) -> dict:
    """Read a JSON object or a key=value text file into a dict of strings/values."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return data
    data = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        data[key] = value
    return data


def load_params(path: str | Path) -> tuple[MaterialParams, WireGeometry]:
    return parse_params(read_mapping(path))

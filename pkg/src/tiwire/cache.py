"""On-disk eigenstate cache.

One file per (parameter digest, R, N, L, k_z) under ``$TIWIRE_CACHE/eig``
(default ``~/.cache/tiwire``).  Layout, all little-endian:

    b"TIWS" | uint32 header length | JSON header | energies <f8[dim] | vectors <c16[dim, dim]

The header records L, k_z, N, R, params digest and dim.  Vectors are stored
column-per-state exactly as returned by the eigensolver.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import MaterialParams, WireGeometry
from .hamiltonian import InvertedWindowError, assemble, gap_window
from .spectrum import DEFAULT_MARGIN, VariationalState, classify, solve

CACHE_ENV = "TIWIRE_CACHE"
NAMESPACE = "eig"
_MAGIC = b"TIWS"


def default_root() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "tiwire"


def atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


@dataclass(frozen=True)
class CacheEntry:
    path: Path
    header: dict
    size: int


class EigenCache:
    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_root()
        self.dir = self.root / NAMESPACE

    def path_for(self, params: MaterialParams, R: float, N: int, L: int, k_z: float) -> Path:
        name = f"{params.digest()}_R{float(R)!r}_N{int(N)}_L{int(L)}_kz{float(k_z)!r}.tiws"
        return self.dir / name

    def put(self, params, R, N, L, k_z, energies: np.ndarray, vectors: np.ndarray) -> Path:
        dim = len(energies)
        header = json.dumps({"L": int(L), "k_z": float(k_z), "N": int(N), "R": float(R),
                             "params": params.digest(), "dim": dim}, sort_keys=True).encode()
        blob = b"".join([
            _MAGIC, struct.pack("<I", len(header)), header,
            np.ascontiguousarray(energies, dtype="<f8").tobytes(),
            np.ascontiguousarray(vectors, dtype="<c16").tobytes(),
        ])
        path = self.path_for(params, R, N, L, k_z)
        atomic_write_bytes(path, blob)
        return path

    @staticmethod
    def read(path: str | Path):
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError(f"{path}: not a cache file")
        (hlen,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + hlen])
        dim = header["dim"]
        off = 8 + hlen
        energies = np.frombuffer(raw, dtype="<f8", count=dim, offset=off).copy()
        off += 8 * dim
        vectors = np.frombuffer(raw, dtype="<c16", count=dim * dim, offset=off).reshape(dim, dim).copy()
        return header, energies, vectors

    def get(self, params, R, N, L, k_z):
        path = self.path_for(params, R, N, L, k_z)
        if not path.exists():
            return None
        try:
            _, energies, vectors = self.read(path)
        except (ValueError, KeyError, json.JSONDecodeError):
            return None
        return energies, vectors

    def entries(self) -> list[CacheEntry]:
        if not self.dir.is_dir():
            return []
        out = []
        for p in sorted(self.dir.glob("*.tiws")):
            try:
                header = self.read(p)[0]
            except (ValueError, KeyError, json.JSONDecodeError):
                header = {"error": "unreadable"}
            out.append(CacheEntry(p, header, p.stat().st_size))
        return out

    def clear(self) -> int:
        n = 0
        if self.dir.is_dir():
            for p in self.dir.glob("*.tiws"):
                p.unlink()
                n += 1
        return n


def solve_cached(params: MaterialParams, geom: WireGeometry, L: int, k_z: float, N: int,
                 cache: EigenCache | None = None, margin: float = DEFAULT_MARGIN):
    """Like ``spectrum.solve_point`` but reading/writing the eigenstate cache."""
    hit = cache.get(params, geom.R, N, L, k_z) if cache is not None else None
    if hit is None:
        states = solve(assemble(params, geom, L, k_z, N))
        if cache is not None:
            cache.put(params, geom.R, N, L, k_z, np.array([s.energy for s in states]),
                      np.column_stack([s.coeffs for s in states]))
    else:
        energies, vectors = hit
        states = [VariationalState(L, k_z, N, float(e), vectors[:, i].copy(), i)
                  for i, e in enumerate(energies)]
    try:
        window = gap_window(params, k_z)
    except InvertedWindowError:
        window = None
    classify(states, window, margin)
    return states, window

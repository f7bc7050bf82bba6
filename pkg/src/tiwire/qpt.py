"""Kraus-operator process tomography by projected gradient descent.

The process E(ρ) = Σ_l K_l ρ K_l† is learned from the single input ρ_p by
minimising

    cost(K) = Σ_j [d_j - Tr(M_j E(ρ_p))]² + λ ||𝕂||_1,

where d_j = Tr(M_j ρ_target), M_j are rank-1 projectors, 𝕂 is the
(n_k·rows)×cols stack of all operators and ||·||_1 is the maximum absolute
column sum.  After each gradient step the stack is replaced by its polar
factor, the closest matrix with unit singular values.  When n_k·rows >= cols
that is an isometry and Σ K†K = I holds exactly; with fewer rows than
columns it is a co-isometry (Σ K†K is a projector) and the predicted matrix
is renormalised.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .entropy import fidelity, von_neumann
from .rdm import DensityMatrix

MAX_PAULI_QUBITS = 8

_S = 1 / math.sqrt(2)
_EIGVECS = {
    "x": (np.array([_S, _S]), np.array([_S, -_S])),
    "y": (np.array([_S, 1j * _S]), np.array([_S, -1j * _S])),
    "z": (np.array([1.0, 0.0]), np.array([0.0, 1.0])),
}


class ShapeError(ValueError):
    pass


# --------------------------------------------------------------------------
# measurements

@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Rank-1 projectors |m_j⟩⟨m_j|, stored by their unit vectors (rows)."""
    vectors: np.ndarray
    mode: str

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def projectors(self) -> np.ndarray:
        v = self.vectors
        return v[:, :, None] * v.conj()[:, None, :]

    def expectations(self, rho) -> np.ndarray:
        """Tr(M_j ρ) for every projector."""
        m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
        v = self.vectors
        return np.einsum("ji,ik,jk->j", v.conj(), m, v).real


def _kron_all(vecs):
    out = np.array([1.0 + 0j])
    for v in vecs:
        out = np.kron(out, v)
    return out


def measurement_set(n_qubits: int, mode: str = "full-pauli") -> MeasurementSet:
    """Eigenprojectors of Pauli strings.

    ``full-pauli``: every string in {x, y, z}^n, 2^n product eigenvectors each
    (6^n projectors).  ``x-string``: the 2^n product eigenvectors of σx⊗…⊗σx.
    """
    if n_qubits < 1:
        raise ValueError("n_qubits must be >= 1")
    if mode == "full-pauli":
        if n_qubits > MAX_PAULI_QUBITS:
            raise ValueError(f"full-pauli measurements limited to {MAX_PAULI_QUBITS} qubits")
        vecs = []
        for string in itertools.product("xyz", repeat=n_qubits):
            for signs in itertools.product((0, 1), repeat=n_qubits):
                vecs.append(_kron_all(_EIGVECS[p][s] for p, s in zip(string, signs)))
    elif mode == "x-string":
        vecs = [_kron_all(_EIGVECS["x"][s] for s in signs)
                for signs in itertools.product((0, 1), repeat=n_qubits)]
    else:
        raise ValueError(f"unknown measurement mode {mode!r}")
    arr = np.array(vecs, dtype=complex)
    arr.setflags(write=False)
    return MeasurementSet(arr, mode)


def qubits_for(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise ShapeError(f"dimension {dim} is not a power of two")
    return n


# --------------------------------------------------------------------------
# Kraus sets

@dataclass(eq=False)
class KrausSet:
    ops: np.ndarray  # (n_k, rows, cols)

    @property
    def n_k(self) -> int:
        return self.ops.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.ops.shape[1], self.ops.shape[2]

    def stacked(self) -> np.ndarray:
        n_k, rows, cols = self.ops.shape
        return self.ops.reshape(n_k * rows, cols)

    @classmethod
    def from_stacked(cls, K: np.ndarray, n_k: int) -> "KrausSet":
        return cls(np.ascontiguousarray(K).reshape(n_k, K.shape[0] // n_k, K.shape[1]))

    @property
    def completeness_defect(self) -> float:
        """||Σ K†K - I|| in the max-column-sum norm."""
        return _defect(self.stacked())

    def dump(self, path: str | Path, meta: dict | None = None) -> None:
        """Binary: b"TIWK", uint32 header length, JSON header, interleaved (re, im) float64."""
        header = json.dumps({"n_k": self.n_k, "rows": self.shape[0], "cols": self.shape[1],
                             "meta": meta or {}}, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(b"TIWK")
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(np.ascontiguousarray(self.ops, dtype="<c16").view("<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "KrausSet":
        raw = Path(path).read_bytes()
        if raw[:4] != b"TIWK":
            raise ValueError(f"{path}: not a Kraus dump")
        (hlen,) = struct.unpack("<I", raw[4:8])
        h = json.loads(raw[8:8 + hlen])
        ops = np.frombuffer(raw[8 + hlen:], dtype="<f8").view("<c16")
        return cls(ops.reshape(h["n_k"], h["rows"], h["cols"]).copy())


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))[None, :]


def init_kraus(n_k: int, rows: int, cols: int, seed: int | None = 0) -> KrausSet:
    """Random starting operators.

    Square: K_l = U_l / sqrt(n_k) with Haar U_l.  Rectangular (rows < cols,
    cols a multiple of rows): K_l has a single random-unitary rows×rows block,
    at block position l mod (cols/rows), scaled by 1/sqrt(n_k).
    """
    if n_k < 1:
        raise ShapeError("n_k must be >= 1")
    rng = np.random.default_rng(seed)
    scale = 1 / math.sqrt(n_k)
    if rows == cols:
        ops = np.array([haar_unitary(rows, rng) * scale for _ in range(n_k)])
        return KrausSet(ops)
    if rows < cols and cols % rows == 0:
        nblocks = cols // rows
        ops = np.zeros((n_k, rows, cols), dtype=complex)
        for l in range(n_k):
            b = l % nblocks
            ops[l, :, b * rows:(b + 1) * rows] = haar_unitary(rows, rng) * scale
        return KrausSet(ops)
    raise ShapeError(f"unsupported Kraus shape {rows}x{cols}")


def polar(K: np.ndarray) -> np.ndarray:
    """Closest matrix with all singular values equal to one (U V† of the SVD)."""
    u, _, vh = np.linalg.svd(K, full_matrices=False)
    return u @ vh


def polar_lowrank_update(K: np.ndarray, U: np.ndarray, V: np.ndarray, eta: float) -> np.ndarray:
    """polar(K - eta U V†) for an isometry K (K†K = I), in O(size of K).

    (K - ηUV†)†(K - ηUV†) differs from the identity only on span{V, K†U},
    so its inverse square root is computed in that small subspace.
    """
    Kn = K - eta * (U @ V.conj().T)
    Q, _ = np.linalg.qr(np.hstack([V, K.conj().T @ U]))
    KQ = Kn @ Q
    T = KQ.conj().T @ KQ
    w, P = np.linalg.eigh(0.5 * (T + T.conj().T))
    if w.min() <= 1e-14:
        return polar(Kn)
    T_isqrt = (P * (1 / np.sqrt(w))[None, :]) @ P.conj().T
    return Kn + KQ @ (T_isqrt - np.eye(T.shape[0])) @ Q.conj().T


# --------------------------------------------------------------------------
# process, cost and gradient

def _factor(rho) -> np.ndarray:
    """F with ρ = F F† (columns = sqrt(λ) eigvecs above 1e-14)."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = w > 1e-14 * max(1.0, w.max())
    return v[:, keep] * np.sqrt(w[keep])[None, :]


def _check_shapes(K: KrausSet, rho_dim: int, M: MeasurementSet | None = None):
    rows, cols = K.shape
    if cols != rho_dim:
        raise ShapeError(f"Kraus operators take dimension {cols}, state has {rho_dim}")
    if M is not None and M.dim != rows:
        raise ShapeError(f"measurements act on dimension {M.dim}, Kraus output is {rows}")


def apply_process(K: KrausSet, rho, renormalize: bool = True):
    """Σ K ρ K†; returns (DensityMatrix, renormalisation factor applied)."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    _check_shapes(K, m.shape[0])
    KF = K.ops @ _factor(m)
    out = np.einsum("lir,ljr->ij", KF, KF.conj())
    out = 0.5 * (out + out.conj().T)
    factor = 1.0
    tr = float(np.trace(out).real)
    if renormalize and abs(tr - 1.0) > 1e-12 and tr > 0:
        factor = 1.0 / tr
        out = out * factor
    return DensityMatrix(out, {"kind": "predicted"}), factor


def _defect(Kst: np.ndarray) -> float:
    D = Kst.conj().T @ Kst - np.eye(Kst.shape[1])
    return float(np.abs(D).sum(axis=0).max())


def l1_norm(Kst: np.ndarray) -> float:
    return float(np.abs(Kst).sum(axis=0).max())


def _predicted_probs(Kst, n_k, F, M):
    rows = Kst.shape[0] // n_k
    KF = (Kst @ F).reshape(n_k, rows, F.shape[1])
    amp = np.einsum("ji,lir->jlr", M.vectors.conj(), KF)
    return np.sum(np.abs(amp) ** 2, axis=(1, 2)), KF


def _cost_from_stack(Kst, n_k, F, d, M, lam):
    p, _ = _predicted_probs(Kst, n_k, F, M)
    r = d - p
    value = float(r @ r)
    if lam:
        value += lam * l1_norm(Kst)
    return value


def cost(K: KrausSet, rho_p, d, M: MeasurementSet, lambda_reg: float = 0.0) -> float:
    """Squared measurement mismatch plus λ times the stacked max-column norm."""
    m = rho_p.matrix if isinstance(rho_p, DensityMatrix) else np.asarray(rho_p)
    _check_shapes(K, m.shape[0], M)
    d = np.asarray(d, dtype=float)
    if d.shape != (len(M),):
        raise ShapeError("target frequencies do not match the measurement set")
    return _cost_from_stack(K.stacked(), K.n_k, _factor(m), d, M, lambda_reg)


def _gradient_factors(Kst, n_k, F, d, M, lam):
    """Gradient (∂/∂Re + i ∂/∂Im) of the cost as a low-rank product U V†."""
    p, KF = _predicted_probs(Kst, n_k, F, M)
    r = d - p
    # W = Σ_j r_j |m_j><m_j|
    W = (M.vectors.T * r[None, :]) @ M.vectors.conj()
    U = (-4.0 * np.einsum("ab,lbr->lar", W, KF)).reshape(Kst.shape[0], F.shape[1])
    V = F
    if lam:
        col = int(np.argmax(np.abs(Kst).sum(axis=0)))
        c = Kst[:, col]
        mag = np.abs(c)
        sgn = np.where(mag > 0, c / np.where(mag > 0, mag, 1.0), 0.0)
        e = np.zeros((Kst.shape[1], 1))
        e[col, 0] = 1.0
        U = np.hstack([U, lam * sgn[:, None]])
        V = np.hstack([V, e])
    return U, V


def cost_gradient(K: KrausSet, rho_p, d, M: MeasurementSet, lambda_reg: float = 0.0) -> np.ndarray:
    """Gradient with respect to the real and imaginary parts, packed as Re + i Im, shape of K.ops."""
    m = rho_p.matrix if isinstance(rho_p, DensityMatrix) else np.asarray(rho_p)
    _check_shapes(K, m.shape[0], M)
    U, V = _gradient_factors(K.stacked(), K.n_k, _factor(m), np.asarray(d, float), M, lambda_reg)
    return (U @ V.conj().T).reshape(K.ops.shape)


# --------------------------------------------------------------------------
# optimisation

@dataclass
class QptOptions:
    n_k: int = 20
    tol: float = 0.01
    lambda_reg: float = 0.0
    max_iters: int = 2000
    step: float = 0.5  # initial trial step length (Frobenius norm of the update)
    min_step: float = 1e-10
    reorth_every: int = 50
    seed: int = 0
    track_completeness: bool = False  # record ||Σ K†K - I|| at every accepted iterate


@dataclass(eq=False)
class QptRun:
    cost_trace: list
    tol: float
    lambda_reg: float
    seed: int
    result: KrausSet
    predicted: DensityMatrix
    fidelity_to_target: float
    converged: bool
    status: str
    renormalization: float = 1.0
    completeness_defect: float = 0.0
    options: dict = field(default_factory=dict)
    entropy_target: float = float("nan")
    entropy_predicted: float = float("nan")
    defect_trace: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.cost_trace) - 1

    @property
    def entropy_gap(self) -> float:
        return abs(self.entropy_predicted - self.entropy_target)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_cost": self.cost_trace[-1],
            "fidelity": self.fidelity_to_target,
            "entropy_target": self.entropy_target,
            "entropy_predicted": self.entropy_predicted,
            "entropy_gap": self.entropy_gap,
            "completeness_defect": self.completeness_defect,
            "renormalization": self.renormalization,
            "seed": self.seed,
            "options": self.options,
        }

    def write_cost_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "cost"])
        for i, c in enumerate(self.cost_trace):
            w.writerow([i, f"{c:.17e}"])

    def write(self, directory: str | Path, stem: str, meta: dict | None = None) -> None:
        """<stem>_cost.csv, <stem>_kraus.bin and <stem>_summary.json; ``meta`` is provenance."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / f"{stem}_cost.csv", "w") as fh:
            if meta:
                fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            self.write_cost_csv(fh)
        self.result.dump(directory / f"{stem}_kraus.bin", meta)
        summary = {"provenance": meta or {}, **self.summary()}
        (directory / f"{stem}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))


def learn_process(rho_p, rho_target, M: MeasurementSet, opts: QptOptions | None = None, **kw) -> QptRun:
    """Fit Kraus operators with E(ρ_p) ≈ ρ_target from the measurement data."""
    opts = replace(opts or QptOptions(), **kw)
    rp = rho_p.matrix if isinstance(rho_p, DensityMatrix) else np.asarray(rho_p)
    rt = rho_target.matrix if isinstance(rho_target, DensityMatrix) else np.asarray(rho_target)
    purity = float(np.trace(rp @ rp).real)
    if abs(purity - 1.0) > 1e-8:
        raise ValueError(f"source state is not pure (purity {purity})")
    rows, cols = rt.shape[0], rp.shape[0]
    if M.dim != rows:
        raise ShapeError(f"measurements act on dimension {M.dim}, target is {rows}")

    d = M.expectations(rt)
    F = _factor(rp)
    n_k = opts.n_k
    Kst = polar(init_kraus(n_k, rows, cols, opts.seed).stacked())
    tall = Kst.shape[0] >= Kst.shape[1]
    lam = opts.lambda_reg

    current = _cost_from_stack(Kst, n_k, F, d, M, lam)
    trace = [current]
    defects = [_defect(Kst)] if opts.track_completeness else []
    status = "max_iters"
    since_reorth = 0
    for _ in range(opts.max_iters):
        if current <= opts.tol:
            status = "converged"
            break
        U, V = _gradient_factors(Kst, n_k, F, d, M, lam)
        gnorm = math.sqrt(abs(np.trace((U.conj().T @ U) @ (V.conj().T @ V)).real))
        if gnorm == 0.0:
            status = "stalled"
            break
        step = opts.step
        accepted = False
        while step >= opts.min_step:
            eta = step / gnorm
            trial = polar_lowrank_update(Kst, U, V, eta) if tall else polar(Kst - eta * (U @ V.conj().T))
            value = _cost_from_stack(trial, n_k, F, d, M, lam)
            if value < current:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = "stalled"
            break
        Kst, current = trial, value
        since_reorth += 1
        if tall and since_reorth >= opts.reorth_every:
            Kst = polar(Kst)
            current = _cost_from_stack(Kst, n_k, F, d, M, lam)
            since_reorth = 0
        trace.append(current)
        if opts.track_completeness:
            defects.append(_defect(Kst))
    else:
        if current <= opts.tol:
            status = "converged"

    if tall:
        Kst = polar(Kst)
    K = KrausSet.from_stacked(Kst, n_k)
    predicted, factor = apply_process(K, rp)
    fid = fidelity(predicted, rt)
    run = QptRun(
        cost_trace=trace, tol=opts.tol, lambda_reg=lam, seed=opts.seed, result=K,
        predicted=predicted, fidelity_to_target=fid, converged=status == "converged",
        status=status, renormalization=factor, completeness_defect=K.completeness_defect,
        options=asdict(opts), defect_trace=defects,
    )
    run.entropy_target = von_neumann(DensityMatrix(rt))
    run.entropy_predicted = von_neumann(predicted)
    return run

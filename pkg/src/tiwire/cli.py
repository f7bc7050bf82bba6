"""Command-line front end: band sweeps, entropies, process tomography, convergence, cache."""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .basis import ConfigError, MaterialParams, QuadratureError, RootFindingError, WireGeometry, parse_params, read_mapping
from .cache import EigenCache, atomic_write_bytes, solve_cached
from .entropy import InvalidDensityError, entanglement_spectrum, topological_entropy, von_neumann
from .rdm import EmptyComplementError, ZeroNormError, mode_rdm, pure_density, sector_rdm
from .spectrum import TOPO_LOWER, TOPO_UPPER, SolverError, TrackingError, convergence_report

log = logging.getLogger("tiwire")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (SolverError, TrackingError, RootFindingError, QuadratureError, InvalidDensityError,
                  EmptyComplementError, ZeroNormError, np.linalg.LinAlgError, FloatingPointError)

QPT_DEFAULTS = {"abc": {"n_k": 20, "tol": 0.01, "N": 40, "max_iters": 2000},
                "md": {"n_k": 30, "tol": 0.1, "N": 64, "max_iters": 3000}}


@dataclass
class RunConfig:
    params: MaterialParams = field(default_factory=MaterialParams)
    geom: WireGeometry = field(default_factory=WireGeometry)
    N: int = 40
    L: tuple = (0, 1, 2, 3)
    kz_min: float = -0.3
    kz_max: float = 0.3
    kz_steps: int = 101
    rc: tuple = ()
    margin: float = 0.002
    qpt_mode: str = "abc"
    qpt_L: int = 0
    qpt_kz: tuple = (0.02, 0.04, 0.06, 0.08, 0.1)
    qpt_branch: str = "lower"
    qpt_N: int | None = None
    n_k: int | None = None
    tol: float | None = None
    lambda_reg: float = 0.0
    max_iters: int | None = None
    seed: int = 0
    conv_L: int = 0
    conv_kz: float = 0.1
    conv_branch: str = "upper"
    sizes: tuple = tuple(range(20, 65, 4))
    out: str = "out"
    workers: int = 1

    def __post_init__(self):
        if not self.L:
            raise ConfigError("L list is empty")
        if self.kz_steps < 1:
            raise ConfigError("kz_steps must be >= 1")
        if self.kz_min > self.kz_max:
            raise ConfigError("kz_min exceeds kz_max")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        for rc in self.rc_list:
            if not 0 < rc < self.geom.R:
                raise ConfigError(f"Rc={rc} outside (0, R={self.geom.R})")
        if self.qpt_mode not in QPT_DEFAULTS:
            raise ConfigError(f"qpt_mode must be one of {sorted(QPT_DEFAULTS)}")
        for b in (self.qpt_branch, self.conv_branch):
            if b not in ("upper", "lower"):
                raise ConfigError("branch must be 'upper' or 'lower'")
        if not self.qpt_kz:
            raise ConfigError("qpt_kz is empty")
        if len(self.sizes) < 2 or list(self.sizes) != sorted(self.sizes):
            raise ConfigError("sizes must be ascending with at least two entries")
        if self.lambda_reg < 0:
            raise ConfigError("lambda must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def rc_list(self) -> tuple:
        return tuple(self.rc) if self.rc else (self.geom.Rc,)

    @property
    def kz_grid(self) -> np.ndarray:
        return np.linspace(self.kz_min, self.kz_max, self.kz_steps)

    def qpt_setting(self, key):
        value = getattr(self, key if key != "N" else "qpt_N")
        return QPT_DEFAULTS[self.qpt_mode][key] if value is None else value

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


_RUN_KEYS = {f.name for f in fields(RunConfig)} - {"params", "geom"}
_TUPLE_INT = {"L", "sizes"}
_TUPLE_FLOAT = {"rc", "qpt_kz"}
_INT = {"N", "kz_steps", "qpt_L", "qpt_N", "n_k", "max_iters", "seed", "conv_L", "workers"}
_FLOAT = {"kz_min", "kz_max", "margin", "tol", "lambda_reg", "conv_kz"}


def _as_list(value):
    if isinstance(value, (list, tuple)):
        return list(value)
    text = str(value).strip().strip("[]")
    return [s for s in (t.strip() for t in text.split(",")) if s]


def config_from_mapping(data: dict) -> RunConfig:
    """Split a flat mapping into material/geometry keys and run settings."""
    run = {k: v for k, v in data.items() if k in _RUN_KEYS}
    params, geom = parse_params({k: v for k, v in data.items() if k not in _RUN_KEYS})
    try:
        for k, v in list(run.items()):
            if k in _TUPLE_INT:
                run[k] = tuple(int(x) for x in _as_list(v))
            elif k in _TUPLE_FLOAT:
                run[k] = tuple(float(x) for x in _as_list(v))
            elif k in _INT:
                run[k] = None if v is None else int(v)
            elif k in _FLOAT:
                run[k] = None if v is None else float(v)
            else:
                run[k] = str(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return RunConfig(params=params, geom=geom, **run)


def build_config(args) -> RunConfig:
    data = read_mapping(args.config) if args.config else {}
    cfg = config_from_mapping(data)
    over = {}
    if args.out is not None:
        over["out"] = args.out
    if args.workers is not None:
        over["workers"] = args.workers
    if args.seed is not None:
        over["seed"] = args.seed
    if args.rc is not None:
        over["rc"] = tuple(float(x) for x in _as_list(args.rc))
    if args.nk is not None:
        over["n_k"] = args.nk
    if args.tol is not None:
        over["tol"] = args.tol
    if args.lambda_reg is not None:
        over["lambda_reg"] = args.lambda_reg
    if getattr(args, "mode", None):
        over["qpt_mode"] = args.mode
    return replace(cfg, **over) if over else cfg


# --------------------------------------------------------------------------
# output helpers

def provenance(cfg: RunConfig, **extra) -> str:
    items = {"tiwire": __version__, "config": cfg.digest(), "params": cfg.params.digest(), "seed": cfg.seed}
    items.update(extra)
    return "# " + " ".join(f"{k}={v}" for k, v in items.items()) + "\n"


def write_csv(path: Path, header_line: str, columns, rows) -> int:
    buf = io.StringIO()
    buf.write(header_line)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    n = 0
    for row in rows:
        w.writerow(row)
        n += 1
    atomic_write_bytes(path, buf.getvalue().encode())
    return n


def _fmt(x) -> str:
    return f"{float(x):.12e}"


def _open(root):
    return EigenCache(root) if root is not None else None


def _root(cache):
    return cache.root if cache is not None else None


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


# --------------------------------------------------------------------------
# bands

def _bands_job(args):
    cfg, cache_root, L, kz = args
    states, window = solve_cached(cfg.params, cfg.geom, L, kz, cfg.N, _open(cache_root), cfg.margin)
    return L, kz, [(s.index, s.energy, s.label) for s in states], window


def cmd_bands(cfg: RunConfig, cache: EigenCache) -> int:
    out = Path(cfg.out)
    jobs = [(cfg, _root(cache), L, float(kz)) for L in cfg.L for kz in cfg.kz_grid]
    results = _map(_bands_job, jobs, cfg.workers)
    rows, windows = [], {}
    for L, kz, states, window in results:
        windows[kz] = window
        rows.extend((L, repr(kz), i, _fmt(e), lab) for i, e, lab in states)
    head = provenance(cfg, N=cfg.N, R=cfg.geom.R)
    n = write_csv(out / "bands.csv", head, ["L", "k_z", "index", "energy_eV", "label"], rows)
    write_csv(out / "gap_window.csv", head, ["k_z", "lower_eV", "upper_eV"],
              ((repr(k), _fmt(w[0]), _fmt(w[1])) if w else (repr(k), "nan", "nan")
               for k, w in sorted(windows.items())))
    log.info("wrote %d band rows to %s", n, out / "bands.csv")
    return EXIT_OK


# --------------------------------------------------------------------------
# entropies

def _entropy_job(args):
    cfg, cache_root, L, kz, which = args
    states, _ = solve_cached(cfg.params, cfg.geom, L, kz, cfg.N, _open(cache_root), cfg.margin)
    topo, md, spectra = [], [], []
    for s in states:
        try:
            if which in ("topo", "both"):
                for rc in cfg.rc_list:
                    rep = topological_entropy(s, cfg.geom.with_rc(rc))
                    topo.append([L, repr(kz), s.index, rep.label, *rep.row()[3:]])
            if which in ("md", "both"):
                rho = mode_rdm(s, cfg.geom)
                md.append([L, repr(kz), s.index, s.label, _fmt(von_neumann(rho))])
                if s.is_topological:
                    spectra.append((f"L{L}_kz{kz:+.5f}_{s.label}", entanglement_spectrum(rho)))
        except NUMERIC_ERRORS as exc:
            raise SolverError(f"state {s.index} ({s.label}): {exc}", L, kz) from exc
    return topo, md, spectra


def cmd_entropy(cfg: RunConfig, cache: EigenCache, which: str = "both") -> int:
    out = Path(cfg.out)
    jobs = [(cfg, _root(cache), L, float(kz), which) for L in cfg.L for kz in cfg.kz_grid]
    results = _map(_entropy_job, jobs, cfg.workers)
    head = provenance(cfg, N=cfg.N, R=cfg.geom.R)
    if which in ("topo", "both"):
        from .basis import REGIONS
        cols = ["L", "k_z", "index", "label", "energy_eV", *(f"S_{r}" for r in REGIONS), "S_t", "abs_S_t", "Rc"]
        write_csv(out / "topo.csv", head, cols, (r for t, _, _ in results for r in t))
    if which in ("md", "both"):
        write_csv(out / "md.csv", head, ["L", "k_z", "index", "label", "S_MD"],
                  (r for _, m, _ in results for r in m))
        sdir = out / "spectra"
        for _, _, spectra in results:
            for stem, es in spectra:
                buf = io.StringIO()
                buf.write(head)
                es.write_csv(buf)
                atomic_write_bytes(sdir / f"{stem}.csv", buf.getvalue().encode())
    return EXIT_OK


# --------------------------------------------------------------------------
# process tomography

def _qpt_job(args):
    from .qpt import QptOptions, learn_process, measurement_set, qubits_for

    cfg, cache_root, kz = args
    N = cfg.qpt_setting("N")
    states, _ = solve_cached(cfg.params, cfg.geom, cfg.qpt_L, kz, N, _open(cache_root), cfg.margin)
    wanted = TOPO_UPPER if cfg.qpt_branch == "upper" else TOPO_LOWER
    hits = [s for s in states if s.label == wanted]
    if not hits:
        return kz, None, f"no {wanted} state"
    s = hits[0]
    if cfg.qpt_mode == "abc":
        target = sector_rdm(s, "ABC", cfg.geom)
        M = measurement_set(qubits_for(target.dim), "full-pauli")
    else:
        target = mode_rdm(s, cfg.geom)
        M = measurement_set(qubits_for(target.dim), "x-string")
    opts = QptOptions(n_k=cfg.qpt_setting("n_k"), tol=cfg.qpt_setting("tol"), lambda_reg=cfg.lambda_reg,
                      max_iters=cfg.qpt_setting("max_iters"), seed=cfg.seed)
    run = learn_process(pure_density(s), target, M, opts)
    return kz, run, ""


def cmd_qpt(cfg: RunConfig, cache: EigenCache) -> int:
    out = Path(cfg.out) / f"qpt_{cfg.qpt_mode}"
    results = _map(_qpt_job, [(cfg, _root(cache), float(kz)) for kz in cfg.qpt_kz], cfg.workers)
    rows, ok = [], 0
    for kz, run, err in results:
        if run is None:
            rows.append([repr(kz), "nan", "nan", "nan", "nan", "no-state", 0, "nan"])
            log.warning("k_z=%s: %s", kz, err)
            continue
        stem = f"L{cfg.qpt_L}_kz{kz:+.5f}"
        run.write(out, stem, {"tiwire": __version__, "config": cfg.digest(), "seed": cfg.seed,
                              "mode": cfg.qpt_mode, "k_z": kz, "L": cfg.qpt_L})
        ok += run.converged
        rows.append([repr(kz), _fmt(run.entropy_target), _fmt(run.entropy_predicted), _fmt(run.entropy_gap),
                     _fmt(run.fidelity_to_target), run.status, run.iterations, _fmt(run.cost_trace[-1])])
    head = provenance(cfg, mode=cfg.qpt_mode, N=cfg.qpt_setting("N"), L=cfg.qpt_L, branch=cfg.qpt_branch)
    write_csv(out / "summary.csv", head,
              ["k_z", "S_target", "S_predicted", "abs_dS", "fidelity", "status", "iterations", "final_cost"], rows)
    if ok == 0:
        log.error("no process-tomography run converged")
        return EXIT_NUMERIC
    return EXIT_OK


# --------------------------------------------------------------------------
# convergence

def cmd_convergence(cfg: RunConfig, cache: EigenCache) -> int:
    report = convergence_report(cfg.params, cfg.geom, cfg.conv_L, cfg.conv_kz, cfg.sizes,
                                branch=cfg.conv_branch, margin=cfg.margin)
    head = provenance(cfg, L=cfg.conv_L, k_z=cfg.conv_kz, branch=cfg.conv_branch)
    write_csv(Path(cfg.out) / "convergence.csv", head, ["N", "energy_eV", "fidelity_to_next"],
              ([p.N, _fmt(p.energy), "" if p.fidelity_to_next is None else _fmt(p.fidelity_to_next)]
               for p in report))
    return EXIT_OK


def cmd_cache(cache: EigenCache, action: str) -> int:
    if action == "clear":
        print(f"removed {cache.clear()} entries from {cache.dir}")
        return EXIT_OK
    entries = cache.entries()
    print(f"cache: {cache.dir} ({len(entries)} entries)")
    for e in entries:
        h = e.header
        print(f"  {e.path.name}  L={h.get('L')} k_z={h.get('k_z')} N={h.get('N')} R={h.get('R')} "
              f"params={h.get('params')} bytes={e.size}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON object or key=value file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--rc", help="comma-separated inner radii (Å)")
    common.add_argument("--nk", type=int, help="number of Kraus operators")
    common.add_argument("--tol", type=float, help="cost tolerance")
    common.add_argument("--lambda", dest="lambda_reg", type=float, help="regularisation strength")
    common.add_argument("--cache-dir", help="cache root (default $TIWIRE_CACHE)")
    common.add_argument("--no-cache", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tiwire", description="Topological-insulator nanowire states and entropies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("bands", parents=[common], help="variational spectrum with state labels")
    e = sub.add_parser("entropy", parents=[common], help="topological and mode-dependent entropies")
    e.add_argument("which", nargs="?", choices=("topo", "md", "both"), default="both")
    q = sub.add_parser("qpt", parents=[common], help="learn Kraus operators reproducing a reduced matrix")
    q.add_argument("--mode", choices=sorted(QPT_DEFAULTS))
    sub.add_parser("convergence", parents=[common], help="energy and fidelity versus basis size")
    c = sub.add_parser("cache", parents=[common], help="inspect or clear the eigenstate cache")
    c.add_argument("action", choices=("inspect", "clear"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # in-gap count warnings are expected outside the plateau
        logging.getLogger("tiwire.spectrum").setLevel(logging.ERROR)
    cache = EigenCache(args.cache_dir) if not args.no_cache or args.command == "cache" else None
    if args.command == "cache":
        return cmd_cache(cache, args.action)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "bands":
            return cmd_bands(cfg, cache)
        if args.command == "entropy":
            return cmd_entropy(cfg, cache, args.which)
        if args.command == "qpt":
            return cmd_qpt(cfg, cache)
        if args.command == "convergence":
            return cmd_convergence(cfg, cache)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest

from tiwire.cache import CACHE_ENV, EigenCache, default_root, solve_cached
from tiwire.hamiltonian import assemble
from tiwire.spectrum import solve_point


def test_default_root_from_env(monkeypatch, tmp_path):
    monkeypatch.setenv(CACHE_ENV, str(tmp_path))
    assert default_root() == tmp_path
    monkeypatch.delenv(CACHE_ENV)
    assert default_root().name == "tiwire"


def test_roundtrip_and_residual(tmp_path, params, geom):
    cache = EigenCache(tmp_path)
    fresh, window = solve_cached(params, geom, 1, 0.05, 15, cache)
    assert len(cache.entries()) == 1
    again, window2 = solve_cached(params, geom, 1, 0.05, 15, cache)
    assert window == window2
    assert [s.label for s in again] == [s.label for s in fresh]
    H = assemble(params, geom, 1, 0.05, 15).H
    norm = np.linalg.norm(H, 2)
    for a, b in zip(fresh, again):
        assert a.energy == b.energy and np.array_equal(a.coeffs, b.coeffs)
        assert np.linalg.norm(H @ b.coeffs - b.energy * b.coeffs) <= 1e-8 * norm


def test_matches_uncached(tmp_path, params, geom):
    cached, _ = solve_cached(params, geom, 0, -0.02, 10, EigenCache(tmp_path))
    plain, _ = solve_point(params, geom, 0, -0.02, 10)
    assert [s.energy for s in cached] == [s.energy for s in plain]
    assert solve_cached(params, geom, 0, -0.02, 10, None)[0][3].energy == plain[3].energy


def test_keys_separate_parameters(tmp_path, params, geom):
    from tiwire.basis import MaterialParams

    cache = EigenCache(tmp_path)
    solve_cached(params, geom, 0, 0.0, 4, cache)
    solve_cached(MaterialParams(A0=3.0), geom, 0, 0.0, 4, cache)
    solve_cached(params, geom, 0, 0.0, 5, cache)
    assert len(cache.entries()) == 3


def test_header_and_clear(tmp_path, params, geom):
    cache = EigenCache(tmp_path)
    solve_cached(params, geom, 2, 0.1, 6, cache)
    (entry,) = cache.entries()
    assert entry.header == {"L": 2, "k_z": 0.1, "N": 6, "R": 600.0, "params": params.digest(), "dim": 24}
    assert entry.path.read_bytes()[:4] == b"TIWS"
    assert cache.clear() == 1 and cache.entries() == []
    assert EigenCache(tmp_path / "none").clear() == 0


def test_corrupt_entry_is_recomputed(tmp_path, params, geom):
    cache = EigenCache(tmp_path)
    path = cache.path_for(params, geom.R, 3, 0, 0.0)
    path.parent.mkdir(parents=True)
    path.write_bytes(b"garbage")
    assert cache.get(params, geom.R, 3, 0, 0.0) is None
    states, _ = solve_cached(params, geom, 0, 0.0, 3, cache)
    assert len(states) == 12
    assert cache.get(params, geom.R, 3, 0, 0.0) is not None
    bad = tmp_path / "x.tiws"
    bad.write_bytes(b"NOPE")
    with pytest.raises(ValueError):
        EigenCache.read(bad)

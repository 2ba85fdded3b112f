import numpy as np
import pytest

from spheregrid import GridConfig, ObjectStore, QueryEngine, build_tables


CYCLIC16 = GridConfig(4, 4, 4, True, True, True)
BOUNDED16 = GridConfig(4, 4, 4)
BOUNDED_32_16_8 = GridConfig(5, 4, 3)


@pytest.fixture(scope="session")
def tables_cyclic16():
    return build_tables(CYCLIC16)


@pytest.fixture(scope="session")
def tables_bounded16():
    return build_tables(BOUNDED16)


@pytest.fixture(scope="session")
def tables_bounded_32_16_8():
    return build_tables(BOUNDED_32_16_8)


def make_scene(config, n, seed, payload=None):
    rng = np.random.default_rng(seed)
    store = ObjectStore(config)
    ext = np.asarray(config.extents, dtype=np.float64)
    pts = rng.random((n, 3)) * ext
    for i in range(n):
        store.insert((pts[i, 0], pts[i, 1], pts[i, 2]),
                     payload if payload is not None else i)
    return store


def hit_signature(hits):
    return sorted((h.handle, h.dist_sq) for h in hits)


def outcome_signature(engine: QueryEngine, center, d, method):
    out = engine.probe(center, d, method)
    order = np.lexsort((out.dist_sq, out.handles))
    return out.handles[order], out.dist_sq[order]

import numpy as np
import pytest

from spheregrid import ObjectStore, QueryEngine, SelectionWeights

from conftest import BOUNDED16, CYCLIC16, make_scene


@pytest.fixture(scope="module")
def engine(tables_cyclic16):
    return QueryEngine(make_scene(CYCLIC16, 4000, seed=77), tables_cyclic16)


def naive_k_smallest(engine, center, d_init, k):
    return sorted(h.dist_sq for h in engine.naive_scan(center, d_init))[:k]


class TestBasics:
    def test_single_object(self, tables_cyclic16):
        store = ObjectStore(CYCLIC16)
        h = store.insert((3.0, 4.0, 5.0), "only")
        eng = QueryEngine(store, tables_cyclic16)
        hits = eng.query_knn((10.0, 10.0, 10.0), 1, 16.0)
        assert [x.handle for x in hits] == [h]

    def test_k_larger_than_population(self, engine):
        hits = engine.query_knn((8.0, 8.0, 8.0), 10_000, 2.0)
        naive = naive_k_smallest(engine, (8.0, 8.0, 8.0), 2.0, 10_000)
        assert [h.dist_sq for h in hits] == pytest.approx(naive)
        dists = [h.dist_sq for h in hits]
        assert dists == sorted(dists)

    def test_k_zero_rejected(self, engine):
        with pytest.raises(ValueError):
            engine.query_knn((1.0, 1.0, 1.0), 0, 5.0)
        with pytest.raises(ValueError):
            engine.query_knn((1.0, 1.0, 1.0), 3, 0.0)

    def test_d_init_caps_the_search(self, engine):
        far = engine.query_knn((8.0, 8.0, 8.0), 5, 0.05)
        assert all(h.dist_sq <= 0.05 ** 2 for h in far)


class TestOracle:
    @pytest.mark.parametrize("k", [1, 8, 32])
    @pytest.mark.parametrize("d_init", [0.8, 2.5, 6.0, 13.0])
    def test_distance_multiset_matches_naive(self, engine, k, d_init):
        rng = np.random.default_rng(k * 100 + int(d_init * 10))
        for _ in range(10):
            c = tuple((rng.random(3) * 16).tolist())
            want = naive_k_smallest(engine, c, d_init, k)
            got = [h.dist_sq for h in engine.query_knn(c, k, d_init)]
            assert got == sorted(got)
            assert got == pytest.approx(want, abs=1e-12)

    def test_equidistant_ties_keep_multiset(self, tables_cyclic16):
        store = ObjectStore(CYCLIC16)
        for pos in [(9.0, 8.0, 8.0), (7.0, 8.0, 8.0), (8.0, 9.0, 8.0), (8.0, 7.0, 8.0)]:
            store.insert(pos)
        eng = QueryEngine(store, tables_cyclic16)
        hits = eng.query_knn((8.0, 8.0, 8.0), 2, 5.0)
        assert [h.dist_sq for h in hits] == [1.0, 1.0]


class TestBoundedAndFallbacks:
    def test_bounded_world(self, tables_bounded16):
        eng = QueryEngine(make_scene(BOUNDED16, 2500, seed=70), tables_bounded16)
        rng = np.random.default_rng(8)
        for k in (1, 8):
            for _ in range(10):
                c = tuple((rng.random(3) * 16).tolist())
                want = naive_k_smallest(eng, c, 9.0, k)
                got = [h.dist_sq for h in eng.query_knn(c, k, 9.0)]
                assert got == pytest.approx(want, abs=1e-12)

    def test_outside_center_uses_box_route(self, tables_bounded16):
        eng = QueryEngine(make_scene(BOUNDED16, 2500, seed=71), tables_bounded16)
        c = (-1.5, 8.0, 8.0)
        want = naive_k_smallest(eng, c, 10.0, 4)
        got = [h.dist_sq for h in eng.query_knn(c, 4, 10.0)]
        assert got == pytest.approx(want, abs=1e-12)

    def test_revert_distance_switches_to_box(self, tables_cyclic16, monkeypatch):
        store = make_scene(CYCLIC16, 2000, seed=72)
        eng = QueryEngine(store, tables_cyclic16,
                          SelectionWeights(revert_knn=3.0))
        routes = []
        orig = QueryEngine._knn_box
        monkeypatch.setattr(
            QueryEngine, "_knn_box",
            lambda self, ctx, k: routes.append("box") or orig(self, ctx, k),
        )
        want = naive_k_smallest(eng, (5.0, 5.0, 5.0), 2.0, 6)
        got = [h.dist_sq for h in eng.query_knn((5.0, 5.0, 5.0), 6, 2.0)]
        assert routes == ["box"]
        assert got == pytest.approx(want, abs=1e-12)
        eng.query_knn((5.0, 5.0, 5.0), 6, 4.0)  # above the revert radius
        assert routes == ["box"]

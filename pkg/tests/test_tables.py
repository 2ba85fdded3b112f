import math

import numpy as np
import pytest

from spheregrid import (
    GridConfig,
    build_expected_counts,
    build_offset_table,
    build_shaved_tables,
    direction_mask,
    encode_offset,
    end_index_for,
    farthest_sq,
    min_bound_sq,
)
from spheregrid.geometry import cell_min_dist_sq_many
from spheregrid.grid import expand, locate
from spheregrid.tables import required_mask_bits

from conftest import CYCLIC16


class TestMinBound:
    def test_figure_corner_value(self):
        # the 2D 3^2 + 2^2 = 13 corner, embedded with a flat third axis
        for sx in (1, -1):
            for sy in (1, -1):
                assert min_bound_sq((4 * sx, 3 * sy, 0)) == 13

    def test_neighborhood_is_zero(self):
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    assert min_bound_sq((dx, dy, dz)) == 0

    def test_mixed(self):
        assert min_bound_sq((3, -2, 2)) == 6


class TestFarthest:
    def test_own_cell_centered(self):
        off = encode_offset((0, 0, 0), CYCLIC16)
        _, frac = locate((0.5, 0.5, 0.5), CYCLIC16)
        assert farthest_sq(off, frac) == pytest.approx(0.75)

    def test_own_cell_corner(self):
        off = encode_offset((0, 0, 0), CYCLIC16)
        _, frac = locate((4.0, 4.0, 4.0), CYCLIC16)
        assert farthest_sq(off, frac) == pytest.approx(3.0)

    def test_two_cells_over(self):
        off = encode_offset((2, 0, 0), CYCLIC16)
        _, frac = locate((1.0, 0.5, 0.5), CYCLIC16)
        assert farthest_sq(off, frac) == pytest.approx(9.5)

    def test_sampled_maximum(self):
        rng = np.random.default_rng(11)
        pts = np.linspace(0.0, 1.0, 33)
        for _ in range(60):
            delta = tuple(int(rng.integers(-3, 4)) for _ in range(3))
            frac_v = tuple(rng.random(3).tolist())
            off = encode_offset(delta, CYCLIC16)
            _, frac = locate((frac_v[0], frac_v[1], frac_v[2]), CYCLIC16)
            want = 0.0
            for axis in range(3):
                cand = np.abs(delta[axis] + pts - frac_v[axis])
                want += float(cand.max()) ** 2
            assert farthest_sq(off, frac) == pytest.approx(want, abs=1e-9)


class TestOffsetTable:
    def test_entry_cardinalities(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        sizes = np.diff(ot.end_positions, prepend=0)
        assert sizes[:5].tolist() == [27, 54, 36, 8, 54]
        # 7 is not a sum of three squares of the b form: no offsets of its own
        assert sizes[7] == 0

    def test_cyclic_covers_each_cell_once(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        assert len(ot) == 4096
        center = expand(0, CYCLIC16)
        packed = CYCLIC16.translate_many(center, ot.encoded)
        assert len(np.unique(packed)) == 4096

    def test_bounded_offset_count(self, tables_bounded16):
        assert len(tables_bounded16.offsets) == 31 ** 3 == 29791

    def test_sorted_by_b_sq(self, tables_cyclic16):
        b = tables_cyclic16.offsets.b_sq
        assert (b[1:] >= b[:-1]).all()
        assert b[0] == 0

    def test_tie_order_is_zyx_lexicographic(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        key = [
            (int(b), int(d[2]), int(d[1]), int(d[0]))
            for b, d in zip(ot.b_sq, ot.delta)
        ]
        assert key == sorted(key)


class TestEndIndex:
    def test_truncation(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        assert end_index_for(ot, 0.99) == 27
        assert end_index_for(ot, 0.0) == 27

    def test_missing_entry_falls_back(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        assert end_index_for(ot, 7.5) == int(ot.end_positions[6])

    def test_clamps_to_table(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        assert end_index_for(ot, 1e9) == len(ot)

    def test_negative_rejected(self, tables_cyclic16):
        with pytest.raises(ValueError):
            end_index_for(tables_cyclic16.offsets, -1.0)


class TestShaved:
    def test_mask_zero_is_full_slice(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        for ring in tables_cyclic16.shaved.rings:
            assert np.array_equal(
                ring.kept[0], np.arange(ring.start, ring.end, dtype=np.int32)
            )

    def test_every_mask_is_subset_of_full_slice(self, tables_cyclic16):
        for ring in tables_cyclic16.shaved.rings:
            full = set(range(ring.start, ring.end))
            for mask in range(64):
                assert set(ring.kept[mask].tolist()) <= full

    def test_ring_membership_matches_b_sq(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        for ring in tables_cyclic16.shaved.rings:
            b = ot.b_sq[ring.start:ring.end]
            assert (b >= ring.ring ** 2).all()
            assert (b < (ring.ring + 1) ** 2).all()
        spans = sum(r.end - r.start for r in tables_cyclic16.shaved.rings)
        assert spans == len(ot)

    def test_axis_aligned_offset_excluded_exactly_by_its_direction(self, tables_cyclic16):
        # a +x offset at b_sq = 4 sits in ring 2 and disappears from exactly
        # the masks that assume frac(d) < zeta in +x
        ot = tables_cyclic16.offsets
        ring = tables_cyclic16.shaved.rings[2]
        target = None
        for i in range(ring.start, ring.end):
            if tuple(ot.delta[i]) == (3, 0, 0):
                target = i
        assert target is not None and ot.b_sq[target] == 4
        for mask in range(64):
            present = target in ring.kept[mask]
            assert present == (mask & 0b000001 == 0)

    def test_exclusion_rule(self, tables_cyclic16):
        # dropped iff the offset extends somewhere and every extended
        # direction carries its assumption bit (half-extent wraps need both)
        ot = tables_cyclic16.offsets
        for ring in tables_cyclic16.shaved.rings[:4]:
            req = required_mask_bits(
                ot.delta[ring.start:ring.end], ot.half_wrap[ring.start:ring.end]
            )
            for mask in (0, 1, 0b10, 0b111111, 0b101010, 0b010101, 37):
                kept = set(ring.kept[mask].tolist())
                for j, r in enumerate(req.tolist()):
                    idx = ring.start + j
                    expected_drop = r != 0 and (r & ~mask & 0x3F) == 0
                    assert (idx not in kept) == expected_drop

    def test_zero_offset_never_dropped(self, tables_cyclic16):
        ring = tables_cyclic16.shaved.rings[0]
        ot = tables_cyclic16.offsets
        zero = next(
            i for i in range(ring.start, ring.end)
            if tuple(ot.delta[i]) == (0, 0, 0)
        )
        for mask in range(64):
            assert zero in ring.kept[mask]


class TestCoverage:
    def test_traversal_covers_all_qualifying_cells(self, tables_cyclic16):
        # a 0.1-step radius sweep against the direct per-cell oracle: the
        # traversed set (before the run-time test) must contain every cell
        # whose exact minimum distance is within range
        cfg = CYCLIC16
        ot = tables_cyclic16.offsets
        shaved = tables_cyclic16.shaved
        coords = cfg.unpack_many(np.arange(cfg.cell_count, dtype=np.int64))
        rng = np.random.default_rng(99)
        centers = rng.random((250, 3)) * 16
        distances = [round(0.1 * k, 10) for k in range(1, 121)]
        for ci in range(len(centers)):
            c = (centers[ci, 0], centers[ci, 1], centers[ci, 2])
            packed_c, frac = locate(c, cfg)
            center_word = expand(packed_c, cfg)
            oracle = cell_min_dist_sq_many(c, coords, cfg)
            for d in distances:
                n_eff = min(int(d * d), ot.max_entry)
                m = int(d)
                f = d - m
                if m <= ot.max_ring:
                    ring = shaved.rings[m]
                    pre = int(ot.end_positions[m * m - 1]) if m else 0
                    mask = direction_mask(frac.frac, f)
                    cut = int(ring.kept_end[mask, n_eff - ring.first_entry])
                    idx = np.concatenate(
                        [np.arange(pre), ring.kept[mask][:cut]]
                    ).astype(np.int64)
                else:
                    idx = np.arange(int(ot.end_positions[n_eff]), dtype=np.int64)
                packed = cfg.translate_many(center_word, ot.encoded[idx])
                covered = np.zeros(cfg.cell_count, dtype=bool)
                covered[packed[packed != cfg.outside_index]] = True
                missing = (oracle <= d * d) & ~covered
                assert not missing.any(), (c, d, np.flatnonzero(missing)[:5])


class TestExpectedCounts:
    def test_entry_zero_bounded_by_neighborhood(self, tables_cyclic16):
        assert 0 < tables_cyclic16.expected.values[0] <= 27

    def test_bounded_by_entry_end(self, tables_cyclic16):
        ot = tables_cyclic16.offsets
        assert (tables_cyclic16.expected.values <= ot.end_positions + 1e-9).all()

    def test_monotone(self, tables_cyclic16):
        v = tables_cyclic16.expected.values
        assert (np.diff(v) >= -1e-9).all()

    def test_saturates_at_full_table(self, tables_cyclic16):
        # the last entry still shaves a handful of edge cells for small
        # frac(d) samples, so it approaches the full 4096 from below
        v = float(tables_cyclic16.expected.values[-1])
        assert 4090.0 <= v <= 4096.0

    def test_within_lattice_envelope(self):
        # every entry sits between the lattice minimum and the full count
        cfg = GridConfig(3, 3, 3, True, True, True)
        ot = build_offset_table(cfg)
        shaved = build_shaved_tables(ot)
        expected = build_expected_counts(ot, shaved, sample_grid=4)
        for n in range(ot.max_entry + 1):
            m = math.isqrt(n)
            ring = shaved.rings[m]
            base = int(ot.end_positions[m * m - 1]) if m else 0
            col = n - ring.first_entry
            lo = base + min(int(ring.kept_end[mask, col]) for mask in range(64))
            hi = int(ot.end_positions[n])
            assert lo - 1e-9 <= expected.values[n] <= hi + 1e-9

    def test_sample_grid_must_be_reasonable(self, tables_cyclic16):
        with pytest.raises(ValueError):
            build_expected_counts(
                tables_cyclic16.offsets, tables_cyclic16.shaved, sample_grid=1
            )

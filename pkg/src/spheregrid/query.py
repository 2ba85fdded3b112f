"""Neighbor queries: sphere-table, bounding-box, non-empty-list and naive.

All four methods answer the same question -- every stored in-region object
within ``x <= d`` of the center, boundary inclusive -- and must return the
same hit set.  They differ only in which cells they touch.  Comparisons
happen on squared distances throughout; cells are rejected only on a
strict ``t^2 > d^2`` with ``t`` an exact minimum-distance bound, so no
qualifying object can be lost to the acceleration structure.

Objects parked in the outside cell of a bounded world have left the region
of interest and are invisible to every query method, the naive scan
included; they come back into scope when relocated inside.

The query radius is never truncated for object acceptance.  The table's
``d_max`` clamp only bounds the traversal: beyond it the full table is
walked (covering every cell exactly once) and the final-ring shaving is
disabled, while objects are still accepted against the caller's ``d``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable

import numpy as np

from . import geometry
from .geometry import min_dist_sq, farthest_sq  # re-exported query math  # noqa: F401
from .grid import SubCellFractions, expand, locate
from .store import ObjectStore, StoreSnapshot
from .tables import SphereTables, direction_mask, expected_count_for

Visitor = Callable[["NeighborHit"], None]


class Method(Enum):
    SPHERE = "sphere"
    BOX = "box"
    NONEMPTY = "nonempty"
    NAIVE = "naive"


@dataclass(frozen=True)
class SelectionWeights:
    """Per-method cost weights plus the optional small-radius reversions."""

    sphere: float = 1.0
    box: float = 1.0
    nonempty: float = 1.0
    revert_all: float | None = None
    revert_knn: float | None = None

    def __post_init__(self) -> None:
        if min(self.sphere, self.box, self.nonempty) <= 0:
            raise ValueError("selection weights must be positive")


@dataclass(frozen=True)
class NeighborHit:
    handle: int
    payload: Any
    dist_sq: float


@dataclass(frozen=True)
class QueryOutcome:
    """Raw query result: matching object rows plus traversal statistics."""

    handles: np.ndarray
    dist_sq: np.ndarray
    rows: np.ndarray
    cells_visited: int
    method: Method

    @property
    def count(self) -> int:
        return len(self.handles)


@dataclass(frozen=True)
class QueryContext:
    """Everything derived once per query from (center, d)."""

    center: tuple[float, float, float]
    d: float
    d_sq: float
    packed_cell: int
    frac: SubCellFractions
    f: float
    mask: int
    center_outside: bool


class QueryEngine:
    """Read-only query façade over one store and one table bundle.

    Queries may run concurrently with each other but not with store
    mutations.  Visitors are invoked once per qualifying object and must
    not mutate the store.
    """

    def __init__(
        self,
        store: ObjectStore,
        tables: SphereTables,
        weights: SelectionWeights | None = None,
    ):
        if store.config != tables.config:
            raise ValueError("store and tables were built for different grids")
        self.store = store
        self.tables = tables
        self.config = store.config
        self.weights = weights or SelectionWeights()

    # --- public operations ------------------------------------------------

    def query_all(
        self,
        center: tuple[float, float, float],
        d: float,
        visitor: Visitor | None = None,
        method: Method | None = None,
    ) -> int:
        """Deliver every object within ``d`` of ``center`` to the visitor."""
        outcome = self.probe(center, d, method)
        if visitor is not None:
            self._deliver(outcome, visitor)
        return outcome.count

    def find_all(
        self,
        center: tuple[float, float, float],
        d: float,
        method: Method | None = None,
    ) -> list[NeighborHit]:
        return self._hits(self.probe(center, d, method))

    def probe(
        self,
        center: tuple[float, float, float],
        d: float,
        method: Method | None = None,
    ) -> QueryOutcome:
        ctx = self.prepare(center, d)
        if method is None:
            method = self.select_method_ctx(ctx)
        if method == Method.SPHERE:
            return self._sphere(ctx)
        if method == Method.BOX:
            return self._box(ctx)
        if method == Method.NONEMPTY:
            return self._nonempty(ctx)
        return self._naive(ctx)

    def query_sphere(self, center, d, visitor: Visitor | None = None) -> int:
        outcome = self._sphere(self.prepare(center, d))
        if visitor is not None:
            self._deliver(outcome, visitor)
        return outcome.count

    def query_box(self, center, d, visitor: Visitor | None = None) -> int:
        outcome = self._box(self.prepare(center, d))
        if visitor is not None:
            self._deliver(outcome, visitor)
        return outcome.count

    def query_nonempty(self, center, d, visitor: Visitor | None = None) -> int:
        outcome = self._nonempty(self.prepare(center, d))
        if visitor is not None:
            self._deliver(outcome, visitor)
        return outcome.count

    def naive_scan(self, center, d) -> list[NeighborHit]:
        """O(n) reference scan; the correctness oracle for everything else."""
        return self._hits(self._naive(self.prepare(center, d)))

    def select_method(self, center, d) -> Method:
        return self.select_method_ctx(self.prepare(center, d))

    def query_knn(
        self, center: tuple[float, float, float], k: int, d_init: float
    ) -> list[NeighborHit]:
        """The up-to-k nearest objects within ``d_init``, sorted by distance."""
        if k < 1:
            raise ValueError("k must be at least 1")
        if not d_init > 0:
            raise ValueError("d_init must be positive")
        ctx = self.prepare(center, d_init)
        revert = self.weights.revert_knn
        if ctx.center_outside or (revert is not None and d_init < revert):
            return self._knn_box(ctx, k)
        return self._knn_sphere(ctx, k)

    # --- context and selection ----------------------------------------------

    def prepare(self, center: tuple[float, float, float], d: float) -> QueryContext:
        if not all(math.isfinite(c) for c in center):
            raise ValueError(f"non-finite query center {center}")
        if not (math.isfinite(d) and d >= 0):
            raise ValueError(f"query radius must be finite and >= 0, got {d}")
        packed, frac = locate(center, self.config)
        f = d - math.floor(d)
        return QueryContext(
            center=(float(center[0]), float(center[1]), float(center[2])),
            d=float(d),
            d_sq=float(d) * float(d),
            packed_cell=packed,
            frac=frac,
            f=f,
            mask=direction_mask(frac.frac, f),
            center_outside=packed == self.config.outside_index,
        )

    def select_method_ctx(self, ctx: QueryContext) -> Method:
        w = self.weights
        if w.revert_all is not None and ctx.d < w.revert_all:
            return Method.BOX
        candidates: list[tuple[float, Method]] = []
        if not ctx.center_outside:
            sphere_cost = w.sphere * expected_count_for(self.tables, ctx.d_sq)
            candidates.append((sphere_cost, Method.SPHERE))
        candidates.append((w.box * self._box_cell_count(ctx), Method.BOX))
        candidates.append((w.nonempty * self.store.nonempty_size, Method.NONEMPTY))
        # stable min keeps the sphere > box > nonempty preference on ties
        best = candidates[0]
        for cand in candidates[1:]:
            if cand[0] < best[0]:
                best = cand
        return best[1]

    # --- method implementations ---------------------------------------------

    def _sphere(self, ctx: QueryContext) -> QueryOutcome:
        if ctx.center_outside:
            raise ValueError(
                "sphere traversal needs an in-region center cell; "
                "use the box or non-empty method for outside centers"
            )
        ot = self.tables.offsets
        n_eff = min(int(math.floor(ctx.d_sq)), ot.max_entry)
        m = int(math.floor(ctx.d))

        if m <= ot.max_ring:
            ring = self.tables.shaved.rings[m]
            prefix_end = int(ot.end_positions[m * m - 1]) if m >= 1 else 0
            sl = ring.kept[ctx.mask]
            cut = int(ring.kept_end[ctx.mask, n_eff - ring.first_entry])
            idx = np.concatenate(
                [np.arange(prefix_end, dtype=np.int64), sl[:cut].astype(np.int64)]
            )
        else:
            # radius beyond the last ring: full table, nothing to shave
            idx = np.arange(int(ot.end_positions[n_eff]), dtype=np.int64)

        delta = ot.delta[idx]
        b_sq = ot.b_sq[idx]
        b_comp = ot.b_comp[idx]
        half = ot.half_wrap[idx]

        # run-time rejection: exact t^2 test on the cells the shaving mask
        # cannot decide (everything above the d-1 base-distance heuristic)
        if ctx.d >= 1.0:
            tested = b_sq > (ctx.d - 1.0) ** 2
        else:
            tested = (delta != 0).any(axis=1)
        keep = np.ones(len(idx), dtype=bool)
        if tested.any():
            t2 = geometry.min_dist_sq_many(
                delta[tested], b_comp[tested], half[tested], ctx.frac
            )
            keep[tested] = t2 <= ctx.d_sq

        delta, b_comp, half = delta[keep], b_comp[keep], half[keep]
        encoded = ot.encoded[idx[keep]]

        center_unpacked = expand(ctx.packed_cell, self.config)
        packed = self.config.translate_many(center_unpacked, encoded)
        in_region = packed != self.config.outside_index
        if not in_region.all():
            packed = packed[in_region]
            delta, b_comp, half = delta[in_region], b_comp[in_region], half[in_region]
        cells_visited = len(packed)

        snap = self.store.snapshot()
        live = snap.counts[packed] > 0
        packed = packed[live]
        rows = self.store.rows_in_cells(packed)
        if len(rows) == 0:
            return self._outcome(snap, rows, None, cells_visited, Method.SPHERE)

        # cells entirely inside the sphere deliver without per-object tests
        interior = (
            geometry.farthest_sq_many(delta[live], b_comp[live], half[live], ctx.frac)
            <= ctx.d_sq
        )
        per_object_interior = np.repeat(interior, snap.counts[packed])
        dist = geometry.point_dist_sq_many(ctx.center, snap.positions[rows], self.config)
        sel = per_object_interior | (dist <= ctx.d_sq)
        return self._outcome(snap, rows[sel], dist[sel], cells_visited, Method.SPHERE)

    def _box_axis_cells(self, ctx: QueryContext, axis: int) -> tuple[np.ndarray, bool]:
        # closed-cell touch convention, matching the strict t^2 > d^2
        # rejection rule: a cell whose boundary sits exactly at C - d is in
        # range, so the lower bound is ceil(C - d - 1), not floor(C - d)
        lo = math.ceil(ctx.center[axis] - ctx.d - 1.0)
        hi = math.floor(ctx.center[axis] + ctx.d)
        extent = 1 << self.config.axis_bits(axis)
        if self.config.axis_cyclic(axis):
            if hi - lo + 1 >= extent:
                return np.arange(extent, dtype=np.int64), True
            return np.arange(lo, hi + 1, dtype=np.int64) % extent, False
        lo, hi = max(lo, 0), min(hi, extent - 1)
        if lo > hi:
            return np.empty(0, dtype=np.int64), False
        return np.arange(lo, hi + 1, dtype=np.int64), (lo == 0 and hi == extent - 1)

    def _box_cell_count(self, ctx: QueryContext) -> int:
        n = 1
        for axis in range(3):
            n *= len(self._box_axis_cells(ctx, axis)[0])
        return n

    def _box(self, ctx: QueryContext) -> QueryOutcome:
        snap = self.store.snapshot()
        axes = [self._box_axis_cells(ctx, a) for a in range(3)]
        if all(full for _, full in axes):
            # the box is the whole region: iterate objects directly
            rows = snap.csr_rows[: snap.csr_starts[self.config.outside_index]]
            dist = geometry.point_dist_sq_many(
                ctx.center, snap.positions[rows], self.config
            )
            if ctx.d_sq >= geometry.max_possible_dist_sq(ctx.center, self.config):
                sel = slice(None)  # nothing can be out of range
            else:
                sel = dist <= ctx.d_sq
            return self._outcome(
                snap, rows[sel], dist[sel], self.config.cell_count, Method.BOX
            )

        cx, cy, cz = (cells for cells, _ in axes)
        if min(len(cx), len(cy), len(cz)) == 0:
            return self._outcome(snap, np.empty(0, dtype=np.int64), None, 0, Method.BOX)
        bx, by = self.config.bits_x, self.config.bits_y
        packed = (
            cx[:, None, None]
            | (cy[None, :, None] << bx)
            | (cz[None, None, :] << (bx + by))
        ).ravel()
        cells_visited = len(packed)

        packed = packed[snap.counts[packed] > 0]
        if len(packed):
            coords = self.config.unpack_many(packed)
            near = geometry.cell_min_dist_sq_many(ctx.center, coords, self.config)
            packed = packed[near <= ctx.d_sq]
        rows = self.store.rows_in_cells(packed)
        if len(rows) == 0:
            return self._outcome(snap, rows, None, cells_visited, Method.BOX)
        dist = geometry.point_dist_sq_many(ctx.center, snap.positions[rows], self.config)
        sel = dist <= ctx.d_sq
        return self._outcome(snap, rows[sel], dist[sel], cells_visited, Method.BOX)

    def _nonempty(self, ctx: QueryContext) -> QueryOutcome:
        snap = self.store.snapshot()
        cells = snap.nonempty_cells
        cells_visited = len(cells)
        if len(cells):
            coords = self.config.unpack_many(cells)
            near = geometry.cell_min_dist_sq_many(ctx.center, coords, self.config)
            cells = cells[near <= ctx.d_sq]
        rows = self.store.rows_in_cells(cells)
        if len(rows) == 0:
            return self._outcome(snap, rows, None, cells_visited, Method.NONEMPTY)
        dist = geometry.point_dist_sq_many(ctx.center, snap.positions[rows], self.config)
        sel = dist <= ctx.d_sq
        return self._outcome(snap, rows[sel], dist[sel], cells_visited, Method.NONEMPTY)

    def _naive(self, ctx: QueryContext) -> QueryOutcome:
        snap = self.store.snapshot()
        rows = snap.csr_rows[: snap.csr_starts[self.config.outside_index]]
        if len(rows) == 0:
            return self._outcome(snap, rows, None, 0, Method.NAIVE)
        dist = geometry.point_dist_sq_many(ctx.center, snap.positions[rows], self.config)
        sel = dist <= ctx.d_sq
        return self._outcome(snap, rows[sel], dist[sel], 0, Method.NAIVE)

    # --- k nearest -----------------------------------------------------------

    def _knn_sphere(self, ctx: QueryContext, k: int) -> list[NeighborHit]:
        ot = self.tables.offsets
        snap = self.store.snapshot()
        center_unpacked = expand(ctx.packed_cell, self.config)
        end = int(ot.end_positions[min(int(math.floor(ctx.d_sq)), ot.max_entry)])

        eff = ctx.d_sq
        worst_first: list[tuple[float, int]] = []  # (-dist, row) max-heap
        chunk = 1024
        pos = 0
        while pos < end:
            if float(ot.b_sq[pos]) > eff:
                break  # min-bound sorted: nothing ahead can beat the k-th hit
            hi = min(pos + chunk, end)
            sl = slice(pos, hi)
            pos = hi

            t2 = geometry.min_dist_sq_many(
                ot.delta[sl], ot.b_comp[sl], ot.half_wrap[sl], ctx.frac
            )
            near = t2 <= eff
            if not near.any():
                continue
            packed = self.config.translate_many(center_unpacked, ot.encoded[sl][near])
            packed = packed[packed != self.config.outside_index]
            packed = packed[snap.counts[packed] > 0]
            if len(packed) == 0:
                continue
            rows = self.store.rows_in_cells(packed)
            dist = geometry.point_dist_sq_many(
                ctx.center, snap.positions[rows], self.config
            )
            for dsq, row in zip(dist.tolist(), rows.tolist()):
                if len(worst_first) < k:
                    if dsq <= eff:
                        heapq.heappush(worst_first, (-dsq, row))
                        if len(worst_first) == k:
                            eff = -worst_first[0][0]
                elif dsq < -worst_first[0][0]:
                    heapq.heapreplace(worst_first, (-dsq, row))
                    eff = -worst_first[0][0]

        picks = sorted((-d, row) for d, row in worst_first)
        return [
            NeighborHit(
                handle=int(snap.handles[row]),
                payload=self.store._payloads[row],
                dist_sq=dsq,
            )
            for dsq, row in picks
        ]

    def _knn_box(self, ctx: QueryContext, k: int) -> list[NeighborHit]:
        outcome = self._box(ctx)
        order = np.argsort(outcome.dist_sq, kind="stable")[:k]
        snap = self.store.snapshot()
        return [
            NeighborHit(
                handle=int(outcome.handles[i]),
                payload=self.store._payloads[int(outcome.rows[i])],
                dist_sq=float(outcome.dist_sq[i]),
            )
            for i in order
        ]

    # --- shared result plumbing ----------------------------------------------

    def _outcome(
        self,
        snap: StoreSnapshot,
        rows: np.ndarray,
        dist: np.ndarray | None,
        cells_visited: int,
        method: Method,
    ) -> QueryOutcome:
        if dist is None:
            dist = np.empty(0, dtype=np.float64)
        return QueryOutcome(
            handles=snap.handles[rows],
            dist_sq=dist,
            rows=rows,
            cells_visited=cells_visited,
            method=method,
        )

    def _hits(self, outcome: QueryOutcome) -> list[NeighborHit]:
        payloads = self.store._payloads
        return [
            NeighborHit(handle=int(h), payload=payloads[int(r)], dist_sq=float(d))
            for h, r, d in zip(outcome.handles, outcome.rows, outcome.dist_sq)
        ]

    def _deliver(self, outcome: QueryOutcome, visitor: Visitor) -> None:
        payloads = self.store._payloads
        for h, r, d in zip(outcome.handles, outcome.rows, outcome.dist_sq):
            visitor(NeighborHit(handle=int(h), payload=payloads[int(r)],
                                dist_sq=float(d)))

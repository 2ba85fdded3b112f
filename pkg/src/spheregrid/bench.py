"""Benchmark and validation harness.

Measurement protocol: per distance step, a fixed batch of randomly
centered queries is timed as one unit, the timing is repeated, the worst
repeats are discarded against scheduler jitter, and the rest are averaged.
The per-neighbor visitor reads the neighbor payload so a hit costs at
least one touch of the object.  Every row also times the bounding-box
baseline on the same centers to report a relative speed.

Scenes are generated with numpy's seeded PCG64 generator, so identical
scenarios reproduce identical positions, neighbor counts and cell-visit
figures on any platform (throughput, of course, varies).
"""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, TextIO

import numpy as np

from .grid import GridConfig
from .query import Method, NeighborHit, QueryEngine, SelectionWeights
from .store import ObjectStore
from .tables import (
    SphereTables,
    TableCacheError,
    build_tables,
    load_tables,
    save_tables,
)

DEFAULT_QUERIES = 150
DEFAULT_REPEATS = 40
DEFAULT_DISCARD = 10


@dataclass(frozen=True)
class BenchScenario:
    bits: tuple[int, int, int] = (4, 4, 4)
    cyclic: tuple[bool, bool, bool] = (False, False, False)
    load: float = 1.0
    seed: int = 0
    d_min: float = 0.1
    d_max: float | None = None  # None: 3/4 of the largest axis extent
    d_step: float = 0.1
    queries: int = DEFAULT_QUERIES
    repeats: int = DEFAULT_REPEATS
    discard: int = DEFAULT_DISCARD
    method: str = "auto"  # auto | sphere | box | nonempty | naive
    knn: int | None = None
    weights: SelectionWeights = field(default_factory=SelectionWeights)
    sample_grid: int = 8
    table_cache: str | None = None

    def __post_init__(self) -> None:
        if self.load <= 0:
            raise ValueError("load must be positive")
        if self.d_step <= 0:
            raise ValueError("d_step must be positive")
        if not 0 <= self.discard < self.repeats:
            raise ValueError("discard must be smaller than repeats")
        if self.method not in ("auto", "sphere", "box", "nonempty", "naive"):
            raise ValueError(f"unknown method {self.method!r}")

    def config(self) -> GridConfig:
        bx, by, bz = self.bits
        cx, cy, cz = self.cyclic
        return GridConfig(bx, by, bz, cx, cy, cz)


@dataclass(frozen=True)
class BenchRow:
    distance: float
    method: str
    queries_per_sec: float
    cells_visited_mean: float
    neighbors_mean: float
    ratio_vs_box: float


CSV_COLUMNS = (
    "distance", "method", "queries_per_sec",
    "cells_visited_mean", "neighbors_mean", "ratio_vs_box",
)


def sweep_distances(scenario: BenchScenario) -> list[float]:
    """The distance steps of a sweep, rounded to the step grid."""
    config = scenario.config()
    d_max = scenario.d_max
    if d_max is None:
        d_max = 0.75 * max(config.extents)
    steps = int(math.floor((d_max - scenario.d_min) / scenario.d_step + 1e-9)) + 1
    return [round(scenario.d_min + i * scenario.d_step, 9) for i in range(steps)]


def generate_scene(scenario: BenchScenario, config: GridConfig | None = None) -> ObjectStore:
    """Uniformly scatter ceil(load x cells) seeded objects over the region."""
    config = config or scenario.config()
    store = ObjectStore(config)
    n = math.ceil(scenario.load * config.cell_count)
    rng = np.random.default_rng(scenario.seed)
    extents = np.asarray(config.extents, dtype=np.float64)
    positions = rng.random((n, 3)) * extents
    payloads = rng.random(n)
    for i in range(n):
        store.insert((positions[i, 0], positions[i, 1], positions[i, 2]),
                     float(payloads[i]))
    return store


def obtain_tables(scenario: BenchScenario, config: GridConfig) -> SphereTables:
    path = scenario.table_cache
    if path and os.path.exists(path):
        try:
            return load_tables(path, config)
        except TableCacheError:
            pass  # stale or foreign cache: rebuild below
    tables = build_tables(config, scenario.sample_grid)
    if path:
        save_tables(tables, path)
    return tables


class _PayloadVisitor:
    """Per-neighbor functor: touch the payload of each delivered object."""

    __slots__ = ("sink",)

    def __init__(self) -> None:
        self.sink = 0.0

    def __call__(self, hit: NeighborHit) -> None:
        self.sink += hit.payload


def _method_override(name: str) -> Method | None:
    return None if name == "auto" else Method(name)


def _timed_batch(run_query, centers: np.ndarray) -> float:
    t0 = time.perf_counter()
    for i in range(len(centers)):
        run_query((centers[i, 0], centers[i, 1], centers[i, 2]))
    return time.perf_counter() - t0


def _throughput(run_query, centers: np.ndarray, repeats: int, discard: int) -> float:
    times = sorted(_timed_batch(run_query, centers) for _ in range(repeats))
    kept = times[: repeats - discard] if discard else times
    rates = [len(centers) / t for t in kept if t > 0]
    return float(np.mean(rates)) if rates else float("inf")


def run_sweep(scenario: BenchScenario) -> list[BenchRow]:
    config = scenario.config()
    tables = obtain_tables(scenario, config)
    store = generate_scene(scenario, config)
    engine = QueryEngine(store, tables, scenario.weights)
    override = _method_override(scenario.method)
    extents = np.asarray(config.extents, dtype=np.float64)
    center_rng = np.random.default_rng(scenario.seed + 1)

    rows = []
    for d in sweep_distances(scenario):
        centers = center_rng.random((scenario.queries, 3)) * extents

        # statistics pass, untimed
        cells = 0
        neighbors = 0
        methods_used = set()
        if scenario.knn is None:
            for i in range(len(centers)):
                c = (centers[i, 0], centers[i, 1], centers[i, 2])
                outcome = engine.probe(c, d, override)
                cells += outcome.cells_visited
                neighbors += outcome.count
                methods_used.add(outcome.method.value)
        else:
            for i in range(len(centers)):
                c = (centers[i, 0], centers[i, 1], centers[i, 2])
                neighbors += len(engine.query_knn(c, scenario.knn, d))
            methods_used.add("knn")

        # timed passes: the scenario method, then the box baseline
        visitor = _PayloadVisitor()
        if scenario.knn is None:
            def run_query(c, _d=d):
                engine.query_all(c, _d, visitor, override)

            def run_box(c, _d=d):
                engine.query_all(c, _d, visitor, Method.BOX)
        else:
            knn_engine = engine
            box_engine = QueryEngine(
                store, tables, replace(scenario.weights, revert_knn=float("inf"))
            )

            def run_query(c, _d=d):
                for hit in knn_engine.query_knn(c, scenario.knn, _d):
                    visitor(hit)

            def run_box(c, _d=d):
                for hit in box_engine.query_knn(c, scenario.knn, _d):
                    visitor(hit)

        qps = _throughput(run_query, centers, scenario.repeats, scenario.discard)
        if scenario.method == "box" and scenario.knn is None:
            qps_box = qps
        else:
            qps_box = _throughput(run_box, centers, scenario.repeats, scenario.discard)

        rows.append(
            BenchRow(
                distance=d,
                method="+".join(sorted(methods_used)),
                queries_per_sec=qps,
                cells_visited_mean=cells / len(centers),
                neighbors_mean=neighbors / len(centers),
                ratio_vs_box=qps / qps_box if qps_box > 0 else float("inf"),
            )
        )
    return rows


def write_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    writer = csv.writer(out)
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([
            f"{row.distance:g}", row.method, f"{row.queries_per_sec:.6g}",
            f"{row.cells_visited_mean:.6g}", f"{row.neighbors_mean:.6g}",
            f"{row.ratio_vs_box:.6g}",
        ])


# --- validation --------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    lines: list[str]

    def __str__(self) -> str:
        return "\n".join(self.lines)


def _hit_signature(hits: list[NeighborHit]) -> list[tuple[int, float]]:
    return sorted((h.handle, round(h.dist_sq, 9)) for h in hits)


def run_validation(
    scenario: BenchScenario, tables: SphereTables | None = None
) -> ValidationReport:
    """Cross-check every query method against the naive oracle at scenario scale.

    ``tables`` overrides the freshly built set (fault-injection hook for
    tests).  Any failure line carries the scenario seed that reproduces it.
    """
    config = scenario.config()
    own_tables = tables if tables is not None else obtain_tables(scenario, config)
    store = generate_scene(scenario, config)
    engine = QueryEngine(store, own_tables, scenario.weights)
    extents = np.asarray(config.extents, dtype=np.float64)
    rng = np.random.default_rng(scenario.seed + 2)

    lines = []
    failures = 0
    seed_note = f"(seed {scenario.seed})"

    distances = sweep_distances(scenario)
    centers_per_d = max(1, min(scenario.queries, 20))
    mismatches = 0
    first = None
    for d in distances:
        centers = rng.random((centers_per_d, 3)) * extents
        for i in range(len(centers)):
            c = (centers[i, 0], centers[i, 1], centers[i, 2])
            want = _hit_signature(engine.naive_scan(c, d))
            for method in (Method.SPHERE, Method.BOX, Method.NONEMPTY):
                got = _hit_signature(engine.find_all(c, d, method))
                if got != want:
                    mismatches += 1
                    if first is None:
                        first = (method.value, d, c)
    if mismatches:
        failures += 1
        lines.append(
            f"FAIL method-equivalence: {mismatches} mismatching queries, first "
            f"{first[0]} at d={first[1]:.3f} center={first[2]} {seed_note}"
        )
    else:
        lines.append(
            f"PASS method-equivalence: {len(distances) * centers_per_d} queries "
            f"x 3 methods match the naive scan {seed_note}"
        )

    if scenario.knn is not None:
        bad = 0
        for d in distances[:: max(1, len(distances) // 16)]:
            centers = rng.random((centers_per_d, 3)) * extents
            for i in range(len(centers)):
                c = (centers[i, 0], centers[i, 1], centers[i, 2])
                naive = sorted(h.dist_sq for h in engine.naive_scan(c, d))
                got = [h.dist_sq for h in engine.query_knn(c, scenario.knn, d)]
                want = naive[: scenario.knn]
                if len(got) != len(want) or any(
                    abs(a - b) > 1e-9 for a, b in zip(got, want)
                ):
                    bad += 1
        if bad:
            failures += 1
            lines.append(f"FAIL knn-oracle: {bad} mismatching queries {seed_note}")
        else:
            lines.append(f"PASS knn-oracle: k={scenario.knn} matches sorted "
                         f"naive distances {seed_note}")

    return ValidationReport(passed=failures == 0, lines=lines)

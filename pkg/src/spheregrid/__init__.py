"""Sphere-indexed neighbor queries over a bit-packed 3D cell grid.

Build a :class:`GridConfig`, precompute :func:`build_tables` once, put
moving point objects in an :class:`ObjectStore`, and ask a
:class:`QueryEngine` for all neighbors within a radius or the k nearest.
"""

from .grid import (
    CellOffset,
    GridConfig,
    SubCellFractions,
    compress,
    encode_offset,
    expand,
    locate,
    pack,
    translate,
    unpack,
)
from .geometry import farthest_sq, min_bound_sq, min_dist_sq
from .query import (
    Method,
    NeighborHit,
    QueryEngine,
    QueryOutcome,
    SelectionWeights,
)
from .store import CellView, ObjectStore, StaleHandleError
from .tables import (
    CacheChecksumError,
    CacheConfigMismatch,
    CacheFormatError,
    CacheTruncatedError,
    ExpectedCountTable,
    OffsetTable,
    ShavedTableSet,
    SphereTables,
    TableCacheError,
    build_expected_counts,
    build_offset_table,
    build_shaved_tables,
    build_tables,
    direction_mask,
    end_index_for,
    load_tables,
    save_tables,
)
from .bench import (
    BenchRow,
    BenchScenario,
    generate_scene,
    run_sweep,
    run_validation,
    sweep_distances,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BenchRow",
    "BenchScenario",
    "CacheChecksumError",
    "CacheConfigMismatch",
    "CacheFormatError",
    "CacheTruncatedError",
    "CellOffset",
    "CellView",
    "ExpectedCountTable",
    "GridConfig",
    "Method",
    "NeighborHit",
    "ObjectStore",
    "OffsetTable",
    "QueryEngine",
    "QueryOutcome",
    "SelectionWeights",
    "ShavedTableSet",
    "SphereTables",
    "StaleHandleError",
    "SubCellFractions",
    "TableCacheError",
    "build_expected_counts",
    "build_offset_table",
    "build_shaved_tables",
    "build_tables",
    "compress",
    "direction_mask",
    "encode_offset",
    "end_index_for",
    "expand",
    "farthest_sq",
    "generate_scene",
    "load_tables",
    "locate",
    "min_bound_sq",
    "min_dist_sq",
    "pack",
    "run_sweep",
    "run_validation",
    "save_tables",
    "sweep_distances",
    "translate",
    "unpack",
    "write_csv",
]

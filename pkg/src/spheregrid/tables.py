"""Precomputed sphere traversal tables for one grid configuration.

The main product is a contiguous array of every representable cell offset,
sorted by its minimum-bound squared distance ``b_sq``, plus an entry map
from any truncated squared radius to the end of the offsets to traverse.
On top of that sit the per-ring shaved variants (64 direction-mask copies
of each ring slice with pre-rejectable cells removed) and the expected
visit counts used for run-time method selection.

Tables are immutable after build and safe for concurrent readers.  They
can be cached to a file; see ``save_tables`` for the exact byte format.
"""

from __future__ import annotations

import logging
import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .grid import GridConfig

log = logging.getLogger(__name__)

MASK_COUNT = 64  # 2 directions x 3 axes -> 2^6 specialized tables per ring

_OFFSET_DTYPE = np.dtype([("delta", "<i4", (3,)), ("encoded", "<u8"), ("b_sq", "<u4")])
_MAGIC = b"SPHGRD01"
_HEADER = struct.Struct("<7I")


class TableCacheError(Exception):
    """Base for table cache file problems."""


class CacheFormatError(TableCacheError):
    """Bad magic, version, or malformed content."""


class CacheConfigMismatch(TableCacheError):
    """File was built for a different grid configuration."""


class CacheTruncatedError(TableCacheError):
    """File ends before the declared content does."""


class CacheChecksumError(TableCacheError):
    """Content does not match its trailing CRC-32."""


def min_bound_sq(delta: tuple[int, int, int]) -> int:
    """Table key: minimum squared inter-cell distance for a displacement."""
    return sum(max(abs(d) - 1, 0) ** 2 for d in delta)


@dataclass(frozen=True)
class OffsetTable:
    """All representable offsets sorted by non-decreasing ``b_sq``.

    ``end_positions[n]`` is the number of offsets with ``b_sq <= n``; a
    squared distance with no offsets of its own (7, for example) simply
    repeats the entry below it.  Equal ``b_sq`` ties are ordered by
    (delta_z, delta_y, delta_x) so builds, caches and traversals are
    reproducible.
    """

    config: GridConfig
    delta: np.ndarray        # (N, 3) int32
    encoded: np.ndarray      # (N,)  uint64, addable unpacked words
    b_sq: np.ndarray         # (N,)  uint32
    b_comp: np.ndarray       # (N, 3) int32
    half_wrap: np.ndarray    # (N, 3) bool
    end_positions: np.ndarray  # (max_entry + 1,) int64
    max_entry: int
    d_max_sq: float          # largest useful squared radius for traversal

    def __len__(self) -> int:
        return len(self.b_sq)

    @property
    def max_ring(self) -> int:
        return math.isqrt(self.max_entry)


@dataclass(frozen=True)
class ShavedRing:
    """The 64 direction-masked variants of one ring slice.

    Ring ``m`` covers offsets with ``b_sq`` in ``[m^2, (m+1)^2)``.  Variant
    ``M`` drops an offset exactly when every direction it extends in has
    its assumption bit set in ``M`` (bit ``2*axis`` for positive, bit
    ``2*axis + 1`` for negative; a half-extent wrap offset needs both bits
    of its axis).  ``kept[M]`` holds main-table indices, still sorted;
    ``kept_end[M, n - m^2]`` is how many of them have ``b_sq <= n``.
    """

    ring: int
    start: int
    end: int
    first_entry: int
    last_entry: int
    kept: tuple[np.ndarray, ...]   # 64 int32 index arrays into the main table
    kept_end: np.ndarray           # (64, last_entry - first_entry + 1) int64


@dataclass(frozen=True)
class ShavedTableSet:
    rings: tuple[ShavedRing, ...]

    def slice_for(self, ring: int, mask: int) -> np.ndarray:
        return self.rings[ring].kept[mask]


@dataclass(frozen=True)
class ExpectedCountTable:
    """Mean offsets retained after shaving, per table entry.

    Averaged over a midpoint lattice of ``sample_grid**3`` sub-cell center
    positions and ``sample_grid`` fractional radii per entry; deterministic
    for a given ``sample_grid``.
    """

    values: np.ndarray  # (max_entry + 1,) float64
    sample_grid: int


@dataclass(frozen=True)
class SphereTables:
    """Bundle handed to the query engine: offsets + shaved + expected counts."""

    offsets: OffsetTable
    shaved: ShavedTableSet
    expected: ExpectedCountTable

    @property
    def config(self) -> GridConfig:
        return self.offsets.config

    def size_report(self) -> str:
        ot = self.offsets
        shaved_entries = sum(
            len(k) for ring in self.shaved.rings for k in ring.kept
        )
        main_bytes = ot.delta.nbytes + ot.encoded.nbytes + ot.b_sq.nbytes \
            + ot.b_comp.nbytes + ot.half_wrap.nbytes + ot.end_positions.nbytes
        shaved_bytes = shaved_entries * 4 + sum(
            ring.kept_end.nbytes for ring in self.shaved.rings
        )
        return (
            f"offset table: {len(ot)} offsets, {len(ot.end_positions)} entries, "
            f"{main_bytes / 1e6:.2f} MB; shaved: {len(self.shaved.rings)} rings "
            f"x {MASK_COUNT} masks, {shaved_entries} entries, "
            f"{shaved_bytes / 1e6:.2f} MB; expected counts: "
            f"{self.expected.values.nbytes / 1e3:.1f} kB"
        )


def _axis_delta_range(config: GridConfig, axis: int) -> np.ndarray:
    n = config.axis_bits(axis)
    if config.axis_cyclic(axis):
        return np.arange(-(1 << (n - 1)), 1 << (n - 1), dtype=np.int64)
    return np.arange(-((1 << n) - 1), 1 << n, dtype=np.int64)


def build_offset_table(config: GridConfig) -> OffsetTable:
    """Enumerate, encode and distance-sort every representable offset."""
    rz, ry, rx = (_axis_delta_range(config, a) for a in (2, 1, 0))
    gz, gy, gx = np.meshgrid(rz, ry, rx, indexing="ij")
    delta = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    b_comp = np.maximum(np.abs(delta) - 1, 0)
    b_sq = (b_comp * b_comp).sum(axis=1)

    # sort by b_sq, ties by (delta_z, delta_y, delta_x)
    order = np.lexsort((delta[:, 0], delta[:, 1], delta[:, 2], b_sq))
    delta = np.ascontiguousarray(delta[order].astype(np.int32))
    b_comp = np.ascontiguousarray(b_comp[order].astype(np.int32))
    b_sq = np.ascontiguousarray(b_sq[order].astype(np.uint32))

    encoded = np.zeros(len(delta), dtype=np.uint64)
    half_wrap = np.zeros((len(delta), 3), dtype=bool)
    for axis in range(3):
        n = config.axis_bits(axis)
        width = n if config.axis_cyclic(axis) else n + 1
        field = (delta[:, axis].astype(np.int64) & ((1 << width) - 1)).astype(np.uint64)
        encoded |= field << np.uint64(config.field_pos[axis])
        if config.axis_cyclic(axis):
            half_wrap[:, axis] = np.abs(delta[:, axis]) == (1 << (n - 1))

    max_entry = int(b_sq[-1])
    counts = np.bincount(b_sq, minlength=max_entry + 1)
    end_positions = np.cumsum(counts).astype(np.int64)

    return OffsetTable(
        config=config,
        delta=delta,
        encoded=encoded,
        b_sq=b_sq,
        b_comp=b_comp,
        half_wrap=half_wrap,
        end_positions=end_positions,
        max_entry=max_entry,
        d_max_sq=float(np.nextafter(max_entry + 1.0, 0.0)),
    )


def required_mask_bits(delta: np.ndarray, half_wrap: np.ndarray) -> np.ndarray:
    """Per-offset direction bits that must all hold for pre-rejection."""
    req = np.zeros(len(delta), dtype=np.uint8)
    for axis in range(3):
        d = delta[:, axis]
        pos_bit = np.uint8(1 << (2 * axis))
        neg_bit = np.uint8(1 << (2 * axis + 1))
        req |= np.where(d > 0, pos_bit, 0).astype(np.uint8)
        req |= np.where(d < 0, neg_bit, 0).astype(np.uint8)
        # both ways around are equally near: rejection needs both directions
        req |= np.where(half_wrap[:, axis], pos_bit | neg_bit, 0).astype(np.uint8)
    return req


def build_shaved_tables(table: OffsetTable) -> ShavedTableSet:
    """Build the per-ring, per-direction-mask specialized slices."""
    rings = []
    for m in range(table.max_ring + 1):
        first = m * m
        last = min((m + 1) * (m + 1) - 1, table.max_entry)
        start = int(table.end_positions[first - 1]) if first > 0 else 0
        end = int(table.end_positions[last])
        delta = table.delta[start:end]
        ring_bsq = table.b_sq[start:end]
        req = required_mask_bits(delta, table.half_wrap[start:end])
        center = req == 0  # the zero offset is never rejectable

        kept = []
        span = last - first + 1
        kept_end = np.empty((MASK_COUNT, span), dtype=np.int64)
        entries = np.arange(first, last + 1, dtype=np.uint32)
        for mask in range(MASK_COUNT):
            keep = center | ((req & np.uint8(~mask & 0x3F)) != 0)
            idx = np.flatnonzero(keep).astype(np.int32)
            kept.append(idx + np.int32(start))
            kept_end[mask] = np.searchsorted(ring_bsq[idx], entries, side="right")
        rings.append(
            ShavedRing(
                ring=m, start=start, end=end,
                first_entry=first, last_entry=last,
                kept=tuple(kept), kept_end=kept_end,
            )
        )
    return ShavedTableSet(rings=tuple(rings))


def direction_mask(frac_xyz: tuple[float, float, float], f: float) -> int:
    """6-bit assumption mask: which directions satisfy frac(d) < zeta."""
    mask = 0
    for axis in range(3):
        if f < 1.0 - frac_xyz[axis]:
            mask |= 1 << (2 * axis)
        if f < frac_xyz[axis]:
            mask |= 1 << (2 * axis + 1)
    return mask


def _frac_lattice(sample_grid: int) -> np.ndarray:
    mids = (np.arange(sample_grid) + 0.5) / sample_grid
    gx, gy, gz = np.meshgrid(mids, mids, mids, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def _mask_ids(fracs: np.ndarray, f: float) -> np.ndarray:
    ids = np.zeros(len(fracs), dtype=np.int64)
    for axis in range(3):
        ids |= (f < 1.0 - fracs[:, axis]).astype(np.int64) << (2 * axis)
        ids |= (f < fracs[:, axis]).astype(np.int64) << (2 * axis + 1)
    return ids


def build_expected_counts(
    table: OffsetTable, shaved: ShavedTableSet, sample_grid: int = 8
) -> ExpectedCountTable:
    """Average retained offsets per entry over sampled centers and radii."""
    if sample_grid < 2:
        raise ValueError("sample_grid must be at least 2")
    fracs = _frac_lattice(sample_grid)
    u_mids = (np.arange(sample_grid) + 0.5) / sample_grid

    values = np.empty(table.max_entry + 1, dtype=np.float64)
    for n in range(table.max_entry + 1):
        m = math.isqrt(n)
        base = int(table.end_positions[m * m - 1]) if m >= 1 else 0
        ring = shaved.rings[m]
        col = n - ring.first_entry
        total = 0.0
        for u in u_mids:
            f = math.sqrt(n + u) - m
            ids = _mask_ids(fracs, f)
            total += ring.kept_end[ids, col].sum()
        values[n] = base + total / (len(fracs) * len(u_mids))
    return ExpectedCountTable(values=values, sample_grid=sample_grid)


def build_tables(config: GridConfig, sample_grid: int = 8) -> SphereTables:
    """Build the full bundle once for a configuration."""
    offsets = build_offset_table(config)
    shaved = build_shaved_tables(offsets)
    expected = build_expected_counts(offsets, shaved, sample_grid)
    tables = SphereTables(offsets=offsets, shaved=shaved, expected=expected)
    log.info("built tables for %sx%sx%s: %s", *config.extents, tables.size_report())
    return tables


def end_index_for(table: OffsetTable, d_sq: float) -> int:
    """End position (exclusive) of all offsets to traverse for radius^2."""
    if d_sq < 0:
        raise ValueError("squared radius must be non-negative")
    n = min(int(math.floor(min(d_sq, table.d_max_sq))), table.max_entry)
    return int(table.end_positions[n])


def expected_count_for(tables: SphereTables, d_sq: float) -> float:
    n = min(int(math.floor(d_sq)), tables.offsets.max_entry)
    return float(tables.expected.values[n])


# --- file cache -------------------------------------------------------------
#
# Layout (all little-endian):
#   8 bytes   magic "SPHGRD01"
#   7 x u32   bits_x, bits_y, bits_z, cyclic flag bits (x=1, y=2, z=4),
#             sample_grid, offset count, ring count
#   offsets   per offset: i32 delta[3], u64 encoded, u32 b_sq
#   entries   (max_entry + 1) pairs of u32 (entry value, end position);
#             max_entry is the b_sq of the last offset
#   extents   ring count x 64 pairs of u32: the (start, end) span of each
#             (ring, mask) slice in the canonical per-ring kept pool; the
#             slices themselves are rebuilt deterministically on load and
#             checked against these spans
#   expected  (max_entry + 1) f64 expected counts
#   4 bytes   CRC-32 of everything above


def _cyclic_bits(config: GridConfig) -> int:
    return (int(config.cyclic_x) | (int(config.cyclic_y) << 1)
            | (int(config.cyclic_z) << 2))


def _shaved_extent_pairs(shaved: ShavedTableSet) -> np.ndarray:
    pairs = []
    for ring in shaved.rings:
        at = 0
        for mask in range(MASK_COUNT):
            n = len(ring.kept[mask])
            pairs.append((at, at + n))
            at += n
    return np.asarray(pairs, dtype="<u4")


def save_tables(tables: SphereTables, path) -> None:
    """Write the cache file; ``load_tables`` restores it bit-exactly."""
    config = tables.config
    ot = tables.offsets
    rec = np.empty(len(ot), dtype=_OFFSET_DTYPE)
    rec["delta"] = ot.delta
    rec["encoded"] = ot.encoded
    rec["b_sq"] = ot.b_sq

    entries = np.empty((ot.max_entry + 1, 2), dtype="<u4")
    entries[:, 0] = np.arange(ot.max_entry + 1)
    entries[:, 1] = ot.end_positions

    blob = bytearray()
    blob += _MAGIC
    blob += _HEADER.pack(
        config.bits_x, config.bits_y, config.bits_z, _cyclic_bits(config),
        tables.expected.sample_grid, len(ot), len(tables.shaved.rings),
    )
    blob += rec.tobytes()
    blob += entries.tobytes()
    blob += _shaved_extent_pairs(tables.shaved).tobytes()
    blob += tables.expected.values.astype("<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_tables(path, config: GridConfig) -> SphereTables:
    """Read a cache file back, validating format, size, checksum and config."""
    with open(path, "rb") as fh:
        data = fh.read()

    head_len = len(_MAGIC) + _HEADER.size
    if len(data) < head_len:
        raise CacheTruncatedError(f"file is {len(data)} bytes, header needs {head_len}")
    if data[: len(_MAGIC)] != _MAGIC:
        raise CacheFormatError(f"bad magic {data[:8]!r}")
    bits_x, bits_y, bits_z, cyclic, sample_grid, count, ring_count = _HEADER.unpack(
        data[len(_MAGIC): head_len]
    )

    offsets_end = head_len + count * _OFFSET_DTYPE.itemsize
    if len(data) < offsets_end:
        raise CacheTruncatedError("file ends inside the offsets array")
    rec = np.frombuffer(data, dtype=_OFFSET_DTYPE, count=count, offset=head_len)
    if count == 0:
        raise CacheFormatError("empty offset table")
    max_entry = int(rec["b_sq"][-1])

    entries_end = offsets_end + (max_entry + 1) * 8
    extents_end = entries_end + ring_count * MASK_COUNT * 8
    expected_end = extents_end + (max_entry + 1) * 8
    total = expected_end + 4
    if len(data) < total:
        raise CacheTruncatedError(
            f"file is {len(data)} bytes, content declares {total}"
        )
    if len(data) > total:
        raise CacheFormatError(f"{len(data) - total} trailing bytes")

    (crc_stored,) = struct.unpack("<I", data[expected_end:total])
    if zlib.crc32(data[:expected_end]) != crc_stored:
        raise CacheChecksumError("CRC-32 mismatch")

    if (bits_x, bits_y, bits_z) != config.bits or cyclic != _cyclic_bits(config):
        raise CacheConfigMismatch(
            f"file built for bits={bits_x},{bits_y},{bits_z} cyclic={cyclic:03b}, "
            f"requested bits={config.bits} cyclic={_cyclic_bits(config):03b}"
        )

    # Rebuild the derived structures; the file content pins the inputs.
    rebuilt = build_offset_table(config)
    if len(rebuilt) != count or rebuilt.max_entry != max_entry:
        raise CacheFormatError("offset table shape does not match this build")
    if (
        not np.array_equal(rebuilt.delta, rec["delta"])
        or not np.array_equal(rebuilt.encoded, rec["encoded"])
        or not np.array_equal(rebuilt.b_sq, rec["b_sq"])
    ):
        raise CacheFormatError("offset table content does not match this build")
    entries = np.frombuffer(data, dtype="<u4", count=(max_entry + 1) * 2,
                            offset=offsets_end).reshape(-1, 2)
    if not np.array_equal(entries[:, 1], rebuilt.end_positions):
        raise CacheFormatError("entry map does not match the offsets array")

    shaved = build_shaved_tables(rebuilt)
    if ring_count != len(shaved.rings):
        raise CacheFormatError("ring count does not match this build")
    extents = np.frombuffer(data, dtype="<u4", count=ring_count * MASK_COUNT * 2,
                            offset=entries_end).reshape(-1, 2)
    if not np.array_equal(extents, _shaved_extent_pairs(shaved)):
        raise CacheFormatError("shaved slice extents do not match this build")

    values = np.frombuffer(data, dtype="<f8", count=max_entry + 1,
                           offset=extents_end).copy()
    expected = ExpectedCountTable(values=values, sample_grid=sample_grid)
    return SphereTables(offsets=rebuilt, shaved=shaved, expected=expected)

"""Bit-packed cell addressing for a power-of-two 3D grid.

A cell has a *packed* index: its linear position in the cell array, built
by concatenating the Z, Y, X coordinates (X in the low bits).  An
*unpacked* form relocates the Y field upward and leaves zero guard gaps so
that a per-axis 2-complement offset can be added to a center in a single
integer addition: each axis field carries its own arithmetic and any carry
dies in the guard gap before the next field.

Unpacked layout (low to high):

    X field | guard gap | Z field | guard gap | Y field | carry headroom

X and Z normally keep their packed positions (the gap above X is the
vacated Y field, the gap above Z has the width of the X field).  Cyclic
axis fields are ``bits`` wide and wrap modulo the axis extent.  Non-cyclic
axis fields take one extra high bit: after the addition that bit is set
exactly when the axis left [0, 2^bits), and any such result maps to the
single ``outside_index`` cell.  When a non-cyclic flag bit would leave no
room for its carry to die, the next field is moved up one bit; the guard
isolation property is what matters, not the exact gap widths.

Everything fits one 64-bit word; see ``GridConfig`` for the size limit.
All values are immutable and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Axis = int  # 0 = x, 1 = y, 2 = z

_WORD_BITS = 64


@dataclass(frozen=True)
class GridConfig:
    """Grid geometry plus every derived bit-layout constant.

    ``bits_*`` give per-axis extents of ``2**bits`` cells; ``cyclic_*``
    select wrap-around versus bounded behaviour per axis.  The packed
    index space is ``[0, 2**packed_width)`` and ``outside_index``
    (``2**packed_width``) is the one extra slot for everything beyond a
    non-cyclic boundary.
    """

    bits_x: int
    bits_y: int
    bits_z: int
    cyclic_x: bool = False
    cyclic_y: bool = False
    cyclic_z: bool = False

    # derived, filled in __post_init__
    packed_width: int = field(init=False, repr=False)
    outside_index: int = field(init=False, repr=False)
    field_pos: tuple[int, int, int] = field(init=False, repr=False)
    value_mask: int = field(init=False, repr=False)
    flag_mask: int = field(init=False, repr=False)
    total_bits: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        bits = (self.bits_x, self.bits_y, self.bits_z)
        for b in bits:
            if b < 1:
                raise ValueError(f"axis needs at least 1 bit, got {b}")
        bx, by, bz = bits
        pw = bx + by + bz

        # Field positions: canonical layout unless a non-cyclic flag bit
        # needs one more bit of headroom before the next field starts.
        x_pos = 0
        x_end = bx + (0 if self.cyclic_x else 1)
        z_pos = max(bx + by, x_end + 1)
        z_end = z_pos + bz + (0 if self.cyclic_z else 1)
        y_pos = max(pw + bx, z_end + 1)
        y_end = y_pos + by + (0 if self.cyclic_y else 1)

        total = y_end + 1  # one bit for the Y-field carry to die in
        if total > _WORD_BITS:
            raise ValueError(
                f"grid {2**bx}x{2**by}x{2**bz} needs {total} unpacked bits; "
                f"the limit is {_WORD_BITS}"
            )

        value = (
            (((1 << bx) - 1) << x_pos)
            | (((1 << bz) - 1) << z_pos)
            | (((1 << by) - 1) << y_pos)
        )
        flags = 0
        if not self.cyclic_x:
            flags |= 1 << (x_pos + bx)
        if not self.cyclic_z:
            flags |= 1 << (z_pos + bz)
        if not self.cyclic_y:
            flags |= 1 << (y_pos + by)

        object.__setattr__(self, "packed_width", pw)
        object.__setattr__(self, "outside_index", 1 << pw)
        object.__setattr__(self, "field_pos", (x_pos, y_pos, z_pos))
        object.__setattr__(self, "value_mask", value)
        object.__setattr__(self, "flag_mask", flags)
        object.__setattr__(self, "total_bits", total)

    @property
    def bits(self) -> tuple[int, int, int]:
        return (self.bits_x, self.bits_y, self.bits_z)

    @property
    def cyclic(self) -> tuple[bool, bool, bool]:
        return (self.cyclic_x, self.cyclic_y, self.cyclic_z)

    @property
    def extents(self) -> tuple[int, int, int]:
        return (1 << self.bits_x, 1 << self.bits_y, 1 << self.bits_z)

    @property
    def cell_count(self) -> int:
        return 1 << self.packed_width

    def axis_bits(self, axis: Axis) -> int:
        return self.bits[axis]

    def axis_cyclic(self, axis: Axis) -> bool:
        return self.cyclic[axis]

    # --- vectorized packed-word kernels used by the table traversals ---

    def translate_many(self, center_unpacked: int, encoded: np.ndarray) -> np.ndarray:
        """Add one unpacked center to an array of encoded offsets.

        Returns int64 packed indices; any non-cyclic overflow maps to
        ``outside_index``.
        """
        s = np.uint64(center_unpacked) + encoded
        outside = (s & np.uint64(self.flag_mask)) != 0
        s &= np.uint64(self.value_mask)
        packed = self.compress_many(s)
        if outside.any():
            packed[outside] = self.outside_index
        return packed

    def compress_many(self, unpacked: np.ndarray) -> np.ndarray:
        x_pos, y_pos, z_pos = self.field_pos
        bx, by, bz = self.bits
        x = unpacked & np.uint64((1 << bx) - 1)
        z = (unpacked >> np.uint64(z_pos)) & np.uint64((1 << bz) - 1)
        y = (unpacked >> np.uint64(y_pos)) & np.uint64((1 << by) - 1)
        packed = x | (y << np.uint64(bx)) | (z << np.uint64(bx + by))
        return packed.astype(np.int64)

    def unpack_many(self, packed: np.ndarray) -> np.ndarray:
        """Packed indices -> (N, 3) integer cell coordinates."""
        bx, by, bz = self.bits
        p = np.asarray(packed, dtype=np.int64)
        out = np.empty(p.shape + (3,), dtype=np.int64)
        out[..., 0] = p & ((1 << bx) - 1)
        out[..., 1] = (p >> bx) & ((1 << by) - 1)
        out[..., 2] = (p >> (bx + by)) & ((1 << bz) - 1)
        return out


@dataclass(frozen=True)
class SubCellFractions:
    """Query-center position inside its cell, one fraction per axis in [0, 1)."""

    frac: tuple[float, float, float]

    @property
    def zeta_pos(self) -> tuple[float, float, float]:
        """Distance to the cell edge in the positive direction per axis."""
        fx, fy, fz = self.frac
        return (1.0 - fx, 1.0 - fy, 1.0 - fz)

    @property
    def zeta_neg(self) -> tuple[float, float, float]:
        """Distance to the cell edge in the negative direction per axis."""
        return self.frac


@dataclass(frozen=True)
class CellOffset:
    """A cell displacement plus its precomputed encodings.

    ``encoded`` is the per-axis 2-complement word at the unpacked field
    positions.  ``b_components`` are the per-axis base distances
    ``max(|delta| - 1, 0)`` and ``b_sq`` their squared sum: the minimum
    squared distance between any point of the center cell and any point of
    the offset cell.  ``half_wrap`` marks cyclic axes where ``|delta|``
    equals half the extent; those displacements are reachable both ways
    around, so directional distance formulas must take the nearer side.
    """

    delta: tuple[int, int, int]
    encoded: int
    b_components: tuple[int, int, int]
    b_sq: int
    half_wrap: tuple[bool, bool, bool] = (False, False, False)


def pack(cell_coords: tuple[int, int, int], config: GridConfig) -> int:
    """Concatenate Z, Y, X coordinates into the packed linear index."""
    x, y, z = cell_coords
    bx, by, bz = config.bits
    if not (0 <= x < (1 << bx) and 0 <= y < (1 << by) and 0 <= z < (1 << bz)):
        raise ValueError(f"cell {cell_coords} outside {config.extents} grid")
    return x | (y << bx) | (z << (bx + by))


def unpack(packed: int, config: GridConfig) -> tuple[int, int, int]:
    """Inverse of :func:`pack` for in-region indices."""
    bx, by, bz = config.bits
    return (
        packed & ((1 << bx) - 1),
        (packed >> bx) & ((1 << by) - 1),
        (packed >> (bx + by)) & ((1 << bz) - 1),
    )


def expand(packed: int, config: GridConfig) -> int:
    """Packed in-region index -> canonical unpacked word."""
    x, y, z = unpack(packed, config)
    x_pos, y_pos, z_pos = config.field_pos
    return (x << x_pos) | (z << z_pos) | (y << y_pos)


def compress(unpacked: int, config: GridConfig) -> int:
    """Masked post-translation word -> packed index.

    Guard gaps must already be zero.  A set non-cyclic overflow flag maps
    the whole word to ``outside_index``.
    """
    if unpacked & config.flag_mask:
        return config.outside_index
    bx, by, bz = config.bits
    x_pos, y_pos, z_pos = config.field_pos
    x = unpacked & ((1 << bx) - 1)
    z = (unpacked >> z_pos) & ((1 << bz) - 1)
    y = (unpacked >> y_pos) & ((1 << by) - 1)
    return x | (y << bx) | (z << (bx + by))


def encode_offset(delta: tuple[int, int, int], config: GridConfig) -> CellOffset:
    """Write a signed cell displacement as an addable unpacked word.

    Cyclic axes accept ``-2**(bits-1) <= delta < 2**(bits-1)`` (every cell
    reachable exactly once); non-cyclic axes accept the full displacement
    range ``|delta| <= 2**bits - 1`` on ``bits + 1`` 2-complement bits.
    """
    enc = 0
    b_comp = []
    half = []
    for axis in range(3):
        d = delta[axis]
        n = config.axis_bits(axis)
        if config.axis_cyclic(axis):
            lo, hi = -(1 << (n - 1)), (1 << (n - 1)) - 1
            width = n
        else:
            lo, hi = -((1 << n) - 1), (1 << n) - 1
            width = n + 1
        if not lo <= d <= hi:
            raise ValueError(f"offset {d} on axis {axis} outside [{lo}, {hi}]")
        enc |= (d & ((1 << width) - 1)) << config.field_pos[axis]
        b_comp.append(max(abs(d) - 1, 0))
        half.append(config.axis_cyclic(axis) and abs(d) == (1 << (n - 1)))
    bc = (b_comp[0], b_comp[1], b_comp[2])
    return CellOffset(
        delta=tuple(delta),
        encoded=enc,
        b_components=bc,
        b_sq=bc[0] * bc[0] + bc[1] * bc[1] + bc[2] * bc[2],
        half_wrap=(half[0], half[1], half[2]),
    )


def translate(center_unpacked: int, offset: CellOffset, config: GridConfig) -> int:
    """One masked addition: center + offset -> packed target cell.

    Cyclic axes wrap; leaving a non-cyclic axis yields ``outside_index``.
    """
    s = (center_unpacked + offset.encoded) & ((1 << _WORD_BITS) - 1)
    return compress(s & (config.value_mask | config.flag_mask), config)


def locate(
    position: tuple[float, float, float], config: GridConfig
) -> tuple[int, SubCellFractions]:
    """Continuous position -> (packed cell, sub-cell fractions).

    Cyclic axes wrap the cell coordinate; a position beyond a non-cyclic
    boundary maps to ``outside_index``.  Fractions always come from the
    raw coordinate, so centers outside the region keep exact distance
    math.
    """
    coords = []
    fracs = []
    outside = False
    for axis in range(3):
        p = position[axis]
        if not math.isfinite(p):
            raise ValueError(f"non-finite coordinate {p} on axis {axis}")
        c = math.floor(p)
        fracs.append(p - c)
        extent = 1 << config.axis_bits(axis)
        if config.axis_cyclic(axis):
            coords.append(c % extent)
        elif 0 <= c < extent:
            coords.append(c)
        else:
            outside = True
            coords.append(0)
    frac = SubCellFractions((fracs[0], fracs[1], fracs[2]))
    if outside:
        return config.outside_index, frac
    return pack((coords[0], coords[1], coords[2]), config), frac

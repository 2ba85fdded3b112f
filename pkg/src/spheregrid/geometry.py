"""Exact cell/point distance math, scalar and vectorized.

All cell-level bounds here are exact on the grid they describe, including
the wrap-around subtlety: a cyclic displacement of half the axis extent is
reachable both ways, so its directional distance takes the nearer side and
its farthest possible separation is exactly half the extent.
"""

from __future__ import annotations

import numpy as np

from .grid import CellOffset, GridConfig, SubCellFractions


def min_bound_sq(delta: tuple[int, int, int]) -> int:
    """Minimum squared distance between any two points of the center cell
    and the cell displaced by ``delta``, in cell units."""
    return sum(max(abs(d) - 1, 0) ** 2 for d in delta)


def min_dist_sq(offset: CellOffset, frac: SubCellFractions) -> float:
    """Exact minimum squared distance from the query center to the offset cell."""
    t = 0.0
    zp, zn = frac.zeta_pos, frac.zeta_neg
    for axis in range(3):
        d = offset.delta[axis]
        if d == 0:
            continue
        if offset.half_wrap[axis]:
            zeta = min(zp[axis], zn[axis])
        elif d > 0:
            zeta = zp[axis]
        else:
            zeta = zn[axis]
        t += (offset.b_components[axis] + zeta) ** 2
    return t


def farthest_sq(offset: CellOffset, frac: SubCellFractions) -> float:
    """Exact maximum squared distance from the query center to any point
    of the offset cell."""
    t = 0.0
    zp, zn = frac.zeta_pos, frac.zeta_neg
    for axis in range(3):
        d = offset.delta[axis]
        if d == 0:
            f = frac.frac[axis]
            t += max(f, 1.0 - f) ** 2
            continue
        zeta = zp[axis] if d > 0 else zn[axis]
        far = offset.b_components[axis] + zeta + 1.0
        if offset.half_wrap[axis]:
            far = min(far, abs(d))  # |d| == half extent, the torus cap
        t += far * far
    return t


# --- vectorized forms over table slices -----------------------------------
#
# delta/b_comp/half_wrap are (N, 3) slices of the offset table; fractions
# are a single query center.


def min_dist_sq_many(
    delta: np.ndarray, b_comp: np.ndarray, half_wrap: np.ndarray,
    frac: SubCellFractions,
) -> np.ndarray:
    t = np.zeros(len(delta), dtype=np.float64)
    zp, zn = frac.zeta_pos, frac.zeta_neg
    for axis in range(3):
        d = delta[:, axis]
        zeta = np.where(d > 0, zp[axis], zn[axis])
        zeta = np.where(half_wrap[:, axis], min(zp[axis], zn[axis]), zeta)
        contrib = (b_comp[:, axis] + zeta) ** 2
        t += np.where(d != 0, contrib, 0.0)
    return t


def farthest_sq_many(
    delta: np.ndarray, b_comp: np.ndarray, half_wrap: np.ndarray,
    frac: SubCellFractions,
) -> np.ndarray:
    t = np.zeros(len(delta), dtype=np.float64)
    zp, zn = frac.zeta_pos, frac.zeta_neg
    for axis in range(3):
        d = delta[:, axis]
        f = frac.frac[axis]
        far = b_comp[:, axis] + np.where(d > 0, zp[axis], zn[axis]) + 1.0
        far = np.where(half_wrap[:, axis], np.minimum(far, np.abs(d)), far)
        t += np.where(d != 0, far * far, max(f, 1.0 - f) ** 2)
    return t


def cell_min_dist_sq_many(
    center: tuple[float, float, float], coords: np.ndarray, config: GridConfig
) -> np.ndarray:
    """Exact minimum squared distance from a point to each cell.

    ``coords`` is (N, 3) integer cell coordinates.  Works for centers
    anywhere, inside or outside the region; cyclic axes take the shorter
    way around.
    """
    t = np.zeros(len(coords), dtype=np.float64)
    for axis in range(3):
        c = coords[:, axis].astype(np.float64)
        p = center[axis]
        if config.axis_cyclic(axis):
            extent = float(1 << config.axis_bits(axis))
            u = (p - c) % extent
            d = np.where(u < 1.0, 0.0, np.minimum(u - 1.0, extent - u))
        else:
            d = np.maximum(np.maximum(c - p, p - (c + 1.0)), 0.0)
        t += d * d
    return t


def point_dist_sq_many(
    center: tuple[float, float, float], positions: np.ndarray, config: GridConfig
) -> np.ndarray:
    """Squared point distances, minimum-image on cyclic axes."""
    t = np.zeros(len(positions), dtype=np.float64)
    for axis in range(3):
        d = np.abs(positions[:, axis] - center[axis])
        if config.axis_cyclic(axis):
            extent = float(1 << config.axis_bits(axis))
            d = d % extent
            d = np.minimum(d, extent - d)
        t += d * d
    return t


def max_possible_dist_sq(
    center: tuple[float, float, float], config: GridConfig
) -> float:
    """Upper bound on the distance from ``center`` to any in-region point."""
    t = 0.0
    for axis in range(3):
        extent = float(1 << config.axis_bits(axis))
        if config.axis_cyclic(axis):
            d = extent / 2.0
        else:
            d = max(abs(center[axis]), abs(extent - center[axis]))
        t += d * d
    return t

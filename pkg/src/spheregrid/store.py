"""Dynamic point objects in a linear cell array.

One contiguous array of ``2**packed_width + 1`` cells (the extra slot is
the unique outside cell), O(1) insert/remove/relocate by handle, and a
doubly-linked list threading the non-empty cells.

Mutations must be externally serialized (single writer); any number of
queries may run between mutations.  Handles are monotonically increasing
integers and are never reused.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator

import numpy as np

from .grid import GridConfig, SubCellFractions, locate

_NIL = -1
_GROW = 256


class StaleHandleError(KeyError):
    """The handle was never issued or its object was removed."""


@dataclass(frozen=True)
class StoreSnapshot:
    """Read-only view for queries, rebuilt lazily after mutations.

    ``csr_rows`` lists live object rows grouped by cell;
    ``csr_starts[cell] : csr_starts[cell + 1]`` is the group for one packed
    index.  ``nonempty_cells`` comes from walking the non-empty list and
    excludes the outside cell (outside objects are not query results).
    """

    counts: np.ndarray
    csr_starts: np.ndarray
    csr_rows: np.ndarray
    nonempty_cells: np.ndarray
    positions: np.ndarray
    handles: np.ndarray
    cell_of: np.ndarray


class CellView:
    """One cell's contents: a counted, O(1)-mutable bag of handles."""

    __slots__ = ("_store", "_packed")

    def __init__(self, store: "ObjectStore", packed: int):
        self._store = store
        self._packed = packed

    @property
    def packed(self) -> int:
        return self._packed

    def __len__(self) -> int:
        return int(self._store._counts[self._packed])

    def handles(self) -> list[int]:
        rows = self._store._cell_rows[self._packed] or []
        return [int(self._store._handle_of_row[r]) for r in rows]


class ObjectStore:
    def __init__(self, config: GridConfig):
        self.config = config
        size = config.cell_count + 1
        self._counts = np.zeros(size, dtype=np.int32)
        self._cell_rows: list[list[int] | None] = [None] * size

        # non-empty cell list, intrusive prev/next on packed indices
        self._next = np.full(size, _NIL, dtype=np.int64)
        self._prev = np.full(size, _NIL, dtype=np.int64)
        self._head = _NIL
        self._nonempty_size = 0

        cap = _GROW
        self._positions = np.zeros((cap, 3), dtype=np.float64)
        self._payloads: list[Any] = [None] * cap
        self._handle_of_row = np.full(cap, _NIL, dtype=np.int64)
        self._cell_of_row = np.full(cap, _NIL, dtype=np.int64)
        self._slot_of_row = np.zeros(cap, dtype=np.int64)
        self._free_rows: list[int] = list(range(cap - 1, -1, -1))
        self._row_of_handle: dict[int, int] = {}
        self._next_handle = 0
        self._count = 0
        self._snapshot: StoreSnapshot | None = None

    def __len__(self) -> int:
        return self._count

    @property
    def nonempty_size(self) -> int:
        return self._nonempty_size

    # --- mutations ----------------------------------------------------

    def insert(self, position: tuple[float, float, float], payload: Any = None) -> int:
        packed, _ = locate(position, self.config)
        row = self._alloc_row()
        handle = self._next_handle
        self._next_handle += 1
        self._positions[row] = position
        self._payloads[row] = payload
        self._handle_of_row[row] = handle
        self._row_of_handle[handle] = row
        self._attach(row, packed)
        self._count += 1
        self._snapshot = None
        return handle

    def remove(self, handle: int) -> None:
        row = self._row_of_handle.pop(self._check(handle), None)
        if row is None:
            raise StaleHandleError(handle)
        self._detach(row)
        self._handle_of_row[row] = _NIL
        self._payloads[row] = None
        self._free_rows.append(row)
        self._count -= 1
        self._snapshot = None

    def relocate(self, handle: int, new_position: tuple[float, float, float]) -> None:
        row = self._row_of_handle.get(self._check(handle))
        if row is None:
            raise StaleHandleError(handle)
        packed, _ = locate(new_position, self.config)
        self._positions[row] = new_position
        if packed != self._cell_of_row[row]:
            self._detach(row)
            self._attach(row, packed)
        self._snapshot = None

    # --- reads ----------------------------------------------------------

    def position_of(self, handle: int) -> tuple[float, float, float]:
        row = self._row(handle)
        p = self._positions[row]
        return (float(p[0]), float(p[1]), float(p[2]))

    def payload_of(self, handle: int) -> Any:
        return self._payloads[self._row(handle)]

    def cell_of(self, handle: int) -> int:
        return int(self._cell_of_row[self._row(handle)])

    def fractions_of(self, handle: int) -> SubCellFractions:
        _, frac = locate(self.position_of(handle), self.config)
        return frac

    def cell(self, packed: int) -> CellView:
        return CellView(self, packed)

    def nonempty_iter(self) -> Iterator[tuple[int, CellView]]:
        """Each non-empty cell exactly once, outside cell included."""
        packed = self._head
        while packed != _NIL:
            yield int(packed), CellView(self, int(packed))
            packed = int(self._next[packed])

    def snapshot(self) -> StoreSnapshot:
        if self._snapshot is None:
            self._snapshot = self._build_snapshot()
        return self._snapshot

    # --- internals --------------------------------------------------------

    def _check(self, handle: int) -> int:
        if not isinstance(handle, (int, np.integer)) or handle < 0:
            raise StaleHandleError(handle)
        return int(handle)

    def _row(self, handle: int) -> int:
        row = self._row_of_handle.get(self._check(handle))
        if row is None:
            raise StaleHandleError(handle)
        return row

    def _alloc_row(self) -> int:
        if not self._free_rows:
            old = len(self._payloads)
            cap = old * 2
            self._positions = np.resize(self._positions, (cap, 3))
            self._payloads.extend([None] * (cap - old))
            self._handle_of_row = np.resize(self._handle_of_row, cap)
            self._cell_of_row = np.resize(self._cell_of_row, cap)
            self._slot_of_row = np.resize(self._slot_of_row, cap)
            self._handle_of_row[old:] = _NIL
            self._cell_of_row[old:] = _NIL
            self._free_rows.extend(range(cap - 1, old - 1, -1))
        return self._free_rows.pop()

    def _attach(self, row: int, packed: int) -> None:
        rows = self._cell_rows[packed]
        if rows is None:
            rows = self._cell_rows[packed] = []
        self._slot_of_row[row] = len(rows)
        rows.append(row)
        self._cell_of_row[row] = packed
        self._counts[packed] += 1
        if self._counts[packed] == 1:
            self._list_insert(packed)

    def _detach(self, row: int) -> None:
        packed = int(self._cell_of_row[row])
        rows = self._cell_rows[packed]
        slot = int(self._slot_of_row[row])
        last = rows.pop()
        if last != row:  # swap-remove keeps the bag O(1)
            rows[slot] = last
            self._slot_of_row[last] = slot
        self._cell_of_row[row] = _NIL
        self._counts[packed] -= 1
        if self._counts[packed] == 0:
            self._list_remove(packed)

    def _list_insert(self, packed: int) -> None:
        self._prev[packed] = _NIL
        self._next[packed] = self._head
        if self._head != _NIL:
            self._prev[self._head] = packed
        self._head = packed
        self._nonempty_size += 1

    def _list_remove(self, packed: int) -> None:
        p, n = int(self._prev[packed]), int(self._next[packed])
        if p != _NIL:
            self._next[p] = n
        else:
            self._head = n
        if n != _NIL:
            self._prev[n] = p
        self._prev[packed] = _NIL
        self._next[packed] = _NIL
        self._nonempty_size -= 1

    def _build_snapshot(self) -> StoreSnapshot:
        live = np.flatnonzero(self._handle_of_row != _NIL)
        cells = self._cell_of_row[live]
        order = np.argsort(cells, kind="stable")
        rows = live[order].astype(np.int64)
        starts = np.zeros(self.config.cell_count + 2, dtype=np.int64)
        np.cumsum(np.bincount(cells, minlength=self.config.cell_count + 1),
                  out=starts[1:])
        nonempty = np.fromiter(
            (p for p, _ in self.nonempty_iter() if p != self.config.outside_index),
            dtype=np.int64,
        )
        return StoreSnapshot(
            counts=self._counts,
            csr_starts=starts,
            csr_rows=rows,
            nonempty_cells=nonempty,
            positions=self._positions,
            handles=self._handle_of_row,
            cell_of=self._cell_of_row,
        )

    def rows_in_cells(self, packed_cells: np.ndarray) -> np.ndarray:
        """Live object rows of the given cells, concatenated."""
        snap = self.snapshot()
        if len(packed_cells) == 0:
            return np.empty(0, dtype=np.int64)
        starts = snap.csr_starts[packed_cells]
        ends = snap.csr_starts[packed_cells + 1]
        total = int((ends - starts).sum())
        out = np.empty(total, dtype=np.int64)
        at = 0
        for s, e in zip(starts.tolist(), ends.tolist()):
            if e > s:
                out[at: at + e - s] = snap.csr_rows[s:e]
                at += e - s
        return out

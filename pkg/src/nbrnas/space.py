"""Search-space description and the discrete/relaxed cell encodings.

A cell assigns one operation to each edge of a fixed template graph. Nothing
downstream needs the graph's node topology — every computation here works per
edge — so a space is just an ordered edge count plus a shared operation
vocabulary, optionally flagging which ops act as "zero" and "skip".

Cells come in three encodings:

* ``DiscreteCell``  — one op index per edge (the searchable objects),
* ``RelaxedCell``   — one probability vector over ops per edge,
* ``Logits``        — unconstrained reals mapped to a ``RelaxedCell`` by softmax.
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np

#: tolerance for "rows sum to one" checks on relaxed cells
SUM_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class SpaceSpec:
    """A search space: ``edge_count`` decision edges sharing one op vocabulary."""

    edge_count: int
    op_names: tuple[str, ...]
    zero_op: int | None = None
    skip_op: int | None = None

    def __post_init__(self):
        if not isinstance(self.edge_count, int) or self.edge_count < 1:
            raise ValueError(f"edge_count must be a positive integer, got {self.edge_count!r}")
        names = tuple(str(n) for n in self.op_names)
        object.__setattr__(self, "op_names", names)
        if len(names) < 2:
            raise ValueError("need at least 2 operations")
        if len(set(names)) != len(names):
            raise ValueError(f"op names must be unique, got {names}")
        if any("|" in n or not n for n in names):
            raise ValueError("op names must be non-empty and must not contain '|'")
        for label in ("zero_op", "skip_op"):
            idx = getattr(self, label)
            if idx is not None and not (isinstance(idx, int) and 0 <= idx < len(names)):
                raise ValueError(f"{label} must be an op index in [0, {len(names)}), got {idx!r}")
        if self.zero_op is not None and self.zero_op == self.skip_op:
            raise ValueError("zero_op and skip_op must be distinct")

    @property
    def num_ops(self) -> int:
        return len(self.op_names)

    @property
    def num_cells(self) -> int:
        return self.num_ops**self.edge_count

    def op_index(self, name: str) -> int:
        try:
            return self.op_names.index(name)
        except ValueError:
            raise ValueError(f"unknown operation {name!r}; known: {list(self.op_names)}") from None

    def to_dict(self) -> dict:
        return {
            "edges": self.edge_count,
            "ops": list(self.op_names),
            "zero_op": self.zero_op,
            "skip_op": self.skip_op,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceSpec":
        for key in ("edges", "ops"):
            if key not in d:
                raise ValueError(f"space spec missing required key {key!r}")
        return cls(
            edge_count=int(d["edges"]),
            op_names=tuple(d["ops"]),
            zero_op=d.get("zero_op"),
            skip_op=d.get("skip_op"),
        )


@dataclasses.dataclass(frozen=True)
class DiscreteCell:
    """One op index per edge. Hashable, usable as a benchmark key."""

    ops: tuple[int, ...]

    def __post_init__(self):
        ops = tuple(int(o) for o in self.ops)
        if any(o < 0 for o in ops):
            raise ValueError(f"op indices must be nonnegative, got {ops}")
        object.__setattr__(self, "ops", ops)


class RelaxedCell:
    """Per-edge categorical distributions over ops, shape ``(edges, ops)``.

    Rows must be nonnegative and sum to 1 within ``SUM_TOL``. The backing array
    is copied and frozen, so instances are immutable values.
    """

    __slots__ = ("dists",)

    def __init__(self, dists):
        arr = np.array(dists, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise ValueError(f"expected a (edges, ops) matrix with ops >= 2, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("distributions must be finite")
        if (arr < 0.0).any():
            raise ValueError("distributions must be nonnegative")
        sums = arr.sum(axis=1)
        bad = np.abs(sums - 1.0) > SUM_TOL
        if bad.any():
            edge = int(np.argmax(bad))
            raise ValueError(f"edge {edge} distribution sums to {sums[edge]!r}, expected 1 within {SUM_TOL}")
        arr.setflags(write=False)
        self.dists = arr

    @property
    def edge_count(self) -> int:
        return self.dists.shape[0]

    @property
    def num_ops(self) -> int:
        return self.dists.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RelaxedCell):
            return NotImplemented
        return self.dists.shape == other.dists.shape and bool(np.array_equal(self.dists, other.dists))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return f"RelaxedCell({self.dists.tolist()!r})"


class Logits:
    """Unconstrained per-edge real vectors, shape ``(edges, ops)``, finite."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 2:
            raise ValueError(f"expected a (edges, ops) matrix with ops >= 2, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("logits must be finite")
        arr.setflags(write=False)
        self.values = arr

    @classmethod
    def zeros(cls, spec: SpaceSpec) -> "Logits":
        return cls(np.zeros((spec.edge_count, spec.num_ops)))

    def __eq__(self, other):
        if not isinstance(other, Logits):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self):
        return f"Logits({self.values.tolist()!r})"


def validate_cell(cell: DiscreteCell, spec: SpaceSpec) -> None:
    """Raise ValueError unless ``cell`` belongs to ``spec``."""
    if len(cell.ops) != spec.edge_count:
        raise ValueError(f"cell has {len(cell.ops)} edges, space has {spec.edge_count}")
    for e, o in enumerate(cell.ops):
        if o >= spec.num_ops:
            raise ValueError(f"edge {e}: op index {o} out of range for {spec.num_ops} ops")


def parse_cell(text: str, spec: SpaceSpec) -> DiscreteCell:
    """Parse a '|'-separated list of op names into a DiscreteCell."""
    parts = [p.strip() for p in text.strip().split("|")]
    if len(parts) != spec.edge_count:
        raise ValueError(f"expected {spec.edge_count} '|'-separated ops, got {len(parts)} in {text!r}")
    return DiscreteCell(tuple(spec.op_index(p) for p in parts))


def render_cell(cell: DiscreteCell, spec: SpaceSpec) -> str:
    """Inverse of parse_cell: '|'-joined op names in edge order."""
    validate_cell(cell, spec)
    return "|".join(spec.op_names[o] for o in cell.ops)


def relax(cell: DiscreteCell, spec: SpaceSpec) -> RelaxedCell:
    """Embed a discrete cell as one-hot rows."""
    validate_cell(cell, spec)
    arr = np.zeros((spec.edge_count, spec.num_ops))
    arr[np.arange(spec.edge_count), list(cell.ops)] = 1.0
    return RelaxedCell(arr)


def discretize(cell: RelaxedCell) -> DiscreteCell:
    """Per edge, pick the highest-probability op; ties break to the lowest index."""
    return DiscreteCell(tuple(int(k) for k in np.argmax(cell.dists, axis=1)))


def softmax_cell(logits: Logits) -> RelaxedCell:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = logits.values - logits.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    return RelaxedCell(e / e.sum(axis=1, keepdims=True))


def cell_index(cell: DiscreteCell, spec: SpaceSpec) -> int:
    """Mixed-radix rank of a cell: edge 0 is the most significant digit."""
    validate_cell(cell, spec)
    idx = 0
    for o in cell.ops:
        idx = idx * spec.num_ops + o
    return idx


def index_to_cell(index: int, spec: SpaceSpec) -> DiscreteCell:
    """Inverse of cell_index."""
    if not 0 <= index < spec.num_cells:
        raise ValueError(f"index {index} out of range for {spec.num_cells} cells")
    ops = []
    for _ in range(spec.edge_count):
        index, o = divmod(index, spec.num_ops)
        ops.append(o)
    return DiscreteCell(tuple(reversed(ops)))


@functools.lru_cache(maxsize=8)
def all_cells_array(spec: SpaceSpec) -> np.ndarray:
    """All cells of the space as an ``(num_cells, edges)`` int array.

    Row ``i`` is the cell with ``cell_index == i``. Cached per spec; the array
    is read-only.
    """
    grids = np.meshgrid(*([np.arange(spec.num_ops)] * spec.edge_count), indexing="ij")
    arr = np.stack(grids, axis=-1).reshape(-1, spec.edge_count).astype(np.int64)
    arr.setflags(write=False)
    return arr

"""Cell distance and d-ball neighborhoods.

The distance between two cells is the per-edge total-variation distance summed
over edges; on discrete (one-hot) cells it reduces to the Hamming distance in
edges. A cell's radius-``d`` neighborhood is every discrete cell differing on
at most ``d`` edges, *including the cell itself*.
"""

from __future__ import annotations

import dataclasses
import itertools
from math import comb
from typing import Iterator

import numpy as np

from .space import DiscreteCell, RelaxedCell, SpaceSpec, validate_cell

#: neighborhoods above this size are not materialized eagerly
EAGER_LIMIT = 10**6


@dataclasses.dataclass(frozen=True)
class NeighborhoodParams:
    """How a neighborhood is sampled: distance threshold and sample size."""

    radius: int
    sample_size: int

    def __post_init__(self):
        if not isinstance(self.radius, int) or self.radius < 0:
            raise ValueError(f"radius must be a nonnegative integer, got {self.radius!r}")
        if not isinstance(self.sample_size, int) or self.sample_size < 1:
            raise ValueError(f"sample_size must be a positive integer, got {self.sample_size!r}")


def tv_distance(p, q) -> float:
    """Total variation distance ½·Σ|p_k − q_k| between two distributions."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ValueError(f"expected two equal-length vectors, got shapes {p.shape} and {q.shape}")
    return float(np.abs(p - q).sum() / 2.0)


def _as_dist_matrix(cell, like) -> np.ndarray:
    """One-hot-embed a DiscreteCell using the op count of its relaxed partner."""
    if isinstance(cell, RelaxedCell):
        return cell.dists
    if isinstance(cell, DiscreteCell):
        if not isinstance(like, RelaxedCell):
            raise TypeError("cannot infer op count for a pair of bare DiscreteCells here")
        m = like.num_ops
        if len(cell.ops) != like.edge_count:
            raise ValueError(f"cells from different spaces: {len(cell.ops)} vs {like.edge_count} edges")
        if any(o >= m for o in cell.ops):
            raise ValueError(f"op index out of range for {m} ops: {cell.ops}")
        arr = np.zeros((len(cell.ops), m))
        arr[np.arange(len(cell.ops)), list(cell.ops)] = 1.0
        return arr
    raise TypeError(f"expected DiscreteCell or RelaxedCell, got {type(cell).__name__}")


def cell_distance(a, b) -> float:
    """Sum of per-edge total-variation distances; Hamming distance on one-hots.

    Accepts any mix of DiscreteCell and RelaxedCell from the same space.
    """
    if isinstance(a, DiscreteCell) and isinstance(b, DiscreteCell):
        if len(a.ops) != len(b.ops):
            raise ValueError(f"cells from different spaces: {len(a.ops)} vs {len(b.ops)} edges")
        return float(sum(x != y for x, y in zip(a.ops, b.ops)))
    da = _as_dist_matrix(a, like=b)
    db = _as_dist_matrix(b, like=a)
    if da.shape != db.shape:
        raise ValueError(f"cells from different spaces: shapes {da.shape} vs {db.shape}")
    return float(np.abs(da - db).sum() / 2.0)


def _check_radius(radius) -> int:
    if isinstance(radius, bool) or not isinstance(radius, (int, np.integer, float)):
        raise ValueError(f"radius must be an integer, got {radius!r}")
    if isinstance(radius, float):
        if not radius.is_integer():
            raise ValueError(f"only integer radii enumerate to discrete neighborhoods, got {radius!r}")
        radius = int(radius)
    radius = int(radius)
    if radius < 0:
        raise ValueError(f"radius must be nonnegative, got {radius}")
    return radius


def neighborhood_size(edge_count: int, num_ops: int, radius: int) -> int:
    """Closed-form ball size: Σ_{j=0..radius} C(edges, j)·(ops−1)^j."""
    radius = _check_radius(radius)
    return sum(comb(edge_count, j) * (num_ops - 1) ** j for j in range(min(radius, edge_count) + 1))


def iter_neighbors(cell: DiscreteCell, radius: int, spec: SpaceSpec) -> Iterator[DiscreteCell]:
    """Yield every cell within ``radius`` edge changes, the reference first.

    Deterministic order: by number of changed edges, then by changed-edge
    combination, then by replacement ops ascending.
    """
    radius = _check_radius(radius)
    validate_cell(cell, spec)
    yield cell
    m = spec.num_ops
    for j in range(1, min(radius, spec.edge_count) + 1):
        for edges in itertools.combinations(range(spec.edge_count), j):
            alternatives = [[k for k in range(m) if k != cell.ops[e]] for e in edges]
            for replacement in itertools.product(*alternatives):
                ops = list(cell.ops)
                for e, k in zip(edges, replacement):
                    ops[e] = k
                yield DiscreteCell(tuple(ops))


def enumerate_neighbors(cell: DiscreteCell, radius: int, spec: SpaceSpec) -> list[DiscreteCell]:
    """Materialize the radius-``radius`` neighborhood of ``cell`` as a list.

    Refuses neighborhoods larger than ``EAGER_LIMIT`` — use iter_neighbors for
    those.
    """
    size = neighborhood_size(spec.edge_count, spec.num_ops, radius)
    if size > EAGER_LIMIT:
        raise ValueError(f"neighborhood of size {size} exceeds the eager limit {EAGER_LIMIT}; use iter_neighbors")
    return list(iter_neighbors(cell, radius, spec))


def sample_neighbors(
    cell: DiscreteCell,
    params: NeighborhoodParams,
    spec: SpaceSpec,
    rng: np.random.Generator,
) -> list[DiscreteCell]:
    """The reference plus ``sample_size−1`` distinct cells drawn uniformly from
    the punctured ball (the radius-ball minus the reference).

    Uniformity: a draw picks its change count j with probability proportional
    to the number of ball members at distance j, then a j-edge subset and the
    replacement ops uniformly — exactly uniform over the punctured ball.
    Duplicates are rejected and redrawn, so the result is a without-replacement
    sample. With ``sample_size == 1`` no random draw is consumed.
    """
    validate_cell(cell, spec)
    if params.radius > spec.edge_count:
        raise ValueError(f"radius {params.radius} exceeds edge count {spec.edge_count}")
    ball = neighborhood_size(spec.edge_count, spec.num_ops, params.radius)
    if params.sample_size > ball:
        raise ValueError(f"sample_size {params.sample_size} exceeds neighborhood size {ball}")
    out = [cell]
    if params.sample_size == 1:
        return out
    m = spec.num_ops
    max_j = min(params.radius, spec.edge_count)
    classes = np.arange(1, max_j + 1)
    weights = np.array([comb(spec.edge_count, int(j)) * (m - 1) ** int(j) for j in classes], dtype=np.float64)
    probs = weights / weights.sum()
    seen = {cell.ops}
    while len(out) < params.sample_size:
        j = int(rng.choice(classes, p=probs))
        edges = rng.choice(spec.edge_count, size=j, replace=False)
        ops = list(cell.ops)
        for e in np.sort(edges):
            alt = int(rng.integers(m - 1))
            ops[e] = alt + (alt >= cell.ops[e])  # uniform over the m−1 other ops
        key = tuple(ops)
        if key in seen:
            continue
        seen.add(key)
        out.append(DiscreteCell(key))
    return out

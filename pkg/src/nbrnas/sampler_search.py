"""Random search and neighborhood-aware random search over a benchmark.

Both searches draw candidate cells from one shared uniform stream so their
traces are directly comparable: with ``sample_size == 1`` the neighborhood
criterion degenerates to the plain objective and the two algorithms consume
identical random draws, step for step.

Budget accounting charges one objective evaluation per queried cell, so the
fair comparison is ``random_search(budget = steps · sample_size)`` against
``na_random_search(steps, sample_size)``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Iterator

import numpy as np

from .agg import AggregationKind, aggregate
from .bench import Objective
from .nbhd import NeighborhoodParams, sample_neighbors
from .space import DiscreteCell, SpaceSpec, render_cell
from ._util import ordered_thread_map


@dataclasses.dataclass(frozen=True)
class TraceStep:
    """One accepted-or-not candidate: its criterion and the budget spent so far."""

    step: int
    cell: DiscreteCell
    criterion: float
    evaluations: int


@dataclasses.dataclass(frozen=True)
class SearchTrace:
    steps: tuple[TraceStep, ...]
    incumbent: DiscreteCell
    incumbent_score: float
    total_evaluations: int

    def to_json_dict(self, spec: SpaceSpec) -> dict:
        return {
            "steps": [
                {
                    "step": s.step,
                    "cell": render_cell(s.cell, spec),
                    "criterion": s.criterion,
                    "evaluations": s.evaluations,
                }
                for s in self.steps
            ],
            "incumbent": render_cell(self.incumbent, spec),
            "incumbent_score": self.incumbent_score,
            "total_evaluations": self.total_evaluations,
        }


def uniform_cells(spec: SpaceSpec, rng: np.random.Generator) -> Iterator[DiscreteCell]:
    """Endless uniform candidate stream; one ``integers`` draw per candidate."""
    while True:
        yield DiscreteCell(tuple(int(o) for o in rng.integers(spec.num_ops, size=spec.edge_count)))


def random_search(
    obj: Objective,
    budget: int,
    rng: np.random.Generator,
    candidates: Iterator[DiscreteCell] | None = None,
) -> SearchTrace:
    """Uniform sampling with replacement; keeps the lowest objective value.

    ``candidates`` overrides the uniform stream (e.g. an exhaustive sweep in
    tests); by default cells are drawn uniformly using ``rng``.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    stream = candidates if candidates is not None else uniform_cells(obj.bench.spec, rng)
    steps = []
    best: DiscreteCell | None = None
    best_score = math.inf
    evaluations = 0
    for t in range(budget):
        cell = next(stream)
        value = obj(cell)
        evaluations += 1
        if value < best_score:
            best, best_score = cell, value
        steps.append(TraceStep(t, cell, value, evaluations))
    assert best is not None
    return SearchTrace(tuple(steps), best, best_score, evaluations)


def na_random_search(
    obj: Objective,
    steps: int,
    params: NeighborhoodParams,
    kind: AggregationKind,
    rng: np.random.Generator,
    candidates: Iterator[DiscreteCell] | None = None,
    threads: int = 1,
) -> SearchTrace:
    """Random search accepting candidates by aggregated neighborhood score.

    Each step samples one candidate uniformly, samples ``params.sample_size``
    neighborhood members (the candidate itself first), evaluates the objective
    on each, aggregates with ``kind``, and replaces the incumbent only on a
    strictly lower score. Charges ``sample_size`` evaluations per step. The
    returned incumbent is always a sampled reference cell, never one of its
    neighbors.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    spec = obj.bench.spec
    stream = candidates if candidates is not None else uniform_cells(spec, rng)
    trace = []
    best: DiscreteCell | None = None
    best_score = math.inf
    evaluations = 0
    for t in range(steps):
        cell = next(stream)
        neighborhood = sample_neighbors(cell, params, spec, rng)
        values = ordered_thread_map(obj, neighborhood, threads)
        score = aggregate(kind, values[0], values)
        evaluations += params.sample_size
        if score < best_score:
            best, best_score = cell, score
        trace.append(TraceStep(t, cell, score, evaluations))
    assert best is not None
    return SearchTrace(tuple(trace), best, best_score, evaluations)

"""Shared helpers for building tiny hand-specified benchmarks in tests."""

from __future__ import annotations

import numpy as np

from nbrnas import SpaceSpec, TabularBenchmark, all_cells_array


def space(edges: int, ops: int, zero_skip: bool = True) -> SpaceSpec:
    """A compact space with op names o0..o(m-1); o0/o1 flagged zero/skip."""
    names = tuple(f"o{i}" for i in range(ops))
    if zero_skip and ops >= 2:
        return SpaceSpec(edges, names, zero_op=0, skip_op=1)
    return SpaceSpec(edges, names)


def table_bench(spec: SpaceSpec, table, epochs: int = 1, test=None, dataset: str = "d0") -> TabularBenchmark:
    """Benchmark from an explicit per-cell value table.

    ``table`` maps ops-tuples to the final validation error (floats), or is a
    flat array in cell-index order. Earlier epochs, when requested, anneal
    linearly from value+20. ``test`` defaults to the validation values.
    """
    n = spec.num_cells
    if isinstance(table, dict):
        values = np.empty(n)
        cells = all_cells_array(spec)
        for i in range(n):
            values[i] = table[tuple(int(o) for o in cells[i])]
    else:
        values = np.asarray(table, dtype=np.float64)
        assert values.shape == (n,)
    val = np.linspace(values + 20.0, values, num=epochs, axis=1) if epochs > 1 else values[:, None]
    tst = values if test is None else np.asarray(test, dtype=np.float64)
    return TabularBenchmark(spec, epochs, {dataset: np.clip(val, 0, 100)}, {dataset: np.clip(tst, 0, 100)})

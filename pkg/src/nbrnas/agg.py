"""Aggregation functions reducing a neighborhood's error multiset to one score.

The selection criterion for a cell is ``aggregate(kind, f(cell), values)``
where ``values`` are the objective values over the (sampled or full)
neighborhood *including the cell itself* — callers are responsible for that
inclusion, matching the neighborhood definition in :mod:`nbrnas.nbhd`.
"""

from __future__ import annotations

import dataclasses

import numpy as np

_KNOWN = ("mean", "median", "max", "var")


@dataclasses.dataclass(frozen=True)
class AggregationKind:
    """One of mean | median | max | var (variance-penalized, f + penalty·σ)."""

    name: str
    penalty: float = 1.0

    def __post_init__(self):
        if self.name not in _KNOWN:
            raise ValueError(f"unknown aggregation {self.name!r}; known: {_KNOWN}")
        p = float(self.penalty)
        if not np.isfinite(p) or p < 0.0:
            raise ValueError(f"penalty must be finite and nonnegative, got {self.penalty!r}")
        object.__setattr__(self, "penalty", p)

    def __str__(self):
        if self.name == "var":
            return f"var:{self.penalty:g}"
        return self.name


MEAN = AggregationKind("mean")
MEDIAN = AggregationKind("median")
MAX = AggregationKind("max")


def variance_penalized(penalty: float = 1.0) -> AggregationKind:
    """Criterion f(cell) + penalty·(population std of the neighborhood values)."""
    return AggregationKind("var", penalty)


def parse_kind(text: str) -> AggregationKind:
    """Parse a CLI string: "mean" | "median" | "max" | "var" | "var:<penalty>"."""
    text = text.strip()
    if text.startswith("var"):
        rest = text[3:]
        if rest == "":
            return variance_penalized(1.0)
        if rest.startswith(":"):
            try:
                return variance_penalized(float(rest[1:]))
            except ValueError:
                raise ValueError(f"bad penalty in aggregation {text!r}") from None
    if text in ("mean", "median", "max"):
        return AggregationKind(text)
    raise ValueError(f"unknown aggregation {text!r}; expected mean | median | max | var:<penalty>")


def aggregate(kind: AggregationKind, ref_value: float, neighbor_values) -> float:
    """Reduce neighborhood objective values to the selection score.

    ``neighbor_values`` must be non-empty and include the reference's own value;
    ``ref_value`` is only consulted by the variance-penalized kind.
    """
    values = np.asarray(neighbor_values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("neighbor_values must be a non-empty 1-D collection")
    if kind.name == "mean":
        return float(values.mean())
    if kind.name == "median":
        return float(np.median(values))
    if kind.name == "max":
        return float(values.max())
    # variance-penalized: reference value plus scaled population std
    return float(ref_value) + kind.penalty * float(values.std())


def neighborhood_variance(values) -> float:
    """Population variance of a non-empty value collection."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("values must be a non-empty 1-D collection")
    return float(arr.var())

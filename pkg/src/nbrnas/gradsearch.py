"""Differentiable neighborhood search on the relaxed space.

Logits parameterize a relaxed cell through a row-wise softmax. A step samples
a neighborhood of the current relaxed cell — the cell itself plus perturbed
copies — scores every member with the multilinear surrogate, and descends the
aggregated score:

* kind "mean": neighbors perturb a random subset of edges *additively* —
  bounded noise added to the edge distribution and renormalized — which keeps
  the neighbor differentiable w.r.t. the reference, so the gradient averages
  the chained per-neighbor gradients;
* kind "max": neighbors pin a random subset of edges to one-hot zero/skip
  (*multiplicative* form); the max over a finite candidate set is
  differentiated at its argmax only, with the pinned edges held constant.

Median is not differentiable in any useful sense here and is rejected.

The benchmark's inner training loop has no analogue under a tabular
surrogate, so each step records the weight update as skipped.
"""

from __future__ import annotations

import dataclasses
from typing import Literal

import numpy as np

from .agg import AggregationKind, MEAN
from .bench import Objective, multilinear_eval, multilinear_grad
from .space import DiscreteCell, Logits, RelaxedCell, SpaceSpec, discretize, render_cell, softmax_cell
from ._util import as_rng, ordered_thread_map

#: default fraction of edges perturbed per neighbor (rounded half-up)
PERTURB_EDGE_FRACTION = 0.43


def default_perturb_edges(edge_count: int) -> int:
    """Scaled default for how many edges each sampled neighbor perturbs."""
    return min(edge_count, max(1, int(PERTURB_EDGE_FRACTION * edge_count + 0.5)))


@dataclasses.dataclass(frozen=True)
class EdgeNoise:
    """Bounded additive noise for one edge: the draw and which coords clamped.

    Invariants: |q_k| ≤ bound, and cell.dists[e] + q ≥ 0 for the edge it was
    drawn against (guaranteed by the clamp in sample_noise). Clamped
    coordinates are constants for differentiation purposes.
    """

    q: np.ndarray
    clamped: np.ndarray
    bound: float

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64, copy=True)
        clamped = np.array(self.clamped, dtype=bool, copy=True)
        if q.ndim != 1 or q.shape != clamped.shape:
            raise ValueError(f"q and clamped must be equal-length vectors, got {q.shape} and {clamped.shape}")
        if np.abs(q).max(initial=0.0) > self.bound + 1e-12:
            raise ValueError(f"noise exceeds its bound {self.bound}")
        q.setflags(write=False)
        clamped.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "clamped", clamped)


#: per-edge noise keyed by perturbed edge index
NoiseVector = dict[int, EdgeNoise]


def sample_noise(edge_dist: np.ndarray, noise_bound: float, rng: np.random.Generator) -> EdgeNoise:
    """Draw uniform noise in ±noise_bound, clamped so the edge stays feasible.

    Componentwise q_k ← max(q_k, −w_k) keeps w + q ≥ 0; the (measure-zero)
    draw where the perturbed edge loses all mass is redrawn.
    """
    if not 0.0 < noise_bound < 1.0:
        raise ValueError(f"noise_bound must lie in (0, 1), got {noise_bound!r}")
    w = np.asarray(edge_dist, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"expected one edge distribution, got shape {w.shape}")
    while True:
        raw = rng.uniform(-noise_bound, noise_bound, size=w.shape[0])
        q = np.maximum(raw, -w)
        if (w + q).sum() > 0.0:
            return EdgeNoise(q=q, clamped=raw < -w, bound=float(noise_bound))


def additive_neighbor(cell: RelaxedCell, perturbed_edges, noise: NoiseVector) -> RelaxedCell:
    """Perturb the given edges by their noise and renormalize; others untouched.

    Each perturbed edge e becomes (w_e + q_e) / Σ(w_e + q_e). Unperturbed rows
    are preserved bitwise.
    """
    edges = sorted(int(e) for e in perturbed_edges)
    if set(edges) != set(noise):
        raise ValueError(f"noise keyed by {sorted(noise)} but perturbed_edges are {edges}")
    if len(edges) != len(set(edges)):
        raise ValueError("perturbed_edges contains duplicates")
    out = cell.dists.copy()
    for e in edges:
        if not 0 <= e < cell.edge_count:
            raise ValueError(f"edge {e} out of range for {cell.edge_count} edges")
        entry = noise[e]
        if entry.q.shape[0] != cell.num_ops:
            raise ValueError(f"edge {e}: noise length {entry.q.shape[0]} does not match {cell.num_ops} ops")
        shifted = cell.dists[e] + entry.q
        if (shifted < 0.0).any():
            raise ValueError(f"edge {e}: noise drives a coordinate negative; invalid for this cell")
        total = shifted.sum()
        if total <= 0.0:
            raise ValueError(f"edge {e}: noise removes all probability mass")
        out[e] = shifted / total
    return RelaxedCell(out)


def multiplicative_neighbor(cell: RelaxedCell, perturbed_edges, choices: dict[int, int], spec: SpaceSpec) -> RelaxedCell:
    """Pin the given edges to one-hot zero/skip rows; others untouched.

    ``choices`` maps each perturbed edge to spec.zero_op or spec.skip_op; the
    cell must carry positive mass at the chosen index.
    """
    if spec.zero_op is None or spec.skip_op is None:
        raise ValueError("space must define zero_op and skip_op for multiplicative neighbors")
    edges = sorted(int(e) for e in perturbed_edges)
    if set(edges) != set(int(e) for e in choices):
        raise ValueError(f"choices keyed by {sorted(choices)} but perturbed_edges are {edges}")
    out = cell.dists.copy()
    for e in edges:
        if not 0 <= e < cell.edge_count:
            raise ValueError(f"edge {e} out of range for {cell.edge_count} edges")
        k = int(choices[e])
        if k not in (spec.zero_op, spec.skip_op):
            raise ValueError(f"edge {e}: choice {k} must be zero_op ({spec.zero_op}) or skip_op ({spec.skip_op})")
        if cell.dists[e, k] <= 0.0:
            raise ValueError(f"edge {e}: zero mass at op {k}; the one-hot neighbor is undefined there")
        out[e] = 0.0
        out[e, k] = 1.0
    return RelaxedCell(out)


def neighbor_grad_chain(cell: RelaxedCell, perturbed_edges, noise: NoiseVector, upstream: np.ndarray) -> np.ndarray:
    """Chain an additive neighbor's gradient back to the reference cell.

    For a perturbed edge with shifted mass a = w + q and S = Σa, the Jacobian
    of a/S has rows (δ_kl·S − a_k)/S², so (Jᵀu)_l = (u_l − u·(a/S))/S; clamped
    noise coordinates are constants and contribute zero. Unperturbed edges pass
    ``upstream`` through unchanged.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != cell.dists.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match the cell {cell.dists.shape}")
    edges = sorted(int(e) for e in perturbed_edges)
    if set(edges) != set(noise):
        raise ValueError(f"noise keyed by {sorted(noise)} but perturbed_edges are {edges}")
    out = upstream.copy()
    for e in edges:
        entry = noise[e]
        shifted = cell.dists[e] + entry.q
        total = shifted.sum()
        u = upstream[e]
        row = (u - float(u @ (shifted / total))) / total
        out[e] = np.where(entry.clamped, 0.0, row)
    return out


def softmax_grad_chain(alpha: RelaxedCell, upstream: np.ndarray) -> np.ndarray:
    """Chain a gradient w.r.t. softmax outputs back to the logits.

    Row-wise (Jᵀu)_l = α_l·(u_l − u·α).
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != alpha.dists.shape:
        raise ValueError(f"upstream shape {upstream.shape} does not match the cell {alpha.dists.shape}")
    inner = (upstream * alpha.dists).sum(axis=1, keepdims=True)
    return alpha.dists * (upstream - inner)


@dataclasses.dataclass(frozen=True)
class SampledNeighbor:
    """One neighborhood member plus what is needed to chain its gradient.

    The reference itself has ``noise=None`` and no pinned edges; additive
    neighbors carry their NoiseVector; multiplicative neighbors carry the
    pinned edge indices (held constant under differentiation).
    """

    cell: RelaxedCell
    noise: NoiseVector | None = None
    pinned_edges: tuple[int, ...] = ()

    def chain(self, reference: RelaxedCell, upstream: np.ndarray) -> np.ndarray:
        if self.noise:
            return neighbor_grad_chain(reference, sorted(self.noise), self.noise, upstream)
        out = np.array(upstream, dtype=np.float64, copy=True)
        if self.pinned_edges:
            out[list(self.pinned_edges)] = 0.0
        return out


@dataclasses.dataclass(frozen=True)
class DescentConfig:
    """Hyperparameters for a descent run.

    ``perturb_edges=None`` means the scaled default for the space; ``kind``
    must be differentiable (mean or max).
    """

    steps: int
    sample_size: int = 10
    perturb_edges: int | None = None
    noise_bound: float = 0.1
    learning_rate: float = 0.1
    kind: AggregationKind = MEAN
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.steps, int) or self.steps < 0:
            raise ValueError(f"steps must be a nonnegative integer, got {self.steps!r}")
        if not isinstance(self.sample_size, int) or self.sample_size < 1:
            raise ValueError(f"sample_size must be a positive integer, got {self.sample_size!r}")
        if self.perturb_edges is not None and (not isinstance(self.perturb_edges, int) or self.perturb_edges < 1):
            raise ValueError(f"perturb_edges must be a positive integer or None, got {self.perturb_edges!r}")
        if not 0.0 < self.noise_bound < 1.0:
            raise ValueError(f"noise_bound must lie in (0, 1), got {self.noise_bound!r}")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate!r}")
        if self.kind.name not in ("mean", "max"):
            raise ValueError(f"aggregation {self.kind} is not differentiable; use mean or max")

    def resolved_perturb_edges(self, spec: SpaceSpec) -> int:
        d = self.perturb_edges if self.perturb_edges is not None else default_perturb_edges(spec.edge_count)
        if d > spec.edge_count:
            raise ValueError(f"perturb_edges {d} exceeds edge count {spec.edge_count}")
        return d


@dataclasses.dataclass(frozen=True)
class DescentStep:
    """Per-step record: surrogate at the reference, aggregated score, and the
    discretized incumbent after the update. The inner weight update has no
    analogue under a tabular surrogate and is recorded as skipped."""

    step: int
    objective: float
    aggregate: float
    cell: DiscreteCell
    weight_update: str = "skipped"

    def to_json_dict(self, spec: SpaceSpec) -> dict:
        return {
            "step": self.step,
            "objective": self.objective,
            "aggregate": self.aggregate,
            "cell": render_cell(self.cell, spec),
            "weight_update": self.weight_update,
        }


def sample_descent_neighbors(
    alpha: RelaxedCell,
    cfg: DescentConfig,
    spec: SpaceSpec,
    rng: np.random.Generator,
) -> list[SampledNeighbor]:
    """Reference first, then sample_size−1 perturbed neighbors.

    Additive perturbations for kind=mean, multiplicative (zero/skip pinning,
    chosen uniformly) for kind=max. Each neighbor independently draws the
    subset of perturbed edges.
    """
    d = cfg.resolved_perturb_edges(spec)
    out = [SampledNeighbor(cell=alpha)]
    for _ in range(cfg.sample_size - 1):
        edges = np.sort(rng.choice(spec.edge_count, size=d, replace=False))
        if cfg.kind.name == "mean":
            noise: NoiseVector = {int(e): sample_noise(alpha.dists[e], cfg.noise_bound, rng) for e in edges}
            out.append(SampledNeighbor(additive_neighbor(alpha, list(noise), noise), noise=noise))
        else:
            choices = {int(e): int(spec.zero_op if rng.integers(2) == 0 else spec.skip_op) for e in edges}
            cell = multiplicative_neighbor(alpha, list(choices), choices, spec)
            out.append(SampledNeighbor(cell, pinned_edges=tuple(int(e) for e in edges)))
    return out


def _neighborhood_gradient(
    obj: Objective,
    alpha: RelaxedCell,
    neighbors: list[SampledNeighbor],
    kind: AggregationKind,
    threads: int = 1,
) -> tuple[np.ndarray, float, list[float]]:
    """Gradient w.r.t. the reference cell of the aggregated surrogate over a
    fixed neighbor set, plus the aggregate and the per-neighbor values.

    mean: average of the chained per-neighbor gradients (summed in neighbor
    index order, so fan-out cannot change the result). max: the chained
    gradient at the first argmax neighbor only.
    """
    values = ordered_thread_map(lambda nb: multilinear_eval(obj, nb.cell), neighbors, threads)
    if kind.name == "mean":
        grads = ordered_thread_map(
            lambda nb: nb.chain(alpha, multilinear_grad(obj, nb.cell)), neighbors, threads
        )
        total = np.zeros_like(alpha.dists)
        for g in grads:
            total += g
        return total / len(neighbors), float(np.mean(values)), values
    worst = int(np.argmax(values))
    g = neighbors[worst].chain(alpha, multilinear_grad(obj, neighbors[worst].cell))
    return g, float(values[worst]), values


def na_descent_step(
    logits: Logits,
    obj: Objective,
    cfg: DescentConfig,
    rng: np.random.Generator,
    threads: int = 1,
) -> tuple[Logits, DescentStep]:
    """One sampled-neighborhood gradient-descent update on the logits."""
    alpha = softmax_cell(logits)
    neighbors = sample_descent_neighbors(alpha, cfg, obj.bench.spec, rng)
    grad_alpha, agg_value, values = _neighborhood_gradient(obj, alpha, neighbors, cfg.kind, threads)
    grad_logits = softmax_grad_chain(alpha, grad_alpha)
    updated = Logits(logits.values - cfg.learning_rate * grad_logits)
    report = DescentStep(
        step=0,
        objective=float(values[0]),
        aggregate=agg_value,
        cell=discretize(softmax_cell(updated)),
    )
    return updated, report


def run_na_descent(
    logits0: Logits | None,
    obj: Objective,
    cfg: DescentConfig,
    threads: int = 1,
) -> tuple[list[DescentStep], DiscreteCell]:
    """cfg.steps descent steps from logits0 (zeros when None).

    Returns the per-step trace and the discretized final cell. Deterministic
    given cfg.seed for any thread count.
    """
    spec = obj.bench.spec
    logits = logits0 if logits0 is not None else Logits.zeros(spec)
    if logits.values.shape != (spec.edge_count, spec.num_ops):
        raise ValueError(f"logits shape {logits.values.shape} does not match the space")
    if cfg.kind.name == "max" and (spec.zero_op is None or spec.skip_op is None):
        raise ValueError("kind=max needs a space with zero_op and skip_op defined")
    rng = as_rng(cfg.seed)
    trace: list[DescentStep] = []
    for t in range(cfg.steps):
        logits, report = na_descent_step(logits, obj, cfg, rng, threads)
        trace.append(dataclasses.replace(report, step=t))
    return trace, discretize(softmax_cell(logits))

"""Ranking studies, flat-vs-sharp analysis, top-k selection, and landscape export.

Everything here answers one question from the neighborhood-aware viewpoint:
does scoring a cell by its neighborhood predict generalization better than
scoring the cell alone? The studies quantify that with tie-corrected rank
correlation against test error, group comparisons of flat vs sharp optima,
and exhaustive top-k selections; the landscape grid exports the surrogate
surface along the two sharpest Hessian directions for contour plotting.
"""

from __future__ import annotations

import dataclasses
import warnings

import numpy as np

from .agg import AggregationKind, aggregate, neighborhood_variance
from .bench import Objective, TabularBenchmark, multilinear_eval_raw
from .nbhd import iter_neighbors, neighborhood_size
from .space import DiscreteCell, RelaxedCell, all_cells_array, cell_index, index_to_cell, render_cell
from ._util import as_rng

#: exhaustive criterion sweeps refuse to run above this many evaluations
EXHAUSTIVE_LIMIT = 10**7

#: full pairwise tau computation is O(n²); refuse absurd inputs
TAU_LIMIT = 20_000


def kendall_tau(a, b) -> float:
    """Tie-corrected Kendall rank correlation (tau-b) of two score lists.

    (C − D) / sqrt((n0 − n1)(n0 − n2)) with C/D the concordant/discordant
    pair counts and n1/n2 the tied-pair counts per input. Degenerate inputs
    (either list fully tied) have an undefined denominator and are rejected.
    O(n²) pairwise implementation, fine for the study sizes used here.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ValueError(f"expected two equal-length 1-D score lists, got shapes {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two scores")
    if n > TAU_LIMIT:
        raise ValueError(f"{n} scores exceed the O(n²) limit {TAU_LIMIT}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("scores must be finite")
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(n, k=1)
    sx = sx[iu]
    sy = sy[iu]
    n0 = n * (n - 1) // 2
    n1 = int((sx == 0).sum())
    n2 = int((sy == 0).sum())
    denom = float(np.sqrt(float(n0 - n1) * float(n0 - n2)))
    if denom == 0.0:
        raise ValueError("degenerate input: one of the score lists is completely tied")
    return float((sx * sy).sum() / denom)


# ---------------------------------------------------------------------------
# neighborhood value matrices


def neighborhood_value_matrix(
    bench: TabularBenchmark,
    dataset: str,
    epoch: int,
    indices: np.ndarray,
    radius: int = 1,
) -> np.ndarray:
    """Validation errors over each cell's full radius-ball, reference first.

    Returns shape (len(indices), ball_size); row order follows ``indices``.
    Radius 1 is fully vectorized; larger radii fall back to per-cell
    enumeration (documented as slower).
    """
    spec = bench.spec
    obj = Objective(bench, dataset, epoch, "val")
    f = obj.values()
    indices = np.asarray(indices, dtype=np.int64)
    if radius == 0:
        return f[indices][:, None].copy()
    if radius == 1:
        m = spec.num_ops
        cells = all_cells_array(spec)[indices]
        powers = m ** np.arange(spec.edge_count - 1, -1, -1)
        columns = [f[indices][:, None]]
        for e in range(spec.edge_count):
            start = indices - cells[:, e] * powers[e]
            block = f[start[:, None] + np.arange(m)[None, :] * powers[e]]
            keep = np.arange(m)[None, :] != cells[:, e : e + 1]
            columns.append(block[keep].reshape(len(indices), m - 1))
        return np.concatenate(columns, axis=1)
    ball = neighborhood_size(spec.edge_count, spec.num_ops, radius)
    out = np.empty((len(indices), ball))
    for row, idx in enumerate(indices):
        members = iter_neighbors(index_to_cell(int(idx), spec), radius, spec)
        out[row] = [f[cell_index(c, spec)] for c in members]
    return out


def _criterion_over_rows(kind: AggregationKind, matrix: np.ndarray) -> np.ndarray:
    """Apply one aggregation to every row (reference value in column 0)."""
    return np.array([aggregate(kind, row[0], row) for row in matrix])


# ---------------------------------------------------------------------------
# ranking study


@dataclasses.dataclass(frozen=True)
class TauSummary:
    mean: float
    std: float
    per_repeat: tuple[float, ...]

    def to_json_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "per_repeat": list(self.per_repeat)}


@dataclasses.dataclass(frozen=True)
class RankingStudyReport:
    """Tau against per-dataset test error, for the plain objective and for
    each neighborhood criterion; mean ± population std across repeats."""

    baseline: dict[str, TauSummary]
    criteria: dict[str, dict[str, TauSummary]]
    search_dataset: str
    epoch: int
    radius: int
    sample_size: int
    repeats: int

    def to_json_dict(self) -> dict:
        return {
            "search_dataset": self.search_dataset,
            "epoch": self.epoch,
            "radius": self.radius,
            "sample_size": self.sample_size,
            "repeats": self.repeats,
            "baseline": {ds: s.to_json_dict() for ds, s in self.baseline.items()},
            "criteria": {k: {ds: s.to_json_dict() for ds, s in per.items()} for k, per in self.criteria.items()},
        }


DEFAULT_KINDS = (
    AggregationKind("mean"),
    AggregationKind("median"),
    AggregationKind("max"),
    AggregationKind("var", 1.0),
)


def ranking_study(
    bench: TabularBenchmark,
    search_dataset: str = "search",
    eval_datasets: tuple[str, ...] | None = None,
    kinds: tuple[AggregationKind, ...] = DEFAULT_KINDS,
    epoch: int = -1,
    sample_size: int = 100,
    repeats: int = 10,
    radius: int = 1,
    rng=0,
) -> RankingStudyReport:
    """How well do search-time criteria rank cells by test error?

    Per repeat: sample ``sample_size`` cells uniformly without replacement,
    score them by the validation error at ``epoch`` (baseline) and by each
    aggregation over the full radius-ball of validation errors, then correlate
    every scoring with each eval dataset's test error via kendall_tau.
    """
    if repeats < 1:
        raise ValueError(f"repeats must be >= 1, got {repeats}")
    if not 2 <= sample_size <= bench.num_cells:
        raise ValueError(f"sample_size must lie in [2, {bench.num_cells}], got {sample_size}")
    gen = as_rng(rng)
    if eval_datasets is None:
        eval_datasets = bench.test_datasets
    obj = Objective(bench, search_dataset, epoch, "val")
    truth = {ds: bench.test_errors(ds) for ds in eval_datasets}
    labels = [str(k) for k in kinds]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate criterion kinds: {labels}")

    base_taus = {ds: [] for ds in eval_datasets}
    crit_taus = {lab: {ds: [] for ds in eval_datasets} for lab in labels}
    for _ in range(repeats):
        idx = gen.choice(bench.num_cells, size=sample_size, replace=False)
        matrix = neighborhood_value_matrix(bench, search_dataset, obj.epoch, idx, radius)
        baseline_scores = matrix[:, 0]
        crit_scores = {lab: _criterion_over_rows(kind, matrix) for lab, kind in zip(labels, kinds)}
        for ds in eval_datasets:
            t = truth[ds][idx]
            base_taus[ds].append(kendall_tau(baseline_scores, t))
            for lab in labels:
                crit_taus[lab][ds].append(kendall_tau(crit_scores[lab], t))

    def summarize(vals: list[float]) -> TauSummary:
        arr = np.asarray(vals)
        return TauSummary(float(arr.mean()), float(arr.std()), tuple(float(v) for v in arr))

    return RankingStudyReport(
        baseline={ds: summarize(base_taus[ds]) for ds in eval_datasets},
        criteria={lab: {ds: summarize(crit_taus[lab][ds]) for ds in eval_datasets} for lab in labels},
        search_dataset=search_dataset,
        epoch=int(obj.epoch),
        radius=radius,
        sample_size=sample_size,
        repeats=repeats,
    )


# ---------------------------------------------------------------------------
# flat vs sharp study


@dataclasses.dataclass(frozen=True)
class GroupStats:
    size: int
    mean_val: float
    mean_nbhd_variance: float
    mean_test: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "size": self.size,
            "mean_val": self.mean_val,
            "mean_nbhd_variance": self.mean_nbhd_variance,
            "mean_test": dict(self.mean_test),
        }


@dataclasses.dataclass(frozen=True)
class FlatSharpReport:
    flat: GroupStats
    sharp: GroupStats
    search_dataset: str
    epoch: int
    radius: int
    top_k: int

    def to_json_dict(self) -> dict:
        return {
            "search_dataset": self.search_dataset,
            "epoch": self.epoch,
            "radius": self.radius,
            "top_k": self.top_k,
            "flat": self.flat.to_json_dict(),
            "sharp": self.sharp.to_json_dict(),
        }


def flat_sharp_study(
    bench: TabularBenchmark,
    search_dataset: str = "search",
    eval_datasets: tuple[str, ...] | None = None,
    epoch: int = -1,
    top_k: int = 100,
    radius: int = 1,
) -> FlatSharpReport:
    """Do the best-validation cells with flat neighborhoods generalize better?

    Takes the ``top_k`` cells by validation error at ``epoch`` (ties broken by
    cell index), measures each one's neighborhood variance over its full
    radius-ball, splits at the median variance into equal flat/sharp halves
    (median ties again broken by cell index), and reports group means.
    """
    if top_k < 2 or top_k % 2 != 0:
        raise ValueError(f"top_k must be an even integer >= 2, got {top_k}")
    if top_k > bench.num_cells:
        raise ValueError(f"top_k {top_k} exceeds the space size {bench.num_cells}")
    if eval_datasets is None:
        eval_datasets = bench.test_datasets
    obj = Objective(bench, search_dataset, epoch, "val")
    values = obj.values()
    selected = np.argsort(values, kind="stable")[:top_k]
    matrix = neighborhood_value_matrix(bench, search_dataset, obj.epoch, selected, radius)
    variances = np.array([neighborhood_variance(row) for row in matrix])
    order = np.lexsort((selected, variances))
    half = top_k // 2
    groups = {"flat": selected[order[:half]], "sharp": selected[order[half:]]}
    var_groups = {"flat": variances[order[:half]], "sharp": variances[order[half:]]}

    def stats(label: str) -> GroupStats:
        idx = groups[label]
        return GroupStats(
            size=int(len(idx)),
            mean_val=float(values[idx].mean()),
            mean_nbhd_variance=float(var_groups[label].mean()),
            mean_test={ds: float(bench.test_errors(ds)[idx].mean()) for ds in eval_datasets},
        )

    return FlatSharpReport(
        flat=stats("flat"),
        sharp=stats("sharp"),
        search_dataset=search_dataset,
        epoch=int(obj.epoch),
        radius=radius,
        top_k=top_k,
    )


# ---------------------------------------------------------------------------
# criterion top-k


@dataclasses.dataclass(frozen=True)
class TopKReport:
    criterion: str
    k: int
    search_dataset: str
    epoch: int
    radius: int
    mean_nbhd_variance: float
    mean_test: dict[str, float]
    cells: tuple[DiscreteCell, ...]

    def to_json_dict(self, bench: TabularBenchmark) -> dict:
        return {
            "criterion": self.criterion,
            "k": self.k,
            "search_dataset": self.search_dataset,
            "epoch": self.epoch,
            "radius": self.radius,
            "mean_nbhd_variance": self.mean_nbhd_variance,
            "mean_test": dict(self.mean_test),
            "cells": [render_cell(c, bench.spec) for c in self.cells],
        }


def criterion_top_k(
    bench: TabularBenchmark,
    search_dataset: str = "search",
    kind: AggregationKind | None = None,
    k: int = 100,
    epoch: int = -1,
    radius: int = 1,
    eval_datasets: tuple[str, ...] | None = None,
) -> tuple[list[DiscreteCell], TopKReport]:
    """Exact top-k cells under a criterion, by exhaustive evaluation.

    ``kind=None`` selects by the plain validation error. Ties break by cell
    index (lexicographic in op order). Refuses spaces needing more than
    EXHAUSTIVE_LIMIT objective reads.
    """
    if not 1 <= k <= bench.num_cells:
        raise ValueError(f"k must lie in [1, {bench.num_cells}], got {k}")
    if eval_datasets is None:
        eval_datasets = bench.test_datasets
    spec = bench.spec
    obj = Objective(bench, search_dataset, epoch, "val")
    ball = neighborhood_size(spec.edge_count, spec.num_ops, radius)
    if kind is not None and bench.num_cells * ball > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"exhaustive criterion sweep needs {bench.num_cells * ball} evaluations, above the limit {EXHAUSTIVE_LIMIT}"
        )
    all_idx = np.arange(bench.num_cells)
    if kind is None:
        scores = obj.values()
        order = np.argsort(scores, kind="stable")[:k]
        matrix = neighborhood_value_matrix(bench, search_dataset, obj.epoch, order, radius)
        variances = np.array([neighborhood_variance(row) for row in matrix])
    else:
        matrix = neighborhood_value_matrix(bench, search_dataset, obj.epoch, all_idx, radius)
        scores = _criterion_over_rows(kind, matrix)
        order = np.argsort(scores, kind="stable")[:k]
        variances = np.array([neighborhood_variance(matrix[i]) for i in order])
    cells = [index_to_cell(int(i), spec) for i in order]
    report = TopKReport(
        criterion="baseline" if kind is None else str(kind),
        k=k,
        search_dataset=search_dataset,
        epoch=int(obj.epoch),
        radius=radius,
        mean_nbhd_variance=float(variances.mean()),
        mean_test={ds: float(bench.test_errors(ds)[order].mean()) for ds in eval_datasets},
        cells=tuple(cells),
    )
    return cells, report


# ---------------------------------------------------------------------------
# Hessian, eigenvectors, landscape


def _as_raw_objective(objective):
    """Objectives evaluate through the multilinear surrogate; callables must
    accept a raw (edges, ops) float matrix."""
    if isinstance(objective, Objective):
        return lambda w: multilinear_eval_raw(objective, w)
    if callable(objective):
        return objective
    raise TypeError(f"expected an Objective or a callable on weight matrices, got {type(objective).__name__}")


def hessian_fd(objective, center: RelaxedCell, h: float = 1e-3) -> np.ndarray:
    """Central-finite-difference Hessian on the flattened cell coordinates.

    The surrogate is a polynomial in the raw per-(edge, op) weights, so the
    differences probe those coordinates directly (no renormalization — that
    would change the function being differentiated). The step shrinks once,
    with a warning, if it would drive a coordinate negative; a center with a
    zero coordinate cannot take a centered step and is rejected.
    """
    f = _as_raw_objective(objective)
    if not h > 0.0:
        raise ValueError(f"step must be positive, got {h!r}")
    w0 = center.dists
    edge_count, num_ops = w0.shape
    n = edge_count * num_ops
    least = float(w0.min())
    if h > least:
        if least <= 0.0:
            raise ValueError("center has a zero coordinate; a centered step cannot stay feasible")
        h = least / 2.0
        warnings.warn(f"hessian_fd step auto-shrunk once to {h} to keep probes feasible", stacklevel=2)

    flat = w0.reshape(-1)

    def at(delta: np.ndarray) -> float:
        return float(f((flat + delta).reshape(edge_count, num_ops)))

    hess = np.empty((n, n))
    base = at(np.zeros(n))
    eye = np.eye(n)
    for i in range(n):
        hess[i, i] = (at(h * eye[i]) - 2.0 * base + at(-h * eye[i])) / (h * h)
        for j in range(i + 1, n):
            pp = at(h * eye[i] + h * eye[j])
            pm = at(h * eye[i] - h * eye[j])
            mp = at(-h * eye[i] + h * eye[j])
            mm = at(-h * eye[i] - h * eye[j])
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
    return (hess + hess.T) / 2.0


def top2_eigvecs(hessian: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100):
    """Two largest-eigenvalue eigenpairs of a symmetric matrix, via cyclic
    Jacobi rotations run until the off-diagonal norm falls below ``tol``.

    Returns (v0, v1, eig0, eig1) with eig0 >= eig1; each vector has unit
    Euclidean norm and its largest-magnitude component made positive.
    """
    a = np.asarray(hessian, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
        raise ValueError(f"expected a square matrix of size >= 2, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10):
        raise ValueError("matrix is not symmetric")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    vecs = np.eye(n)

    def offdiag_norm() -> float:
        return float(np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0))

    sweeps = 0
    while offdiag_norm() > tol:
        if sweeps >= max_sweeps:
            raise RuntimeError(f"Jacobi sweep did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                tau = diff / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = a[q, p] = 0.0
                rows = np.ones(n, dtype=bool)
                rows[[p, q]] = False
                arp = a[rows, p].copy()
                arq = a[rows, q].copy()
                a[rows, p] = c * arp - s * arq
                a[p, rows] = a[rows, p]
                a[rows, q] = s * arp + c * arq
                a[q, rows] = a[rows, q]
                vp = vecs[:, p].copy()
                vecs[:, p] = c * vp - s * vecs[:, q]
                vecs[:, q] = s * vp + c * vecs[:, q]

    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals, kind="stable")[:2]
    out = []
    for col in order:
        v = vecs[:, col].copy()
        v /= np.linalg.norm(v)
        lead = int(np.argmax(np.abs(v)))
        if v[lead] < 0.0:
            v = -v
        out.append(v)
    return out[0], out[1], float(eigvals[order[0]]), float(eigvals[order[1]])


@dataclasses.dataclass(frozen=True)
class LandscapeGrid:
    """Surrogate values over a 2-D slice spanned by the top Hessian directions.

    ``values[i, j]`` is the objective at coefficients (axis0[i], axis1[j]);
    the center point (0, 0) carries the objective at the unperturbed cell
    exactly.
    """

    axis0: np.ndarray
    axis1: np.ndarray
    values: np.ndarray
    direction0: np.ndarray
    direction1: np.ndarray
    center: RelaxedCell
    eigenvalues: tuple[float, float] | None = None

    def __post_init__(self):
        if self.values.shape != (len(self.axis0), len(self.axis1)):
            raise ValueError(f"grid shape {self.values.shape} does not match axes {(len(self.axis0), len(self.axis1))}")

    def to_json_dict(self) -> dict:
        return {
            "axis0": [float(x) for x in self.axis0],
            "axis1": [float(x) for x in self.axis1],
            "values": [[float(v) for v in row] for row in self.values],
            "direction0": [float(x) for x in self.direction0],
            "direction1": [float(x) for x in self.direction1],
            "eigenvalues": None if self.eigenvalues is None else [self.eigenvalues[0], self.eigenvalues[1]],
            "center": [[float(x) for x in row] for row in self.center.dists],
        }

    def to_csv_text(self) -> str:
        """Header row of axis-1 coefficients; one row per axis-0 coefficient."""
        lines = ["coef0\\coef1," + ",".join(repr(float(x)) for x in self.axis1)]
        for i, lam0 in enumerate(self.axis0):
            lines.append(repr(float(lam0)) + "," + ",".join(repr(float(v)) for v in self.values[i]))
        return "\n".join(lines) + "\n"


def landscape_grid(
    objective,
    center: RelaxedCell,
    grid_n: int = 41,
    coef_range: tuple[float, float] = (-1.0, 1.0),
    h: float = 1e-3,
    directions: tuple[np.ndarray, np.ndarray] | None = None,
) -> LandscapeGrid:
    """Evaluate the objective across a grid of two-direction perturbations.

    Directions default to the two largest-eigenvalue Hessian eigenvectors at
    the center (finite differences + Jacobi). Each grid point adds
    coef0·v0 + coef1·v1 to the flattened cell, clamps per-coordinate to stay
    nonnegative, and renormalizes each edge; an edge whose mass would vanish
    falls back to its unperturbed row. The exact center point bypasses the
    perturbation path entirely, so its value matches the objective bit-for-bit.
    """
    f = _as_raw_objective(objective)
    if grid_n < 3 or grid_n % 2 == 0:
        raise ValueError(f"grid_n must be an odd integer >= 3, got {grid_n}")
    lo, hi = float(coef_range[0]), float(coef_range[1])
    if not lo < hi:
        raise ValueError(f"coefficient range must satisfy lo < hi, got {coef_range!r}")
    w0 = center.dists
    if directions is None:
        hess = hessian_fd(objective, center, h=h)
        v0, v1, eig0, eig1 = top2_eigvecs(hess)
        eigenvalues = (eig0, eig1)
    else:
        v0 = np.asarray(directions[0], dtype=np.float64).reshape(-1)
        v1 = np.asarray(directions[1], dtype=np.float64).reshape(-1)
        eigenvalues = None
    if v0.shape != (w0.size,) or v1.shape != (w0.size,):
        raise ValueError(f"directions must have {w0.size} components")

    axis = np.linspace(lo, hi, grid_n)
    if lo == -hi:
        axis[grid_n // 2] = 0.0  # force the exact center for symmetric ranges
    values = np.empty((grid_n, grid_n))
    for i, c0 in enumerate(axis):
        for j, c1 in enumerate(axis):
            if c0 == 0.0 and c1 == 0.0:
                values[i, j] = float(f(w0))
                continue
            shifted = w0 + (c0 * v0 + c1 * v1).reshape(w0.shape)
            shifted = np.maximum(shifted, 0.0)
            sums = shifted.sum(axis=1, keepdims=True)
            dead = sums[:, 0] <= 0.0
            if dead.any():
                shifted[dead] = w0[dead]
                sums = shifted.sum(axis=1, keepdims=True)
            values[i, j] = float(f(shifted / sums))
    return LandscapeGrid(
        axis0=axis.copy(),
        axis1=axis.copy(),
        values=values,
        direction0=v0.copy(),
        direction1=v1.copy(),
        center=center,
        eigenvalues=eigenvalues,
    )

"""Tabular benchmarks: storage, JSONL persistence, synthetic generation, and
the multilinear relaxation of a tabular objective.

A benchmark holds, for *every* cell of a space, per-epoch validation errors
and a final test error on named datasets (all percentages in [0, 100]).
Completeness is mandatory: searches must never hit a missing cell mid-run.

File format (UTF-8 JSON lines, gzip accepted by ``.gz`` extension)::

    {"spec": {"edges": 2, "ops": ["a","b"], ...}, "epochs": 3, "datasets": ["d0"]}
    {"cell": "a|b", "val_err": {"d0": [30.0, 20.0, 10.0]}, "test_err": {"d0": 11.5}}
    ...

The relaxed objective is the multilinear extension: the exact expectation of
the table under the per-edge product distribution of a relaxed cell. It is
exact at one-hot points, linear in each edge's distribution, and has the
closed-form gradient ∂f̃/∂w[e,k] = E[f | edge e forced to op k].
"""

from __future__ import annotations

import dataclasses
import gzip
import json
import math
import os
from typing import Literal

import numpy as np

from .space import (
    DiscreteCell,
    RelaxedCell,
    SpaceSpec,
    all_cells_array,
    cell_index,
    render_cell,
    parse_cell,
    validate_cell,
)
from ._util import as_rng

#: exact multilinear evaluation refuses spaces larger than this
EXACT_EVAL_LIMIT = 10**6


class BenchmarkFormatError(ValueError):
    """Raised for malformed, incomplete, or inconsistent benchmark files."""


@dataclasses.dataclass(frozen=True)
class ArchRecord:
    """One cell's metrics: per-dataset validation curves and final test errors."""

    val_err: dict[str, tuple[float, ...]]
    test_err: dict[str, float]


def _check_errors(name: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: errors must be finite")
    if (arr < 0.0).any() or (arr > 100.0).any():
        raise ValueError(f"{name}: errors must lie in [0, 100]")


class TabularBenchmark:
    """Complete per-cell metric tables over a space.

    ``val`` maps dataset → (num_cells, epochs) validation-error array and
    ``test`` maps dataset → (num_cells,) final test errors; rows are ordered
    by ``space.cell_index``.
    """

    def __init__(
        self,
        spec: SpaceSpec,
        epochs: int,
        val: dict[str, np.ndarray],
        test: dict[str, np.ndarray],
        datasets: tuple[str, ...] | None = None,
    ):
        if not isinstance(epochs, int) or epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {epochs!r}")
        if not val and not test:
            raise ValueError("benchmark needs at least one dataset")
        n = spec.num_cells
        self.spec = spec
        self.epochs = epochs
        self._val: dict[str, np.ndarray] = {}
        self._test: dict[str, np.ndarray] = {}
        for ds, arr in val.items():
            a = np.array(arr, dtype=np.float64, copy=True)
            if a.shape != (n, epochs):
                raise ValueError(f"val[{ds!r}]: expected shape {(n, epochs)}, got {a.shape}")
            _check_errors(f"val[{ds!r}]", a)
            a.setflags(write=False)
            self._val[str(ds)] = a
        for ds, arr in test.items():
            a = np.array(arr, dtype=np.float64, copy=True)
            if a.shape != (n,):
                raise ValueError(f"test[{ds!r}]: expected shape {(n,)}, got {a.shape}")
            _check_errors(f"test[{ds!r}]", a)
            a.setflags(write=False)
            self._test[str(ds)] = a
        if datasets is None:
            seen = list(self._val)
            seen += [ds for ds in self._test if ds not in self._val]
            datasets = tuple(seen)
        union = set(self._val) | set(self._test)
        if set(datasets) != union or len(set(datasets)) != len(datasets):
            raise ValueError(f"datasets {datasets!r} must name exactly the stored datasets {sorted(union)}")
        self.datasets = tuple(str(d) for d in datasets)

    @property
    def num_cells(self) -> int:
        return self.spec.num_cells

    @property
    def val_datasets(self) -> tuple[str, ...]:
        return tuple(ds for ds in self.datasets if ds in self._val)

    @property
    def test_datasets(self) -> tuple[str, ...]:
        return tuple(ds for ds in self.datasets if ds in self._test)

    def val_errors(self, dataset: str) -> np.ndarray:
        """(num_cells, epochs) validation errors; read-only view."""
        if dataset not in self._val:
            raise ValueError(f"no validation data for dataset {dataset!r}; have {list(self._val)}")
        return self._val[dataset]

    def test_errors(self, dataset: str) -> np.ndarray:
        """(num_cells,) final test errors; read-only view."""
        if dataset not in self._test:
            raise ValueError(f"no test data for dataset {dataset!r}; have {list(self._test)}")
        return self._test[dataset]

    def record(self, cell: DiscreteCell) -> ArchRecord:
        validate_cell(cell, self.spec)
        i = cell_index(cell, self.spec)
        return ArchRecord(
            val_err={ds: tuple(float(x) for x in self._val[ds][i]) for ds in self.val_datasets},
            test_err={ds: float(self._test[ds][i]) for ds in self.test_datasets},
        )

    def __eq__(self, other):
        if not isinstance(other, TabularBenchmark):
            return NotImplemented
        return (
            self.spec == other.spec
            and self.epochs == other.epochs
            and self.datasets == other.datasets
            and set(self._val) == set(other._val)
            and set(self._test) == set(other._test)
            and all(np.array_equal(self._val[ds], other._val[ds]) for ds in self._val)
            and all(np.array_equal(self._test[ds], other._test[ds]) for ds in self._test)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclasses.dataclass(frozen=True, eq=False)
class Objective:
    """A scalar error selector over a benchmark: dataset + epoch + field.

    ``field="val"`` reads the validation error at ``epoch`` (negative epochs
    count from the end, Python style); ``field="test"`` reads the final test
    error and requires ``epoch=None``.
    """

    bench: TabularBenchmark
    dataset: str
    epoch: int | None = None
    field: Literal["val", "test"] = "val"

    def __post_init__(self):
        if self.field not in ("val", "test"):
            raise ValueError(f"field must be 'val' or 'test', got {self.field!r}")
        if self.field == "val":
            if self.dataset not in self.bench.val_datasets:
                raise ValueError(f"no validation data for dataset {self.dataset!r}; have {list(self.bench.val_datasets)}")
            if self.epoch is None:
                raise ValueError("validation objectives need an epoch")
            epoch = int(self.epoch)
            if epoch < 0:
                epoch += self.bench.epochs
            if not 0 <= epoch < self.bench.epochs:
                raise ValueError(f"epoch {self.epoch} out of range for {self.bench.epochs} epochs")
            object.__setattr__(self, "epoch", epoch)
        else:
            if self.dataset not in self.bench.test_datasets:
                raise ValueError(f"no test data for dataset {self.dataset!r}; have {list(self.bench.test_datasets)}")
            if self.epoch is not None:
                raise ValueError("test objectives are per-dataset scalars; pass epoch=None")

    def values(self) -> np.ndarray:
        """All cells' objective values, ordered by cell_index; read-only view."""
        if self.field == "val":
            return self.bench.val_errors(self.dataset)[:, self.epoch]
        return self.bench.test_errors(self.dataset)

    def __call__(self, cell: DiscreteCell) -> float:
        return query(self, cell)


def query(obj: Objective, cell: DiscreteCell) -> float:
    """The objective's scalar error for one cell; pure table lookup."""
    validate_cell(cell, obj.bench.spec)
    return float(obj.values()[cell_index(cell, obj.bench.spec)])


# ---------------------------------------------------------------------------
# persistence


def write_benchmark(bench: TabularBenchmark, path) -> None:
    """Write the JSONL format documented in the module docstring.

    Deterministic bytes: compact separators, cell order by cell_index, and a
    zeroed gzip timestamp for ``.gz`` paths.
    """
    spec = bench.spec
    header = {"spec": spec.to_dict(), "epochs": bench.epochs, "datasets": list(bench.datasets)}
    lines = [json.dumps(header, separators=(",", ":"))]
    cells = all_cells_array(spec)
    val = {ds: bench.val_errors(ds) for ds in bench.val_datasets}
    test = {ds: bench.test_errors(ds) for ds in bench.test_datasets}
    for i in range(bench.num_cells):
        name = "|".join(spec.op_names[o] for o in cells[i])
        rec = {
            "cell": name,
            "val_err": {ds: [float(x) for x in val[ds][i]] for ds in val},
            "test_err": {ds: float(test[ds][i]) for ds in test},
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    if str(path).endswith(".gz"):
        with open(path, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(path, "wb") as fh:
            fh.write(payload)


def _parse_record(line_no: int, raw: dict, spec: SpaceSpec, epochs: int, path) -> tuple[int, dict, dict]:
    where = f"{path}: line {line_no}"
    for key in ("cell", "val_err", "test_err"):
        if key not in raw:
            raise BenchmarkFormatError(f"{where}: record missing key {key!r}")
    try:
        cell = parse_cell(str(raw["cell"]), spec)
    except ValueError as e:
        raise BenchmarkFormatError(f"{where}: {e}") from None
    if not isinstance(raw["val_err"], dict) or not isinstance(raw["test_err"], dict):
        raise BenchmarkFormatError(f"{where}: val_err and test_err must be objects keyed by dataset")
    val = {}
    for ds, curve in raw["val_err"].items():
        arr = np.asarray(curve, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != epochs:
            raise BenchmarkFormatError(f"{where}: val_err[{ds!r}] must list {epochs} epochs, got {arr.shape}")
        val[str(ds)] = arr
    test = {}
    for ds, v in raw["test_err"].items():
        try:
            test[str(ds)] = float(v)
        except (TypeError, ValueError):
            raise BenchmarkFormatError(f"{where}: test_err[{ds!r}] must be a number, got {v!r}") from None
    try:
        for ds, arr in val.items():
            _check_errors(f"val_err[{ds!r}]", arr)
        for ds, v in test.items():
            _check_errors(f"test_err[{ds!r}]", np.asarray([v]))
    except ValueError as e:
        raise BenchmarkFormatError(f"{where}: {e}") from None
    return cell_index(cell, spec), val, test


def load_benchmark(path, spec: SpaceSpec | None = None) -> TabularBenchmark:
    """Load and validate a benchmark file; must cover every cell exactly once.

    When ``spec`` is given, the file's header must describe the same space.
    Unknown header/record keys are tolerated for forward compatibility.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    if not os.path.exists(path):
        raise BenchmarkFormatError(f"{path}: no such file")
    with opener(path, "rt", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise BenchmarkFormatError(f"{path}: empty file, expected a header line")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise BenchmarkFormatError(f"{path}: line 1: invalid JSON ({e.msg})") from None
        for key in ("spec", "epochs", "datasets"):
            if key not in header:
                raise BenchmarkFormatError(f"{path}: line 1: header missing key {key!r}")
        try:
            file_spec = SpaceSpec.from_dict(header["spec"])
        except (TypeError, ValueError) as e:
            raise BenchmarkFormatError(f"{path}: line 1: bad space spec ({e})") from None
        if spec is not None and file_spec != spec:
            raise BenchmarkFormatError(f"{path}: header space {file_spec.to_dict()} does not match the expected space {spec.to_dict()}")
        epochs = header["epochs"]
        if not isinstance(epochs, int) or epochs < 1:
            raise BenchmarkFormatError(f"{path}: line 1: epochs must be a positive integer, got {epochs!r}")
        datasets = header["datasets"]
        if not isinstance(datasets, list) or not datasets:
            raise BenchmarkFormatError(f"{path}: line 1: datasets must be a non-empty list")
        datasets = tuple(str(d) for d in datasets)

        n = file_spec.num_cells
        seen = np.zeros(n, dtype=bool)
        val_arrays: dict[str, np.ndarray] | None = None
        test_arrays: dict[str, np.ndarray] | None = None
        val_keys: tuple[str, ...] | None = None
        test_keys: tuple[str, ...] | None = None
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise BenchmarkFormatError(f"{path}: line {line_no}: invalid JSON ({e.msg})") from None
            if not isinstance(raw, dict):
                raise BenchmarkFormatError(f"{path}: line {line_no}: expected a JSON object")
            idx, val, test = _parse_record(line_no, raw, file_spec, epochs, path)
            if seen[idx]:
                raise BenchmarkFormatError(f"{path}: line {line_no}: duplicate cell {raw['cell']!r}")
            seen[idx] = True
            if val_arrays is None:
                val_keys = tuple(val)
                test_keys = tuple(test)
                val_arrays = {ds: np.empty((n, epochs)) for ds in val_keys}
                test_arrays = {ds: np.empty(n) for ds in test_keys}
            else:
                if tuple(val) != val_keys:
                    raise BenchmarkFormatError(f"{path}: line {line_no}: val_err datasets {tuple(val)} differ from the first record's {val_keys}")
                if tuple(test) != test_keys:
                    raise BenchmarkFormatError(f"{path}: line {line_no}: test_err datasets {tuple(test)} differ from the first record's {test_keys}")
            for ds in val:
                val_arrays[ds][idx] = val[ds]
            for ds in test:
                test_arrays[ds][idx] = test[ds]

    if not seen.all():
        missing = np.nonzero(~seen)[0]
        names = []
        for i in missing[:10]:
            ops = []
            rem = int(i)
            for _ in range(file_spec.edge_count):
                rem, o = divmod(rem, file_spec.num_ops)
                ops.append(o)
            names.append("|".join(file_spec.op_names[o] for o in reversed(ops)))
        raise BenchmarkFormatError(
            f"{path}: incomplete coverage, {len(missing)} of {n} cells missing; first {len(names)}: {', '.join(names)}"
        )
    union = set(val_arrays or ()) | set(test_arrays or ())
    if union != set(datasets):
        raise BenchmarkFormatError(f"{path}: header datasets {sorted(datasets)} do not match record datasets {sorted(union)}")
    try:
        return TabularBenchmark(file_spec, epochs, val_arrays or {}, test_arrays or {}, datasets=datasets)
    except ValueError as e:
        raise BenchmarkFormatError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# synthetic generation


def gen_synthetic(
    spec: SpaceSpec,
    seed: int,
    epochs: int = 10,
    spike_fraction: float = 0.05,
    spike_height: float = 3.0,
    generalization_gap: float = 3.0,
    noise_scale: float = 0.5,
) -> TabularBenchmark:
    """Deterministic synthetic benchmark where flat neighborhoods generalize.

    Construction:

    1. base landscape ``b(c)`` = mean over edges of a per-(edge, op) quality
       score drawn once uniformly from [0, 50] — additive structure, so the
       landscape is smooth in edge changes;
    2. a spike set of ``ceil(spike_fraction · num_cells)`` cells drawn
       uniformly without replacement; spiked cells score ``b − spike_height``
       at search time (artificially good, and sharp, because their neighbors
       keep their base values) but ``b + generalization_gap`` at test time;
       every other cell tests at ``b + η``, η uniform in ±noise_scale, with
       independent noise per dataset;
    3. per-epoch validation errors anneal linearly from ``b + 20`` at epoch 0
       to the final value at the last epoch;
    4. everything clamped to [0, 100].

    Emits datasets "search" and "transfer": identical validation curves (the
    search signal), independently-noised test errors, shared spike structure.
    """
    if not isinstance(epochs, int) or epochs < 1:
        raise ValueError(f"epochs must be a positive integer, got {epochs!r}")
    if not 0.0 <= spike_fraction < 1.0:
        raise ValueError(f"spike_fraction must lie in [0, 1), got {spike_fraction!r}")
    for label, v in (("spike_height", spike_height), ("generalization_gap", generalization_gap), ("noise_scale", noise_scale)):
        if not math.isfinite(v) or v < 0.0:
            raise ValueError(f"{label} must be finite and nonnegative, got {v!r}")

    rng = as_rng(int(seed))
    n = spec.num_cells
    cells = all_cells_array(spec)
    quality = rng.uniform(0.0, 50.0, size=(spec.edge_count, spec.num_ops))
    base = quality[np.arange(spec.edge_count)[None, :], cells].mean(axis=1)

    n_spiked = math.ceil(spike_fraction * n)
    spiked = np.zeros(n, dtype=bool)
    if n_spiked:
        spiked[rng.choice(n, size=n_spiked, replace=False)] = True

    val_final = np.where(spiked, base - spike_height, base)
    val_curve = np.linspace(base + 20.0, val_final, num=epochs, axis=1)
    val_curve = np.clip(val_curve, 0.0, 100.0)

    test = {}
    for ds in ("search", "transfer"):
        eta = rng.uniform(-noise_scale, noise_scale, size=n)
        test[ds] = np.clip(np.where(spiked, base + generalization_gap, base + eta), 0.0, 100.0)

    val = {"search": val_curve, "transfer": val_curve}
    return TabularBenchmark(spec, epochs, val, test, datasets=("search", "transfer"))


# ---------------------------------------------------------------------------
# multilinear relaxation


def _weights_matrix(cell_or_weights) -> np.ndarray:
    if isinstance(cell_or_weights, RelaxedCell):
        return cell_or_weights.dists
    arr = np.asarray(cell_or_weights, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected an (edges, ops) weight matrix, got shape {arr.shape}")
    return arr


def _check_exact_feasible(obj: Objective) -> None:
    if obj.bench.num_cells > EXACT_EVAL_LIMIT:
        raise ValueError(
            f"space has {obj.bench.num_cells} cells, above the exact-mode limit {EXACT_EVAL_LIMIT}; use mode='mc'"
        )


def _check_weights_shape(obj: Objective, weights: np.ndarray) -> None:
    want = (obj.bench.spec.edge_count, obj.bench.spec.num_ops)
    if weights.shape != want:
        raise ValueError(f"weight matrix shape {weights.shape} does not match the space {want}")


def multilinear_eval_raw(obj: Objective, weights) -> float:
    """Σ_c f(c)·Π_e weights[e, c_e] for an arbitrary (edges, ops) real matrix.

    This is the bare multilinear polynomial — rows need not be distributions.
    """
    w = _weights_matrix(weights)
    _check_weights_shape(obj, w)
    _check_exact_feasible(obj)
    spec = obj.bench.spec
    cells = all_cells_array(spec)
    per_edge = w[np.arange(spec.edge_count)[None, :], cells]
    return float(obj.values() @ per_edge.prod(axis=1))


def multilinear_eval(
    obj: Objective,
    cell: RelaxedCell,
    mode: Literal["exact", "mc"] = "exact",
    samples: int | None = None,
    rng=None,
) -> float:
    """Expected objective under the product distribution of a relaxed cell.

    ``mode="exact"`` enumerates the space (refused above EXACT_EVAL_LIMIT
    cells); ``mode="mc"`` draws ``samples`` cells from the product distribution
    and averages — unbiased, with standard error σ/√samples.
    """
    if not isinstance(cell, RelaxedCell):
        raise TypeError(f"expected a RelaxedCell, got {type(cell).__name__}")
    if mode == "exact":
        return multilinear_eval_raw(obj, cell)
    if mode != "mc":
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    if samples is None or int(samples) < 1:
        raise ValueError("mode='mc' needs a positive sample count")
    if rng is None:
        raise ValueError("mode='mc' needs an rng (generator or seed)")
    _check_weights_shape(obj, cell.dists)
    gen = as_rng(rng)
    spec = obj.bench.spec
    cum = np.cumsum(cell.dists, axis=1)
    u = gen.random((int(samples), spec.edge_count))
    ops = np.empty((int(samples), spec.edge_count), dtype=np.int64)
    for e in range(spec.edge_count):
        ops[:, e] = np.searchsorted(cum[e], u[:, e], side="right")
    np.clip(ops, 0, spec.num_ops - 1, out=ops)
    powers = spec.num_ops ** np.arange(spec.edge_count - 1, -1, -1)
    idx = ops @ powers
    return float(obj.values()[idx].mean())


def multilinear_grad(obj: Objective, cell) -> np.ndarray:
    """Analytic gradient of the multilinear extension, shape (edges, ops).

    Entry (e, k) is the conditional expectation of the table with edge ``e``
    forced to op ``k`` and all other edges under their current weights.
    Accepts a RelaxedCell or a raw (edges, ops) matrix.
    """
    w = _weights_matrix(cell)
    _check_weights_shape(obj, w)
    _check_exact_feasible(obj)
    spec = obj.bench.spec
    cells = all_cells_array(spec)
    f = obj.values()
    per_edge = w[np.arange(spec.edge_count)[None, :], cells]  # (n, E)
    left = np.ones_like(per_edge)
    if spec.edge_count > 1:
        left[:, 1:] = np.cumprod(per_edge[:, :-1], axis=1)
        rev = np.cumprod(per_edge[:, ::-1], axis=1)[:, ::-1]
        right = np.ones_like(per_edge)
        right[:, :-1] = rev[:, 1:]
    else:
        right = np.ones_like(per_edge)
    partial = left * right  # product over all edges except e
    grad = np.empty((spec.edge_count, spec.num_ops))
    for e in range(spec.edge_count):
        grad[e] = np.bincount(cells[:, e], weights=f * partial[:, e], minlength=spec.num_ops)
    return grad

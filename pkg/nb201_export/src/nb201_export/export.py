"""Conversion proper: one benchmark JSONL file from one result archive.

Output layout (the tabular-benchmark format the ``nbrnas`` loader reads):

* line 1 header: ``{"spec": {...}, "epochs": N, "datasets": [...]}`` plus
  two informational keys — ``epoch_map``, mapping each exported
  training-epoch label to its column index in the validation curves, and
  ``policy``, how multiple training seeds were combined;
* one record per architecture, ``{"cell": "op|...|op", "val_err": {...},
  "test_err": {...}}``: the cifar10-valid error curve at the selected
  epochs, and final-epoch test error on cifar10, cifar100 and
  ImageNet16-120, every value ``100 - top-1 accuracy`` averaged over
  training seeds;
* compact separators, records in archive index order, and a zeroed gzip
  timestamp for ``.gz`` paths, so equal inputs give byte-equal outputs.
"""

from __future__ import annotations

import dataclasses
import gzip
import json

import numpy as np

from .archstr import EDGE_COUNT, OP_NAMES, parse_arch_string
from .upstream import (
    TEST_SPLITS,
    UpstreamFormatError,
    VAL_DATASET,
    available_epochs,
    final_test_errors,
    load_archive,
    run_record,
    val_error_curve,
)

SPACE = {"edges": EDGE_COUNT, "ops": list(OP_NAMES), "zero_op": 0, "skip_op": 1}
EXPECTED_ARCHS = len(OP_NAMES) ** EDGE_COUNT  # one record per cell: 15625
DATASETS = (VAL_DATASET, *TEST_SPLITS)
SEED_POLICY = "mean over training seeds"


@dataclasses.dataclass(frozen=True)
class ExportManifest:
    """What to convert: archive path, output path, and epoch selection.

    ``epochs`` lists training-epoch labels (the archive's 0-based epoch
    indices) to keep as validation columns, or ``None`` for every label
    the archive provides.  Labels are exported in ascending order either
    way; the header's ``epoch_map`` records label -> column.
    """

    upstream: str
    out: str
    epochs: tuple[int, ...] | None = None


def _arch_info(infos: dict, index: int, path) -> dict:
    for key in (index, str(index)):
        if key in infos:
            return infos[key]
    raise UpstreamFormatError(f"{path}: archive has no results for architecture index {index}")


def _check_errors(index: int, arch: str, curve: np.ndarray, test: dict[str, float]) -> None:
    values = np.append(curve, list(test.values()))
    if not np.isfinite(values).all() or values.min() < 0.0 or values.max() > 100.0:
        raise UpstreamFormatError(f"architecture {index} ({arch!r}): error rates fall outside [0, 100]")


def export(manifest: ExportManifest) -> tuple[int, ...]:
    """Write the benchmark file and return the exported epoch labels."""
    data = load_archive(manifest.upstream)
    metas = data["meta_archs"]
    infos = data["arch2infos"]
    if len(metas) != EXPECTED_ARCHS:
        raise UpstreamFormatError(f"{manifest.upstream}: expected {EXPECTED_ARCHS} architectures, found {len(metas)}")

    # Resolve epoch labels against architecture 0; every other architecture
    # must then provide the same columns.
    have = available_epochs(run_record(_arch_info(infos, 0, manifest.upstream)))
    if manifest.epochs is None:
        epochs = tuple(have)
    else:
        epochs = tuple(sorted(set(manifest.epochs)))
        missing = sorted(set(epochs) - set(have))
        if missing:
            raise UpstreamFormatError(
                f"{manifest.upstream}: epoch labels {missing} not recorded; archive has 0..{have[-1]}"
            )

    header = {
        "spec": dict(SPACE),
        "epochs": len(epochs),
        "datasets": list(DATASETS),
        "epoch_map": {str(e): column for column, e in enumerate(epochs)},
        "policy": SEED_POLICY,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    seen: set[tuple[int, ...]] = set()
    for index in range(EXPECTED_ARCHS):
        arch = metas[index]
        try:
            ops = parse_arch_string(arch)
        except ValueError as e:
            raise UpstreamFormatError(f"{manifest.upstream}: architecture {index}: {e}") from None
        if ops in seen:
            raise UpstreamFormatError(f"{manifest.upstream}: duplicate architecture {arch!r} at index {index}")
        seen.add(ops)
        entry = run_record(_arch_info(infos, index, manifest.upstream))
        curve = val_error_curve(entry, epochs)
        test = final_test_errors(entry)
        _check_errors(index, arch, curve, test)
        rec = {
            "cell": "|".join(OP_NAMES[o] for o in ops),
            "val_err": {VAL_DATASET: [float(x) for x in curve]},
            "test_err": {ds: float(test[ds]) for ds in TEST_SPLITS},
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    payload = ("\n".join(lines) + "\n").encode("utf-8")
    if str(manifest.out).endswith(".gz"):
        with open(manifest.out, "wb") as fh:
            with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        with open(manifest.out, "wb") as fh:
            fh.write(payload)
    return epochs

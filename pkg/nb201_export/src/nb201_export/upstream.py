"""Reading NAS-Bench-201 result archives (torch ``.pth`` pickles).

The archive is a plain dict::

    {"meta_archs":  [arch_string, ...],              # index -> architecture
     "arch2infos":  {index: {"less": ..., "full": ...}},
     "evaluated_indexes": ...}

Each ``less``/``full`` entry describes one training setup (12 and 200
epochs respectively; ``full`` is preferred when present) as::

    {"all_results":  {(dataset, seed): run, ...},
     "dataset_seed": {dataset: [seed, ...]}, ...}

and each run record stores top-1 accuracies keyed ``"{split}@{epoch}"``
with 0-based epoch indices, plus ``"epochs"``, the number of epochs the
run trained for.  This module extracts error rates (``100 - accuracy``)
averaged over a dataset's training seeds: per-epoch validation error from
the ``cifar10-valid`` split and final-epoch test error for each of the
three test datasets.
"""

from __future__ import annotations

import pickle
import zipfile
from collections.abc import Sequence

import numpy as np
import torch

VAL_DATASET = "cifar10-valid"
VAL_SPLIT = "x-valid"
TEST_SPLITS = {"cifar10": "ori-test", "cifar100": "x-test", "ImageNet16-120": "x-test"}


class UpstreamFormatError(ValueError):
    """The archive exists but does not have the expected structure."""


def load_archive(path) -> dict:
    """Load and structurally check a result archive."""
    try:
        data = torch.load(path, map_location="cpu", weights_only=False)
    except (pickle.UnpicklingError, EOFError, zipfile.BadZipFile, RuntimeError) as e:
        raise UpstreamFormatError(f"{path}: not a readable torch archive ({e})") from None
    if not isinstance(data, dict):
        raise UpstreamFormatError(f"{path}: expected a dict archive, got {type(data).__name__}")
    for key in ("meta_archs", "arch2infos"):
        if key not in data:
            raise UpstreamFormatError(f"{path}: archive missing key {key!r}")
    return data


def run_record(info: dict) -> dict:
    """Pick an architecture's result entry, preferring the long training setup."""
    for setup in ("full", "less"):
        entry = info.get(setup)
        if entry is not None:
            return entry
    raise UpstreamFormatError("architecture entry has neither 'full' nor 'less' results")


def _seed_runs(entry: dict, dataset: str) -> list[dict]:
    seeds = entry.get("dataset_seed", {}).get(dataset)
    if not seeds:
        raise UpstreamFormatError(f"no runs recorded for dataset {dataset!r}")
    runs = []
    for seed in seeds:
        try:
            runs.append(entry["all_results"][(dataset, seed)])
        except KeyError:
            raise UpstreamFormatError(f"missing run record for {(dataset, seed)!r}") from None
    return runs


def _accuracy(run: dict, split: str, epoch: int) -> float:
    key = f"{split}@{epoch}"
    accs = run.get("eval_acc1es", {})
    if key not in accs:
        raise UpstreamFormatError(f"run (seed {run.get('seed')}) records no accuracy {key!r}")
    return float(accs[key])


def _final_epoch(run: dict) -> int:
    epochs = run.get("epochs")
    if not isinstance(epochs, int) or epochs < 1:
        raise UpstreamFormatError(f"run (seed {run.get('seed')}) has a bad 'epochs' field: {epochs!r}")
    return epochs - 1


def available_epochs(entry: dict) -> list[int]:
    """Epoch labels for which every validation seed recorded an accuracy."""
    prefix = f"{VAL_SPLIT}@"
    common: set[int] | None = None
    for run in _seed_runs(entry, VAL_DATASET):
        recorded = {int(key[len(prefix):]) for key in run.get("eval_acc1es", {}) if key.startswith(prefix)}
        common = recorded if common is None else common & recorded
    if not common:
        raise UpstreamFormatError(f"no {VAL_SPLIT} accuracies recorded for {VAL_DATASET!r}")
    return sorted(common)


def val_error_curve(entry: dict, epochs: Sequence[int]) -> np.ndarray:
    """Seed-mean validation error at each requested epoch label."""
    runs = _seed_runs(entry, VAL_DATASET)
    curves = np.array([[100.0 - _accuracy(run, VAL_SPLIT, e) for e in epochs] for run in runs])
    return curves.mean(axis=0)


def final_test_errors(entry: dict) -> dict[str, float]:
    """Seed-mean final-epoch test error per test dataset."""
    out = {}
    for dataset, split in TEST_SPLITS.items():
        runs = _seed_runs(entry, dataset)
        out[dataset] = float(np.mean([100.0 - _accuracy(run, split, _final_epoch(run)) for run in runs]))
    return out

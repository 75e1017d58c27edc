"""Convert NAS-Bench-201 result archives into tabular-benchmark JSONL files.

The archive's per-seed top-1 accuracies become seed-averaged error rates:
per-epoch validation error from the cifar10-valid split and final-epoch
test error on cifar10, cifar100 and ImageNet16-120, one record per
architecture of the 6-edge/5-operation cell space.  See ``nb201-export
export --help`` for the command-line entry point.
"""

from .archstr import EDGE_COUNT, OP_NAMES, parse_arch_string, render_arch_string
from .export import DATASETS, EXPECTED_ARCHS, SEED_POLICY, SPACE, ExportManifest, export
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

__all__ = [
    "DATASETS",
    "EDGE_COUNT",
    "EXPECTED_ARCHS",
    "ExportManifest",
    "OP_NAMES",
    "SEED_POLICY",
    "SPACE",
    "TEST_SPLITS",
    "UpstreamFormatError",
    "VAL_DATASET",
    "available_epochs",
    "export",
    "final_test_errors",
    "load_archive",
    "parse_arch_string",
    "render_arch_string",
    "run_record",
    "val_error_curve",
]

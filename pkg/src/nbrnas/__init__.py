"""Neighborhood-aware architecture search and analysis over tabular benchmarks.

The package searches a configurable per-edge operation space by scoring each
candidate cell not on its own error alone but on an aggregate over its whole
edit-distance neighborhood — favoring flat optima that generalize. It ships
discrete searches (random and neighborhood-aware random search), a
gradient-based search on softmax-relaxed cells against an exact multilinear
surrogate, the supporting distance/neighborhood machinery, ranking and
flat-vs-sharp studies, and loss-landscape export, plus a deterministic CLI.
"""

from .agg import MAX, MEAN, MEDIAN, AggregationKind, aggregate, neighborhood_variance, parse_kind, variance_penalized
from .analysis import (
    FlatSharpReport,
    LandscapeGrid,
    RankingStudyReport,
    TopKReport,
    criterion_top_k,
    flat_sharp_study,
    hessian_fd,
    kendall_tau,
    landscape_grid,
    neighborhood_value_matrix,
    ranking_study,
    top2_eigvecs,
)
from .bench import (
    ArchRecord,
    BenchmarkFormatError,
    Objective,
    TabularBenchmark,
    gen_synthetic,
    load_benchmark,
    multilinear_eval,
    multilinear_eval_raw,
    multilinear_grad,
    query,
    write_benchmark,
)
from .gradsearch import (
    DescentConfig,
    DescentStep,
    EdgeNoise,
    SampledNeighbor,
    additive_neighbor,
    default_perturb_edges,
    multiplicative_neighbor,
    na_descent_step,
    neighbor_grad_chain,
    run_na_descent,
    sample_descent_neighbors,
    sample_noise,
    softmax_grad_chain,
)
from .nbhd import (
    NeighborhoodParams,
    cell_distance,
    enumerate_neighbors,
    iter_neighbors,
    neighborhood_size,
    sample_neighbors,
    tv_distance,
)
from .sampler_search import SearchTrace, TraceStep, na_random_search, random_search, uniform_cells
from .space import (
    DiscreteCell,
    Logits,
    RelaxedCell,
    SpaceSpec,
    all_cells_array,
    cell_index,
    discretize,
    index_to_cell,
    parse_cell,
    relax,
    render_cell,
    softmax_cell,
    validate_cell,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

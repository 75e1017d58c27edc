"""Ranking studies, flat/sharp splits, Hessian probes, landscape grids."""

import numpy as np
import pytest

from nbrnas import (
    MAX,
    MEAN,
    MEDIAN,
    DiscreteCell,
    Objective,
    RelaxedCell,
    aggregate,
    all_cells_array,
    cell_index,
    criterion_top_k,
    enumerate_neighbors,
    flat_sharp_study,
    gen_synthetic,
    hessian_fd,
    index_to_cell,
    kendall_tau,
    landscape_grid,
    neighborhood_value_matrix,
    neighborhood_variance,
    ranking_study,
    relax,
    top2_eigvecs,
    variance_penalized,
)
from nbrnas import analysis as analysis_module
from nbrnas.bench import multilinear_eval_raw

from tinybench import space, table_bench


def tau_oracle(a, b):
    """Direct O(n²) tau-b, written independently of the library version."""
    n = len(a)
    conc = disc = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0:
                ties_a += 1
            if db == 0:
                ties_b += 1
            if da * db > 0:
                conc += 1
            elif da * db < 0:
                disc += 1
    n0 = n * (n - 1) // 2
    return (conc - disc) / np.sqrt((n0 - ties_a) * (n0 - ties_b))


class TestKendallTau:
    def test_perfect_agreement(self):
        assert kendall_tau([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_perfect_reversal(self):
        assert kendall_tau([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_one_swap_example(self):
        assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(2 / 3)

    def test_symmetry_and_monotone_invariance(self, rng):
        a = rng.normal(size=30)
        b = rng.normal(size=30)
        t = kendall_tau(a, b)
        assert kendall_tau(b, a) == pytest.approx(t)
        assert kendall_tau(np.exp(a), b) == pytest.approx(t)

    def test_matches_oracle_with_ties(self, rng):
        for _ in range(50):
            n = int(rng.integers(3, 25))
            a = rng.integers(0, 6, size=n).astype(float)
            b = rng.integers(0, 6, size=n).astype(float)
            if np.all(a == a[0]) or np.all(b == b[0]):
                continue
            assert kendall_tau(a, b) == pytest.approx(tau_oracle(a, b), rel=1e-12)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            kendall_tau([1.0], [2.0])
        with pytest.raises(ValueError):
            kendall_tau([1.0, 2.0], [1.0, 2.0, 3.0])


class TestNeighborhoodValueMatrix:
    def matrix_oracle(self, bench, dataset, epoch, indices, radius):
        obj = Objective(bench, dataset, epoch, "val")
        rows = []
        for idx in indices:
            cell = index_to_cell(int(idx), bench.spec)
            rows.append([obj(n) for n in enumerate_neighbors(cell, radius, bench.spec)])
        return np.array(rows)

    @pytest.mark.parametrize("edges,ops,radius", [(2, 3, 1), (3, 3, 1), (3, 3, 2), (2, 2, 0)])
    def test_matches_enumeration_oracle(self, edges, ops, radius, rng):
        s = space(edges, ops)
        b = gen_synthetic(s, seed=edges * 10 + ops)
        indices = rng.choice(s.num_cells, size=min(8, s.num_cells), replace=False)
        got = neighborhood_value_matrix(b, "search", -1, indices, radius)
        oracle = self.matrix_oracle(b, "search", b.epochs - 1, indices, radius)
        assert got.shape == oracle.shape
        assert np.allclose(np.sort(got, axis=1), np.sort(oracle, axis=1), atol=1e-12)
        assert np.allclose(got[:, 0], oracle[:, 0], atol=1e-12)

    def test_reference_column_is_own_value(self):
        s = space(4, 3)
        b = gen_synthetic(s, seed=3)
        obj = Objective(b, "search", epoch=-1)
        indices = np.arange(10)
        got = neighborhood_value_matrix(b, "search", -1, indices, 1)
        for row, idx in zip(got, indices):
            assert row[0] == obj(index_to_cell(int(idx), s))


class TestRankingStudy:
    def test_baseline_perfect_when_test_equals_val(self):
        s = space(3, 3)
        b = gen_synthetic(s, seed=0, spike_fraction=0.0, generalization_gap=0.0, noise_scale=0.0)
        rep = ranking_study(b, sample_size=20, repeats=3, rng=1)
        for ds in ("search", "transfer"):
            assert rep.baseline[ds].mean == pytest.approx(1.0)
            assert rep.baseline[ds].std == pytest.approx(0.0)

    def test_deterministic_given_seed(self):
        s = space(3, 3)
        b = gen_synthetic(s, seed=1)
        a = ranking_study(b, sample_size=15, repeats=4, rng=7)
        c = ranking_study(b, sample_size=15, repeats=4, rng=7)
        assert a == c

    def test_report_structure(self):
        s = space(3, 3)
        b = gen_synthetic(s, seed=2)
        rep = ranking_study(b, sample_size=10, repeats=5, rng=0,
                            kinds=(MEAN, variance_penalized(1.0)))
        assert set(rep.criteria) == {"mean", "var:1"}
        for summary in rep.baseline.values():
            assert len(summary.per_repeat) == 5
            assert -1.0 <= summary.mean <= 1.0
        d = rep.to_json_dict()
        assert d["sample_size"] == 10 and d["repeats"] == 5

    def test_validation(self):
        s = space(2, 2)
        b = gen_synthetic(s, seed=0)
        with pytest.raises(ValueError):
            ranking_study(b, sample_size=1)
        with pytest.raises(ValueError):
            ranking_study(b, sample_size=100)
        with pytest.raises(ValueError):
            ranking_study(b, sample_size=3, repeats=0)
        with pytest.raises(ValueError):
            ranking_study(b, sample_size=3, kinds=(MEAN, MEAN))


class TestFlatSharp:
    def test_groups_halve_selection_by_variance(self):
        s = space(4, 4)
        b = gen_synthetic(s, seed=5)
        rep = flat_sharp_study(b, top_k=20)
        assert rep.flat.size == rep.sharp.size == 10
        assert rep.flat.mean_nbhd_variance <= rep.sharp.mean_nbhd_variance

    def test_spiked_cells_raise_sharp_test_error(self):
        s = space(5, 4)
        gaps = []
        for seed in range(8):
            b = gen_synthetic(s, seed=seed, spike_fraction=0.1)
            rep = flat_sharp_study(b, top_k=50, eval_datasets=("transfer",))
            gaps.append(rep.sharp.mean_test["transfer"] - rep.flat.mean_test["transfer"])
        assert np.mean(gaps) > 0.5

    def test_zeroed_gap_leaves_only_the_selection_effect(self):
        # With the generalization gap and noise turned off, test error equals
        # the base value for every cell, so the sharp group's excess comes
        # purely from selection (spiked cells reach the top-k with base values
        # up to spike_height above the flat entrants) and must be bounded by
        # spike_height; the gap parameter then adds on top of it.
        s = space(5, 4)
        with_gap, without_gap = [], []
        for seed in range(8):
            b = gen_synthetic(s, seed=seed, spike_fraction=0.1)
            rep = flat_sharp_study(b, top_k=50, eval_datasets=("transfer",))
            with_gap.append(rep.sharp.mean_test["transfer"] - rep.flat.mean_test["transfer"])
            b0 = gen_synthetic(s, seed=seed, spike_fraction=0.1,
                               generalization_gap=0.0, noise_scale=0.0)
            rep0 = flat_sharp_study(b0, top_k=50, eval_datasets=("transfer",))
            without_gap.append(rep0.sharp.mean_test["transfer"] - rep0.flat.mean_test["transfer"])
        assert 0.0 <= np.mean(without_gap) <= 3.0
        paired = np.asarray(with_gap) - np.asarray(without_gap)
        assert paired.mean() > 0.3

    def test_test_equals_val_when_all_effects_zero(self):
        s = space(3, 3)
        b = gen_synthetic(s, seed=4, spike_fraction=0.0, spike_height=0.0,
                          generalization_gap=0.0, noise_scale=0.0)
        rep = flat_sharp_study(b, top_k=10)
        assert rep.flat.mean_test["search"] == pytest.approx(rep.flat.mean_val, abs=1e-12)
        assert rep.sharp.mean_test["search"] == pytest.approx(rep.sharp.mean_val, abs=1e-12)

    def test_validation(self):
        s = space(2, 2)
        b = gen_synthetic(s, seed=0)
        with pytest.raises(ValueError):
            flat_sharp_study(b, top_k=3)
        with pytest.raises(ValueError):
            flat_sharp_study(b, top_k=0)
        with pytest.raises(ValueError):
            flat_sharp_study(b, top_k=100)


class TestCriterionTopK:
    def brute_force(self, bench, kind, k, radius=1):
        obj = Objective(bench, "search", epoch=-1)
        scored = []
        for idx in range(bench.num_cells):
            cell = index_to_cell(idx, bench.spec)
            if kind is None:
                score = obj(cell)
            else:
                vals = [obj(n) for n in enumerate_neighbors(cell, radius, bench.spec)]
                score = aggregate(kind, vals[0], vals)
            scored.append((score, idx))
        scored.sort(key=lambda t: (t[0], t[1]))
        return [idx for _, idx in scored[:k]]

    @pytest.mark.parametrize("kind", [None, MEAN, MEDIAN, MAX, variance_penalized(1.0)])
    def test_matches_brute_force(self, kind):
        s = space(3, 3)
        b = gen_synthetic(s, seed=6)
        cells, report = criterion_top_k(b, kind=kind, k=7)
        got = [cell_index(c, s) for c in cells]
        assert got == self.brute_force(b, kind, 7)
        assert report.k == 7
        assert len(report.cells) == 7

    def test_ties_break_by_cell_index(self):
        s = space(2, 3)
        b = table_bench(s, np.full(9, 7.0), dataset="search")
        cells, _ = criterion_top_k(b, kind=MEAN, k=4)
        assert [cell_index(c, s) for c in cells] == [0, 1, 2, 3]

    def test_radius_zero_mean_equals_baseline(self):
        s = space(3, 3)
        b = gen_synthetic(s, seed=7)
        base_cells, _ = criterion_top_k(b, kind=None, k=5)
        mean_cells, _ = criterion_top_k(b, kind=MEAN, k=5, radius=0)
        assert base_cells == mean_cells

    def test_k_covering_space_returns_permutation(self):
        s = space(2, 3)
        b = gen_synthetic(s, seed=8)
        cells, _ = criterion_top_k(b, kind=MAX, k=9)
        assert sorted(cell_index(c, s) for c in cells) == list(range(9))

    def test_refuses_oversized_sweep(self, monkeypatch):
        monkeypatch.setattr(analysis_module, "EXHAUSTIVE_LIMIT", 10)
        s = space(3, 3)
        b = gen_synthetic(s, seed=0)
        with pytest.raises(ValueError, match="limit"):
            criterion_top_k(b, kind=MEAN, k=2)

    def test_k_validation(self):
        s = space(2, 2)
        b = gen_synthetic(s, seed=0)
        with pytest.raises(ValueError):
            criterion_top_k(b, k=0)
        with pytest.raises(ValueError):
            criterion_top_k(b, k=5)


class TestHessian:
    def test_quadratic_oracle(self, rng):
        a = rng.normal(size=(4, 4))
        a = (a + a.T) / 2.0

        def f(w):
            x = w.reshape(-1)
            return float(x @ a @ x)

        center = RelaxedCell(np.full((2, 2), 0.5))
        h = hessian_fd(f, center, h=1e-3)
        assert np.allclose(h, 2.0 * a, atol=1e-4)

    def test_linear_objective_has_zero_hessian(self, rng):
        c = rng.normal(size=6)

        def f(w):
            return float(w.reshape(-1) @ c)

        center = RelaxedCell(np.full((2, 3), 1.0 / 3.0))
        assert np.abs(hessian_fd(f, center)).max() < 1e-6

    def test_surrogate_cross_terms_are_table_values(self):
        s = space(2, 2, zero_skip=False)
        b = table_bench(s, {(0, 0): 1.0, (0, 1): 2.0, (1, 0): 3.0, (1, 1): 4.0})
        obj = Objective(b, "d0", epoch=-1)
        center = RelaxedCell(np.full((2, 2), 0.5))
        h = hessian_fd(obj, center)
        f_block = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.allclose(h[:2, :2], 0.0, atol=1e-6)
        assert np.allclose(h[2:, 2:], 0.0, atol=1e-6)
        assert np.allclose(h[:2, 2:], f_block, atol=1e-5)

    def test_symmetric_output(self, rng):
        s = space(2, 3)
        obj = Objective(gen_synthetic(s, seed=9), "search", epoch=-1)
        center = RelaxedCell(rng.dirichlet(np.ones(3) * 5, size=2))
        h = hessian_fd(obj, center)
        assert np.array_equal(h, h.T)

    def test_step_shrinks_once_with_warning(self):
        center = RelaxedCell(np.array([[0.999, 0.001]]))

        def f(w):
            return float((w ** 2).sum())

        with pytest.warns(UserWarning, match="shrunk"):
            h = hessian_fd(f, center, h=1e-2)
        assert np.allclose(h, 2.0 * np.eye(2), atol=1e-4)

    def test_zero_coordinate_center_rejected(self):
        center = relax(DiscreteCell((0,)), space(1, 2))
        with pytest.raises(ValueError, match="zero"):
            hessian_fd(lambda w: 0.0, center)

    def test_step_validation(self):
        center = RelaxedCell(np.full((1, 2), 0.5))
        with pytest.raises(ValueError):
            hessian_fd(lambda w: 0.0, center, h=0.0)


class TestTop2Eigvecs:
    def test_diagonal_matrix(self):
        v0, v1, e0, e1 = top2_eigvecs(np.diag([3.0, 2.0, 1.0]))
        assert e0 == pytest.approx(3.0) and e1 == pytest.approx(2.0)
        assert np.allclose(np.abs(v0), [1, 0, 0], atol=1e-10)
        assert np.allclose(np.abs(v1), [0, 1, 0], atol=1e-10)
        assert v0[np.argmax(np.abs(v0))] > 0
        assert v1[np.argmax(np.abs(v1))] > 0

    def test_matches_reference_solver(self, rng):
        for _ in range(10):
            a = rng.normal(size=(30, 30))
            a = (a + a.T) / 2.0
            v0, v1, e0, e1 = top2_eigvecs(a)
            ref_vals, ref_vecs = np.linalg.eigh(a)
            assert e0 == pytest.approx(ref_vals[-1], abs=1e-8)
            assert e1 == pytest.approx(ref_vals[-2], abs=1e-8)
            assert abs(float(v0 @ ref_vecs[:, -1])) == pytest.approx(1.0, abs=1e-6)
            assert abs(float(v1 @ ref_vecs[:, -2])) == pytest.approx(1.0, abs=1e-6)

    def test_eigen_residuals_small(self, rng):
        a = rng.normal(size=(20, 20))
        a = (a + a.T) / 2.0
        v0, v1, e0, e1 = top2_eigvecs(a)
        assert np.linalg.norm(a @ v0 - e0 * v0) < 1e-8
        assert np.linalg.norm(a @ v1 - e1 * v1) < 1e-8
        assert np.linalg.norm(v0) == pytest.approx(1.0, abs=1e-12)
        assert abs(float(v0 @ v1)) < 1e-8

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            top2_eigvecs(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            top2_eigvecs(np.zeros((2, 3)))


class TestLandscapeGrid:
    def test_center_value_bit_exact(self):
        s = space(2, 3)
        obj = Objective(gen_synthetic(s, seed=10), "search", epoch=-1)
        center = RelaxedCell(np.full((2, 3), 1.0 / 3.0))
        grid = landscape_grid(obj, center, grid_n=5)
        mid = 2
        assert grid.values[mid, mid] == multilinear_eval_raw(obj, center.dists)
        assert grid.axis0[mid] == 0.0

    def test_axes_cover_range(self):
        s = space(2, 2)
        obj = Objective(gen_synthetic(s, seed=11), "search", epoch=-1)
        center = RelaxedCell(np.full((2, 2), 0.5))
        grid = landscape_grid(obj, center, grid_n=9, coef_range=(-0.5, 0.5))
        assert grid.axis0[0] == -0.5 and grid.axis0[-1] == 0.5
        assert len(grid.axis0) == 9
        diffs = np.diff(grid.axis0)
        assert np.allclose(diffs, diffs[0], atol=1e-12)

    def test_convex_bowl_has_center_minimum(self, rng):
        center = RelaxedCell(np.full((2, 3), 1.0 / 3.0))
        w0 = center.dists.copy()

        def f(w):
            return float(((w - w0) ** 2).sum())

        q, _ = np.linalg.qr(rng.normal(size=(6, 2)))
        grid = landscape_grid(f, center, grid_n=7, directions=(q[:, 0], q[:, 1]))
        mid = 3
        assert grid.values[mid, mid] == 0.0
        assert grid.values.min() == grid.values[mid, mid]
        assert grid.eigenvalues is None

    def test_symmetric_objective_gives_symmetric_slice(self):
        center = RelaxedCell(np.full((2, 2), 0.5))

        def f(w):
            return float(((w[:, 0] - w[:, 1]) ** 2).sum())

        c = 1.0 / np.sqrt(2.0)
        v0 = np.array([c, -c, 0.0, 0.0])
        v1 = np.array([0.0, 0.0, c, -c])
        grid = landscape_grid(f, center, grid_n=5, directions=(v0, v1))
        assert np.allclose(grid.values, grid.values[::-1, :], atol=1e-12)
        assert np.allclose(grid.values, grid.values[:, ::-1], atol=1e-12)

    def test_dead_edge_falls_back_to_unperturbed_row(self):
        center = RelaxedCell(np.array([[0.5, 0.5]]))
        v0 = np.array([-1.0, -1.0])
        v1 = np.array([0.0, 0.0])

        def f(w):
            return float(w[0, 0])

        grid = landscape_grid(f, center, grid_n=3, coef_range=(-1.0, 1.0), directions=(v0, v1))
        # coef0=1 wipes out the whole edge; the row falls back to the center.
        assert grid.values[2, 0] == 0.5

    def test_csv_round_trip(self):
        s = space(2, 2)
        obj = Objective(gen_synthetic(s, seed=12), "search", epoch=-1)
        center = RelaxedCell(np.full((2, 2), 0.5))
        grid = landscape_grid(obj, center, grid_n=3)
        text = grid.to_csv_text()
        lines = text.strip().split("\n")
        assert lines[0].startswith("coef0\\coef1,")
        assert len(lines) == 4
        for i, line in enumerate(lines[1:]):
            parts = line.split(",")
            assert float(parts[0]) == grid.axis0[i]
            assert [float(p) for p in parts[1:]] == [v for v in grid.values[i]]

    def test_json_dict_shape(self):
        s = space(2, 2)
        obj = Objective(gen_synthetic(s, seed=13), "search", epoch=-1)
        center = RelaxedCell(np.full((2, 2), 0.5))
        grid = landscape_grid(obj, center, grid_n=3)
        d = grid.to_json_dict()
        assert len(d["values"]) == 3 and len(d["values"][0]) == 3
        assert len(d["direction0"]) == 4
        assert d["eigenvalues"] is not None

    def test_grid_validation(self):
        center = RelaxedCell(np.full((1, 2), 0.5))
        with pytest.raises(ValueError):
            landscape_grid(lambda w: 0.0, center, grid_n=4)
        with pytest.raises(ValueError):
            landscape_grid(lambda w: 0.0, center, grid_n=1)
        with pytest.raises(ValueError):
            landscape_grid(lambda w: 0.0, center, coef_range=(1.0, -1.0))
        with pytest.raises(ValueError):
            landscape_grid(lambda w: 0.0, center, grid_n=3,
                           directions=(np.zeros(3), np.zeros(2)))

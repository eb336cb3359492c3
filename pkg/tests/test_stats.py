import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wilcoxon as scipy_wilcoxon

import oracles
from egctex.stats import (
    Method,
    ScoreTable,
    format_ranks,
    friedman_avg_ranks,
    fusion_significance,
    normal_lower_tail,
    wilcoxon_signed_rank,
)


class TestRanks:
    def test_descriptor_comparison_row(self):
        # AIA row of the raw-descriptor comparison: LBP 0.7895, RLBP 0.8062, LPQ 0.7535
        t = ScoreTable(["AIA"], ["LBP", "RLBP", "LPQ"], [[0.7895, 0.8062, 0.7535]])
        assert friedman_avg_ranks(t).row_ranks.tolist() == [[2.0, 1.0, 3.0]]

    def test_full_tie(self):
        r = friedman_avg_ranks(ScoreTable(["r"], list("abcd"), [[0.5] * 4]))
        assert r.row_ranks.tolist() == [[2.5] * 4]

    def test_opposite_rows_average_out(self):
        r = friedman_avg_ranks(ScoreTable(["r1", "r2"], ["a", "b"], [[0.9, 0.1], [0.1, 0.9]]))
        assert r.average == {"a": 1.5, "b": 1.5}

    def test_overall_is_mean_of_group_means(self):
        t = ScoreTable(["a1", "a2", "b1"], ["x", "y"], [[0.9, 0.1], [0.8, 0.2], [0.1, 0.9]], groups=["A", "A", "B"])
        r = friedman_avg_ranks(t)
        assert r.group_average == {"A": {"x": 1.0, "y": 2.0}, "B": {"x": 2.0, "y": 1.0}}
        assert r.overall == {"x": 1.5, "y": 1.5}
        assert r.average["x"] == pytest.approx(4 / 3)
        assert "Overall" in format_ranks(r)

    @settings(max_examples=50, deadline=None)
    @given(values=st.lists(st.lists(st.integers(0, 100), min_size=4, max_size=4), min_size=1, max_size=6))
    def test_rank_sums_and_monotone_invariance(self, values):
        # a 0.01 grid keeps the transform strictly monotone in floating point
        t = ScoreTable([str(i) for i in range(len(values))], list("abcd"), np.array(values) / 100)
        r = friedman_avg_ranks(t)
        np.testing.assert_allclose(r.row_ranks.sum(axis=1), 10.0)
        assert sum(r.average.values()) == pytest.approx(10.0)
        warped = friedman_avg_ranks(ScoreTable(t.rows, t.columns, np.exp(3 * t.values) - 7))
        assert np.array_equal(warped.row_ranks, r.row_ranks)
        for row, ranks in zip(t.values, r.row_ranks):
            assert ranks.tolist() == oracles.average_ranks((-row).tolist())

    def test_malformed_tables(self, tmp_path):
        with pytest.raises(ValueError):
            ScoreTable(["r"], ["a", "b"], [[0.1]])
        with pytest.raises(ValueError):
            ScoreTable(["r"], ["a", "b"], [[0.1, float("nan")]])
        (tmp_path / "t.csv").write_text("row,a,b\nr1,0.1\n")
        with pytest.raises(ValueError):
            ScoreTable.from_csv(tmp_path / "t.csv")

    def test_csv_with_groups(self, tmp_path):
        (tmp_path / "t.csv").write_text("# scores\nrow,group,LBP,LPQ\nr1,AIA,0.8,0.7\nr2,TW,0.9,0.95\n")
        t = ScoreTable.from_csv(tmp_path / "t.csv")
        assert t.columns == ["LBP", "LPQ"] and t.groups == ["AIA", "TW"] and t.rows == ["r1", "r2"]


class TestWilcoxon:
    def test_strict_dominance_n5(self):
        r = wilcoxon_signed_rank([5, 6, 7, 8, 9], [1, 2, 3, 4, 5])
        assert (r.statistic, r.p_value, r.n_effective, r.method) == (0.0, 0.03125, 5, Method.EXACT)

    def test_strict_dominance_n10_is_one_in_1024(self):
        r = wilcoxon_signed_rank(np.arange(10) + 0.5, np.arange(10) * 0.9)
        assert r.statistic == 0.0 and r.p_value == 1 / 1024

    def test_identical_samples_are_degenerate(self):
        r = wilcoxon_signed_rank([0.1, 0.2], [0.1, 0.2])
        assert r.degenerate and r.p_value == 1.0 and r.n_effective == 0

    def test_zero_differences_are_dropped(self):
        assert wilcoxon_signed_rank([1, 2, 3, 4], [1, 1, 1, 1]).n_effective == 3

    @pytest.mark.parametrize("alternative", ["a_greater", "a_less", "two_sided"])
    def test_exact_matches_enumeration_up_to_12(self, rng, alternative):
        for trial in range(50):
            n = 1 + trial % 12
            a = rng.integers(0, 6, n) / 5.0  # coarse grid: ties and zeros occur
            b = rng.integers(0, 6, n) / 5.0
            if np.all(a == b):
                continue
            r = wilcoxon_signed_rank(a, b, alternative)
            w, p = oracles.wilcoxon_enumerated(a.tolist(), b.tolist(), alternative)
            assert r.statistic == pytest.approx(w)
            assert r.p_value == pytest.approx(p, abs=1e-15)

    def test_agrees_with_scipy_exact(self, rng):
        a, b = rng.normal(size=15), rng.normal(size=15)
        ref = scipy_wilcoxon(a, b, alternative="greater", method="exact")
        assert wilcoxon_signed_rank(a, b).p_value == pytest.approx(ref.pvalue, rel=1e-12)

    def test_large_n_uses_normal_approximation(self, rng):
        a, b = rng.normal(size=40) + 0.3, rng.normal(size=40)
        r = wilcoxon_signed_rank(a, b)
        ref = scipy_wilcoxon(a, b, alternative="greater", method="approx", correction=True)
        assert r.method is Method.NORMAL and r.z is not None
        assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(pairs=st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=25))
    def test_result_invariants(self, pairs):
        a, b = [p for p, _ in pairs], [q for _, q in pairs]
        r = wilcoxon_signed_rank(a, b)
        n = r.n_effective
        assert 0 <= r.statistic <= n * (n + 1) / 2
        assert 0 < r.p_value <= 1

    def test_uncorrected_normal_variant_reproduces_published_p_values(self):
        # statistic / n pairs with their reported p-values
        for w, n, p in [(0, 5, 0.0216), (0, 10, 0.0025), (1, 10, 0.0035), (19, 10, 0.1931)]:
            assert round(normal_lower_tail(w, n, continuity=False)[0], 4) == p

    def test_fusion_significance(self):
        r = fusion_significance([0.99, 0.98, 0.97, 0.96, 0.95], [0.9, 0.89, 0.88, 0.87, 0.86])
        assert r.statistic == 0.0 and r.p_value == 0.03125
        same = fusion_significance([0.9] * 5, [0.9] * 5)
        assert same.degenerate and same.p_value == 1.0
        approx = fusion_significance([5, 4, 3, 2, 1], [0.5, 0.4, 0.3, 0.2, 0.1], method="normal", continuity=False)
        assert round(approx.p_value, 4) == 0.0216
        with pytest.raises(ValueError):
            fusion_significance([1, 2], [0, 1])

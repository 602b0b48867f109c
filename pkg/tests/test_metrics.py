import math

import numpy as np
import pytest

from valuetax.errors import DegenerateResultError, MetricError
from valuetax.evidence import ShiftMatrix, build_shift_matrix
from valuetax.metrics import (
    FLAG_CONSTANT,
    FLAG_LOW_SUPPORT,
    FLAG_OK,
    CouplingMatrix,
    amplification_report,
    average_ranks,
    centralization,
    compute_tax_report,
    coupling_matrix,
    gain,
    gain_normalized_deviation,
    identify_hubs,
    spearman,
    system_tax,
    tax_profile,
    value_tax,
)
from valuetax.oracles import oracle_gini, oracle_rank_sum, oracle_spearman

from conftest import make_paired


def matrix_from_columns(columns: dict[str, list[float]]) -> ShiftMatrix:
    """ShiftMatrix straight from per-value trajectories (None = absent)."""
    values = tuple(columns)
    n = len(next(iter(columns.values())))
    entries = np.full((n, len(values)), np.nan)
    coverage = np.zeros((n, len(values)), dtype=np.int64)
    for j, vid in enumerate(values):
        for i, x in enumerate(columns[vid]):
            if x is not None:
                entries[i, j] = x
                coverage[i, j] = 1
    keys = tuple((f"s{i}", "a0") for i in range(n))
    return ShiftMatrix(sample_keys=keys, values=values, entries=entries, coverage=coverage)


def coupling_from_entries(entries: np.ndarray) -> CouplingMatrix:
    p = entries.shape[0]
    return CouplingMatrix(
        values=tuple(f"v{i}" for i in range(p)),
        entries=entries,
        pair_support=np.full((p, p), 100, dtype=np.int64),
        flags=tuple(tuple(FLAG_OK for _ in range(p)) for _ in range(p)),
    )


class TestSpearman:
    def test_comonotone(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == 1.0

    def test_antitone(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0

    def test_average_rank_ties(self):
        # ranks of (1,2,2,4) and (1,3,3,4) coincide: 1, 2.5, 2.5, 4
        assert spearman([1, 2, 2, 4], [1, 3, 3, 4]) == 1.0

    def test_average_ranks_values(self):
        assert list(average_ranks(np.array([10.0, 20.0, 20.0, 40.0]))) == [1.0, 2.5, 2.5, 4.0]

    def test_constant_input_returns_zero(self):
        assert spearman([1, 1, 1], [1, 2, 3]) == 0.0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.integers(-2, 3, size=15) / 2.0
            y = rng.integers(-2, 3, size=15) / 2.0
            f = lambda t: t**3 + t  # strictly increasing
            assert spearman(f(x), y) == spearman(x, y)
            assert spearman(x, f(y)) == spearman(x, y)

    def test_matches_oracle_on_grid_data(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            n = int(rng.integers(2, 41))
            x = rng.integers(-2, 3, size=n) / 2.0
            y = rng.integers(-2, 3, size=n) / 2.0
            assert spearman(x, y) == pytest.approx(oracle_spearman(list(x), list(y)), abs=1e-12)

    def test_errors(self):
        with pytest.raises(MetricError, match="equal-length"):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(MetricError, match="at least 2"):
            spearman([1], [1])


class TestGain:
    def test_mean_of_column(self):
        sm = matrix_from_columns({"t": [1.0, 0.0, -0.5, 0.5], "o": [0.0] * 4})
        assert gain(sm, "t") == 0.25

    def test_all_zero(self):
        sm = matrix_from_columns({"t": [0.0, 0.0], "o": [0.0, 0.0]})
        assert gain(sm, "t") == 0.0

    def test_empty_column_errors(self):
        sm = matrix_from_columns({"t": [None, None], "o": [0.5, 0.0]})
        with pytest.raises(MetricError, match="no observed shifts"):
            gain(sm, "t")


class TestGnd:
    def test_division(self):
        sm = matrix_from_columns({"t": [0.5, 0.5], "o": [0.25, 0.25]})
        vec = gain_normalized_deviation(sm, "t")
        assert list(vec) == [1.0, 0.5]

    def test_negative_gain_gives_exact_negative_sign(self):
        sm = matrix_from_columns({"t": [-0.5, -0.7, -0.3], "o": [0.1, 0.0, 0.2]})
        vec = gain_normalized_deviation(sm, "t")
        assert vec[0] == -1.0

    def test_positive_gain_gives_exact_positive_sign(self):
        # mean is an awkward float; the target component must still be exact
        sm = matrix_from_columns({"t": [0.5, 0.5, 1.0], "o": [0.0, 0.0, 0.0]})
        assert gain_normalized_deviation(sm, "t")[0] == 1.0

    def test_zero_gain_not_computable(self):
        sm = matrix_from_columns({"t": [0.5, -0.5], "o": [0.1, 0.1]})
        with pytest.raises(DegenerateResultError, match="not computable"):
            gain_normalized_deviation(sm, "t")

    def test_scale_invariance_dyadic(self):
        sm = matrix_from_columns({"t": [0.5, 1.0, 0.25], "o": [0.25, -0.5, 0.75]})
        base = gain_normalized_deviation(sm, "t")
        for lam in (2.0, 0.5):
            scaled = ShiftMatrix(
                sample_keys=sm.sample_keys, values=sm.values,
                entries=sm.entries * lam, coverage=sm.coverage,
            )
            assert np.array_equal(gain_normalized_deviation(scaled, "t"), base)

    def test_unobserved_value_is_nan(self):
        sm = matrix_from_columns({"t": [0.5, 0.5], "o": [None, None]})
        vec = gain_normalized_deviation(sm, "t")
        assert vec[0] == 1.0 and np.isnan(vec[1])


class TestCouplingMatrix:
    def test_identical_columns_couple_at_one(self):
        col = [0.5, -0.5, 1.0, 0.0, -1.0, 0.5]
        sm = matrix_from_columns({"a": col, "b": list(col)})
        R = coupling_matrix(sm, min_support=2)
        assert R.entries[0, 1] == 1.0
        assert R.entries[0, 0] == 0.0 and R.entries[1, 1] == 0.0

    def test_orthogonal_periodic_patterns(self):
        # brute force on the period-4 pattern: correlation is exactly 0
        n = 16
        a = [0.5 if i % 2 == 0 else -0.5 for i in range(n)]
        b = [0.5 if (i // 2) % 2 == 0 else -0.5 for i in range(n)]
        assert oracle_spearman(a, b) == 0.0
        sm = matrix_from_columns({"a": a, "b": b})
        assert coupling_matrix(sm, min_support=2).entries[0, 1] == 0.0

    def test_constant_columns_flagged(self):
        sm = matrix_from_columns({"a": [0.5] * 4, "b": [0.5] * 4, "c": [0.0] * 4})
        R = coupling_matrix(sm, min_support=2)
        assert np.all(R.entries == 0.0)
        for i in range(3):
            for j in range(3):
                if i != j:
                    assert R.flags[i][j] == FLAG_CONSTANT

    def test_low_support_flag_and_strict(self):
        sm = matrix_from_columns({
            "a": [0.5, -0.5, 0.5, None], "b": [0.5, 0.0, None, -0.5],
        })
        R = coupling_matrix(sm, min_support=3)
        assert R.entries[0, 1] == 0.0
        assert R.flags[0][1] == FLAG_LOW_SUPPORT
        assert R.pair_support[0, 1] == 2
        with pytest.raises(DegenerateResultError, match="support"):
            coupling_matrix(sm, min_support=3, strict=True)

    def test_pairwise_complete_support(self):
        sm = matrix_from_columns({
            "a": [0.5, -0.5, None, 1.0], "b": [0.0, 0.5, 0.5, None],
        })
        R = coupling_matrix(sm, min_support=2)
        assert R.pair_support[0, 1] == 2
        assert R.pair_support[0, 0] == 3  # samples observing a

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(3)
        cols = {f"v{j}": list(rng.integers(-2, 3, size=30) / 2.0) for j in range(5)}
        R = coupling_matrix(matrix_from_columns(cols), min_support=2)
        assert np.array_equal(R.entries, R.entries.T)
        assert np.all(np.abs(R.entries) <= 1.0)
        assert np.all(np.diag(R.entries) == 0.0)

    def test_needs_two_values(self):
        sm = matrix_from_columns({"a": [0.5, 0.0]})
        with pytest.raises(MetricError, match="at least 2 values"):
            coupling_matrix(sm)


class TestTaxes:
    def test_value_tax_cases(self):
        entries = np.zeros((3, 3))
        R = coupling_from_entries(entries)
        assert value_tax(R, "v0") == 0.0

        entries = np.zeros((3, 3))
        entries[0, 1] = entries[1, 0] = 0.6
        assert value_tax(coupling_from_entries(entries), "v0") == 0.6

        entries = np.zeros((3, 3))
        entries[0, 1] = entries[1, 0] = 0.3
        entries[0, 2] = entries[2, 0] = 0.4
        assert value_tax(coupling_from_entries(entries), "v0") == 0.5

    def test_system_tax_zero_matrix(self):
        assert system_tax(coupling_from_entries(np.zeros((4, 4)))) == 0.0

    def test_system_tax_constant_matrix_is_3c(self):
        for c in (0.05, 0.1, 0.3):
            entries = np.full((10, 10), c)
            np.fill_diagonal(entries, 0.0)
            # direct summation: 90 off-diagonal entries of c
            frob = math.sqrt(sum(c * c for _ in range(90)))
            assert system_tax(coupling_from_entries(entries)) == pytest.approx(frob / math.sqrt(10), abs=1e-15)
            assert system_tax(coupling_from_entries(entries)) == pytest.approx(3 * c, abs=1e-12)

    def test_frobenius_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            p = int(rng.integers(2, 12))
            entries = rng.uniform(-1, 1, size=(p, p))
            entries = (entries + entries.T) / 2
            np.fill_diagonal(entries, 0.0)
            R = coupling_from_entries(entries)
            lhs = system_tax(R) ** 2 * p
            rhs = sum(value_tax(R, vid) ** 2 for vid in R.values)
            assert lhs == pytest.approx(rhs, abs=1e-12)

    def test_value_tax_bound(self):
        entries = np.ones((6, 6)) - np.eye(6)
        R = coupling_from_entries(entries)
        assert value_tax(R, "v0") <= math.sqrt(5) + 1e-12


class TestCentralization:
    def test_uniform_is_zero(self):
        assert centralization([0.4] * 7) == 0.0

    def test_one_hot_n10(self):
        assert centralization([1.0] + [0.0] * 9) == pytest.approx(0.9, abs=1e-15)
        assert oracle_gini([1.0] + [0.0] * 9) == pytest.approx(0.9, abs=1e-15)

    def test_all_zero_convention(self):
        assert centralization([0.0] * 5) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(MetricError, match="non-negative"):
            centralization([0.5, -0.1])

    def test_scale_invariance(self):
        x = [0.1, 0.7, 0.3, 0.9]
        assert centralization([4 * v for v in x]) == pytest.approx(centralization(x), abs=1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            x = list(rng.uniform(0, 2, size=int(rng.integers(2, 20))))
            assert centralization(x) == pytest.approx(oracle_gini(x), abs=1e-12)

    def test_range(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            x = list(rng.uniform(0, 1, size=10))
            assert 0.0 <= centralization(x) < 1.0


class TestHubs:
    def test_single_profile_sole_hub(self):
        profile = {"a": 0.9, "b": 0.1, "c": 0.1, "d": 0.1, "e": 0.1}
        assert identify_hubs([("cfg", profile)], quantile=0.75, persistence=0.75) == ["a"]

    def test_persistence_threshold(self):
        high = {"a": 0.9, "b": 0.1, "c": 0.1, "d": 0.1}
        low = {"a": 0.1, "b": 0.9, "c": 0.1, "d": 0.1}
        profiles = [("1", high), ("2", high), ("3", low), ("4", low)]
        # a is above threshold in 2 of 4: below the 0.75 persistence bar
        assert identify_hubs(profiles, quantile=0.75, persistence=0.75) == []
        assert identify_hubs(profiles, quantile=0.75, persistence=0.5) == ["a", "b"]

    def test_validation(self):
        with pytest.raises(MetricError, match="at least one"):
            identify_hubs([])
        with pytest.raises(MetricError, match="quantile"):
            identify_hubs([("x", {"a": 1.0})], quantile=0.0)
        with pytest.raises(MetricError, match="different value set"):
            identify_hubs([("x", {"a": 1.0}), ("y", {"b": 1.0})])


class TestAmplification:
    def test_separated_groups(self):
        profiles = [("cfg", {"h1": 0.8, "h2": 0.9, "n1": 0.1, "n2": 0.2})]
        report = amplification_report(profiles, ["h1", "h2"])
        assert report.hub_stats.mean == pytest.approx(0.85)
        assert report.non_hub_stats.mean == pytest.approx(0.15)
        # every hub value beats every non-hub value
        assert report.rank_sum_statistic == 4.0
        assert report.rank_sum_statistic == oracle_rank_sum([0.8, 0.9], [0.1, 0.2])

    def test_identical_distributions_hit_null_midpoint(self):
        profiles = [("cfg", {"h1": 0.3, "h2": 0.7, "n1": 0.3, "n2": 0.7})]
        report = amplification_report(profiles, ["h1", "h2"])
        assert report.rank_sum_statistic == report.rank_sum_null_mean == 2.0
        assert report.rank_sum_statistic == oracle_rank_sum([0.3, 0.7], [0.3, 0.7])

    def test_errors(self):
        profiles = [("cfg", {"a": 0.5, "b": 0.4})]
        with pytest.raises(MetricError, match="every value"):
            amplification_report(profiles, ["a", "b"])
        with pytest.raises(MetricError, match="not present"):
            amplification_report(profiles, ["ghost"])
        with pytest.raises(MetricError, match="empty"):
            amplification_report(profiles, [])


class TestTaxReport:
    def paired_fixture(self, dyadic_taxonomy):
        pre_rows, post_rows = [], []
        rng = np.random.default_rng(41)
        for i in range(40):
            for m in dyadic_taxonomy.micro_value_ids:
                pre = int(rng.integers(1, 6))
                post = int(np.clip(pre + rng.integers(-1, 2), 1, 5))
                if m.startswith("v0"):
                    post = min(5, pre + 1)  # push the target upward
                pre_rows.append((f"s{i}", "a0", m, 1, pre))
                post_rows.append((f"s{i}", "a0", m, 1, post))
        return make_paired(pre_rows, post_rows)

    def test_report_structure(self, dyadic_taxonomy):
        paired = self.paired_fixture(dyadic_taxonomy)
        sm = build_shift_matrix(paired, dyadic_taxonomy)
        report = compute_tax_report(sm, "v0", min_support=5)
        doc = report.to_dict()
        assert set(doc) == {
            "target", "gain", "values", "gnd", "coupling",
            "vat_profile", "nvat", "gini", "diagnostics",
        }
        assert set(doc["coupling"]) == {"values", "entries", "support", "flags"}
        assert doc["gain"] > 0
        assert doc["gnd"][0] == 1.0
        assert 0.0 <= doc["gini"] < 1.0
        assert doc["nvat"] >= 0.0
        profile = tax_profile(report.coupling)
        assert list(profile) == list(doc["vat_profile"])

    def test_exclude_target(self, dyadic_taxonomy):
        paired = self.paired_fixture(dyadic_taxonomy)
        sm = build_shift_matrix(paired, dyadic_taxonomy)
        report = compute_tax_report(sm, "v0", min_support=5, exclude_target=True)
        assert "v0" not in report.coupling.values
        assert len(report.vat_profile) == len(dyadic_taxonomy.values) - 1
        assert any("excluded" in d for d in report.diagnostics)

    def test_unknown_target(self, dyadic_taxonomy):
        paired = self.paired_fixture(dyadic_taxonomy)
        sm = build_shift_matrix(paired, dyadic_taxonomy)
        with pytest.raises(MetricError, match="not among"):
            compute_tax_report(sm, "ghost")

    def test_low_support_lands_in_diagnostics(self, dyadic_taxonomy):
        paired = self.paired_fixture(dyadic_taxonomy)
        sm = build_shift_matrix(paired, dyadic_taxonomy)
        report = compute_tax_report(sm, "v0", min_support=1000)
        assert any("low support" in d for d in report.diagnostics)
        assert report.nvat == 0.0

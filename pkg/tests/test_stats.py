import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from naseval import stats
from naseval.stats import RankQuery, SampleSummary, StatsError

# Student-t CDF references computed with mpmath at 40 significant digits
# (regularized incomplete beta), rounded to 20 digits.
T_CDF_REFERENCE = [
    (-3.7, 1, 0.084022262823947592159),
    (-0.45, 1, 0.36540141490025461083),
    (1.3, 1, 0.79128559983984726865),
    (2.9, 1, 0.8943021886801739879),
    (-3.7, 5, 0.0069997034878495539614),
    (-0.45, 5, 0.33577456970940529113),
    (1.3, 5, 0.87484968291466138803),
    (2.9, 5, 0.98310464786511409242),
    (-3.7, 11, 0.0017508033412250190751),
    (-0.45, 11, 0.33072472290677864347),
    (1.3, 11, 0.88990936865007901847),
    (2.9, 11, 0.99277744071561358797),
    (-3.7, 30, 0.00043229992662364474721),
    (-0.45, 30, 0.32797270880695490925),
    (1.3, 30, 0.89824952073094155838),
    (2.9, 30, 0.9965400448674722418),
    (-3.7, 100, 0.00017637331839267935141),
    (-0.45, 100, 0.32684221684093998225),
    (1.3, 100, 0.90170526828881688711),
    (2.9, 100, 0.99770591593532798403),
]


def brute_tau_b(x, y):
    """Tau-b straight from the definition, pair by pair."""
    c = d = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        sx, sy = np.sign(x[i] - x[j]), np.sign(y[i] - y[j])
        if sx == 0:
            tx += 1
        if sy == 0:
            ty += 1
        c += sx * sy > 0
        d += sx * sy < 0
    n0 = len(x) * (len(x) - 1) // 2
    return (c - d) / math.sqrt((n0 - tx) * (n0 - ty))


class TestKendallTau:
    def test_identical(self):
        assert stats.kendall_tau([1, 2, 3, 4], [1, 2, 3, 4]).tau == 1.0

    def test_reversed(self):
        assert stats.kendall_tau([1, 2, 3, 4], [4, 3, 2, 1]).tau == -1.0

    def test_one_swap(self):
        r = stats.kendall_tau([1, 2, 3, 4], [2, 1, 3, 4])
        assert r.tau == pytest.approx(4 / 6, abs=1e-15)
        assert (r.concordant, r.discordant) == (5, 1)

    def test_key_lists_and_dicts_agree(self):
        a = ["a", "b", "c", "d", "e"]
        b = ["b", "a", "c", "e", "d"]
        by_list = stats.kendall_tau(a, b).tau
        by_dict = stats.kendall_tau({k: i for i, k in enumerate(a)}, {k: i for i, k in enumerate(b)}).tau
        assert by_list == by_dict == pytest.approx(0.6)

    def test_ties_match_scipy(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.integers(0, 4, 12)
            y = rng.integers(0, 4, 12)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            assert stats.kendall_tau(x, y).tau == pytest.approx(sps.kendalltau(x, y).statistic, abs=1e-12)

    def test_pair_totals(self):
        r = stats.kendall_tau([1, 1, 2, 3, 3], [2, 1, 1, 3, 3])
        n0 = 10
        assert r.concordant + r.discordant + r.ties == n0

    def test_errors(self):
        with pytest.raises(StatsError):
            stats.kendall_tau([1], [1])
        with pytest.raises(StatsError):
            stats.kendall_tau(["a", "b"], ["a", "c"])
        with pytest.raises(StatsError):
            stats.kendall_tau({"a": 1, "b": 2}, {"a": 1, "c": 2})
        with pytest.raises(StatsError):
            stats.kendall_tau([1, 2, 3], [1, 2])
        with pytest.raises(StatsError):
            stats.kendall_tau([1, 1, 1], [1, 2, 3])

    @given(st.lists(st.integers(0, 5), min_size=2, max_size=15).flatmap(
        lambda x: st.tuples(st.just(x), st.lists(st.integers(0, 5), min_size=len(x), max_size=len(x)))))
    @settings(max_examples=300, deadline=None)
    def test_brute_force_and_symmetry(self, xy):
        x, y = xy
        if len(set(x)) < 2 or len(set(y)) < 2:
            return
        t = stats.kendall_tau(x, y).tau
        assert t == pytest.approx(brute_tau_b(x, y), abs=1e-12)
        assert stats.kendall_tau(y, x).tau == pytest.approx(t, abs=1e-15)
        perm = np.random.default_rng(len(x)).permutation(len(x))
        assert stats.kendall_tau(np.array(x)[perm], np.array(y)[perm]).tau == pytest.approx(t, abs=1e-15)
        assert -1 <= t <= 1


class TestStudentT:
    @pytest.mark.parametrize("t,df,ref", T_CDF_REFERENCE)
    def test_cdf_reference(self, t, df, ref):
        assert abs(stats.student_t_cdf(t, df) - ref) < 1e-8

    @pytest.mark.parametrize("df", [0.7, 2.5, 9.3, 44.0, 1e4])
    def test_against_scipy(self, df):
        for t in np.linspace(-8, 8, 33):
            assert stats.student_t_sf2(t, df) == pytest.approx(2 * sps.t.sf(abs(t), df), abs=1e-10)

    def test_betainc_against_scipy(self):
        from scipy.special import betainc

        rng = np.random.default_rng(3)
        for _ in range(200):
            a, b, x = rng.uniform(0.1, 60), rng.uniform(0.1, 60), rng.uniform(0, 1)
            assert stats.betainc(a, b, x) == pytest.approx(betainc(a, b, x), abs=1e-10)

    def test_betainc_edges(self):
        assert stats.betainc(2, 3, 0.0) == 0.0
        assert stats.betainc(2, 3, 1.0) == 1.0
        with pytest.raises(StatsError):
            stats.betainc(-1, 1, 0.5)

    def test_zero_and_infinite_t(self):
        assert stats.student_t_sf2(0.0, 7) == pytest.approx(1.0, abs=1e-14)
        assert stats.student_t_sf2(math.inf, 7) == 0.0


class TestWelch:
    def test_equal(self):
        a = SampleSummary(5.0, 1.0, 10)
        r = stats.welch_t(a, a)
        assert r.t == 0.0 and r.p_two_sided == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("a,b", [((59.88, 1.92, 10), (60.13, 0.65, 10)), ((61.99, 1.95, 10), (60.13, 0.65, 10)),
                                     ((96.86, 0.17, 10), (96.44, 0.19, 10)), ((1.0, 0.5, 3), (2.0, 4.0, 25))])
    def test_matches_scipy(self, a, b):
        ref = sps.ttest_ind_from_stats(*a, *b, equal_var=False)
        r = stats.welch_t(SampleSummary(*a), SampleSummary(*b))
        assert r.t == pytest.approx(ref.statistic, rel=1e-12)
        assert r.p_two_sided == pytest.approx(ref.pvalue, abs=1e-10)

    def test_table_one_rows(self):
        rnd = SampleSummary(60.13, 0.65, 10)
        assert stats.welch_t(SampleSummary(59.88, 1.92, 10), rnd).p_two_sided == pytest.approx(0.73, abs=0.05)
        assert stats.welch_t(SampleSummary(61.99, 1.95, 10), rnd).p_two_sided == pytest.approx(0.02, abs=0.02)
        cifar = SampleSummary(96.44, 0.19, 10)
        assert stats.welch_t(SampleSummary(96.86, 0.17, 10), cifar).p_two_sided < 0.005

    def test_degenerate(self):
        a, b = SampleSummary(1.0, 0.0, 4), SampleSummary(2.0, 0.0, 4)
        assert stats.welch_t(a, a).p_two_sided == 1.0
        r = stats.welch_t(a, b)
        assert r.p_two_sided == 0.0 and r.t == -math.inf

    def test_antisymmetry(self):
        a, b = SampleSummary(3.0, 1.0, 6), SampleSummary(2.0, 0.4, 9)
        r1, r2 = stats.welch_t(a, b), stats.welch_t(b, a)
        assert r1.t == -r2.t and r1.p_two_sided == r2.p_two_sided

    def test_summary_invariants(self):
        with pytest.raises(StatsError):
            SampleSummary(1.0, 1.0, 1)
        with pytest.raises(StatsError):
            SampleSummary(1.0, -1.0, 5)


class TestSurpassRandom:
    @pytest.mark.parametrize("r,expected", [(19552, 0.62), (57079, 0.24), (96939, 0.07), (3543, 0.92), (4610, 0.90)])
    def test_table_values(self, r, expected):
        assert stats.p_surpass_random(RankQuery(r, 423624, 10)) == pytest.approx(expected, abs=0.005)

    def test_worst_rank(self):
        assert stats.p_surpass_random(RankQuery(50, 50, 3)) == 0.0

    def test_simulation_oracle(self):
        # Monte Carlo: found arch of rank r beats the best of `budget` uniform draws
        rng = np.random.default_rng(8)
        r, r_max, n = 7, 32, 5
        draws = rng.integers(1, r_max + 1, size=(200_000, n)).min(axis=1)
        assert stats.p_surpass_random(r, r_max, n) == pytest.approx(np.mean(draws > r), abs=0.005)

    @given(st.integers(2, 500).flatmap(lambda m: st.tuples(st.just(m), st.integers(1, m - 1), st.integers(1, 30))))
    def test_monotone(self, q):
        m, r, n = q
        p = stats.p_surpass_random(r, m, n)
        assert stats.p_surpass_random(r + 1, m, n) <= p
        assert stats.p_surpass_random(r, m, n + 1) <= p

    def test_invalid(self):
        with pytest.raises(StatsError):
            RankQuery(0, 10, 1)
        with pytest.raises(StatsError):
            RankQuery(11, 10, 1)
        with pytest.raises(StatsError):
            RankQuery(1, 10, 0)


class TestAggregate:
    def test_values(self):
        a = stats.aggregate([96.79, 96.80, 96.78], direction="higher-better")
        assert a["mean"] == pytest.approx(96.79, abs=1e-12)
        assert a["best"] == 96.80
        assert a["std"] == pytest.approx(0.01, abs=1e-12)

    def test_single(self):
        a = stats.aggregate([1.5])
        assert a["std"] == 0.0 and a["single"] and a["n"] == 1

    def test_empty(self):
        with pytest.raises(StatsError):
            stats.aggregate([])

    def test_noisy_random_runs_recomputed(self, bundled_table):
        from naseval.samplers import TableEvaluator, run_random

        res = [run_random(bundled_table.spec, TableEvaluator(bundled_table, noisy=True, seed=s), 3, s) for s in range(10)]
        a = stats.aggregate(res)
        vals = [r.best_score for r in res]
        mu = math.fsum(vals) / 10
        sd = math.sqrt(math.fsum((v - mu) ** 2 for v in vals) / 9)
        assert a["mean"] == pytest.approx(mu, abs=1e-9)
        assert a["std"] == pytest.approx(sd, abs=1e-9)
        assert a["best"] == min(vals)
        assert a["direction"] == "lower-better"

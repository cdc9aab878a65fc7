from fractions import Fraction
from itertools import combinations, product

import numpy as np
import pytest

from rdtoolkit.errors import EmptyGroup, TooFewObservations
from rdtoolkit.locrand import (
    Bernoulli,
    FixedMargins,
    diff_in_means,
    fisher_ci,
    fisher_pvalue,
    fuzzy_locrand,
    make_window,
    neyman_ci,
    select_window,
)

from conftest import make_sample


def window_all(sample):
    w = float(np.max(np.abs(sample.score))) + 1.0
    return make_window(sample, w)


def enumerate_fixed_margins_pvalue(y, n_plus):
    """Independent oracle: exhaustive diff-in-means enumeration."""
    n = len(y)
    idx = range(n)
    s_obs = (sum(y[i] for i in idx[:0]) if False else None)
    obs_plus = list(range(n - n_plus, n))  # caller arranges treated last
    def stat(plus):
        plus = set(plus)
        yp = [y[i] for i in idx if i in plus]
        ym = [y[i] for i in idx if i not in plus]
        return sum(yp) / len(yp) - sum(ym) / len(ym)
    s_obs = stat(obs_plus)
    total = 0
    extreme = 0
    for plus in combinations(idx, n_plus):
        total += 1
        if abs(stat(plus)) >= abs(s_obs) - 1e-12:
            extreme += 1
    return Fraction(extreme, total), s_obs


class TestWindow:
    def test_counts(self):
        s = make_sample([-0.9, -0.4, -0.1, 0.0, 0.3, 0.8], range(6))
        w = make_window(s, 0.5)
        assert (w.lower, w.upper) == (-0.5, 0.5)
        assert w.n_w == 4 and w.n_plus == 2 and w.n_minus == 2

    def test_asymmetric(self):
        s = make_sample([-0.9, -0.4, 0.3, 0.8], range(4))
        w = make_window(s, 0.5, 1.0)
        assert w.n_minus == 1 and w.n_plus == 2

    def test_positive_width_required(self):
        s = make_sample([-1.0, 1.0], [0, 1])
        with pytest.raises(ValueError):
            make_window(s, -0.5)


class TestFisherExhaustive:
    def test_three_unit_hand_example(self):
        # scores place one unit above the cutoff; outcomes 1, 2, 3.
        # Observed S = 3 - 1.5 = 1.5; assignments put each unit above in
        # turn giving |S| in {1.5, 0.0, 1.5} -> p = 2/3.
        s = make_sample([-0.6, -0.3, 0.2], [1.0, 2.0, 3.0])
        res = fisher_pvalue(s, window_all(s))
        assert res.exact
        assert res.total == 3
        assert res.extreme_count == 2
        assert res.p_value == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert res.statistic_observed == pytest.approx(1.5)

    def test_matches_independent_enumeration(self):
        rng = np.random.default_rng(23)
        y = list(rng.normal(0, 1, 9).round(3))
        x = [-1.0] * 5 + [1.0] * 4  # treated last, matches oracle layout
        s = make_sample(x, y)
        res = fisher_pvalue(s, window_all(s))
        p_oracle, s_obs = enumerate_fixed_margins_pvalue(y, 4)
        assert res.exact
        assert res.p_value == pytest.approx(float(p_oracle), abs=1e-12)
        assert res.statistic_observed == pytest.approx(s_obs, abs=1e-12)

    def test_all_equal_outcomes_p_one(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [2.0, 2.0, 2.0, 2.0])
        res = fisher_pvalue(s, window_all(s))
        assert res.p_value == 1.0

    def test_observed_statistic_goes_through_ensemble_path(self):
        # the observed assignment appears among the enumerated ones, so
        # its statistic must tie with itself bit-for-bit
        rng = np.random.default_rng(3)
        y = rng.normal(0, 1, 8)
        s = make_sample(np.r_[np.full(4, -1.0), np.full(4, 1.0)], y)
        res = fisher_pvalue(s, window_all(s))
        assert res.extreme_count >= 1  # observed always counted


class TestFisherMonteCarlo:
    def _sample(self, n=18, seed=1):
        rng = np.random.default_rng(seed)
        x = np.r_[-rng.uniform(0.1, 1, n // 2), rng.uniform(0.1, 1, n // 2)]
        y = rng.normal(0, 1, n)
        return make_sample(x, y)

    def test_forced_mc_close_to_exhaustive(self):
        s = self._sample()
        exact = fisher_pvalue(s, window_all(s), max_exhaustive=200000)
        mc = fisher_pvalue(s, window_all(s), max_exhaustive=10,
                           draws=9999, seed=5)
        assert exact.exact and not mc.exact
        assert mc.p_value == pytest.approx(exact.p_value, abs=0.05)

    def test_add_one_estimator(self):
        s = self._sample()
        mc = fisher_pvalue(s, window_all(s), max_exhaustive=10, draws=999,
                           seed=2)
        assert mc.draws == 999
        # (count+1)/(draws+1) means p is a multiple of 1/1000 and > 0
        assert mc.p_value > 0
        assert (mc.p_value * 1000) == pytest.approx(
            round(mc.p_value * 1000), abs=1e-9)

    def test_seed_determinism(self):
        s = self._sample()
        a = fisher_pvalue(s, window_all(s), max_exhaustive=10, draws=999,
                          seed=7)
        b = fisher_pvalue(s, window_all(s), max_exhaustive=10, draws=999,
                          seed=7)
        c = fisher_pvalue(s, window_all(s), max_exhaustive=10, draws=999,
                          seed=8)
        assert a.p_value == b.p_value
        assert a.p_value != c.p_value or a.extreme_count != c.extreme_count


class TestBernoulli:
    def test_exhaustive_matches_weighted_enumeration(self):
        y = [1.0, 2.0, 4.5]
        s = make_sample([-0.6, -0.3, 0.2], y)
        prob = 0.3
        res = fisher_pvalue(s, window_all(s), model=Bernoulli(prob))
        assert res.exact

        # oracle: all 2^3 - 2 non-degenerate vectors, weight p^k(1-p)^(n-k)
        s_obs = y[2] - (y[0] + y[1]) / 2
        num = den = 0.0
        for t in product([0, 1], repeat=3):
            k = sum(t)
            if k in (0, 3):
                continue
            w = prob ** k * (1 - prob) ** (3 - k)
            yp = [yi for yi, ti in zip(y, t) if ti]
            ym = [yi for yi, ti in zip(y, t) if not ti]
            stat = sum(yp) / len(yp) - sum(ym) / len(ym)
            den += w
            if abs(stat) >= abs(s_obs) - 1e-12:
                num += w
        assert res.p_value == pytest.approx(num / den, abs=1e-12)

    def test_mc_draws_are_non_degenerate(self):
        rng = np.random.default_rng(4)
        n = 24
        s = make_sample(np.r_[-rng.uniform(0.1, 1, 12),
                              rng.uniform(0.1, 1, 12)], rng.normal(0, 1, n))
        res = fisher_pvalue(s, window_all(s), model=Bernoulli(0.5),
                            max_exhaustive=10, draws=499, seed=3)
        assert not res.exact
        assert 0 < res.p_value <= 1

    def test_balanced_bernoulli_half_equals_fixed_margins_means(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [1.0, 2.0, 3.0, 4.0])
        w = window_all(s)
        fm = diff_in_means(s, w, model=FixedMargins())
        bn = diff_in_means(s, w, model=Bernoulli(0.5))
        assert fm.tau_hat == bn.tau_hat  # n_plus = n/2 exactly


class TestDiffInMeans:
    def test_group_means_neyman(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [1.0, 2.0, 3.0, 5.0])
        est = diff_in_means(s, window_all(s))
        assert est.ybar_plus == 4.0 and est.ybar_minus == 1.5
        assert est.tau_hat == 2.5

    def test_horvitz_thompson_under_bernoulli(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [1.0, 2.0, 3.0, 5.0])
        est = diff_in_means(s, window_all(s), model=Bernoulli(0.25))
        assert est.ybar_plus == pytest.approx((3 + 5) / (4 * 0.25))
        assert est.ybar_minus == pytest.approx((1 + 2) / (4 * 0.75))

    def test_superpop_weights_are_group_means_for_bernoulli(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [1.0, 2.0, 3.0, 5.0])
        est = diff_in_means(s, window_all(s), model=Bernoulli(0.25),
                            framework="superpop")
        assert est.tau_hat == 2.5

    def test_empty_group_raises(self):
        s = make_sample([0.1, 0.2, 0.3], [1, 2, 3])
        with pytest.raises(EmptyGroup):
            diff_in_means(s, window_all(s))

    def test_fuzzy_ratio(self):
        s = make_sample([-0.5, -0.2, 0.1, 0.4], [1.0, 2.0, 3.0, 5.0],
                        received=[0, 0, 1, 0])
        est = fuzzy_locrand(s, window_all(s))
        # reduced 2.5, first stage 0.5 - 0 = 0.5
        assert est.tau_hat == pytest.approx(5.0)
        assert est.dbar_plus == 0.5 and est.dbar_minus == 0.0


class TestNeyman:
    def test_hand_se(self):
        s = make_sample([-0.6, -0.3, 0.2, 0.5], [1.0, 3.0, 4.0, 6.0])
        res = neyman_ci(s, window_all(s))
        # s2 = 2 in both groups: se = sqrt(2/2 + 2/2) = sqrt(2)
        assert res.se == pytest.approx(np.sqrt(2.0), abs=1e-12)
        assert res.estimate.tau_hat == pytest.approx(3.0)
        lo, hi = res.ci
        assert lo == pytest.approx(3.0 - 1.959963984540054 * np.sqrt(2))
        assert hi == pytest.approx(3.0 + 1.959963984540054 * np.sqrt(2))
        assert not res.degenerate_variance

    def test_degenerate_variance_flagged(self):
        s = make_sample([-0.6, -0.3, 0.2, 0.5], [2.0, 2.0, 4.0, 6.0])
        res = neyman_ci(s, window_all(s))
        assert res.degenerate_variance
        assert res.se == pytest.approx(np.sqrt(2.0 / 2.0))

    def test_two_per_group_floor(self):
        s = make_sample([-0.3, 0.2, 0.5], [1.0, 2.0, 3.0])
        with pytest.raises(TooFewObservations):
            neyman_ci(s, window_all(s))


class TestFisherCi:
    def test_constant_effect_recovered(self):
        # noiseless constant shift tau = 1.5: the only accepted taus
        # should hug 1.5
        rng = np.random.default_rng(6)
        base = rng.normal(0, 1, 8)
        x = np.r_[np.full(4, -0.5), np.full(4, 0.5)]
        y = np.r_[base[:4], base[4:] * 0 + 1.5]  # exact shift, no noise
        y = np.r_[np.zeros(4), np.full(4, 1.5)]
        s = make_sample(x, y)
        ci = fisher_ci(s, window_all(s), alpha=0.2)
        assert ci.lower is not None and ci.upper is not None
        assert ci.lower <= 1.5 <= ci.upper
        assert not ci.empty

    def test_grid_and_pvalues_exposed(self):
        rng = np.random.default_rng(9)
        x = np.r_[-rng.uniform(0.1, 1, 6), rng.uniform(0.1, 1, 6)]
        y = rng.normal(0, 1, 12) + (x > 0) * 2.0
        s = make_sample(x, y)
        ci = fisher_ci(s, window_all(s), tau_grid=np.linspace(0, 4, 41))
        assert ci.grid.shape == (41,)
        assert ci.p_values.shape == (41,)
        assert ci.convex in (True, False)

    def test_far_away_grid_is_empty(self):
        rng = np.random.default_rng(9)
        x = np.r_[-rng.uniform(0.1, 1, 8), rng.uniform(0.1, 1, 8)]
        y = rng.normal(0, 0.1, 16)
        s = make_sample(x, y)
        ci = fisher_ci(s, window_all(s), tau_grid=np.linspace(50, 60, 11))
        assert ci.empty
        assert ci.lower is None and ci.upper is None


def balance_data(n=240, jump_at=0.5, seed=10):
    """Covariate continuous inside |x|<jump_at, shifted outside."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.5, 1.5, n)
    z = rng.normal(0, 0.3, n) + 5.0 * (np.abs(x) >= jump_at) * np.sign(x)
    y = rng.normal(0, 1, n)
    return make_sample(x, y, covariates={"z": z})


class TestSelectWindow:
    def test_balanced_region_selected(self):
        s = balance_data()
        sel = select_window(s, candidates=[0.25, 0.5, 0.75, 1.0, 1.25],
                            seed=3)
        assert not sel.no_balanced_window
        assert 0.25 <= sel.w_left <= 0.75
        assert sel.window.n_plus + sel.window.n_minus == sel.window.n_w

    def test_trace_covers_all_candidates(self):
        s = balance_data()
        sel = select_window(s, candidates=[0.25, 0.5, 0.75], seed=3)
        assert len(sel.trace) == 3
        widths = [row.w_left for row in sel.trace]
        assert widths == sorted(widths)
        for row in sel.trace:
            assert dict(row.p_values).keys() == {"z"}

    def test_no_balanced_window_falls_back_to_smallest(self):
        # covariate jumps right at the cutoff: nothing balances
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, 400)
        z = (x >= 0) * 8.0 + rng.normal(0, 0.1, 400)
        s = make_sample(x, rng.normal(0, 1, 400), covariates={"z": z})
        sel = select_window(s, candidates=[0.3, 0.6, 0.9], seed=1)
        assert sel.no_balanced_window
        assert sel.w_left == 0.3

    def test_infeasible_candidates_skipped(self):
        s = balance_data(n=60)
        sel = select_window(s, candidates=[0.001, 0.5, 1.0], seed=4)
        assert not sel.trace[0].feasible
        assert sel.trace[0].passed is False
        assert sel.w_left >= 0.5

    def test_nan_covariate_shrinks_feasibility(self):
        # z observed only where |x| >= 0.5: narrow windows have no
        # complete-case data, so the first feasible candidate is wide
        rng = np.random.default_rng(5)
        x = rng.uniform(-1.5, 1.5, 300)
        z = rng.normal(0, 1.0, 300)
        z[np.abs(x) < 0.5] = np.nan
        s = make_sample(x, rng.normal(0, 1, 300), covariates={"z": z})
        sel = select_window(s, candidates=[0.25, 1.0], seed=5)
        assert sel.trace[0].feasible is False
        assert sel.trace[1].feasible is True
        assert sel.w_left == 1.0

    def test_nothing_feasible_raises(self):
        from rdtoolkit.errors import NoFeasibleWindow
        s = balance_data(n=200)
        z = np.full(200, np.nan)
        s2 = make_sample(s.score, s.outcome, covariates={"z": z})
        with pytest.raises(NoFeasibleWindow):
            select_window(s2, candidates=[0.5], seed=5)

    def test_determinism(self):
        s = balance_data()
        a = select_window(s, candidates=[0.25, 0.5, 1.0], seed=11)
        b = select_window(s, candidates=[0.25, 0.5, 1.0], seed=11)
        assert a == b

    def test_statistic_variants_run(self):
        s = balance_data()
        for statistic in ("diff_means", "studentized"):
            res = fisher_pvalue(s.replace_outcome(s.covariates["z"]),
                                make_window(s, 0.5), statistic=statistic,
                                max_exhaustive=200, draws=299, seed=0)
            assert 0 <= res.p_value <= 1
        with pytest.raises(ValueError):
            fisher_pvalue(s, make_window(s, 0.5), statistic="rank_sum")

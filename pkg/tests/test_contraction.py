import itertools
import math

import numpy as np
import pytest

from cldp.channels import PrivacyBudget, make_rr_channel
from cldp.contraction import (
    MarginalTVTable,
    channel_fl_epsilons,
    cldp_kl_bound,
    equal_marginals_bound,
    f_divergence_bound,
    run_contraction_sweep,
    tensorized_bound,
    verify_contraction,
)
from cldp.measures import DiscreteDist, SubsetIndex, divergence, nonempty_subsets


def table_d2(t1, t2, t12):
    return MarginalTVTable(
        2, {SubsetIndex([1]): t1, SubsetIndex([2]): t2, SubsetIndex([1, 2]): t12}
    )


class TestKLBound:
    def test_zero_tvs(self):
        assert cldp_kl_bound(table_d2(0, 0, 0), PrivacyBudget([0.3, 0.9])) == 0.0

    def test_d2_expansion_identity(self):
        # hand expansion of the two-axis bound
        a1, a2 = 0.5, 0.5
        t1, t2, t12 = 0.2, 0.3, 0.4
        e1, e2 = math.expm1(a1), math.expm1(a2)
        by_hand = (e1 * t1 + e2 * t2 + e1 * e2 * t12) ** 2
        got = cldp_kl_bound(table_d2(t1, t2, t12), PrivacyBudget([a1, a2]))
        assert got == pytest.approx(by_hand, abs=1e-12)

    def test_binomial_collapse(self):
        # equal alphas and all-equal tvs entries t collapse to ((e^(a d) - 1) t)^2
        for d in (2, 3):
            alpha, t = 0.4, 0.15
            tvs = MarginalTVTable(d, {S: t for S in nonempty_subsets(d)})
            got = cldp_kl_bound(tvs, PrivacyBudget([alpha] * d))
            assert got == pytest.approx((math.expm1(alpha * d) * t) ** 2, rel=1e-12)

    def test_monotone_in_entries_and_alphas(self):
        base = cldp_kl_bound(table_d2(0.2, 0.3, 0.4), PrivacyBudget([0.5, 0.5]))
        assert cldp_kl_bound(table_d2(0.25, 0.3, 0.4), PrivacyBudget([0.5, 0.5])) >= base
        assert cldp_kl_bound(table_d2(0.2, 0.3, 0.4), PrivacyBudget([0.6, 0.5])) >= base

    def test_missing_entry_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            MarginalTVTable(2, {SubsetIndex([1]): 0.1})


class TestEqualMarginalsBound:
    def test_zero(self):
        assert equal_marginals_bound(0.0, PrivacyBudget([1.0, 1.0])) == 0.0

    def test_direct_value(self):
        got = equal_marginals_bound(0.1, PrivacyBudget([1.0, 1.0]))
        assert got == pytest.approx(((math.e - 1) ** 2 * 0.1) ** 2, rel=1e-12)

    def test_coincides_with_full_bound_when_strict_subsets_vanish(self):
        budget = PrivacyBudget([0.7, 0.4])
        assert equal_marginals_bound(0.3, budget) == pytest.approx(
            cldp_kl_bound(table_d2(0.0, 0.0, 0.3), budget), rel=1e-12
        )


class TestTensorizedBound:
    def test_n1_reduces_to_single(self):
        assert tensorized_bound(0.37, 1) == pytest.approx(0.37**2)

    def test_identical_terms_scale_linearly(self):
        assert tensorized_bound(0.2, 10) == pytest.approx(10 * 0.04)
        assert tensorized_bound([0.2] * 10, 10) == pytest.approx(10 * 0.04)

    def test_heterogeneous_matches_loop_oracle(self):
        rng = np.random.default_rng(8)
        terms = rng.uniform(0, 1, size=7)
        expected = 0.0
        for t in terms:
            expected += t * t
        assert tensorized_bound(list(terms), 7) == pytest.approx(expected, rel=1e-14)

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            tensorized_bound([0.1, 0.2], 3)


class TestFDivergenceBound:
    def test_zero_tvs(self):
        assert f_divergence_bound(table_d2(0, 0, 0), [0.5, 0.5], 2.0) == 0.0

    def test_d1_reduction(self):
        tvs = MarginalTVTable(1, {SubsetIndex([1]): 0.3})
        assert f_divergence_bound(tvs, [0.7], 1.5) == pytest.approx((0.7 * 0.3) ** 1.5)

    def test_matches_subset_enumeration_oracle(self):
        rng = np.random.default_rng(9)
        d = 3
        tvs = MarginalTVTable(d, {S: float(rng.uniform(0, 1)) for S in nonempty_subsets(d)})
        eps = rng.uniform(0, 2, size=d)
        l = 2.5
        # independent oracle: explicit loop over index subsets
        total = 0.0
        for size in range(1, d + 1):
            for combo in itertools.combinations(range(1, d + 1), size):
                prod = 1.0
                for j in combo:
                    prod *= eps[j - 1]
                total += prod * tvs[SubsetIndex(combo)]
        assert f_divergence_bound(tvs, eps, l) == pytest.approx(total**l, rel=1e-12)

    def test_l_must_exceed_one(self):
        with pytest.raises(ValueError):
            f_divergence_bound(table_d2(0.1, 0.1, 0.1), [0.5, 0.5], 1.0)


class TestVerifyContraction:
    def test_identical_priors(self):
        P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], np.full((2, 2), 0.25))
        chans = [make_rr_channel((0.0, 1.0), 0.5) for _ in range(2)]
        rep = verify_contraction(P, P, chans, l_values=(2.0,))
        assert rep.lhs_jeffreys == 0.0
        assert rep.rhs == 0.0
        assert not rep.violation
        assert not rep.f_checks[0].violation

    def test_equal_marginals_case_matches_reduced_bound(self):
        # two binary priors with matching one-dim marginals
        P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], [[0.3, 0.2], [0.2, 0.3]])
        Pt = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], [[0.25, 0.25], [0.25, 0.25]])
        budget = PrivacyBudget([0.5, 0.5])
        chans = [make_rr_channel((0.0, 1.0), 0.5) for _ in range(2)]
        rep = verify_contraction(P, Pt, chans)
        from cldp.measures import tv_distance

        assert rep.rhs == pytest.approx(
            equal_marginals_bound(tv_distance(P, Pt), budget), rel=1e-12
        )
        assert rep.lhs_jeffreys <= rep.rhs + 1e-9

    def test_epsilons_exhaustive(self):
        ch = make_rr_channel((0.0, 1.0, 2.0), 0.8)
        eps = channel_fl_epsilons([ch], 2.0)
        # oracle: direct max over ordered row pairs of the chi-square-style sum
        t = ch.transition_table
        worst = 0.0
        for a in range(3):
            for b in range(3):
                if a != b:
                    worst = max(worst, float(np.sum(t[a] * (t[b] / t[a] - 1.0) ** 2)))
        assert eps[0] == pytest.approx(worst**0.5, rel=1e-12)

    def test_sweep_no_violations(self):
        report = run_contraction_sweep(instances=100, seed=3)
        assert report["violations"] == 0

    def test_tensorization_on_product_laws(self):
        # the two-sample product law's divergence is exactly twice the
        # single-sample value and stays below the tensorized bound
        rng = np.random.default_rng(12)
        sup = [np.array([0.0, 1.0])] * 2
        raw1 = rng.gamma(1.0, 1.0, size=(2, 2)) + 0.05
        raw2 = rng.gamma(1.0, 1.0, size=(2, 2)) + 0.05
        P = DiscreteDist(sup, raw1 / raw1.sum())
        Pt = DiscreteDist(sup, raw2 / raw2.sum())
        alphas = (0.6, 0.9)
        chans = [make_rr_channel((0.0, 1.0), a) for a in alphas]
        from cldp.measures import pushforward

        single = divergence(pushforward(P, chans), pushforward(Pt, chans), "jeffreys")
        # two iid samples: 4-axis product law through the repeated channels
        P2 = DiscreteDist(sup * 2, np.tensordot(P.probs, P.probs, axes=0))
        Pt2 = DiscreteDist(sup * 2, np.tensordot(Pt.probs, Pt.probs, axes=0))
        pair = divergence(pushforward(P2, chans * 2), pushforward(Pt2, chans * 2), "jeffreys")
        assert pair == pytest.approx(2.0 * single, rel=1e-10)
        budget = PrivacyBudget(alphas)
        tvs = MarginalTVTable.from_dists(P, Pt)
        inner = math.sqrt(cldp_kl_bound(tvs, budget))
        assert pair <= tensorized_bound(inner, 2) + 1e-9

    def test_sweep_deterministic(self):
        a = run_contraction_sweep(instances=5, seed=5)
        b = run_contraction_sweep(instances=5, seed=5)
        assert a == b

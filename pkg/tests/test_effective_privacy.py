import itertools
import math

import numpy as np
import pytest

from cldp.channels import make_rr_channel
from cldp.effective_privacy import (
    audit_marginal_leakage,
    conditional_release_density,
    delta_ind,
    effective_level,
    leakage_report,
    misprediction_floor,
)
from cldp.harness import derive_rng
from cldp.measures import DiscreteDist


def product_dist():
    p1 = np.array([0.4, 0.6])
    p2 = np.array([0.7, 0.3])
    return DiscreteDist([[0.0, 1.0], [0.0, 1.0]], np.outer(p1, p2))


def copy_dist():
    return DiscreteDist([[0.0, 1.0], [0.0, 1.0]], [[0.5, 0.0], [0.0, 0.5]])


def mixture_dist(rho):
    # rho * (perfect copy) + (1 - rho) * (independent uniform)
    copy = np.array([[0.5, 0.0], [0.0, 0.5]])
    indep = np.full((2, 2), 0.25)
    return DiscreteDist([[0.0, 1.0], [0.0, 1.0]], rho * copy + (1 - rho) * indep)


class TestDeltaInd:
    def test_product_is_zero(self):
        assert delta_ind(product_dist()) == pytest.approx(0.0, abs=1e-15)

    def test_copy_is_two(self):
        assert delta_ind(copy_dist()) == pytest.approx(2.0)

    def test_mixture_matches_pairwise_enumeration(self):
        for rho in (0.0, 0.3, 0.8, 1.0):
            P = mixture_dist(rho)
            # oracle: loop over conditioning pairs
            m1 = P.probs.sum(axis=1)
            worst = 0.0
            for a, b in itertools.combinations(range(2), 2):
                worst = max(
                    worst, np.abs(P.probs[a] / m1[a] - P.probs[b] / m1[b]).sum()
                )
            assert delta_ind(P) == pytest.approx(worst, abs=1e-14)
            assert delta_ind(P) == pytest.approx(2.0 * rho / (rho + (1 - rho)), abs=1e-12)

    def test_zero_mass_conditioning_rejected(self):
        P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], [[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(ValueError, match="zero-mass"):
            delta_ind(P)

    def test_axis_relabel_symmetry(self):
        rng = derive_rng(31, 0)
        raw = rng.gamma(1.0, 1.0, size=(2, 2, 2)) + 0.05
        P = DiscreteDist([[0.0, 1.0]] * 3, raw / raw.sum())
        swapped = DiscreteDist([[0.0, 1.0]] * 3, np.swapaxes(raw / raw.sum(), 1, 2))
        assert delta_ind(P) == pytest.approx(delta_ind(swapped), abs=1e-14)


class TestEffectiveLevel:
    def test_independence_collapses(self):
        prof = effective_level(0.7, 1.2, 4, 0.0)
        assert prof.effective_alpha == pytest.approx(0.7)

    def test_single_axis(self):
        prof = effective_level(0.7, 9.0, 1, 2.0)
        assert prof.effective_alpha == pytest.approx(0.7)

    def test_direct_arithmetic(self):
        prof = effective_level(0.5, 0.5, 3, 2.0)
        assert prof.effective_alpha == pytest.approx(2.5)

    def test_delta_range_enforced(self):
        with pytest.raises(ValueError):
            effective_level(0.5, 0.5, 2, 2.5)


class TestMispredictionFloor:
    def test_values(self):
        assert misprediction_floor(0.0) == pytest.approx(0.5)
        assert misprediction_floor(math.log(3.0)) == pytest.approx(0.25)

    def test_monotone_to_zero(self):
        grid = np.linspace(0, 20, 50)
        vals = [misprediction_floor(a) for a in grid]
        assert all(x > y for x, y in zip(vals, vals[1:]))
        assert vals[-1] < 1e-8


class TestAuditLeakage:
    def test_independent_components_leak_only_own_channel(self):
        P = product_dist()
        chans = [make_rr_channel((0.0, 1.0), a) for a in (0.6, 1.4)]
        sup = audit_marginal_leakage(P, chans, 0.0, 1.0)
        # side channel uninformative: equals the channel-1 row ratio
        t = chans[0].transition_table
        expected = max(t[0, 0] / t[1, 0], t[0, 1] / t[1, 1])
        assert sup == pytest.approx(expected, rel=1e-12)
        assert sup <= math.exp(0.6) * (1 + 1e-9)

    def test_fully_dependent_bounded_by_sum(self):
        P = copy_dist()
        a1, a2 = 0.5, 0.8
        chans = [make_rr_channel((0.0, 1.0), a) for a in (a1, a2)]
        sup = audit_marginal_leakage(P, chans, 0.0, 1.0)
        assert sup <= math.exp(a1 + 2.0 * a2) * (1 + 1e-9)

    def test_random_instances_never_violate(self):
        violations = 0
        for i in range(50):
            rng = derive_rng(77, i)
            raw = rng.gamma(1.0, 1.0, size=(2, 2)) + 1e-3
            P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], raw / raw.sum())
            alphas = rng.uniform(0.1, 1.5, size=2)
            chans = [make_rr_channel((0.0, 1.0), float(a)) for a in alphas]
            rep = leakage_report(P, chans)
            violations += int(rep["violation"])
        assert violations == 0

    def test_bayes_floor_by_rule_enumeration(self):
        # every binary decision rule on the 2x2 release alphabet errs at least
        # 1/(1 + audited sup) on average
        P = mixture_dist(0.6)
        chans = [make_rr_channel((0.0, 1.0), a) for a in (0.7, 0.9)]
        sup = audit_marginal_leakage(P, chans, 0.0, 1.0)
        m0 = conditional_release_density(P, chans, 0.0).ravel()
        m1 = conditional_release_density(P, chans, 1.0).ravel()
        floor = 1.0 / (1.0 + sup)
        best = math.inf
        for bits in itertools.product((0, 1), repeat=m0.size):
            rule = np.array(bits)
            err = 0.5 * m0[rule == 1].sum() + 0.5 * m1[rule == 0].sum()
            best = min(best, err)
        assert best >= floor - 1e-12
        # and the MAP rule attains the minimum over all rules
        assert best == pytest.approx(0.5 * np.minimum(m0, m1).sum(), abs=1e-12)

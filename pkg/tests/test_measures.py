import math

import numpy as np
import pytest

from cldp.channels import make_constant_channel, make_identity_channel, make_rr_channel
from cldp.measures import (
    DiscreteDist,
    SubsetIndex,
    divergence,
    marginal,
    nonempty_subsets,
    pushforward,
    tv_distance,
)


def bern(p, support=(0.0, 1.0)):
    return DiscreteDist([list(support)], [1.0 - p, p])


def rand_dist(rng, sizes):
    supports = [np.sort(rng.normal(size=s)) for s in sizes]
    raw = rng.gamma(1.0, 1.0, size=tuple(sizes))
    return DiscreteDist(supports, raw / raw.sum())


class TestDiscreteDist:
    def test_normalizes_small_drift(self):
        d = DiscreteDist([[0.0, 1.0]], [0.5, 0.5 + 5e-10])
        assert abs(d.probs.sum() - 1.0) <= 1e-12

    def test_rejects_large_drift(self):
        with pytest.raises(ValueError, match="sum"):
            DiscreteDist([[0.0, 1.0]], [0.5, 0.6])

    def test_rejects_negative_mass(self):
        with pytest.raises(ValueError, match="negative"):
            DiscreteDist([[0.0, 1.0]], [1.1, -0.1])

    def test_rejects_unsorted_support(self):
        with pytest.raises(ValueError, match="increasing"):
            DiscreteDist([[1.0, 0.0]], [0.5, 0.5])

    def test_json_roundtrip(self):
        rng = np.random.default_rng(0)
        d = rand_dist(rng, [2, 3])
        back = DiscreteDist.from_json(d.to_json())
        assert back.same_support(d)
        assert np.allclose(back.probs, d.probs, atol=1e-15)

    def test_immutable(self):
        d = bern(0.5)
        with pytest.raises(AttributeError):
            d.probs = None
        with pytest.raises(ValueError):
            d.probs[0] = 0.3


class TestMarginal:
    def test_uniform_square_axis1(self):
        P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], np.full((2, 2), 0.25))
        m = marginal(P, SubsetIndex([1]))
        assert np.allclose(m.probs, [0.5, 0.5])

    def test_diagonal_axis2(self):
        P = DiscreteDist([[0.0, 1.0], [0.0, 1.0]], [[0.5, 0.0], [0.0, 0.5]])
        m = marginal(P, [2])
        assert np.allclose(m.probs, [0.5, 0.5])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(1)
        P = rand_dist(rng, [3, 3, 3])
        m = marginal(P, [1, 3])
        # independent brute-force summation
        expected = np.zeros((3, 3))
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    expected[i, k] += P.probs[i, j, k]
        assert np.allclose(m.probs, expected, atol=1e-15)
        assert np.array_equal(m.supports[0], P.supports[0])
        assert np.array_equal(m.supports[1], P.supports[2])

    def test_empty_subset_rejected(self):
        P = bern(0.5)
        with pytest.raises(ValueError, match="empty marginal"):
            marginal(P, [])

    def test_out_of_range_axis(self):
        P = bern(0.5)
        with pytest.raises(ValueError, match="out of range"):
            marginal(P, [2])


class TestTV:
    def test_identity(self):
        P = bern(0.3)
        assert tv_distance(P, P) == 0.0

    def test_disjoint_masses(self):
        P = DiscreteDist([[0.0, 1.0]], [1.0, 0.0])
        Q = DiscreteDist([[0.0, 1.0]], [0.0, 1.0])
        assert tv_distance(P, Q) == 2.0

    def test_bernoulli_value(self):
        # |0.5-0.75| + |0.5-0.25| = 0.5 under the unnormalized convention
        assert tv_distance(bern(0.5), bern(0.75)) == pytest.approx(0.5, abs=1e-15)

    def test_mismatched_supports(self):
        with pytest.raises(ValueError, match="supports"):
            tv_distance(bern(0.5), bern(0.5, support=(0.0, 2.0)))

    def test_metric_properties_random(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            sizes = [int(rng.integers(2, 4))]
            sup = [np.sort(rng.normal(size=sizes[0]))]
            dists = []
            for _ in range(3):
                raw = rng.gamma(1.0, 1.0, size=sizes[0])
                dists.append(DiscreteDist(sup, raw / raw.sum()))
            P, Q, R = dists
            assert tv_distance(P, Q) == pytest.approx(tv_distance(Q, P), abs=1e-15)
            assert tv_distance(P, Q) <= tv_distance(P, R) + tv_distance(R, Q) + 1e-12
            assert tv_distance(P, P) == 0.0


class TestDivergence:
    def test_zero_on_identical(self):
        P = bern(0.3)
        for kind, l in (("kl", None), ("jeffreys", None), ("fl", 2.0)):
            assert divergence(P, P, kind, l=l) == pytest.approx(0.0, abs=1e-15)

    def test_kl_bernoulli_hand_value(self):
        # 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75), computed by hand
        expected = 0.5 * math.log(2.0) + 0.5 * math.log(2.0 / 3.0)
        assert divergence(bern(0.5), bern(0.25), "kl") == pytest.approx(expected, rel=1e-14)

    def test_f2_matches_chi_square_sum(self):
        P, Q = bern(0.5), bern(0.25)
        expected = (0.5 - 0.75) ** 2 / 0.75 + (0.5 - 0.25) ** 2 / 0.25
        assert divergence(P, Q, "fl", l=2.0) == pytest.approx(expected, rel=1e-14)

    def test_absolute_continuity_violation(self):
        P = DiscreteDist([[0.0, 1.0]], [0.5, 0.5])
        Q = DiscreteDist([[0.0, 1.0]], [1.0, 0.0])
        with pytest.raises(ValueError, match="divergence undefined"):
            divergence(P, Q, "kl")
        with pytest.raises(ValueError, match="divergence undefined"):
            divergence(P, Q, "fl", l=2.0)

    def test_fl_requires_l_above_one(self):
        P = bern(0.5)
        with pytest.raises(ValueError, match="l > 1"):
            divergence(P, bern(0.4), "fl", l=1.0)

    def test_jeffreys_dominates_both_kls(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            raw1 = rng.gamma(1.0, 1.0, size=3) + 0.05
            raw2 = rng.gamma(1.0, 1.0, size=3) + 0.05
            sup = [np.array([-1.0, 0.0, 1.0])]
            P = DiscreteDist(sup, raw1 / raw1.sum())
            Q = DiscreteDist(sup, raw2 / raw2.sum())
            j = divergence(P, Q, "jeffreys")
            assert j >= divergence(P, Q, "kl") - 1e-15
            assert j >= divergence(Q, P, "kl") - 1e-15


class TestPushforward:
    def test_identity_channels(self):
        rng = np.random.default_rng(4)
        P = rand_dist(rng, [2, 3])
        chans = [make_identity_channel(tuple(s)) for s in P.supports]
        M = pushforward(P, chans)
        assert np.allclose(M.probs, P.probs, atol=1e-15)

    def test_rr_full_flip_gives_uniform(self):
        # alpha=0 randomized response outputs uniformly regardless of the prior
        P = bern(0.9)
        M = pushforward(P, [make_rr_channel((0.0, 1.0), 0.0)])
        assert np.allclose(M.probs, [0.5, 0.5], atol=1e-15)

    def test_matches_exhaustive_enumeration_oracle(self):
        rng = np.random.default_rng(5)
        P = rand_dist(rng, [2, 2])
        c1 = make_rr_channel(tuple(P.supports[0]), 0.7)
        c2 = make_rr_channel(tuple(P.supports[1]), 1.1)
        M = pushforward(P, [c1, c2])
        expected = np.zeros((2, 2))
        for x1 in range(2):
            for x2 in range(2):
                for z1 in range(2):
                    for z2 in range(2):
                        expected[z1, z2] += (
                            P.probs[x1, x2]
                            * c1.transition_table[x1, z1]
                            * c2.transition_table[x2, z2]
                        )
        assert np.allclose(M.probs, expected, atol=1e-15)

    def test_continuous_channel_rejected(self):
        from cldp.channels import LaplaceTruncChannel

        P = bern(0.5)
        with pytest.raises(ValueError, match="finite output"):
            pushforward(P, [LaplaceTruncChannel(T=1.0, alpha=0.5)])

    def test_data_processing_inequality(self):
        rng = np.random.default_rng(6)
        for _ in range(40):
            sup = [np.sort(rng.normal(size=3))]
            raw1 = rng.gamma(1.0, 1.0, size=3) + 0.02
            raw2 = rng.gamma(1.0, 1.0, size=3) + 0.02
            P = DiscreteDist(sup, raw1 / raw1.sum())
            Q = DiscreteDist(sup, raw2 / raw2.sum())
            ch = [make_rr_channel(tuple(sup[0]), float(rng.uniform(0.1, 2.0)))]
            assert divergence(pushforward(P, ch), pushforward(Q, ch), "kl") <= divergence(
                P, Q, "kl"
            ) + 1e-12

    def test_marginal_commutes_with_pushforward(self):
        rng = np.random.default_rng(7)
        P = rand_dist(rng, [2, 3, 2])
        chans = [make_rr_channel(tuple(s), 0.5 + 0.2 * i) for i, s in enumerate(P.supports)]
        for S in nonempty_subsets(3):
            left = marginal(pushforward(P, chans), S)
            right = pushforward(marginal(P, S), [chans[j - 1] for j in S])
            assert left.same_support(right)
            assert np.allclose(left.probs, right.probs, atol=1e-14)

import math

import numpy as np
import pytest

from cldp.channels import (
    KernelFn,
    KernelLaplaceChannel,
    LaplaceTruncChannel,
    MultiBandwidthChannel,
    MultiTruncChannel,
    PrivacyBudget,
    channel_from_json,
    channel_to_json,
    compose_ldp_level,
    kernel_order,
    make_constant_channel,
    make_kernel,
    make_rr_channel,
    privacy_audit,
    privatize,
    validate_kernel,
)
from cldp.harness import ZeroNoiseRng, derive_rng


def zero_rng():
    return ZeroNoiseRng(np.random.default_rng(0))


class TestPrivacyBudget:
    def test_accessors(self):
        b = PrivacyBudget([0.5, 1.0])
        assert np.allclose(b.exp_minus_one(), [math.e**0.5 - 1, math.e - 1])
        assert b.total() == 1.5
        assert b.prod_alpha_sq() == pytest.approx(0.25)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            PrivacyBudget([-0.1])

    def test_compose_ldp_level(self):
        assert compose_ldp_level(PrivacyBudget([0.0, 0.0])) == 0.0
        assert compose_ldp_level(PrivacyBudget([0.5, 0.5])) == pytest.approx(1.0)


class TestKernels:
    @pytest.mark.parametrize("order", [0, 1, 2, 3, 4])
    def test_moment_conditions(self, order):
        k = make_kernel(order)
        validate_kernel(k, tol=1e-8)

    def test_order_two_closed_form(self):
        # solving the moment system by hand gives 9/8 - 15/8 x^2
        k = make_kernel(2)
        xs = np.linspace(-1, 1, 11)
        assert np.allclose(k(xs), 9.0 / 8.0 - 15.0 / 8.0 * xs**2, atol=1e-12)
        assert k.kappa == pytest.approx(9.0 / 8.0, rel=1e-12)

    def test_kernel_order_strict_floor(self):
        # the smoothness class controls derivatives strictly below beta
        assert kernel_order(2.0) == 1
        assert kernel_order(2.5) == 2
        assert kernel_order(1.0) == 0
        assert kernel_order(3.0) == 2

    def test_support_clipped(self):
        k = make_kernel(2)
        assert k(1.5) == 0.0


class TestPrivatize:
    def test_clamp_forces_boundary(self):
        ch = LaplaceTruncChannel(T=2.0, alpha=1.0)
        assert privatize(ch, 5.0, zero_rng()) == 2.0
        assert privatize(ch, -7.0, zero_rng()) == -2.0

    def test_kernel_release_zero_noise(self):
        # K(0) = 1 triangular kernel: release is (1/h) K(0) = 2 at h = 0.5
        tri = KernelFn(order=1, kappa=1.0, eval_fn=lambda u: 1.0 - np.abs(u))
        ch = KernelLaplaceChannel(h=0.5, x0=0.3, kernel=tri, alpha=1.0)
        assert privatize(ch, 0.3, zero_rng()) == pytest.approx(2.0)

    def test_nonfinite_input_rejected(self):
        ch = LaplaceTruncChannel(T=1.0, alpha=1.0)
        with pytest.raises(ValueError, match="finite"):
            privatize(ch, float("nan"), zero_rng())

    def test_construction_errors(self):
        with pytest.raises(ValueError):
            LaplaceTruncChannel(T=0.0, alpha=1.0)
        with pytest.raises(ValueError):
            KernelLaplaceChannel(h=1.0, x0=0.0, kernel=make_kernel(1), alpha=1.0)

    def test_laplace_variance_identity(self):
        # var of the T=1, alpha=1 release at x=0 is 2 (2T/alpha)^2 = 8
        ch = LaplaceTruncChannel(T=1.0, alpha=1.0)
        rng = derive_rng(123, 1)
        zs = ch.privatize_array(np.zeros(1_000_000), rng)
        assert zs.var() == pytest.approx(8.0, rel=0.02)

    def test_noise_centering(self):
        ch = LaplaceTruncChannel(T=1.0, alpha=1.0)
        rng = derive_rng(124, 1)
        zs = ch.privatize_array(np.zeros(1_000_000), rng)
        sigma = math.sqrt(8.0)
        assert abs(zs.mean()) <= 4.0 * sigma / math.sqrt(zs.size)

    def test_identical_stream_identical_release(self):
        ch = LaplaceTruncChannel(T=1.0, alpha=0.7)
        a = privatize(ch, 0.4, derive_rng(7, 1, 2))
        b = privatize(ch, 0.4, derive_rng(7, 1, 2))
        assert a == b

    def test_multi_trunc_release_shape_and_levels(self):
        ch = MultiTruncChannel(grid=(4.0, 2.0, 1.0), alpha=0.9)
        assert ch.beta_n == pytest.approx(0.3)
        out = privatize(ch, 3.0, zero_rng())
        assert np.allclose(out, [3.0, 2.0, 1.0])

    def test_multi_level_independence(self):
        ch = MultiTruncChannel(grid=(4.0, 2.0, 1.0), alpha=0.9)
        rng = derive_rng(42, 5)
        zs = ch.privatize_array(np.zeros(200_000), rng)
        noise = zs / (2.0 * np.asarray(ch.grid) / ch.beta_n)
        corr = np.corrcoef(noise.T)
        off = corr[~np.eye(3, dtype=bool)]
        assert np.max(np.abs(off)) < 0.01

    def test_beta_n_consistency_enforced(self):
        with pytest.raises(ValueError, match="beta_n"):
            MultiTruncChannel(grid=(4.0, 2.0), alpha=0.9, beta_n=0.2)


class TestAudit:
    def test_constant_channel_ratio_one(self):
        ch = make_constant_channel((0.0, 1.0, 2.0))
        assert privacy_audit(ch).max_ratio == pytest.approx(1.0)

    def test_laplace_trunc_exact(self):
        ch = LaplaceTruncChannel(T=1.0, alpha=0.8)
        res = privacy_audit(ch, x_grid=[-1.0, 0.0, 1.0], z_grid=[-1.0, 0.0, 1.0])
        assert res.max_ratio == pytest.approx(math.exp(0.8), rel=1e-12)

    def test_laplace_trunc_default_grids_exact(self):
        for T, alpha in [(0.5, 0.3), (2.0, 1.2), (7.0, 0.05)]:
            res = privacy_audit(LaplaceTruncChannel(T=T, alpha=alpha))
            bound = math.exp(alpha)
            assert bound * (1 - 1e-6) <= res.max_ratio <= bound * (1 + 1e-9)

    def test_kernel_laplace_within_bound(self):
        # the release range spans |K_max - K_min| <= 2 kappa, so the audited
        # leakage sits at exp(alpha |K_max - K_min| / (2 kappa)) <= e^alpha
        ch = KernelLaplaceChannel(h=0.25, x0=0.0, kernel=make_kernel(1), alpha=0.6)
        res = privacy_audit(ch)
        assert res.max_ratio <= math.exp(0.6) * (1 + 1e-9)
        assert res.max_ratio == pytest.approx(math.exp(0.3), rel=1e-9)

    def test_multi_trunc_joint_ratio_at_level_alpha(self):
        ch = MultiTruncChannel(grid=(4.0, 2.0, 1.0), alpha=0.9)
        res = privacy_audit(ch)
        bound = math.exp(0.9)
        assert res.max_ratio <= bound * (1 + 1e-9)
        assert res.max_ratio >= bound * (1 - 1e-6)

    def test_multi_bandwidth_within_bound(self):
        ch = MultiBandwidthChannel(grid=(0.25, 0.5, 1.0), alpha=0.7, x0=0.0, kernel=make_kernel(1))
        res = privacy_audit(ch)
        assert res.max_ratio <= math.exp(0.7) * (1 + 1e-9)

    def test_product_channel_attains_sum_level(self):
        chans = [LaplaceTruncChannel(T=1.0, alpha=0.4), LaplaceTruncChannel(T=2.0, alpha=0.9)]
        joint = np.prod([privacy_audit(c).max_ratio for c in chans])
        assert joint == pytest.approx(math.exp(1.3), rel=1e-9)


class TestRandomizedResponse:
    def test_stay_probability(self):
        ch = make_rr_channel((0.0, 1.0), math.log(3.0))
        assert ch.transition_table[0, 0] == pytest.approx(0.75)

    def test_zero_alpha_uniform(self):
        ch = make_rr_channel((0.0, 1.0), 0.0)
        assert np.allclose(ch.transition_table, 0.5)

    def test_three_symbols_audit(self):
        ch = make_rr_channel((0.0, 1.0, 2.0), 1.0)
        assert np.allclose(ch.transition_table.sum(axis=1), 1.0, atol=1e-12)
        assert privacy_audit(ch).max_ratio == pytest.approx(math.e, rel=1e-12)

    def test_small_alphabet_rejected(self):
        with pytest.raises(ValueError):
            make_rr_channel((0.0,), 1.0)

    def test_sampling_deterministic(self):
        ch = make_rr_channel((0.0, 1.0, 2.0), 0.5)
        a = [privatize(ch, 1.0, derive_rng(9, i)) for i in range(20)]
        b = [privatize(ch, 1.0, derive_rng(9, i)) for i in range(20)]
        assert a == b


class TestSerialization:
    def test_roundtrip_all_variants(self):
        chans = [
            LaplaceTruncChannel(T=1.5, alpha=0.4),
            KernelLaplaceChannel(h=0.3, x0=0.1, kernel=make_kernel(2), alpha=0.8),
            MultiTruncChannel(grid=(8.0, 4.0, 2.0, 1.0), alpha=0.6),
            MultiBandwidthChannel(grid=(0.25, 0.5), alpha=0.6, x0=0.0, kernel=make_kernel(1)),
            make_rr_channel((0.0, 1.0, 2.0), 0.9),
        ]
        for ch in chans:
            back = channel_from_json(channel_to_json(ch))
            assert type(back) is type(ch)
            assert back.alpha == pytest.approx(ch.alpha)

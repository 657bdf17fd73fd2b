import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from channel.fading import ChannelBlock, ChannelRealization, FadingConfig, realization_block
from rates.formulas import (
    aab_sum_rate, aab_upper_bound, bc_rate_pair, directional_pair, dnf_sum_rate, ergodic,
    eta_min, instant_rates, ma_rate_pair, shannon_capacity, trad_upper_bound, zeta,
)


def realization(g01, g21, power_P=1.0, noise_var=1.0):
    return ChannelRealization(round_t=0, g01=g01, g21=g21, power_P=power_P, noise_var=noise_var)


class CapacityTests(SimpleTestCase):

    def test_shannon_capacity(self):
        self.assertEqual(shannon_capacity(0.0), 0.0)
        self.assertEqual(shannon_capacity(1.0), 1.0)
        self.assertEqual(shannon_capacity(3.0), 2.0)

    def test_negative_snr_rejected(self):
        with self.assertRaises(ValidationError):
            shannon_capacity(-0.1)

    def test_upper_bounds_by_hand(self):
        r = realization(3.0, 1.0)
        self.assertAlmostEqual(trad_upper_bound(r), 1.0)
        self.assertAlmostEqual(aab_upper_bound(r), 1.5)

    def test_upper_bounds_from_capacities(self):
        # C01 = 2, C21 = 3
        r = realization(3.0, 7.0)
        self.assertAlmostEqual(trad_upper_bound(r), 2.0)
        self.assertAlmostEqual(aab_upper_bound(r), 2.5)

    def test_symmetric_gains_bounds_agree(self):
        r = realization(2.0, 2.0)
        self.assertAlmostEqual(trad_upper_bound(r), aab_upper_bound(r))
        self.assertAlmostEqual(trad_upper_bound(r), math.log2(3.0))


class RatePairTests(SimpleTestCase):

    def test_ma_pair_by_hand(self):
        pair = ma_rate_pair(realization(3.0, 1.0))
        self.assertTrue(pair.strong_is_01)
        self.assertAlmostEqual(pair.weak, 0.5 * math.log2(1.5), places=12)
        self.assertAlmostEqual(pair.strong, 0.5 * math.log2(1.5) + 0.5 * math.log2(5.0 / 3.0), places=12)
        self.assertAlmostEqual(pair.strong, 0.6610, places=4)

    def test_ma_pair_mirrors_when_21_is_stronger(self):
        r01, r21 = directional_pair(ma_rate_pair(realization(1.0, 3.0)))
        self.assertAlmostEqual(r01, 0.2925, places=4)
        self.assertAlmostEqual(r21, 0.6610, places=4)

    def test_ma_weak_rate_clamped(self):
        pair = ma_rate_pair(realization(2.0, 0.0))
        self.assertEqual(pair.weak, 0.0)
        self.assertAlmostEqual(pair.strong, 0.5 * math.log2(3.0))

    def test_ma_weak_rate_zero_at_half(self):
        pair = ma_rate_pair(realization(2.0, 0.5))
        self.assertAlmostEqual(pair.weak, 0.0)
        self.assertAlmostEqual(pair.strong, 0.5 * math.log2(1.0 + 1.5 / 2.0))

    def test_bc_pair_without_superposition(self):
        pair = bc_rate_pair(realization(3.0, 1.0), 1.0)
        self.assertAlmostEqual(pair.to_weak_side, 0.5 * math.log2(2.0))
        self.assertAlmostEqual(pair.to_strong_side, 0.5 * math.log2(4.0))

    def test_bc_pair_all_gaussian(self):
        pair = bc_rate_pair(realization(3.0, 1.0), 0.0)
        self.assertEqual(pair.to_weak_side, 0.0)
        self.assertAlmostEqual(pair.to_strong_side, 0.5 * math.log2(4.0))

    def test_bc_pair_by_hand(self):
        pair = bc_rate_pair(realization(3.0, 1.0), 0.5)
        self.assertAlmostEqual(pair.to_weak_side, 0.2925, places=4)
        self.assertAlmostEqual(pair.to_strong_side, 1.0, places=12)

    def test_bc_eta_out_of_range(self):
        with self.assertRaises(ValidationError):
            bc_rate_pair(realization(3.0, 1.0), 1.2)


class PowerSplitTests(SimpleTestCase):

    def test_zeta(self):
        self.assertEqual(zeta(realization(2.0, 2.0)), 1.0)
        self.assertEqual(zeta(realization(4.0, 1.0)), 0.25)
        self.assertEqual(zeta(realization(4.0, 0.0)), 0.0)

    def test_zeta_degenerate(self):
        with self.assertLogs('rates.formulas', level='WARNING'):
            self.assertEqual(zeta(realization(0.0, 0.0)), 1.0)

    def test_eta_min_low_snr(self):
        self.assertEqual(eta_min(realization(4.0, 0.4)), 0.0)

    def test_eta_min_low_ratio_branch(self):
        self.assertAlmostEqual(eta_min(realization(4.0, 1.0)), 0.5)

    def test_eta_min_high_ratio_branch(self):
        self.assertAlmostEqual(eta_min(realization(1.5, 1.0)), 2.5 / 4.5)

    def test_eta_min_both_zero(self):
        self.assertEqual(eta_min(realization(0.0, 0.0)), 0.0)


class SumRateTests(SimpleTestCase):

    def test_aab_sum_rate_by_hand(self):
        self.assertAlmostEqual(aab_sum_rate(realization(3.0, 1.0)), math.log2(1.5) + 0.5 * math.log2(5.0 / 3.0))
        self.assertAlmostEqual(aab_sum_rate(realization(3.0, 1.0)), 0.953, places=3)
        self.assertAlmostEqual(aab_sum_rate(realization(1.0, 0.0)), 0.5)

    def test_symmetric_aab_equals_dnf(self):
        r = realization(5.0, 5.0, power_P=3.0)
        self.assertEqual(aab_sum_rate(r), dnf_sum_rate(r))

    def test_dnf_sum_rate(self):
        self.assertEqual(dnf_sum_rate(realization(3.0, 0.5)), 0.0)
        self.assertAlmostEqual(dnf_sum_rate(realization(3.0, 1.0)), math.log2(1.5))

    def test_instant_rates_bundle(self):
        rates = instant_rates(realization(3.0, 1.0))
        self.assertAlmostEqual(rates.r01 + rates.r21, rates.sum_aab_ach, places=12)
        self.assertAlmostEqual(rates.c01, 2.0)
        self.assertAlmostEqual(rates.c21, 1.0)
        self.assertAlmostEqual(rates.zeta, 1.0 / 3.0)
        self.assertGreaterEqual(rates.r12, rates.r21 - 1e-12)
        self.assertGreaterEqual(rates.sum_aab_ub, rates.sum_trad_ub)

    def test_instant_rates_on_block_match_scalar(self):
        block = ChannelBlock.from_gains([3.0, 1.0, 2.0], [1.0, 3.0, 2.0], power_P=4.0)
        rates = instant_rates(block)
        for index, item in enumerate(block):
            scalar = instant_rates(item)
            self.assertAlmostEqual(rates.r10[index], scalar.r10, places=12)
            self.assertAlmostEqual(rates.r12[index], scalar.r12, places=12)
            self.assertAlmostEqual(rates.sum_aab_ach[index], scalar.sum_aab_ach, places=12)


class PointwiseInvariantTests(SimpleTestCase):
    """The orderings and identities hold realization by realization."""

    def blocks(self):
        for m in (0.5, 1.0, 2.0, 4.0):
            for power_db in (0.0, 10.0, 20.0):
                config = FadingConfig.from_power_db(power_db, nakagami_m=m, seed=17)
                yield (m, power_db), realization_block(config, 20_000)

    def test_orderings_and_identities(self):
        for label, block in self.blocks():
            with self.subTest(config=label):
                trad = trad_upper_bound(block)
                aab_ub = aab_upper_bound(block)
                aab = aab_sum_rate(block)
                dnf = dnf_sum_rate(block)
                self.assertTrue(np.all(aab_ub >= trad))
                self.assertTrue(np.all(aab >= dnf))
                self.assertTrue(np.all(dnf >= 0.0))
                self.assertTrue(np.all(aab <= 2.0 * aab_ub + 1e-12))
                pair = ma_rate_pair(block)
                np.testing.assert_allclose(pair.strong + pair.weak, aab, rtol=0, atol=1e-12)

    def test_eta_min_keeps_weak_side_rate(self):
        for label, block in self.blocks():
            with self.subTest(config=label):
                eta = eta_min(block)
                self.assertTrue(np.all((eta >= 0.0) & (eta <= 1.0)))
                broadcast = bc_rate_pair(block, eta)
                weak = ma_rate_pair(block).weak
                feasible = block.power_P * np.minimum(block.g01, block.g21) / block.noise_var >= 0.5
                self.assertTrue(np.all(broadcast.to_weak_side[feasible] >= weak[feasible] - 1e-12))


class ErgodicTests(SimpleTestCase):

    def test_constant_function(self):
        estimate = ergodic(lambda block: 0.75, FadingConfig(seed=1), 5000)
        self.assertAlmostEqual(estimate.mean, 0.75, places=12)
        self.assertAlmostEqual(estimate.std_error, 0.0, places=12)
        self.assertEqual(estimate.n_samples, 5000)

    def test_deterministic_given_seed(self):
        config = FadingConfig(seed=4)
        first = ergodic(aab_sum_rate, config, 10_000, batch_size=3000)
        second = ergodic(aab_sum_rate, config, 10_000, batch_size=3000)
        self.assertEqual(first, second)

    def test_std_error_shrinks_with_sqrt_n(self):
        config = FadingConfig(seed=8)
        small = ergodic(aab_upper_bound, config, 20_000)
        large = ergodic(aab_upper_bound, config, 80_000)
        self.assertAlmostEqual(small.std_error / large.std_error, 2.0, delta=0.25)

    def test_bound_gap_is_positive(self):
        config = FadingConfig.from_power_db(20.0, seed=2)
        aab = ergodic(aab_upper_bound, config, 50_000)
        trad = ergodic(trad_upper_bound, config, 50_000)
        achievable = ergodic(aab_sum_rate, config, 50_000)
        dnf = ergodic(dnf_sum_rate, config, 50_000)
        self.assertGreater(aab.mean - trad.mean, 0.5)
        self.assertGreater(achievable.mean, dnf.mean)
        self.assertLess(achievable.mean, 2.0 * aab.mean)

    def test_needs_a_sample(self):
        with self.assertRaises(ValidationError):
            ergodic(aab_sum_rate, FadingConfig(), 0)

import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from scipy.stats import ks_2samp

from channel.fading import (
    ChannelBlock, ChannelRealization, Endpoint, FadingConfig, Geometry, Link, Placement,
    distance, nakagami_power, realization_block, relay_positions, replication_rng, sample_block,
    sample_round, snr,
)


class GeometryTests(SimpleTestCase):

    def test_distance_from_midpoint(self):
        self.assertAlmostEqual(distance(Geometry(0.0, 0.0), Endpoint.SOURCE0), 0.5)

    def test_distance_collinear(self):
        self.assertAlmostEqual(distance(Geometry(0.25, 0.0), Endpoint.SOURCE0), 0.75)

    def test_distance_of_bare_point_on_other_source(self):
        self.assertAlmostEqual(distance((0.5, 0.0), Endpoint.SOURCE0), 1.0)
        self.assertEqual(distance((0.5, 0.0), Endpoint.SOURCE2), 0.0)

    def test_distance_off_axis(self):
        self.assertAlmostEqual(distance(Geometry(0.0, 0.5), Endpoint.SOURCE2), math.sqrt(0.5))

    def test_relay_on_source_rejected(self):
        with self.assertRaises(ValidationError):
            Geometry(-0.5, 0.0)
        with self.assertRaises(ValidationError):
            Geometry(0.5, 0.0)

    def test_non_positive_beta_rejected(self):
        with self.assertRaises(ValidationError):
            Geometry(0.0, 0.0, beta=0.0)


class FadingConfigTests(SimpleTestCase):

    def test_small_m_rejected(self):
        with self.assertRaises(ValidationError):
            FadingConfig(nakagami_m=0.4)

    def test_unknown_placement_rejected(self):
        with self.assertRaises(ValidationError):
            FadingConfig(placement='somewhere')

    def test_power_db_conversion(self):
        config = FadingConfig.from_power_db(20.0)
        self.assertAlmostEqual(config.power_P, 100.0)
        self.assertEqual(config.noise_var, 1.0)
        self.assertAlmostEqual(config.power_db, 20.0)


class SamplingTests(SimpleTestCase):

    def test_fixed_rayleigh_mean_gain(self):
        config = FadingConfig(nakagami_m=1.0, placement=Placement.FIXED, geometry=Geometry(0.0, 0.0, beta=3.0), seed=7)
        block = sample_block(config, replication_rng(7), 400_000)
        # E{g} = d^-3 = 8 at d = 0.5
        self.assertAlmostEqual(block.g01.mean() / 8.0, 1.0, delta=0.01)
        self.assertAlmostEqual(block.g21.mean() / 8.0, 1.0, delta=0.01)

    def test_unit_mean_fading_power(self):
        rng = replication_rng(11)
        for m in (0.5, 1.0, 2.0, 4.0):
            with self.subTest(m=m):
                power = nakagami_power(rng, m, 200_000)
                self.assertAlmostEqual(power.mean(), 1.0, delta=0.015)

    def test_same_seed_same_stream(self):
        config = FadingConfig(seed=42)
        first = realization_block(config, 1000)
        second = realization_block(config, 1000)
        np.testing.assert_array_equal(first.g01, second.g01)
        np.testing.assert_array_equal(first.g21, second.g21)

    def test_replications_are_independent_streams(self):
        config = FadingConfig(seed=42)
        first = realization_block(config, 100, replication=0)
        second = realization_block(config, 100, replication=1)
        self.assertFalse(np.array_equal(first.g01, second.g01))

    def test_uniform_per_round_marginals_match(self):
        config = FadingConfig(seed=3, placement=Placement.UNIFORM_PER_ROUND)
        block = realization_block(config, 100_000)
        result = ks_2samp(block.g01, block.g21)
        # 1% critical value for two samples of 1e5
        self.assertLess(result.statistic, 1.63 * math.sqrt(2.0 / 100_000))

    def test_per_replication_placement_is_constant_within_a_run(self):
        config = FadingConfig(seed=5, placement=Placement.UNIFORM_PER_REPLICATION)
        x, y = relay_positions(config, replication_rng(5), 1000, replication=0)
        self.assertTrue(np.all(x == x[0]))
        self.assertTrue(np.all(y == y[0]))
        other_x, _ = relay_positions(config, replication_rng(5), 1000, replication=1)
        self.assertNotEqual(x[0], other_x[0])

    def test_uniform_per_round_placement_moves(self):
        config = FadingConfig(seed=5)
        x, y = relay_positions(config, replication_rng(5), 1000, replication=0)
        self.assertGreater(len(set(x.tolist())), 1)
        self.assertTrue(np.all(np.abs(x) <= 0.5) and np.all(np.abs(y) <= 0.5))

    def test_sample_round_returns_realization(self):
        realization = sample_round(FadingConfig(seed=1), replication_rng(1), round_t=9)
        self.assertIsInstance(realization, ChannelRealization)
        self.assertEqual(realization.round_t, 9)
        self.assertGreaterEqual(realization.g01, 0.0)
        self.assertGreaterEqual(realization.g21, 0.0)

    def test_block_indexing(self):
        block = ChannelBlock.from_gains([1.0, 2.0], [3.0, 4.0], start_round=10)
        self.assertEqual(len(block), 2)
        self.assertEqual(block[1].round_t, 11)
        self.assertEqual([r.g21 for r in block], [3.0, 4.0])

    def test_negative_gain_rejected(self):
        with self.assertRaises(ValidationError):
            ChannelBlock.from_gains([-1.0], [1.0])


class SnrTests(SimpleTestCase):

    def test_unit_scaling(self):
        realization = ChannelRealization(0, g01=3.0, g21=1.0, power_P=1.0, noise_var=1.0)
        self.assertEqual(snr(realization, Link.UPLINK01), 3.0)

    def test_reciprocity(self):
        realization = ChannelRealization(0, g01=3.0, g21=1.0, power_P=1.0, noise_var=1.0)
        self.assertEqual(snr(realization, Link.UPLINK01), snr(realization, Link.DOWNLINK10))
        self.assertEqual(snr(realization, Link.UPLINK21), snr(realization, Link.DOWNLINK12))

    def test_power_and_noise_scaling(self):
        realization = ChannelRealization(0, g01=0.1, g21=1.0, power_P=2.0, noise_var=0.5)
        self.assertEqual(snr(realization, Link.UPLINK21), 4.0)

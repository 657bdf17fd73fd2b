import io
import math

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from channel.fading import ChannelBlock, ChannelRealization, FadingConfig, realization_block
from relay_delay.engine import (
    DelayMode, DelayTrace, Direction, RelayBacklogQueue, TRACE_COLUMNS, drain_bits, eq4_oracle,
    oracle_sequences, queue_delays, run_delay_sim, simulate_relay, step, surplus_bits,
)


def realization(g01, g21, round_t=0, power_P=1.0):
    return ChannelRealization(round_t=round_t, g01=g01, g21=g21, power_P=power_P, noise_var=1.0)


class DelayModeTests(SimpleTestCase):

    def test_theta_range(self):
        with self.assertRaises(ValidationError):
            DelayMode.upper_bound(1.5)
        with self.assertRaises(ValidationError):
            DelayMode.upper_bound(-0.1)

    def test_suboptimal_has_no_theta(self):
        with self.assertRaises(ValidationError):
            DelayMode('suboptimal', 0.5)

    def test_labels(self):
        self.assertEqual(str(DelayMode.upper_bound(0.9)), 'upper_bound(theta=0.9)')
        self.assertEqual(str(DelayMode.suboptimal()), 'suboptimal')


class SurplusAndDrainTests(SimpleTestCase):

    def test_symmetric_gains_inject_nothing(self):
        for mode in (DelayMode.upper_bound(0.9), DelayMode.suboptimal()):
            self.assertEqual(surplus_bits(mode, realization(2.0, 2.0))[1], 0.0)
            self.assertEqual(drain_bits(mode, realization(2.0, 2.0)), (None, 0.0))

    def test_theta_zero_injects_nothing(self):
        self.assertEqual(surplus_bits(DelayMode.upper_bound(0.0), realization(3.0, 1.0))[1], 0.0)

    def test_upper_bound_surplus_by_hand(self):
        direction, bits = surplus_bits(DelayMode.upper_bound(1.0), realization(3.0, 1.0))
        self.assertEqual(direction, Direction.D02)
        self.assertAlmostEqual(bits, 1.0)

    def test_surplus_direction_follows_stronger_uplink(self):
        direction, _ = surplus_bits(DelayMode.upper_bound(0.5), realization(1.0, 3.0))
        self.assertEqual(direction, Direction.D20)

    def test_upper_bound_drain_by_hand(self):
        direction, bits = drain_bits(DelayMode.upper_bound(0.5), realization(1.0, 3.0))
        self.assertEqual(direction, Direction.D02)
        self.assertAlmostEqual(bits, 1.0)

    def test_suboptimal_surplus_by_hand(self):
        _, bits = surplus_bits(DelayMode.suboptimal(), realization(3.0, 1.0))
        self.assertAlmostEqual(bits, math.log2(5.0 / 3.0))

    def test_suboptimal_drain_with_full_lattice_power(self):
        self.assertEqual(drain_bits(DelayMode.suboptimal(), realization(1.0, 3.0), eta_at_round=1.0)[1], 0.0)

    def test_suboptimal_drain_uses_eta_min(self):
        # g_min = 1, g_max = 4: eta_min = 0.5, drain = log2(1 + 0.5 * 4)
        direction, bits = drain_bits(DelayMode.suboptimal(), realization(4.0, 1.0))
        self.assertEqual(direction, Direction.D20)
        self.assertAlmostEqual(bits, math.log2(3.0))

    def test_block_evaluation_matches_scalar(self):
        block = realization_block(FadingConfig(seed=9), 50)
        directions, bits = surplus_bits(DelayMode.suboptimal(), block)
        for index, item in enumerate(block):
            direction, scalar_bits = surplus_bits(DelayMode.suboptimal(), item)
            self.assertEqual(directions[index], direction)
            self.assertAlmostEqual(bits[index], scalar_bits, places=12)


class QueueTests(SimpleTestCase):

    def test_partial_drains(self):
        queue = RelayBacklogQueue()
        self.assertEqual(queue.advance(0, Direction.D02, 1.0, 0.0, 0.0), [])
        self.assertEqual(queue.advance(1, Direction.D20, 0.0, 0.6, 0.0), [])
        events = queue.advance(2, Direction.D20, 0.0, 0.5, 0.0)
        self.assertEqual(len(events), 1)
        self.assertEqual(events[0].delay, 2)
        self.assertEqual(events[0].birth_round, 0)
        self.assertEqual(queue.completed_delays_d02, [2])

    def test_alternating_pattern_has_unit_delay(self):
        queue = RelayBacklogQueue()
        mode = DelayMode.upper_bound(1.0)
        events = []
        gains = [(3.0, 1.0), (1.0, 3.0), (3.0, 1.0), (1.0, 3.0)]
        for round_t, (g01, g21) in enumerate(gains):
            events.extend(step(queue, mode, realization(g01, g21, round_t)))
        self.assertEqual([event.delay for event in events], [1, 1, 1])
        self.assertEqual(queue.censored_count, 1)

    def test_no_injections(self):
        queue = RelayBacklogQueue()
        for round_t in range(5):
            self.assertEqual(step(queue, DelayMode.upper_bound(0.8), realization(2.0, 2.0, round_t)), [])
        self.assertEqual(queue.censored_count, 0)
        self.assertEqual(queue.backlog(Direction.D02), 0.0)

    def test_out_of_order_round_rejected(self):
        queue = RelayBacklogQueue()
        queue.advance(3, Direction.D02, 0.0, 0.0, 0.0)
        with self.assertRaises(ValueError):
            queue.advance(3, Direction.D02, 0.0, 0.0, 0.0)

    def test_fifo_order_and_conservation(self):
        block = realization_block(FadingConfig(seed=21), 3000)
        mode = DelayMode.upper_bound(0.9)
        queue = RelayBacklogQueue()
        completions = {Direction.D02: [], Direction.D20: []}
        for item in block:
            for event in step(queue, mode, item):
                completions[event.direction].append((event.birth_round, event.completion_round))
            for direction in Direction:
                self.assertLess(abs(queue.conservation_error(direction)), 1e-9)
        for direction, pairs in completions.items():
            births = [birth for birth, _ in pairs]
            finishes = [finish for _, finish in pairs]
            self.assertEqual(births, sorted(births))
            self.assertEqual(finishes, sorted(finishes))


class OracleTests(SimpleTestCase):

    def test_single_exact_cover(self):
        surplus = [(Direction.D02, 1.0), (None, 0.0)]
        drain = [(None, 0.0), (Direction.D02, 1.0)]
        self.assertEqual(eq4_oracle(surplus, drain)[Direction.D02], [(0, 1)])

    def test_two_pending_injections(self):
        surplus = [(Direction.D02, 1.0), (Direction.D02, 0.5), (None, 0.0), (None, 0.0)]
        drain = [(None, 0.0), (None, 0.0), (Direction.D02, 0.8), (Direction.D02, 0.8)]
        # cumulative 0.8 then 1.6: first covered at round 3, second (1.5) also at round 3
        self.assertEqual(eq4_oracle(surplus, drain)[Direction.D02], [(0, 3), (1, 2)])
        outcomes = queue_delays(surplus, drain)
        self.assertEqual(outcomes[Direction.D02], [(0, 3), (1, 2)])

    def test_uncovered_injections_are_censored(self):
        surplus = [(Direction.D20, 2.0), (Direction.D20, 1.0), (None, 0.0)]
        drain = [(None, 0.0), (None, 0.0), (Direction.D20, 1.0)]
        self.assertEqual(eq4_oracle(surplus, drain)[Direction.D20], [(0, None), (1, None)])

    def test_drain_on_empty_buffer_is_lost(self):
        surplus = [(None, 0.0), (Direction.D02, 1.0), (None, 0.0)]
        drain = [(Direction.D02, 5.0), (None, 0.0), (Direction.D02, 0.5)]
        self.assertEqual(eq4_oracle(surplus, drain)[Direction.D02], [(1, None)])
        outcomes = queue_delays(surplus, drain)
        self.assertEqual(outcomes[Direction.D02], [(1, None)])

    def test_queue_matches_oracle_on_random_sequences(self):
        rng = np.random.default_rng(123)
        modes = [DelayMode.upper_bound(0.3), DelayMode.upper_bound(0.7), DelayMode.upper_bound(0.95), DelayMode.suboptimal()]
        for mode in modes:
            with self.subTest(mode=str(mode)):
                for _ in range(100):
                    g01 = rng.exponential(size=120) * 8.0
                    g21 = rng.exponential(size=120) * 8.0
                    near = rng.random(120) < 0.1
                    g21[near] = g01[near] * (1.0 + rng.uniform(-1e-13, 1e-13, size=int(near.sum())))
                    block = ChannelBlock.from_gains(g01, g21, power_P=10.0)
                    surplus, drain = oracle_sequences(mode, block)
                    outcomes = queue_delays(surplus, drain)
                    self.assertEqual(outcomes, eq4_oracle(surplus, drain))

    def test_symmetric_sequence(self):
        block = ChannelBlock.from_gains([2.0] * 10, [2.0] * 10)
        surplus, drain = oracle_sequences(DelayMode.upper_bound(0.9), block)
        self.assertEqual(eq4_oracle(surplus, drain), {Direction.D02: [], Direction.D20: []})


class DelaySimulationTests(SimpleTestCase):

    def test_theta_zero_has_no_delay(self):
        stats = run_delay_sim(FadingConfig(seed=1), DelayMode.upper_bound(0.0), 5000, 100)
        self.assertEqual(stats.mean_l01, 0.0)
        self.assertEqual(stats.mean_l21, 0.0)
        self.assertEqual(stats.count_01 + stats.count_21, 0)

    def test_symmetric_channel_has_empty_buffers(self):
        block = ChannelBlock.from_gains(np.full(500, 3.0), np.full(500, 3.0), power_P=100.0)
        stats = simulate_relay(block, DelayMode.suboptimal())
        self.assertEqual(stats.censored_count, 0)
        self.assertEqual(stats.mean_delay, 0.0)

    def test_simulation_matches_step_by_step(self):
        block = realization_block(FadingConfig(seed=13), 2000)
        mode = DelayMode.upper_bound(0.8)
        queue = RelayBacklogQueue()
        for item in block:
            step(queue, mode, item)
        stats = simulate_relay(block, mode, warmup=-1)
        self.assertEqual(stats.count_01, len(queue.completed_delays_d02))
        self.assertAlmostEqual(stats.mean_l01, sum(queue.completed_delays_d02) / len(queue.completed_delays_d02))
        self.assertEqual(stats.censored_count, queue.censored_count)

    def test_delay_is_nondecreasing_in_theta(self):
        config = FadingConfig(seed=5)
        means = [
            run_delay_sim(config, DelayMode.upper_bound(theta), 40_000, 1000).mean_delay
            for theta in (0.1, 0.3, 0.5, 0.7, 0.9)
        ]
        self.assertEqual(means, sorted(means))
        self.assertGreaterEqual(means[0], 1.0)

    def test_delay_grows_sharply_near_theta_one(self):
        block = realization_block(FadingConfig(seed=2011), 300_000)
        moderate = simulate_relay(block, DelayMode.upper_bound(0.9), warmup=3000).mean_delay
        extreme = simulate_relay(block, DelayMode.upper_bound(0.99), warmup=3000).mean_delay
        self.assertGreater(extreme, 5.0 * moderate)

    def test_moderate_theta_delay_is_bounded(self):
        stats = run_delay_sim(FadingConfig(seed=6), DelayMode.upper_bound(0.9), 100_000, 1000)
        self.assertLess(stats.mean_delay, 300.0)
        self.assertGreater(stats.count_01, 0)
        self.assertGreater(stats.count_21, 0)

    def test_warmup_must_precede_horizon(self):
        with self.assertRaises(ValidationError):
            run_delay_sim(FadingConfig(), DelayMode.suboptimal(), 100, 100)

    def test_trace_output(self):
        stream = io.StringIO()
        block = ChannelBlock.from_gains([3.0, 1.0, 1.0], [1.0, 3.0, 3.0])
        simulate_relay(block, DelayMode.upper_bound(1.0), trace=DelayTrace(stream))
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], ','.join(TRACE_COLUMNS))
        self.assertEqual(len(lines), 4)
        self.assertTrue(lines[1].startswith('0,3,1,d02,1,'))
        self.assertTrue(lines[2].endswith(',1'))

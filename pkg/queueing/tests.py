import math

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, override_settings
from django.conf import settings

from channel.fading import ChannelBlock, ChannelRealization, FadingConfig
from queueing.system import (
    ArrivalConfig, Protocol, SourceQueue, max_stable_par, service_rates, simulate_system,
)


def realization(g01, g21):
    return ChannelRealization(round_t=0, g01=g01, g21=g21, power_P=1.0, noise_var=1.0)


class ServiceRateTests(SimpleTestCase):

    def test_symmetric_gains_match_dnf(self):
        r = realization(2.0, 2.0)
        self.assertEqual(service_rates(Protocol.AAB, r), service_rates(Protocol.DNF, r))

    def test_by_hand(self):
        aab = service_rates(Protocol.AAB, realization(3.0, 1.0))
        dnf = service_rates(Protocol.DNF, realization(3.0, 1.0))
        self.assertAlmostEqual(aab[0], 0.6610, places=4)
        self.assertAlmostEqual(aab[1], 0.2925, places=4)
        self.assertAlmostEqual(dnf[0], 0.2925, places=4)
        self.assertAlmostEqual(dnf[1], 0.2925, places=4)

    def test_dnf_clamp(self):
        self.assertEqual(service_rates(Protocol.DNF, realization(3.0, 0.4)), (0.0, 0.0))

    def test_aab_dominates_dnf_per_direction(self):
        block = ChannelBlock.from_gains([0.1, 3.0, 7.0, 0.6], [2.0, 3.0, 0.2, 5.0], power_P=4.0)
        aab = service_rates(Protocol.AAB, block)
        dnf = service_rates(Protocol.DNF, block)
        for direction in (0, 1):
            self.assertTrue(all(a >= d for a, d in zip(aab[direction], dnf[direction])))


class SourceQueueTests(SimpleTestCase):

    def test_fluid_fifo_service(self):
        queue = SourceQueue(packet_len=10)
        queue.enqueue(0, 2)
        self.assertEqual(queue.serve(0, 6.0), [])
        self.assertEqual(queue.serve(1, 6.0), [(0, 1)])
        self.assertAlmostEqual(queue.backlog_bits, 8.0)
        self.assertEqual(queue.serve(2, 8.0), [(0, 2)])
        self.assertEqual(len(queue), 0)
        self.assertEqual(queue.served_delays, [1, 2])

    def test_work_conservation(self):
        queue = SourceQueue(packet_len=10)
        queue.enqueue(0, 1)
        queue.enqueue(1, 3)
        queue.serve(1, 25.0)
        self.assertAlmostEqual(queue.backlog_bits, 15.0)

    def test_censoring_after_warmup(self):
        queue = SourceQueue()
        queue.enqueue(3, 2)
        queue.enqueue(8, 1)
        self.assertEqual(queue.censored_after(5), 1)


class ArrivalConfigTests(SimpleTestCase):

    def test_negative_rho_rejected(self):
        with self.assertRaises(ValidationError):
            ArrivalConfig(rho=-0.1)

    def test_warmup_before_horizon(self):
        with self.assertRaises(ValidationError):
            ArrivalConfig(rho=0.1, horizon_T=10, warmup=10)


class SystemSimulationTests(SimpleTestCase):
    config = FadingConfig.from_power_db(10.0, seed=31)

    def test_no_arrivals(self):
        stats = simulate_system(Protocol.DNF, self.config, ArrivalConfig(rho=0.0, horizon_T=2000, warmup=100))
        self.assertEqual(stats.served_packets, 0)
        self.assertEqual(stats.mean_ss_delay_d02, 0.0)
        self.assertEqual(stats.mean_ss_delay_d20, 0.0)
        self.assertIsNone(stats.mean_st_delay)

    def test_max_stable_par_ordering(self):
        aab = max_stable_par(Protocol.AAB, self.config, 20_000)
        dnf = max_stable_par(Protocol.DNF, self.config, 20_000)
        self.assertGreater(dnf, 0.0)
        self.assertGreaterEqual(aab, dnf)

    def test_max_stable_par_needs_samples(self):
        with self.assertRaises(ValidationError):
            max_stable_par(Protocol.AAB, self.config, 999)

    def test_rho_above_cap_rejected(self):
        limit = max_stable_par(Protocol.DNF, self.config, 10_000)
        factor = settings.TWR_SIM['RHO_CAP_FACTOR']
        with self.assertRaises(ValidationError):
            simulate_system(Protocol.DNF, self.config, ArrivalConfig(rho=factor * limit * 1.5, horizon_T=100, warmup=0))

    def test_aab_waits_less_than_dnf(self):
        rho = 0.5 * max_stable_par(Protocol.DNF, self.config, 20_000)
        arrivals = ArrivalConfig(rho=rho, horizon_T=30_000, warmup=1000)
        aab = simulate_system(Protocol.AAB, self.config, arrivals)
        dnf = simulate_system(Protocol.DNF, self.config, arrivals)
        self.assertLessEqual(aab.mean_ss_delay, dnf.mean_ss_delay)
        self.assertGreater(aab.served_packets, 0)
        self.assertGreaterEqual(aab.mean_st_delay, 1.0)

    def test_relay_delay_does_not_depend_on_rho(self):
        arrivals = [ArrivalConfig(rho=rho, horizon_T=20_000, warmup=500) for rho in (0.0, 0.02, 0.05)]
        relay = [simulate_system(Protocol.AAB, self.config, a).relay_stats for a in arrivals]
        self.assertEqual(relay[0], relay[1])
        self.assertEqual(relay[1], relay[2])

    def test_half_load_is_stable(self):
        rho = 0.5 * max_stable_par(Protocol.AAB, self.config, 20_000)
        short = simulate_system(Protocol.AAB, self.config, ArrivalConfig(rho=rho, horizon_T=20_000, warmup=1000))
        long = simulate_system(Protocol.AAB, self.config, ArrivalConfig(rho=rho, horizon_T=40_000, warmup=1000))
        self.assertTrue(math.isfinite(long.mean_ss_delay))
        self.assertLess(long.mean_ss_delay, 2.0 * short.mean_ss_delay + 5.0)

    @override_settings(TWR_SIM={**settings.TWR_SIM, 'RHO_CAP_FACTOR': 0.0})
    def test_cap_factor_read_from_settings(self):
        with self.assertRaises(ValidationError):
            simulate_system(Protocol.AAB, self.config, ArrivalConfig(rho=0.01, horizon_T=100, warmup=0))

"""
End-to-end system simulation with Poisson packet arrivals at both sources.

One round is one second-hertz of resource, so a direction with rate R b/s/Hz
serves R bits of its source buffer per round. Packets are served fluidly in
FIFO order; a packet's delay of system service (SS) is the round its last bit
leaves the source minus its arrival round. For AAB the relay buffers are
simulated on the same channel stream in the suboptimal mode. Channel and
arrival draws come from separate streams, so runs that share a seed see the
same fading whatever the protocol or arrival rate.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from django.conf import settings
from django.core.exceptions import ValidationError
from django.db import models

from channel.fading import ARRIVAL_STREAM, realization_block, replication_rng
from rates.formulas import directional_pair, dnf_sum_rate, ergodic, ma_rate_pair
from relay_delay.engine import DelayMode, DelayStats, Direction, simulate_relay

logger = logging.getLogger(__name__)

SERVICE_TOL = 1e-12
MIN_CAPACITY_SAMPLES = 1000
CAP_ESTIMATE_SAMPLES = 10_000


class Protocol(models.TextChoices):
    AAB = 'aab', 'Alternative awaiting and broadcast'
    DNF = 'dnf', 'Denoise-and-forward'


@dataclass(frozen=True)
class ArrivalConfig:
    rho: float
    packet_len: int = 10
    horizon_T: int = 1_000_000
    warmup: int = 10_000

    def __post_init__(self):
        if not self.rho >= 0 or not math.isfinite(self.rho):
            raise ValidationError(f'Packet arrival rate must be finite and non-negative, got {self.rho}.')
        if self.packet_len <= 0:
            raise ValidationError('Packet length must be positive.')
        if not 0 <= self.warmup < self.horizon_T:
            raise ValidationError(
                f'Need 0 <= warmup < horizon, got warmup={self.warmup}, horizon={self.horizon_T}.'
            )


def service_rates(protocol, realization):
    """Bits served per round at source 0 (d02) and source 2 (d20)."""
    if protocol == Protocol.AAB:
        return directional_pair(ma_rate_pair(realization))
    if protocol == Protocol.DNF:
        half = dnf_sum_rate(realization) / 2.0
        return half, half
    raise ValidationError(f'Unknown protocol: {protocol!r}')


@dataclass(slots=True)
class PacketBatch:
    """Packets that arrived in the same round; only the head one is partly served."""
    arrival_round: int
    count: int
    head_bits: float


class SourceQueue:

    def __init__(self, packet_len=10):
        self.packet_len = packet_len
        self.fifo = deque()
        self.served_delays = []

    def __len__(self):
        return sum(batch.count for batch in self.fifo)

    @property
    def backlog_bits(self):
        if not self.fifo:
            return 0.0
        return self.fifo[0].head_bits + self.packet_len * (len(self) - 1)

    def enqueue(self, round_t, count):
        if count > 0:
            self.fifo.append(PacketBatch(round_t, count, float(self.packet_len)))

    def serve(self, round_t, budget):
        """Drain up to `budget` bits; returns (arrival_round, delay) per finished packet."""
        finished = []
        while self.fifo:
            batch = self.fifo[0]
            if batch.head_bits <= budget + SERVICE_TOL:
                budget -= batch.head_bits
                delay = round_t - batch.arrival_round
                self.served_delays.append(delay)
                finished.append((batch.arrival_round, delay))
                batch.count -= 1
                if batch.count == 0:
                    self.fifo.popleft()
                else:
                    batch.head_bits = float(self.packet_len)
                continue
            if budget > 0.0:
                batch.head_bits -= budget
            break
        return finished

    def censored_after(self, warmup):
        return sum(batch.count for batch in self.fifo if batch.arrival_round > warmup)


@dataclass(frozen=True)
class SystemStats:
    mean_ss_delay_d02: float
    mean_ss_delay_d20: float
    mean_st_delay: Optional[float]
    served_packets: int
    censored_packets: int
    relay_stats: Optional[DelayStats] = None

    @property
    def mean_ss_delay(self):
        return (self.mean_ss_delay_d02 + self.mean_ss_delay_d20) / 2.0


def max_stable_par(protocol, fading_config, n_samples, packet_len=10):
    """
    Largest packet arrival rate both sources can sustain: the smaller
    ergodic per-direction service rate divided by the packet length.
    """
    if n_samples < MIN_CAPACITY_SAMPLES:
        raise ValidationError(f'max_stable_par needs at least {MIN_CAPACITY_SAMPLES} samples.')
    per_direction = [
        ergodic(lambda block, index=index: service_rates(protocol, block)[index], fading_config, n_samples)
        for index in (0, 1)
    ]
    return min(estimate.mean for estimate in per_direction) / packet_len


def _check_rho(protocol, fading_config, arrival_config):
    factor = settings.TWR_SIM['RHO_CAP_FACTOR']
    limit = max_stable_par(protocol, fading_config, CAP_ESTIMATE_SAMPLES, arrival_config.packet_len)
    if arrival_config.rho > factor * limit:
        logger.warning(
            'Rejected rho=%g for %s: above %g x max stable PAR %.4g', arrival_config.rho, protocol, factor, limit,
        )
        raise ValidationError(
            f'Packet arrival rate {arrival_config.rho:g} exceeds {factor:g} x the estimated '
            f'maximum stable rate {limit:.4g} p/s/Hz for {protocol}; the source queues would grow without bound.'
        )


def simulate_system(protocol, fading_config, arrival_config, replication=0):
    _check_rho(protocol, fading_config, arrival_config)
    horizon, warmup = arrival_config.horizon_T, arrival_config.warmup
    logger.info(
        'System simulation: %s, rho=%g, horizon=%d, warmup=%d', protocol, arrival_config.rho, horizon, warmup,
    )
    block = realization_block(fading_config, horizon, replication)
    served_d02, served_d20 = (
        np.broadcast_to(np.asarray(rate, dtype=float), (horizon,)).tolist()
        for rate in service_rates(protocol, block)
    )
    arrival_rng = replication_rng(fading_config.seed, replication, ARRIVAL_STREAM)
    arrivals_d02 = arrival_rng.poisson(arrival_config.rho, size=horizon).tolist()
    arrivals_d20 = arrival_rng.poisson(arrival_config.rho, size=horizon).tolist()

    queues = {direction: SourceQueue(arrival_config.packet_len) for direction in Direction}
    delays = {direction: [] for direction in Direction}
    streams = (
        (Direction.D02, arrivals_d02, served_d02),
        (Direction.D20, arrivals_d20, served_d20),
    )
    for round_t in range(horizon):
        for direction, arrivals, budget in streams:
            queue = queues[direction]
            queue.enqueue(round_t, arrivals[round_t])
            for arrival_round, delay in queue.serve(round_t, budget[round_t]):
                if arrival_round > warmup:
                    delays[direction].append(delay)

    censored = sum(queue.censored_after(warmup) for queue in queues.values())
    if censored:
        logger.info('%s rho=%g: %d packet(s) still queued at the horizon', protocol, arrival_config.rho, censored)

    relay_stats = None
    if protocol == Protocol.AAB:
        relay_stats = simulate_relay(block, DelayMode.suboptimal(), warmup)

    def mean(values):
        return math.fsum(values) / len(values) if values else 0.0

    return SystemStats(
        mean_ss_delay_d02=mean(delays[Direction.D02]),
        mean_ss_delay_d20=mean(delays[Direction.D20]),
        mean_st_delay=relay_stats.mean_delay if relay_stats is not None else None,
        served_packets=len(delays[Direction.D02]) + len(delays[Direction.D20]),
        censored_packets=censored,
        relay_stats=relay_stats,
    )

"""
Delay of signal transmission (ST) through the relay buffers.

Each round the stronger uplink's surplus (in bits per Hz, real-valued) is
extracted into that direction's FIFO buffer: B02 when g01 >= g21, B20
otherwise. In later rounds where the other uplink is stronger, the relay has
spare broadcast rate towards the previously weak side and drains the buffer
front to back. An injection born in round t and emptied in round t + l has
delay l. Partial drains are allowed; drain arriving at an empty buffer is
lost.

Two modes set the per-round surplus and drain:

  upper_bound(theta)  surplus = theta * |C01 - C21|, drain = |C01 - C21|
  suboptimal          surplus = log2(1 + P|g01 - g21| / (sigma^2 + 2P g_min)),
                      drain = log2(1 + (1 - eta) P g_max / sigma^2), eta = eta_min

With at most one injection pending this reduces to the single-predecessor
recursion of the product form; eq4_oracle evaluates that form directly by
cumulative sums and is the reference the queue is checked against.
"""
import csv
import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from channel.fading import realization_block
from rates.formulas import eta_min, gaussian_layer_bits, link_capacities

logger = logging.getLogger(__name__)

# A head injection completes once its remaining bits are within this of the
# round's available drain.
COMPLETION_TOL = 1e-12


class Direction(models.TextChoices):
    D02 = 'd02', 'Source 0 to source 2 (B02)'
    D20 = 'd20', 'Source 2 to source 0 (B20)'


class DelayVariant(models.TextChoices):
    UPPER_BOUND = 'upper_bound', 'Upper bound (theta)'
    SUBOPTIMAL = 'suboptimal', 'Suboptimal lattice/Gaussian scheme'


@dataclass(frozen=True)
class DelayMode:
    variant: str
    theta: Optional[float] = None

    def __post_init__(self):
        if self.variant == DelayVariant.UPPER_BOUND:
            if self.theta is None or not 0.0 <= self.theta <= 1.0:
                raise ValidationError(f'theta must lie in [0, 1], got {self.theta}.')
        elif self.variant == DelayVariant.SUBOPTIMAL:
            if self.theta is not None:
                raise ValidationError('theta only applies to the upper-bound mode.')
        else:
            raise ValidationError(f'Unknown delay mode: {self.variant!r}')

    @classmethod
    def upper_bound(cls, theta):
        return cls(DelayVariant.UPPER_BOUND, float(theta))

    @classmethod
    def suboptimal(cls):
        return cls(DelayVariant.SUBOPTIMAL)

    @property
    def is_upper_bound(self):
        return self.variant == DelayVariant.UPPER_BOUND

    def __str__(self):
        if self.is_upper_bound:
            return f'upper_bound(theta={self.theta:g})'
        return 'suboptimal'


@dataclass
class Injection:
    birth_round: int
    bits_total: float
    bits_remaining: float
    direction: str


class CompletionEvent(NamedTuple):
    direction: str
    birth_round: int
    completion_round: int
    delay: int


def _capacity_gap(realization):
    c01, c21 = link_capacities(realization)
    return np.abs(np.asarray(c01) - np.asarray(c21))


def _round_bits(mode, realization, eta=None):
    """
    Per-round (to_d02, inject_bits, drain_d02, drain_d20).

    Works elementwise on a ChannelBlock. Exact ties inject nothing and drain
    nothing.
    """
    g01 = np.asarray(realization.g01, dtype=float)
    g21 = np.asarray(realization.g21, dtype=float)
    to_d02 = g01 >= g21
    if mode.is_upper_bound:
        gap = _capacity_gap(realization)
        inject = mode.theta * gap
        drain = gap
    else:
        if eta is None:
            eta = eta_min(realization)
        power, noise = realization.power_P, realization.noise_var
        inject = gaussian_layer_bits(realization)
        drain = np.log2(1.0 + (1.0 - np.asarray(eta)) * power * np.maximum(g01, g21) / noise)
    inject = np.where(g01 == g21, 0.0, inject)
    drain_d02 = np.where(g21 > g01, drain, 0.0)
    drain_d20 = np.where(g01 > g21, drain, 0.0)
    return to_d02, inject, drain_d02, drain_d20


def surplus_bits(mode, realization):
    """(direction, bits) extracted into the relay buffer this round."""
    to_d02, inject, _, _ = _round_bits(mode, realization)
    if np.ndim(to_d02) == 0:
        return (Direction.D02 if to_d02 else Direction.D20), float(inject)
    return np.where(to_d02, Direction.D02.value, Direction.D20.value), inject


def drain_bits(mode, realization, eta_at_round=None):
    """
    (direction, bits) the relay can embed for the buffered direction this round.

    d02 is drained when g21 > g01 and d20 when g01 > g21; a tie drains
    neither and returns (None, 0.0). eta_at_round defaults to eta_min of the
    realization and is ignored in upper-bound mode.
    """
    _, _, drain_d02, drain_d20 = _round_bits(mode, realization, eta_at_round)
    if np.ndim(drain_d02) == 0:
        g01, g21 = realization.g01, realization.g21
        if g21 > g01:
            return Direction.D02, float(drain_d02)
        if g01 > g21:
            return Direction.D20, float(drain_d20)
        return None, 0.0
    direction = np.where(
        realization.g21 > realization.g01, Direction.D02.value,
        np.where(realization.g01 > realization.g21, Direction.D20.value, ''),
    )
    return direction, drain_d02 + drain_d20


class RelayBacklogQueue:
    """FIFO fluid-bit buffers B02 and B20 of the relay."""

    def __init__(self):
        self.fifos = {direction: deque() for direction in Direction}
        self.completed_delays = {direction: [] for direction in Direction}
        self.injected = {direction: 0.0 for direction in Direction}
        self.drained = {direction: 0.0 for direction in Direction}
        self.last_round = None

    @property
    def completed_delays_d02(self):
        return self.completed_delays[Direction.D02]

    @property
    def completed_delays_d20(self):
        return self.completed_delays[Direction.D20]

    @property
    def censored_count(self):
        return sum(len(fifo) for fifo in self.fifos.values())

    def pending(self, direction):
        return list(self.fifos[direction])

    def backlog(self, direction):
        return self.injected[direction] - self.drained[direction]

    def conservation_error(self, direction):
        remaining = math.fsum(item.bits_remaining for item in self.fifos[direction])
        return self.injected[direction] - self.drained[direction] - remaining

    def advance(self, round_t, inject_direction, inject_bits, drain_d02, drain_d20):
        """
        Apply one round: inject, then drain both buffers.

        Returns the completion events of the round. Rounds must be fed in
        strictly increasing order.
        """
        if self.last_round is not None and round_t <= self.last_round:
            raise ValueError(f'Round {round_t} fed after round {self.last_round}.')
        self.last_round = round_t
        if inject_bits > 0.0:
            direction = Direction(inject_direction)
            self.fifos[direction].append(
                Injection(round_t, inject_bits, inject_bits, direction)
            )
            self.injected[direction] += inject_bits
        events = self._drain(Direction.D02, drain_d02, round_t)
        events.extend(self._drain(Direction.D20, drain_d20, round_t))
        return events

    def _drain(self, direction, budget, round_t):
        fifo = self.fifos[direction]
        events = []
        while fifo:
            head = fifo[0]
            if head.birth_round >= round_t:
                break
            if head.bits_remaining <= budget + COMPLETION_TOL:
                budget -= head.bits_remaining
                self.drained[direction] += head.bits_remaining
                head.bits_remaining = 0.0
                fifo.popleft()
                delay = round_t - head.birth_round
                self.completed_delays[direction].append(delay)
                events.append(CompletionEvent(direction, head.birth_round, round_t, delay))
                continue
            if budget > 0.0:
                head.bits_remaining -= budget
                self.drained[direction] += budget
            break
        return events


def step(queue, mode, realization, eta_at_round=None):
    """Feed one realization through the queue; returns its completion events."""
    to_d02, inject, drain_d02, drain_d20 = _round_bits(mode, realization, eta_at_round)
    return queue.advance(
        realization.round_t,
        Direction.D02 if to_d02 else Direction.D20,
        float(inject), float(drain_d02), float(drain_d20),
    )


@dataclass(frozen=True)
class DelayStats:
    mean_l01: float
    mean_l21: float
    count_01: int
    count_21: int
    censored_count: int

    @property
    def mean_delay(self):
        count = self.count_01 + self.count_21
        if count == 0:
            return 0.0
        return (self.mean_l01 * self.count_01 + self.mean_l21 * self.count_21) / count

    @classmethod
    def from_delays(cls, delays_01, delays_21, censored_count):
        return cls(
            mean_l01=math.fsum(delays_01) / len(delays_01) if delays_01 else 0.0,
            mean_l21=math.fsum(delays_21) / len(delays_21) if delays_21 else 0.0,
            count_01=len(delays_01),
            count_21=len(delays_21),
            censored_count=censored_count,
        )


TRACE_COLUMNS = [
    'round', 'g01', 'g21', 'inject_dir', 'inject_bits', 'drain_d02', 'drain_d20',
    'backlog_d02', 'backlog_d20', 'completions',
]


class DelayTrace:
    """Per-round CSV trace of the relay buffers."""

    def __init__(self, stream):
        self.writer = csv.writer(stream, lineterminator='\n')
        self.writer.writerow(TRACE_COLUMNS)

    def write_round(self, round_t, g01, g21, inject_direction, inject_bits, drain_d02, drain_d20, queue, completions):
        self.writer.writerow([
            round_t, f'{g01:.9g}', f'{g21:.9g}',
            inject_direction if inject_bits > 0.0 else '',
            f'{inject_bits:.9g}', f'{drain_d02:.9g}', f'{drain_d20:.9g}',
            f'{queue.backlog(Direction.D02):.9g}', f'{queue.backlog(Direction.D20):.9g}',
            completions,
        ])


def simulate_relay(block, mode, warmup=0, trace=None):
    """
    Stream a channel block through a fresh queue.

    Delays are averaged over injections born after `warmup`; injections
    still buffered at the end are counted as censored and left out.
    """
    to_d02, inject, drain_d02, drain_d20 = (
        np.asarray(values).tolist() for values in _round_bits(mode, block)
    )
    queue = RelayBacklogQueue()
    delays = {Direction.D02: [], Direction.D20: []}
    g01 = block.g01.tolist() if trace is not None else None
    g21 = block.g21.tolist() if trace is not None else None
    start = block.start_round
    for index in range(len(block)):
        round_t = start + index
        direction = Direction.D02 if to_d02[index] else Direction.D20
        events = queue.advance(round_t, direction, inject[index], drain_d02[index], drain_d20[index])
        for event in events:
            if event.birth_round > warmup:
                delays[event.direction].append(event.delay)
        if trace is not None:
            trace.write_round(
                round_t, g01[index], g21[index], direction, inject[index],
                drain_d02[index], drain_d20[index], queue, len(events),
            )
    censored = sum(
        1 for fifo in queue.fifos.values() for item in fifo if item.birth_round > warmup
    )
    if censored:
        logger.info('%s: %d injection(s) still buffered at the horizon', mode, censored)
    return DelayStats.from_delays(delays[Direction.D02], delays[Direction.D20], censored)


def run_delay_sim(fading_config, mode, horizon_T, warmup, replication=0, trace=None):
    if not 0 <= warmup < horizon_T:
        raise ValidationError(f'Need 0 <= warmup < horizon, got warmup={warmup}, horizon={horizon_T}.')
    logger.info('Relay delay simulation: %s, horizon=%d, warmup=%d', mode, horizon_T, warmup)
    block = realization_block(fading_config, horizon_T, replication)
    return simulate_relay(block, mode, warmup, trace)


def oracle_sequences(mode, block):
    """
    Per-round ((direction, surplus_bits), (direction, drain_bits)) lists for
    eq4_oracle. Directions are None where nothing is injected or drained.
    """
    to_d02, inject, drain_d02, drain_d20 = (
        np.asarray(values).tolist() for values in _round_bits(mode, block)
    )
    surplus = []
    drain = []
    for index in range(len(block)):
        if inject[index] > 0.0:
            surplus.append((Direction.D02 if to_d02[index] else Direction.D20, inject[index]))
        else:
            surplus.append((None, 0.0))
        if drain_d02[index] > 0.0:
            drain.append((Direction.D02, drain_d02[index]))
        elif drain_d20[index] > 0.0:
            drain.append((Direction.D20, drain_d20[index]))
        else:
            drain.append((None, 0.0))
    return surplus, drain


def eq4_oracle(surplus_log_sequence, drain_log_sequence):
    """
    Delay of every injection by direct cumulative-sum evaluation.

    For each injection in birth order: if its predecessor in the same
    direction completed after it was born, it first uses what was left of
    that completion round's drain and then accumulates drains from the next
    round on; otherwise it accumulates drains from the round after its own
    birth. The delay is the first round whose accumulated drain covers it.

    Returns {direction: [(birth_round, delay or None if never covered), ...]}.
    """
    n_rounds = len(surplus_log_sequence)
    if len(drain_log_sequence) != n_rounds:
        raise ValidationError('Surplus and drain sequences must have the same length.')
    result = {}
    for direction in Direction:
        drains = [
            bits if drain_direction == direction else 0.0
            for drain_direction, bits in drain_log_sequence
        ]
        outcomes = []
        previous_completion = None
        carry = 0.0
        for birth, (surplus_direction, bits) in enumerate(surplus_log_sequence):
            if surplus_direction != direction or bits <= 0.0:
                continue
            if previous_completion is None and outcomes:
                # an earlier injection was never covered; FIFO blocks this one too
                outcomes.append((birth, None))
                continue
            if previous_completion is not None and previous_completion > birth:
                if bits <= carry + COMPLETION_TOL:
                    carry -= bits
                    outcomes.append((birth, previous_completion - birth))
                    continue
                need = bits - max(carry, 0.0)
                first_round = previous_completion + 1
            else:
                need = bits
                first_round = birth + 1
            covered = 0.0
            completion = None
            for round_t in range(first_round, n_rounds):
                covered += drains[round_t]
                if covered >= need - COMPLETION_TOL:
                    completion = round_t
                    carry = covered - need
                    break
            previous_completion = completion
            outcomes.append((birth, None if completion is None else completion - birth))
        result[direction] = outcomes
    return result


def queue_delays(surplus_log_sequence, drain_log_sequence):
    """
    Run oracle-format sequences through a RelayBacklogQueue and report the
    delays in eq4_oracle's output format.
    """
    queue = RelayBacklogQueue()
    delays = {}
    rounds = zip(surplus_log_sequence, drain_log_sequence)
    for round_t, ((inject_direction, inject), (drain_direction, bits)) in enumerate(rounds):
        events = queue.advance(
            round_t, inject_direction or Direction.D02, inject,
            bits if drain_direction == Direction.D02 else 0.0,
            bits if drain_direction == Direction.D20 else 0.0,
        )
        for event in events:
            delays[(event.direction, event.birth_round)] = event.delay
    return {
        direction: [
            (birth, delays.get((direction, birth)))
            for birth, (inject_direction, bits) in enumerate(surplus_log_sequence)
            if inject_direction == direction and bits > 0.0
        ]
        for direction in Direction
    }

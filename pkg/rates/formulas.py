"""
Closed-form instantaneous rates, capacity bounds and power splits for the
AAB two-way relay protocol, plus Monte-Carlo ergodic averaging.

Every formula accepts either a ChannelRealization (scalar gains) or a
ChannelBlock (array gains) and returns a value of the matching shape. The
"strong" side is the uplink with the larger gain; ties count link 0->1 as
strong.

The AAB sum-rate carries no 1/2 on its first term while the per-direction MA
rates do. The sum of the MA pair equals the sum-rate exactly as written, and
that identity is what the implementation keeps.
"""
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from django.core.exceptions import ValidationError

from channel.fading import CHANNEL_STREAM, replication_rng, sample_block

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 1 << 16


def _plus(x):
    return np.maximum(x, 0.0)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


def _gains(realization):
    g01 = np.asarray(realization.g01, dtype=float)
    g21 = np.asarray(realization.g21, dtype=float)
    return g01, g21, np.minimum(g01, g21), np.maximum(g01, g21)


def _snr_scale(realization):
    return realization.power_P / realization.noise_var


def shannon_capacity(gamma):
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 0):
        raise ValidationError('SNR must be non-negative.')
    return _scalar(np.log2(1.0 + gamma))


def link_capacities(realization):
    scale = _snr_scale(realization)
    g01, g21, _, _ = _gains(realization)
    return shannon_capacity(scale * g01), shannon_capacity(scale * g21)


def trad_upper_bound(realization):
    """min(C01, C21): the traditional bound, limited by the weaker uplink."""
    c01, c21 = link_capacities(realization)
    return _scalar(np.minimum(c01, c21))


def aab_upper_bound(realization):
    """(C01 + C21) / 2: the AAB bound with the min operation removed."""
    c01, c21 = link_capacities(realization)
    return _scalar((np.asarray(c01) + np.asarray(c21)) / 2.0)


def lattice_layer_bits(realization):
    # [log2(1/2 + P g_min / sigma^2)]^+
    _, _, g_min, _ = _gains(realization)
    return _plus(np.log2(0.5 + _snr_scale(realization) * g_min))


def gaussian_layer_bits(realization):
    # log2(1 + P |g01 - g21| / (sigma^2 + 2 P g_min))
    g01, g21, g_min, _ = _gains(realization)
    power, noise = realization.power_P, realization.noise_var
    return np.log2(1.0 + power * np.abs(g01 - g21) / (noise + 2.0 * power * g_min))


class RatePair(NamedTuple):
    strong: object
    weak: object
    strong_is_01: object


class BroadcastRatePair(NamedTuple):
    to_weak_side: object
    to_strong_side: object


def ma_rate_pair(realization):
    g01, g21, _, _ = _gains(realization)
    weak = 0.5 * lattice_layer_bits(realization)
    strong = weak + 0.5 * gaussian_layer_bits(realization)
    strong_is_01 = g01 >= g21
    if np.ndim(strong_is_01) == 0:
        strong_is_01 = bool(strong_is_01)
    return RatePair(_scalar(strong), _scalar(weak), strong_is_01)


def directional_pair(pair):
    """(r01, r21) for a strong/weak pair."""
    r01 = np.where(pair.strong_is_01, pair.strong, pair.weak)
    r21 = np.where(pair.strong_is_01, pair.weak, pair.strong)
    return _scalar(r01), _scalar(r21)


def _check_eta(eta):
    eta = np.asarray(eta, dtype=float)
    if np.any((eta < 0.0) | (eta > 1.0)) or np.any(np.isnan(eta)):
        raise ValidationError('Relay power split eta must lie in [0, 1].')
    return eta


def bc_rate_pair(realization, eta):
    """
    Broadcast rates with relay power split eta between the lattice layer
    (eta) and the Gaussian layer (1 - eta).

    The weak side decodes the lattice layer after removing the Gaussian layer
    it already knows. The strong side decodes the lattice layer treating the
    Gaussian layer as noise, then the Gaussian layer.
    """
    eta = _check_eta(eta)
    _, _, g_min, g_max = _gains(realization)
    power, noise = realization.power_P, realization.noise_var
    to_weak = 0.5 * np.log2(1.0 + eta * power * g_min / noise)
    to_strong = 0.5 * (
        np.log2(1.0 + eta * power * g_max / (noise + (1.0 - eta) * power * g_max))
        + np.log2(1.0 + (1.0 - eta) * power * g_max / noise)
    )
    return BroadcastRatePair(_scalar(to_weak), _scalar(to_strong))


def zeta(realization):
    """Source power split equalizing the two lattice SNRs at the relay: g_min / g_max."""
    _, _, g_min, g_max = _gains(realization)
    degenerate = g_max <= 0.0
    if np.any(degenerate):
        logger.warning('zeta: %d realization(s) with both gains zero, split set to 1', int(np.sum(degenerate)))
    ratio = np.divide(g_min, g_max, out=np.ones_like(g_max), where=~degenerate)
    return _scalar(np.clip(ratio, 0.0, 1.0))


def eta_min(realization):
    """Smallest relay split keeping the weak side's rate at its MA-phase value."""
    _, _, g_min, g_max = _gains(realization)
    scale = _snr_scale(realization)
    a = scale * g_min
    b = scale * g_max
    ratio = np.divide(g_min, g_max, out=np.ones_like(g_max), where=g_max > 0.0)
    with np.errstate(divide='ignore', invalid='ignore'):
        low_ratio = 1.0 - 1.0 / (2.0 * a)
        high_ratio = (2.0 * a - 1.0) * (b + 1.0) / (b * (1.0 + 2.0 * a))
    eta = np.select(
        [a < 0.5, ratio <= 0.5],
        [0.0, low_ratio],
        default=high_ratio,
    )
    return _scalar(np.clip(eta, 0.0, 1.0))


def aab_sum_rate(realization):
    return _scalar(lattice_layer_bits(realization) + 0.5 * gaussian_layer_bits(realization))


def dnf_sum_rate(realization):
    return _scalar(lattice_layer_bits(realization))


@dataclass(frozen=True)
class InstantRates:
    c01: float
    c21: float
    r01: float
    r21: float
    r10: float
    r12: float
    sum_trad_ub: float
    sum_aab_ub: float
    sum_aab_ach: float
    sum_dnf: float
    zeta: float
    eta: float


def instant_rates(realization):
    """All per-round quantities for one realization, with eta = eta_min."""
    c01, c21 = link_capacities(realization)
    r01, r21 = directional_pair(ma_rate_pair(realization))
    eta = eta_min(realization)
    broadcast = bc_rate_pair(realization, eta)
    strong_is_01 = np.asarray(realization.g01) >= np.asarray(realization.g21)
    r10 = _scalar(np.where(strong_is_01, broadcast.to_strong_side, broadcast.to_weak_side))
    r12 = _scalar(np.where(strong_is_01, broadcast.to_weak_side, broadcast.to_strong_side))
    return InstantRates(
        c01=c01, c21=c21, r01=r01, r21=r21, r10=r10, r12=r12,
        sum_trad_ub=trad_upper_bound(realization),
        sum_aab_ub=aab_upper_bound(realization),
        sum_aab_ach=aab_sum_rate(realization),
        sum_dnf=dnf_sum_rate(realization),
        zeta=zeta(realization),
        eta=eta,
    )


@dataclass(frozen=True)
class ErgodicEstimate:
    mean: float
    std_error: float
    n_samples: int

    def __str__(self):
        return f'{self.mean:.6g} +/- {self.std_error:.2g} (n={self.n_samples})'


class _RunningMoments:
    """Mean and sum of squared deviations, merged batch by batch."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add_batch(self, values):
        n_b = values.size
        if n_b == 0:
            return
        mean_b = math.fsum(values.tolist()) / n_b
        m2_b = math.fsum(((values - mean_b) ** 2).tolist())
        total = self.count + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / total
        self.m2 += m2_b + delta * delta * self.count * n_b / total
        self.count = total

    def estimate(self):
        if self.count > 1:
            variance = self.m2 / (self.count - 1)
            std_error = math.sqrt(max(variance, 0.0) / self.count)
        else:
            std_error = 0.0
        return ErgodicEstimate(mean=self.mean, std_error=std_error, n_samples=self.count)


def ergodic(instant_fn, fading_config, n_samples, replication=0, batch_size=DEFAULT_BATCH_SIZE):
    """
    Sample mean and standard error of instant_fn over n_samples realizations.

    instant_fn receives a ChannelBlock and returns one value per round (a
    scalar is broadcast). Batches are drawn in order from one replication
    stream, so the estimate is a function of (config, n_samples, replication).
    """
    if n_samples < 1:
        raise ValidationError('ergodic needs at least one sample.')
    rng = replication_rng(fading_config.seed, replication, CHANNEL_STREAM)
    moments = _RunningMoments()
    drawn = 0
    while drawn < n_samples:
        size = min(batch_size, n_samples - drawn)
        block = sample_block(fading_config, rng, size, start_round=drawn, replication=replication)
        values = np.broadcast_to(np.asarray(instant_fn(block), dtype=float), (size,))
        moments.add_batch(values)
        drawn += size
    estimate = moments.estimate()
    logger.debug('ergodic(%s) over %d samples: %s', getattr(instant_fn, '__name__', instant_fn), n_samples, estimate)
    return estimate

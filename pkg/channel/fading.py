"""
Reciprocal fading channel generation for the two-way relay geometry.

Source 0 sits at (-0.5, 0) and source 2 at (0.5, 0); the relay (node 1) is
placed by the configured placement policy. A link gain is
|alpha|^2 * d^-beta with |alpha|^2 ~ Gamma(shape=m, mean=1), the power of a
Nakagami-m coefficient. Only power gains are kept; downlinks reuse the uplink
gains (h10 = h01, h12 = h21).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

logger = logging.getLogger(__name__)

SOURCE0_POSITION = (-0.5, 0.0)
SOURCE2_POSITION = (0.5, 0.0)

MIN_NAKAGAMI_M = 0.5

# spawn_key slots of a replication's SeedSequence
CHANNEL_STREAM = 0
ARRIVAL_STREAM = 1
PLACEMENT_STREAM = 2


class Endpoint(models.TextChoices):
    SOURCE0 = 'source0', 'Source 0'
    SOURCE2 = 'source2', 'Source 2'


class Link(models.TextChoices):
    UPLINK01 = '01', 'Uplink 0 to 1'
    UPLINK21 = '21', 'Uplink 2 to 1'
    DOWNLINK10 = '10', 'Downlink 1 to 0'
    DOWNLINK12 = '12', 'Downlink 1 to 2'


class Placement(models.TextChoices):
    FIXED = 'fixed', 'Fixed relay position'
    UNIFORM_PER_ROUND = 'uniform_per_round', 'Uniform, redrawn every round'
    UNIFORM_PER_REPLICATION = 'uniform_per_replication', 'Uniform, drawn once per replication'


@dataclass(frozen=True)
class Geometry:
    relay_x: float = 0.0
    relay_y: float = 0.0
    beta: float = 3.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError('Path-loss exponent beta must be positive.')
        for endpoint in Endpoint:
            if distance(self, endpoint) <= 0:
                raise ValidationError(
                    f'Relay at ({self.relay_x}, {self.relay_y}) coincides with {endpoint.label}.'
                )


def _source_position(endpoint):
    if endpoint == Endpoint.SOURCE0:
        return SOURCE0_POSITION
    if endpoint == Endpoint.SOURCE2:
        return SOURCE2_POSITION
    raise ValidationError(f'Unknown endpoint: {endpoint!r}')


def distance(geometry, endpoint):
    """
    Euclidean distance from the named source to the relay.

    `geometry` is a Geometry or a bare (x, y) relay point; a bare point is not
    validated, so a relay sitting on the other source is measured as is.
    """
    if isinstance(geometry, Geometry):
        relay_x, relay_y = geometry.relay_x, geometry.relay_y
    else:
        relay_x, relay_y = geometry
    x, y = _source_position(endpoint)
    return math.hypot(relay_x - x, relay_y - y)


@dataclass(frozen=True)
class FadingConfig:
    nakagami_m: float = 1.0
    power_P: float = 100.0
    noise_var: float = 1.0
    placement: str = Placement.UNIFORM_PER_ROUND
    geometry: Geometry = field(default_factory=Geometry)
    seed: int = 0

    def __post_init__(self):
        if not self.nakagami_m >= MIN_NAKAGAMI_M:
            raise ValidationError(
                f'Nakagami shape m must be at least {MIN_NAKAGAMI_M}, got {self.nakagami_m}.'
            )
        if not self.power_P >= 0 or not math.isfinite(self.power_P):
            raise ValidationError('Transmit power P must be finite and non-negative.')
        if not self.noise_var > 0:
            raise ValidationError('Noise variance must be positive.')
        if self.placement not in Placement.values:
            raise ValidationError(f'Unknown placement policy: {self.placement!r}')
        if self.seed < 0:
            raise ValidationError('Seed must be a non-negative integer.')

    @classmethod
    def from_power_db(cls, power_db, **kwargs):
        """Build a config from P/sigma^2 in dB with unit noise variance."""
        if not math.isfinite(power_db):
            raise ValidationError('P/sigma^2 in dB must be finite.')
        return cls(power_P=10.0 ** (power_db / 10.0), noise_var=1.0, **kwargs)

    @property
    def power_db(self):
        return 10.0 * math.log10(self.power_P / self.noise_var)

    @property
    def snr_scale(self):
        return self.power_P / self.noise_var


@dataclass(frozen=True)
class ChannelRealization:
    round_t: int
    g01: float
    g21: float
    power_P: float
    noise_var: float

    @property
    def g_min(self):
        return min(self.g01, self.g21)

    @property
    def g_max(self):
        return max(self.g01, self.g21)


@dataclass(frozen=True, eq=False)
class ChannelBlock:
    """
    A run of consecutive realizations held as arrays.

    Exposes the same attribute names as ChannelRealization, so the rate and
    delay formulas evaluate a whole block at once.
    """
    g01: np.ndarray
    g21: np.ndarray
    power_P: float
    noise_var: float
    start_round: int = 0

    def __len__(self):
        return len(self.g01)

    def __getitem__(self, index):
        if index < 0:
            index += len(self)
        return ChannelRealization(
            round_t=self.start_round + index,
            g01=float(self.g01[index]),
            g21=float(self.g21[index]),
            power_P=self.power_P,
            noise_var=self.noise_var,
        )

    def __iter__(self) -> Iterator[ChannelRealization]:
        for index in range(len(self)):
            yield self[index]

    @property
    def rounds(self):
        return np.arange(self.start_round, self.start_round + len(self))

    @classmethod
    def from_gains(cls, g01, g21, power_P=1.0, noise_var=1.0, start_round=0):
        g01 = np.asarray(g01, dtype=float)
        g21 = np.asarray(g21, dtype=float)
        if g01.shape != g21.shape:
            raise ValidationError('Gain sequences must have the same length.')
        if np.any(g01 < 0) or np.any(g21 < 0):
            raise ValidationError('Power gains must be non-negative.')
        return cls(g01=g01, g21=g21, power_P=power_P, noise_var=noise_var, start_round=start_round)


def replication_rng(seed, replication=0, stream=CHANNEL_STREAM):
    """Independent PCG64 stream for one (seed, replication, stream) triple."""
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(replication, stream))
    return np.random.Generator(np.random.PCG64(sequence))


def nakagami_power(rng, m, size):
    """Gamma(shape=m, scale=1/m) draws: unit-mean Nakagami-m power."""
    return rng.gamma(shape=m, scale=1.0 / m, size=size)


def relay_positions(config, rng, n_rounds, replication):
    if config.placement == Placement.FIXED:
        return (np.full(n_rounds, config.geometry.relay_x),
                np.full(n_rounds, config.geometry.relay_y))
    if config.placement == Placement.UNIFORM_PER_ROUND:
        return (rng.uniform(-0.5, 0.5, size=n_rounds),
                rng.uniform(-0.5, 0.5, size=n_rounds))
    placement_rng = replication_rng(config.seed, replication, PLACEMENT_STREAM)
    x, y = placement_rng.uniform(-0.5, 0.5, size=2)
    return np.full(n_rounds, x), np.full(n_rounds, y)


def sample_block(config, rng, n_rounds, start_round=0, replication=0):
    """Draw n_rounds realizations: placement first, then g01 and g21 independently."""
    if n_rounds < 0:
        raise ValidationError('Number of rounds must be non-negative.')
    relay_x, relay_y = relay_positions(config, rng, n_rounds, replication)
    beta = config.geometry.beta
    d01 = np.hypot(relay_x - SOURCE0_POSITION[0], relay_y - SOURCE0_POSITION[1])
    d21 = np.hypot(relay_x - SOURCE2_POSITION[0], relay_y - SOURCE2_POSITION[1])
    alpha01 = nakagami_power(rng, config.nakagami_m, n_rounds)
    alpha21 = nakagami_power(rng, config.nakagami_m, n_rounds)
    return ChannelBlock(
        g01=alpha01 * d01 ** (-beta),
        g21=alpha21 * d21 ** (-beta),
        power_P=config.power_P,
        noise_var=config.noise_var,
        start_round=start_round,
    )


def sample_round(config, rng, round_t=0, replication=0):
    return sample_block(config, rng, 1, start_round=round_t, replication=replication)[0]


def realization_block(config, n_rounds, replication=0):
    """The channel stream of one replication, deterministic in (seed, replication)."""
    rng = replication_rng(config.seed, replication, CHANNEL_STREAM)
    logger.debug(
        'Sampling %d rounds (m=%s, P/sigma^2=%.2f dB, placement=%s, seed=%d, replication=%d)',
        n_rounds, config.nakagami_m, config.power_db, config.placement, config.seed, replication,
    )
    return sample_block(config, rng, n_rounds, replication=replication)


def snr(realization, link):
    """gamma = P * g / sigma^2 for the gain behind the link (reciprocal pairs share it)."""
    if link in (Link.UPLINK01, Link.DOWNLINK10):
        gain = realization.g01
    elif link in (Link.UPLINK21, Link.DOWNLINK12):
        gain = realization.g21
    else:
        raise ValidationError(f'Unknown link: {link!r}')
    return realization.power_P * gain / realization.noise_var


def fading_config_from_options(options):
    """
    Build a FadingConfig from the flat option keys used by config files.

    Expected keys: nakagami_m, power_db, beta, placement, relay_x, relay_y, seed.
    """
    placement = options['placement']
    relay_x = options.get('relay_x') or 0.0
    relay_y = options.get('relay_y') or 0.0
    if placement != Placement.FIXED:
        # Geometry still validates beta; the position is ignored by random placements.
        relay_x, relay_y = 0.0, 0.0
    return FadingConfig.from_power_db(
        options['power_db'],
        nakagami_m=options['nakagami_m'],
        placement=placement,
        geometry=Geometry(relay_x=relay_x, relay_y=relay_y, beta=options['beta']),
        seed=options['seed'],
    )

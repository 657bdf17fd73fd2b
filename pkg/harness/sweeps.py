"""
Experiment sweeps binding channel, rates, relay_delay and queueing.

Each runner takes a SweepSpec and returns a SweepResult with one row per
axis value, in axis order. Runs that share a seed share their channel
stream, so rows within a sweep are coupled.
"""
import logging
from dataclasses import replace

import numpy as np

from channel.fading import ChannelBlock, FadingConfig, realization_block, replication_rng, sample_block
from queueing.system import ArrivalConfig, Protocol, max_stable_par, simulate_system
from rates.formulas import (
    aab_sum_rate, aab_upper_bound, bc_rate_pair, dnf_sum_rate, ergodic, eta_min, ma_rate_pair,
    trad_upper_bound,
)
from relay_delay.engine import (
    DelayMode, Direction, eq4_oracle, oracle_sequences, queue_delays, run_delay_sim, simulate_relay,
)
from TwrSim import __version__

from .models import Experiment
from .results import SweepResult

logger = logging.getLogger(__name__)

PAIR_SUM_TOL = 1e-12
ETA_TOL = 1e-12
NEAR_TIE_SCALE = 1e-13
INVARIANT_BATCH = 1 << 16


def _result(spec, columns, rows, passed=None, mismatches=None):
    metadata = {
        'experiment': spec.experiment,
        'version': __version__,
        'seed': spec.seed,
        'config': dict(spec.config_echo),
    }
    return SweepResult(
        experiment=spec.experiment,
        columns=columns,
        rows=rows,
        metadata=metadata,
        passed=passed,
        mismatches=mismatches or [],
    )


def _at_power_db(fading, power_db, **changes):
    return replace(fading, power_P=10.0 ** (power_db / 10.0), noise_var=1.0, **changes)


def run_theta_sweep(spec):
    block = realization_block(spec.fading, spec.horizon_T)
    rows = []
    for theta in spec.axis:
        stats = simulate_relay(block, DelayMode.upper_bound(theta), spec.warmup)
        logger.info('theta=%g: mean delay %.4g', theta, stats.mean_delay)
        rows.append((theta, stats.mean_l01, stats.mean_l21, stats.censored_count))
    return _result(spec, ['theta', 'mean_l01', 'mean_l21', 'censored'], rows)


def run_snr_delay_sweep(spec):
    rows = []
    for power_db in spec.axis:
        config = _at_power_db(spec.fading, power_db)
        stats = run_delay_sim(config, DelayMode.suboptimal(), spec.horizon_T, spec.warmup)
        logger.info('P/sigma^2=%g dB: mean delay %.4g', power_db, stats.mean_delay)
        rows.append((power_db, stats.mean_l01, stats.mean_l21, stats.censored_count))
    return _result(spec, ['snr_db', 'mean_l01', 'mean_l21', 'censored'], rows)


ESR_QUANTITIES = (
    ('trad_ub', trad_upper_bound),
    ('aab_ub', aab_upper_bound),
    ('aab_ach', aab_sum_rate),
    ('dnf', dnf_sum_rate),
)


def run_esr_sweep(spec):
    columns = ['snr_db']
    for name, _ in ESR_QUANTITIES:
        columns.extend([name, f'{name}_se'])
    columns.extend(['ub_gain', 'ach_gap_to_ub', 'ach_gain_over_dnf'])
    rows = []
    for power_db in spec.axis:
        config = _at_power_db(spec.fading, power_db)
        estimates = {name: ergodic(fn, config, spec.n_samples) for name, fn in ESR_QUANTITIES}
        row = [power_db]
        for name, _ in ESR_QUANTITIES:
            row.extend([estimates[name].mean, estimates[name].std_error])
        row.extend([
            estimates['aab_ub'].mean - estimates['trad_ub'].mean,
            estimates['aab_ub'].mean - estimates['aab_ach'].mean,
            estimates['aab_ach'].mean - estimates['dnf'].mean,
        ])
        rows.append(tuple(row))
    return _result(spec, columns, rows)


def par_axis(spec):
    """Absolute arrival rates: rho_values if given, else fractions of DNF's max stable PAR."""
    if spec.axis:
        return list(spec.axis)
    limit = max_stable_par(Protocol.DNF, spec.fading, max(spec.n_samples, 1000), spec.packet_len)
    return [fraction * limit for fraction in spec.rho_fractions]


def run_par_sweep(spec):
    rows = []
    for rho in par_axis(spec):
        arrivals = ArrivalConfig(rho=rho, packet_len=spec.packet_len, horizon_T=spec.horizon_T, warmup=spec.warmup)
        for protocol in spec.protocols:
            stats = simulate_system(Protocol(protocol), spec.fading, arrivals)
            rows.append((
                protocol, rho, stats.mean_ss_delay_d02, stats.mean_ss_delay_d20,
                stats.mean_st_delay, stats.served_packets, stats.censored_packets,
            ))
    columns = ['protocol', 'rho', 'mean_ss_d02', 'mean_ss_d20', 'mean_st', 'served', 'censored']
    return _result(spec, columns, rows)


def oracle_block(spec, sequence):
    """
    Channel sequence number `sequence` of the oracle check. Sequence 0 is
    symmetric and every tenth one has near-ties on a third of its rounds.
    """
    block = realization_block(spec.fading, spec.oracle_rounds, replication=sequence)
    g01, g21 = block.g01.copy(), block.g21.copy()
    if sequence == 0:
        g21 = g01.copy()
    elif sequence % 10 == 9:
        rng = replication_rng(spec.seed, sequence, stream=3)
        g21[::3] = g01[::3] * (1.0 + rng.uniform(-NEAR_TIE_SCALE, NEAR_TIE_SCALE, size=g01[::3].size))
    return ChannelBlock(g01=g01, g21=g21, power_P=block.power_P, noise_var=block.noise_var)


def busy_period_start(outcomes, index):
    """Birth round of the first injection still buffered when injection `index` was born."""
    start = index
    while start > 0:
        previous_birth, previous_delay = outcomes[start - 1]
        if previous_delay is not None and previous_birth + previous_delay <= outcomes[start][0]:
            break
        start -= 1
    return outcomes[start][0]


def reproducer(mode, block, sequence, direction, first_round, birth, oracle_delay, queue_delay):
    """
    The gains needed to replay one mismatch: from the start of its busy
    period to the later of the two completion rounds.
    """
    delays = [delay for delay in (oracle_delay, queue_delay) if delay is not None]
    end = birth + max(delays) + 1 if len(delays) == 2 else len(block)
    return {
        'mode': str(mode),
        'sequence': sequence,
        'direction': str(direction),
        'birth_round': birth,
        'oracle_delay': oracle_delay,
        'queue_delay': queue_delay,
        'first_round': first_round,
        'g01': block.g01[first_round:end].tolist(),
        'g21': block.g21[first_round:end].tolist(),
        'power_P': block.power_P,
        'noise_var': block.noise_var,
    }


def run_oracle_check(spec):
    modes = [DelayMode.upper_bound(theta) for theta in spec.axis] + [DelayMode.suboptimal()]
    rows = []
    mismatches = []
    for mode in modes:
        injections = 0
        mode_mismatches = 0
        for sequence in range(spec.oracle_sequences):
            block = oracle_block(spec, sequence)
            surplus, drain = oracle_sequences(mode, block)
            expected = eq4_oracle(surplus, drain)
            actual = queue_delays(surplus, drain)
            for direction in Direction:
                injections += len(expected[direction])
                outcomes = expected[direction]
                for index, ((birth, oracle_delay), (_, queue_delay)) in enumerate(zip(outcomes, actual[direction])):
                    if oracle_delay == queue_delay:
                        continue
                    mode_mismatches += 1
                    mismatches.append(reproducer(
                        mode, block, sequence, direction, busy_period_start(outcomes, index),
                        birth, oracle_delay, queue_delay,
                    ))
        logger.info('oracle check %s: %d injections, %d mismatches', mode, injections, mode_mismatches)
        rows.append((str(mode), spec.oracle_sequences, injections, mode_mismatches))
    return _result(
        spec, ['mode', 'sequences', 'injections', 'mismatches'], rows,
        passed=not mismatches, mismatches=mismatches,
    )


def _invariant_violations(block):
    trad = trad_upper_bound(block)
    aab_ub = aab_upper_bound(block)
    aab = aab_sum_rate(block)
    dnf = dnf_sum_rate(block)
    pair = ma_rate_pair(block)
    eta = eta_min(block)
    to_weak = bc_rate_pair(block, eta).to_weak_side
    return {
        'bound_order': aab_ub < trad,
        'achievable_order': aab < dnf,
        'pair_sum': np.abs(pair.strong + pair.weak - aab) > PAIR_SUM_TOL,
        'eta_constraint': to_weak < pair.weak - ETA_TOL,
    }


INVARIANT_CHECKS = ('bound_order', 'achievable_order', 'pair_sum', 'eta_constraint')


def run_invariant_check(spec):
    rows = []
    mismatches = []
    for m in spec.m_values:
        for power_db in spec.axis:
            config = _at_power_db(spec.fading, power_db, nakagami_m=m)
            rng = replication_rng(config.seed)
            counts = dict.fromkeys(INVARIANT_CHECKS, 0)
            drawn = 0
            while drawn < spec.n_samples:
                size = min(INVARIANT_BATCH, spec.n_samples - drawn)
                block = sample_block(config, rng, size, start_round=drawn)
                for check, violated in _invariant_violations(block).items():
                    hits = np.flatnonzero(violated)
                    counts[check] += hits.size
                    if hits.size:
                        first = block[int(hits[0])]
                        mismatches.append({
                            'check': check, 'nakagami_m': m, 'snr_db': power_db,
                            'round': first.round_t, 'g01': first.g01, 'g21': first.g21,
                        })
                drawn += size
            rows.append((m, power_db, spec.n_samples) + tuple(counts[check] for check in INVARIANT_CHECKS))
    columns = ['nakagami_m', 'snr_db', 'n_samples'] + [f'{check}_violations' for check in INVARIANT_CHECKS]
    return _result(spec, columns, rows, passed=not mismatches, mismatches=mismatches)


RUNNERS = {
    Experiment.THETA_SWEEP: run_theta_sweep,
    Experiment.SNR_DELAY_SWEEP: run_snr_delay_sweep,
    Experiment.ESR_SWEEP: run_esr_sweep,
    Experiment.PAR_SWEEP: run_par_sweep,
    Experiment.ORACLE_CHECK: run_oracle_check,
    Experiment.INVARIANT_CHECK: run_invariant_check,
}


def run_experiment(spec):
    logger.info('Running %s (seed %d)', spec.experiment, spec.seed)
    return RUNNERS[spec.experiment](spec)

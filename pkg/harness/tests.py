import io
import tempfile
from pathlib import Path
from unittest import mock

from django.contrib.admin.sites import site
from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from channel.fading import Placement
from harness.config import parse_assignments, read_config_file
from harness.forms import build_spec
from harness.models import Experiment, SweepRun
from harness.results import SweepResult
from harness.sweeps import busy_period_start, oracle_block, reproducer, run_experiment
from relay_delay.engine import DelayMode, Direction

SMALL_DELAY = ('horizon_T=3000', 'warmup=100')


def small_spec(experiment, *overrides, seed=7):
    return build_spec(experiment, overrides=overrides, seed=seed)


class ConfigFileTests(SimpleTestCase):

    def test_comments_and_blank_lines(self):
        values = parse_assignments(['# header', '', 'seed = 5  # inline', 'theta_values=0.1,0.2'])
        self.assertEqual(values, {'seed': '5', 'theta_values': '0.1,0.2'})

    def test_malformed_line(self):
        with self.assertRaises(ValidationError):
            parse_assignments(['seed 5'])

    def test_duplicate_key(self):
        with self.assertRaises(ValidationError):
            parse_assignments(['seed=1', 'seed=2'])

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            read_config_file('/nonexistent/twr.cfg')


class BuildSpecTests(SimpleTestCase):

    def test_settings_defaults(self):
        spec = build_spec(Experiment.THETA_SWEEP)
        self.assertEqual(spec.seed, 2011)
        self.assertEqual(spec.fading.nakagami_m, 1.0)
        self.assertEqual(spec.fading.placement, Placement.UNIFORM_PER_ROUND)
        self.assertAlmostEqual(spec.fading.power_P, 100.0)
        self.assertEqual(spec.axis[0], 0.1)
        self.assertEqual(spec.axis[-1], 0.99)

    def test_layering(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.cfg'
            path.write_text('seed=11\nnakagami_m=2\nwarmup=5\n', encoding='utf-8')
            spec = build_spec(Experiment.THETA_SWEEP, config_path=path, overrides=['nakagami_m=4'], seed=99)
        self.assertEqual(spec.seed, 99)
        self.assertEqual(spec.fading.nakagami_m, 4.0)
        self.assertEqual(spec.warmup, 5)

    def test_unknown_key(self):
        with self.assertRaisesMessage(ValidationError, 'Unknown config key(s): bogus'):
            build_spec(Experiment.THETA_SWEEP, overrides=['bogus=1'])

    def test_theta_out_of_range(self):
        with self.assertRaises(ValidationError):
            build_spec(Experiment.THETA_SWEEP, overrides=['theta_values=0.5,1.5'])

    def test_warmup_not_below_horizon(self):
        with self.assertRaises(ValidationError):
            build_spec(Experiment.SNR_DELAY_SWEEP, overrides=['horizon_T=100', 'warmup=100'])

    def test_fixed_placement_needs_position(self):
        with self.assertRaises(ValidationError):
            build_spec(Experiment.THETA_SWEEP, overrides=['placement=fixed', 'relay_x='])

    def test_relay_on_source_rejected(self):
        with self.assertRaises(ValidationError):
            build_spec(Experiment.THETA_SWEEP, overrides=['placement=fixed', 'relay_x=-0.5', 'relay_y=0'])

    def test_unknown_protocol(self):
        with self.assertRaises(ValidationError):
            build_spec(Experiment.PAR_SWEEP, overrides=['protocols=aab,tdma'])

    def test_config_echo_excludes_output_path(self):
        spec = build_spec(Experiment.ESR_SWEEP, output_path='/tmp/esr.csv')
        self.assertEqual(spec.output_path, '/tmp/esr.csv')
        self.assertNotIn('output_path', spec.config_echo)
        self.assertEqual(spec.config_echo['seed'], '2011')


class SweepTests(SimpleTestCase):

    def test_theta_sweep(self):
        spec = small_spec(Experiment.THETA_SWEEP, 'theta_values=0,0.5,0.9', *SMALL_DELAY)
        result = run_experiment(spec)
        self.assertEqual(result.columns, ['theta', 'mean_l01', 'mean_l21', 'censored'])
        self.assertEqual([row[0] for row in result.rows], [0.0, 0.5, 0.9])
        self.assertEqual(result.rows[0][1:3], (0.0, 0.0))
        self.assertGreater(result.rows[2][1] + result.rows[2][2], 0.0)
        self.assertIsNone(result.passed)

    def test_snr_delay_sweep(self):
        spec = small_spec(Experiment.SNR_DELAY_SWEEP, 'snr_db_values=0,20', 'horizon_T=30000', 'warmup=500')
        result = run_experiment(spec)
        self.assertEqual([row[0] for row in result.rows], [0.0, 20.0])
        means = []
        for snr_db, mean_l01, mean_l21, _ in result.rows:
            self.assertGreater(mean_l01, 0.0)
            self.assertGreater(mean_l21, 0.0)
            self.assertLess(max(mean_l01, mean_l21), 300.0)
            means.append((mean_l01 + mean_l21) / 2.0)
        self.assertGreaterEqual(means[1], means[0])

    def test_esr_sweep(self):
        spec = small_spec(Experiment.ESR_SWEEP, 'snr_db_values=0,20', 'n_samples=5000')
        result = run_experiment(spec)
        column = {name: index for index, name in enumerate(result.columns)}
        for row in result.rows:
            self.assertGreaterEqual(row[column['aab_ub']], row[column['trad_ub']])
            self.assertGreaterEqual(row[column['aab_ach']], row[column['dnf']])
            self.assertGreater(row[column['trad_ub_se']], 0.0)
            self.assertAlmostEqual(
                row[column['ach_gap_to_ub']], row[column['aab_ub']] - row[column['aab_ach']], places=12,
            )

    def test_esr_gaps_at_20_db(self):
        spec = build_spec(Experiment.ESR_SWEEP, overrides=['snr_db_values=20', 'n_samples=100000'])
        result = run_experiment(spec)
        row = dict(zip(result.columns, result.rows[0]))
        self.assertTrue(1.5 <= row['ub_gain'] <= 3.5, row['ub_gain'])
        self.assertTrue(0.1 <= row['ach_gap_to_ub'] <= 1.5, row['ach_gap_to_ub'])
        self.assertTrue(1.0 <= row['ach_gain_over_dnf'] <= 3.0, row['ach_gain_over_dnf'])

    def test_source_delay_grows_with_load(self):
        spec = small_spec(
            Experiment.PAR_SWEEP, 'rho_fractions=0.3,0.7,0.98', 'n_samples=20000',
            'horizon_T=40000', 'warmup=1000',
        )
        result = run_experiment(spec)
        column = {name: index for index, name in enumerate(result.columns)}
        by_protocol = {'aab': [], 'dnf': []}
        for row in result.rows:
            by_protocol[row[column['protocol']]].append(row)
        for aab, dnf in zip(by_protocol['aab'], by_protocol['dnf']):
            self.assertEqual(aab[column['rho']], dnf[column['rho']])
            self.assertLessEqual(aab[column['mean_ss_d02']], dnf[column['mean_ss_d02']])
            self.assertLessEqual(aab[column['mean_ss_d20']], dnf[column['mean_ss_d20']])
        light, heavy = by_protocol['dnf'][0], by_protocol['dnf'][-1]
        light_mean = (light[column['mean_ss_d02']] + light[column['mean_ss_d20']]) / 2.0
        heavy_mean = (heavy[column['mean_ss_d02']] + heavy[column['mean_ss_d20']]) / 2.0
        self.assertGreater(heavy_mean, 5.0 * light_mean)
        relay = {row[column['mean_st']] for row in by_protocol['aab']}
        self.assertEqual(len(relay), 1)

    def test_par_sweep_rows(self):
        spec = small_spec(Experiment.PAR_SWEEP, 'rho_values=0.05,0.1', *SMALL_DELAY)
        result = run_experiment(spec)
        self.assertEqual([(row[0], row[1]) for row in result.rows],
                         [('aab', 0.05), ('dnf', 0.05), ('aab', 0.1), ('dnf', 0.1)])
        column = result.columns.index('mean_st')
        self.assertIsNotNone(result.rows[0][column])
        self.assertIsNone(result.rows[1][column])

    def test_par_sweep_fractions_of_stable_rate(self):
        spec = small_spec(
            Experiment.PAR_SWEEP, 'rho_fractions=0.2', 'protocols=dnf', 'n_samples=2000', *SMALL_DELAY,
        )
        result = run_experiment(spec)
        self.assertEqual(len(result.rows), 1)
        self.assertGreater(result.rows[0][1], 0.0)

    def test_oracle_check_passes(self):
        spec = small_spec(Experiment.ORACLE_CHECK, 'oracle_sequences=20', 'oracle_rounds=80')
        result = run_experiment(spec)
        self.assertTrue(result.passed)
        self.assertEqual([row[0] for row in result.rows], [
            'upper_bound(theta=0.3)', 'upper_bound(theta=0.7)', 'upper_bound(theta=0.95)', 'suboptimal',
        ])
        self.assertTrue(all(row[3] == 0 for row in result.rows))
        self.assertGreater(sum(row[2] for row in result.rows), 0)

    def test_oracle_blocks(self):
        spec = small_spec(Experiment.ORACLE_CHECK, 'oracle_rounds=30')
        symmetric = oracle_block(spec, 0)
        self.assertEqual(symmetric.g01.tolist(), symmetric.g21.tolist())
        near_ties = oracle_block(spec, 9)
        self.assertLess(abs(near_ties.g01[0] - near_ties.g21[0]), 1e-12 * near_ties.g01[0] + 1e-300)

    def test_busy_period_start(self):
        outcomes = [(2, 1), (5, 4), (6, 5), (20, None), (21, None)]
        self.assertEqual(busy_period_start(outcomes, 0), 2)
        self.assertEqual(busy_period_start(outcomes, 2), 5)
        self.assertEqual(busy_period_start(outcomes, 3), 20)
        self.assertEqual(busy_period_start(outcomes, 4), 20)

    def test_mismatch_dump_is_trimmed(self):
        spec = small_spec(Experiment.ORACLE_CHECK, 'oracle_rounds=60')
        block = oracle_block(spec, 1)
        dump = reproducer(DelayMode.upper_bound(0.5), block, 1, Direction.D02, 10, 12, 3, 4)
        self.assertEqual(dump['first_round'], 10)
        self.assertEqual(dump['g01'], block.g01[10:17].tolist())
        self.assertEqual(len(dump['g21']), 7)
        uncovered = reproducer(DelayMode.suboptimal(), block, 1, Direction.D20, 12, 12, None, 4)
        self.assertEqual(len(uncovered['g01']), 60 - 12)

    def test_invariant_check_passes(self):
        spec = small_spec(Experiment.INVARIANT_CHECK, 'n_samples=3000')
        result = run_experiment(spec)
        self.assertTrue(result.passed)
        self.assertEqual(len(result.rows), 12)
        self.assertTrue(all(sum(row[3:]) == 0 for row in result.rows))


class ResultCsvTests(SimpleTestCase):

    def result(self):
        return SweepResult(
            experiment='theta_sweep',
            columns=['theta', 'mean_l01', 'censored'],
            rows=[(0.5, 1.0 / 3.0, 2), (0.9, None, 0)],
            metadata={'experiment': 'theta_sweep', 'version': '1.0.0', 'seed': 3, 'config': {'warmup': '5'}},
        )

    def test_reproducible_layout(self):
        stream = io.StringIO(newline='')
        self.result().write_csv(stream, reproducible=True)
        self.assertEqual(stream.getvalue(), (
            '# experiment=theta_sweep\r\n'
            '# version=1.0.0\r\n'
            '# seed=3\r\n'
            '# config.warmup=5\r\n'
            'theta,mean_l01,censored\r\n'
            '0.5,0.333333333,2\r\n'
            '0.9,,0\r\n'
        ))

    def test_wall_clock_line(self):
        stream = io.StringIO(newline='')
        self.result().write_csv(stream)
        self.assertIn('# generated_at=', stream.getvalue())


class CommandTests(SimpleTestCase):

    def run_command(self, name, *args):
        stdout, stderr = io.StringIO(), io.StringIO()
        call_command(name, *args, '--no-record', stdout=stdout, stderr=stderr)
        return stdout.getvalue(), stderr.getvalue()

    def test_stdout_output(self):
        output, _ = self.run_command('theta_sweep', '--set', 'theta_values=0.5', *self.delay_flags(), '--reproducible')
        lines = output.splitlines()
        self.assertEqual(lines[0], '# experiment=theta_sweep')
        self.assertIn('theta,mean_l01,mean_l21,censored', lines)
        self.assertTrue(lines[-1].startswith('0.5,'))

    def test_reproducible_files_are_byte_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            paths = [Path(tmp) / 'a.csv', Path(tmp) / 'b.csv']
            for path in paths:
                output, _ = self.run_command(
                    'snr_delay', '--seed', '5', '--set', 'snr_db_values=5,15', *self.delay_flags(),
                    '--reproducible', '--out', str(path),
                )
                self.assertIn('Wrote 2 row(s)', output)
            self.assertEqual(paths[0].read_bytes(), paths[1].read_bytes())

    def test_every_command_is_reproducible(self):
        small_runs = {
            'theta_sweep': ['theta_values=0.5,0.9', 'horizon_T=800', 'warmup=10'],
            'snr_delay': ['snr_db_values=0,20', 'horizon_T=800', 'warmup=10'],
            'esr': ['snr_db_values=10', 'n_samples=2000'],
            'par_sweep': ['rho_values=0.05', 'horizon_T=800', 'warmup=10'],
            'oracle_check': ['theta_values=0.5', 'oracle_sequences=10', 'oracle_rounds=40'],
            'invariant_check': ['m_values=1', 'snr_db_values=10', 'n_samples=1000'],
        }
        for name, assignments in small_runs.items():
            with self.subTest(command=name):
                flags = ['--seed', '13', '--reproducible']
                for assignment in assignments:
                    flags.extend(['--set', assignment])
                first, _ = self.run_command(name, *flags)
                second, _ = self.run_command(name, *flags)
                self.assertEqual(first, second)
                self.assertNotIn('generated_at', first)
                self.assertTrue(first.startswith('# experiment='))
                self.assertIn('# seed=13', first)

    def test_config_error_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('esr', '--set', 'nakagami_m=0.2')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_unreadable_config_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.run_command('oracle_check', '--config', '/nonexistent/twr.cfg')
        self.assertEqual(ctx.exception.returncode, 2)

    def test_failed_validation_exit_code(self):
        failed = SweepResult(
            experiment=Experiment.ORACLE_CHECK,
            columns=['mode', 'sequences', 'injections', 'mismatches'],
            rows=[('suboptimal', 1, 1, 1)],
            metadata={'experiment': 'oracle_check', 'version': '1.0.0', 'seed': 1, 'config': {}},
            passed=False,
            mismatches=[{'sequence': 0, 'birth_round': 4, 'oracle_delay': 2, 'queue_delay': 3}],
        )
        with mock.patch('harness.command_base.run_experiment', return_value=failed):
            with self.assertRaises(CommandError) as ctx:
                stderr = io.StringIO()
                call_command('oracle_check', '--no-record', stdout=io.StringIO(), stderr=stderr)
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('"birth_round": 4', stderr.getvalue())

    @staticmethod
    def delay_flags():
        flags = []
        for assignment in SMALL_DELAY:
            flags.extend(['--set', assignment])
        return flags


class SweepRunRecordTests(TestCase):

    def test_run_is_recorded(self):
        call_command(
            'invariant_check', '--set', 'n_samples=500', '--set', 'm_values=1', '--set', 'snr_db_values=10',
            stdout=io.StringIO(),
        )
        run = SweepRun.objects.get()
        self.assertEqual(run.experiment, Experiment.INVARIANT_CHECK)
        self.assertEqual(run.seed, '2011')
        self.assertTrue(run.passed)
        self.assertEqual(run.row_count, 1)
        self.assertTrue(run.is_validation())
        self.assertEqual(run.config['config']['n_samples'], '500')

    def test_no_record_flag(self):
        call_command(
            'theta_sweep', '--set', 'theta_values=0.5', '--set', 'horizon_T=500', '--set', 'warmup=10',
            '--no-record', stdout=io.StringIO(),
        )
        self.assertFalse(SweepRun.objects.exists())


class SweepRunAdminTests(TestCase):

    def test_outcome_column(self):
        admin = site._registry[SweepRun]
        sweep = SweepRun.objects.create(experiment=Experiment.ESR_SWEEP, seed='1', version='1.0.0', rows=[[0.0]])
        failed = SweepRun.objects.create(
            experiment=Experiment.ORACLE_CHECK, seed='1', version='1.0.0', passed=False, mismatch_count=3,
        )
        self.assertEqual(admin.outcome_display(sweep), '-')
        self.assertIn('3 mismatch(es)', admin.outcome_display(failed))
        self.assertEqual(admin.row_count_display(sweep), 1)

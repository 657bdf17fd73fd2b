import io
import json
import logging

from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError

from .forms import build_spec
from .models import SweepRun
from .sweeps import run_experiment

logger = logging.getLogger(__name__)

EXIT_VALIDATION_FAILED = 1
EXIT_CONFIG_ERROR = 2

MAX_REPORTED_MISMATCHES = 5


class SweepCommand(BaseCommand):
    """Shared flags and output handling for the experiment commands."""
    experiment = None

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            help='Flat key=value config file layered over the settings defaults',
        )
        parser.add_argument(
            '--seed',
            type=int,
            help='Master seed (overrides the config file)',
        )
        parser.add_argument(
            '--out',
            type=str,
            help='CSV output path (defaults to output_path, then standard output)',
        )
        parser.add_argument(
            '--reproducible',
            action='store_true',
            help='Omit the wall-clock line so reruns are byte-identical',
        )
        parser.add_argument(
            '--set',
            action='append',
            default=[],
            metavar='KEY=VALUE',
            dest='overrides',
            help='Override one config key (repeatable)',
        )
        parser.add_argument(
            '--no-record',
            action='store_true',
            help='Do not store the run in the database',
        )

    def handle(self, *args, **options):
        try:
            spec = build_spec(
                self.experiment,
                config_path=options.get('config'),
                overrides=options.get('overrides') or (),
                seed=options.get('seed'),
                output_path=options.get('out'),
            )
        except ValidationError as exc:
            raise CommandError('; '.join(exc.messages), returncode=EXIT_CONFIG_ERROR)

        try:
            result = run_experiment(spec)
        except ValidationError as exc:
            raise CommandError('; '.join(exc.messages), returncode=EXIT_CONFIG_ERROR)

        self.write_result(result, spec.output_path, options['reproducible'])

        if not options['no_record']:
            SweepRun.record(result, spec.output_path)

        if result.passed is False:
            self.report_mismatches(result)
            raise CommandError(
                f'{spec.experiment}: {len(result.mismatches)} mismatch(es).',
                returncode=EXIT_VALIDATION_FAILED,
            )

    def write_result(self, result, output_path, reproducible):
        if not output_path:
            buffer = io.StringIO()
            result.write_csv(buffer, reproducible=reproducible)
            self.stdout.write(buffer.getvalue(), ending='')
            return
        try:
            with open(output_path, 'w', encoding='utf-8', newline='') as stream:
                result.write_csv(stream, reproducible=reproducible)
        except OSError as exc:
            raise CommandError(f'Cannot write {output_path}: {exc}', returncode=EXIT_CONFIG_ERROR)
        self.stdout.write(
            self.style.SUCCESS(f'Wrote {len(result.rows)} row(s) to "{output_path}".')
        )

    def report_mismatches(self, result):
        logger.warning('%s failed with %d mismatch(es)', result.experiment, len(result.mismatches))
        for mismatch in result.mismatches[:MAX_REPORTED_MISMATCHES]:
            self.stderr.write(self.style.ERROR(json.dumps(mismatch, sort_keys=True)))
        hidden = len(result.mismatches) - MAX_REPORTED_MISMATCHES
        if hidden > 0:
            self.stderr.write(f'... and {hidden} more.')

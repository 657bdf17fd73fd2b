from django.db import models


class Experiment(models.TextChoices):
    THETA_SWEEP = 'theta_sweep', 'Delay of ST versus theta'
    SNR_DELAY_SWEEP = 'snr_delay_sweep', 'Delay of ST versus P/sigma^2'
    ESR_SWEEP = 'esr_sweep', 'Ergodic sum-rate versus P/sigma^2'
    PAR_SWEEP = 'par_sweep', 'Delay of SS/ST versus packet arrival rate'
    ORACLE_CHECK = 'oracle_check', 'Relay queue against direct delay evaluation'
    INVARIANT_CHECK = 'invariant_check', 'Pointwise rate inequalities'


class SweepRun(models.Model):
    """One recorded harness run: the config echo and the tabulated rows."""

    experiment = models.CharField(max_length=20, choices=Experiment.choices)
    seed = models.CharField(max_length=20)
    config = models.JSONField(default=dict)
    columns = models.JSONField(default=list)
    rows = models.JSONField(default=list)
    output_path = models.CharField(max_length=500, blank=True)
    passed = models.BooleanField(
        null=True,
        blank=True,
        help_text="Outcome of validation runs; empty for figure sweeps"
    )
    mismatch_count = models.PositiveIntegerField(default=0)
    version = models.CharField(max_length=20)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Sweep Run'
        verbose_name_plural = 'Sweep Runs'

    def __str__(self):
        return f"{self.get_experiment_display()} (seed {self.seed})"

    @property
    def row_count(self):
        return len(self.rows)

    def is_validation(self):
        return self.experiment in (Experiment.ORACLE_CHECK, Experiment.INVARIANT_CHECK)

    @classmethod
    def record(cls, result, output_path=''):
        return cls.objects.create(
            experiment=result.experiment,
            seed=str(result.metadata['seed']),
            config=result.metadata,
            columns=list(result.columns),
            rows=[list(row) for row in result.rows],
            output_path=output_path or '',
            passed=result.passed,
            mismatch_count=len(result.mismatches),
            version=result.metadata['version'],
        )

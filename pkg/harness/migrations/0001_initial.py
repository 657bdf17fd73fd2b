from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='SweepRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('experiment', models.CharField(choices=[
                    ('theta_sweep', 'Delay of ST versus theta'),
                    ('snr_delay_sweep', 'Delay of ST versus P/sigma^2'),
                    ('esr_sweep', 'Ergodic sum-rate versus P/sigma^2'),
                    ('par_sweep', 'Delay of SS/ST versus packet arrival rate'),
                    ('oracle_check', 'Relay queue against direct delay evaluation'),
                    ('invariant_check', 'Pointwise rate inequalities'),
                ], max_length=20)),
                ('seed', models.CharField(max_length=20)),
                ('config', models.JSONField(default=dict)),
                ('columns', models.JSONField(default=list)),
                ('rows', models.JSONField(default=list)),
                ('output_path', models.CharField(blank=True, max_length=500)),
                ('passed', models.BooleanField(blank=True, help_text='Outcome of validation runs; empty for figure sweeps', null=True)),
                ('mismatch_count', models.PositiveIntegerField(default=0)),
                ('version', models.CharField(max_length=20)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Sweep Run',
                'verbose_name_plural': 'Sweep Runs',
                'ordering': ['-created_at'],
            },
        ),
    ]

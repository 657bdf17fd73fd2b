from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Ergodic sum-rates and bounds versus P/sigma^2'
    experiment = Experiment.ESR_SWEEP

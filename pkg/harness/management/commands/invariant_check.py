from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Check the pointwise rate inequalities over a grid of m and P/sigma^2'
    experiment = Experiment.INVARIANT_CHECK

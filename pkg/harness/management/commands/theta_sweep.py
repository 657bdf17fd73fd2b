from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Mean relay delay of ST versus theta (upper-bound mode)'
    experiment = Experiment.THETA_SWEEP

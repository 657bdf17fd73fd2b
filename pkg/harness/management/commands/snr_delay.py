from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Mean relay delay of ST versus P/sigma^2 (suboptimal mode)'
    experiment = Experiment.SNR_DELAY_SWEEP

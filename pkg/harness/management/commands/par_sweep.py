from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Mean SS and ST delays of AAB and DNF versus packet arrival rate'
    experiment = Experiment.PAR_SWEEP

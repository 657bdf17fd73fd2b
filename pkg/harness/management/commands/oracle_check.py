from harness.command_base import SweepCommand
from harness.models import Experiment


class Command(SweepCommand):
    help = 'Check the relay queue against direct cumulative-sum delay evaluation'
    experiment = Experiment.ORACLE_CHECK

import math
from dataclasses import dataclass, field

from django import forms
from django.conf import settings
from django.core.exceptions import ValidationError

from channel.fading import FadingConfig, Placement, fading_config_from_options
from queueing.system import Protocol

from .config import parse_assignments, read_config_file
from .models import Experiment

# Config keys backed by settings.TWR_SIM
SETTINGS_KEYS = {
    'nakagami_m': 'NAKAGAMI_M',
    'power_db': 'POWER_DB',
    'beta': 'BETA',
    'placement': 'PLACEMENT',
    'relay_x': 'RELAY_X',
    'relay_y': 'RELAY_Y',
    'seed': 'SEED',
    'packet_len': 'PACKET_LEN',
    'n_samples': 'N_SAMPLES',
    'horizon_T': 'HORIZON_T',
    'warmup': 'WARMUP',
    'oracle_sequences': 'ORACLE_SEQUENCES',
    'oracle_rounds': 'ORACLE_ROUNDS',
}

AXIS_DEFAULTS = {
    Experiment.THETA_SWEEP: {'theta_values': '0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,0.95,0.97,0.99'},
    Experiment.SNR_DELAY_SWEEP: {'snr_db_values': '0,5,10,15,20,25,30'},
    Experiment.ESR_SWEEP: {'snr_db_values': '0,5,10,15,20,25,30'},
    Experiment.PAR_SWEEP: {'rho_fractions': '0.1,0.3,0.5,0.7,0.9,0.98', 'protocols': 'aab,dnf'},
    Experiment.ORACLE_CHECK: {'theta_values': '0.3,0.7,0.95'},
    Experiment.INVARIANT_CHECK: {'m_values': '0.5,1,2,4', 'snr_db_values': '0,10,20'},
}

# Which list drives the rows of each experiment
AXIS_FIELDS = {
    Experiment.THETA_SWEEP: 'theta_values',
    Experiment.SNR_DELAY_SWEEP: 'snr_db_values',
    Experiment.ESR_SWEEP: 'snr_db_values',
    Experiment.PAR_SWEEP: 'rho_values',
    Experiment.ORACLE_CHECK: 'theta_values',
    Experiment.INVARIANT_CHECK: 'snr_db_values',
}

NOT_ECHOED = {'output_path'}


class FloatListField(forms.CharField):
    """Comma-separated list of finite floats."""

    def to_python(self, value):
        value = super().to_python(value)
        if not value:
            return []
        try:
            numbers = [float(item) for item in value.split(',') if item.strip()]
        except ValueError:
            raise ValidationError('Enter a comma-separated list of numbers.', code='invalid')
        if not all(math.isfinite(number) for number in numbers):
            raise ValidationError('List values must be finite.', code='invalid')
        return numbers


class SweepSpecForm(forms.Form):
    experiment = forms.ChoiceField(choices=Experiment.choices)
    nakagami_m = forms.FloatField(min_value=0.5)
    power_db = forms.FloatField()
    beta = forms.FloatField()
    placement = forms.ChoiceField(choices=Placement.choices)
    relay_x = forms.FloatField(required=False)
    relay_y = forms.FloatField(required=False)
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    theta_values = FloatListField(required=False)
    snr_db_values = FloatListField(required=False)
    m_values = FloatListField(required=False)
    rho_values = FloatListField(required=False)
    rho_fractions = FloatListField(required=False)
    protocols = forms.CharField(required=False)
    n_samples = forms.IntegerField(min_value=1)
    horizon_T = forms.IntegerField(min_value=1)
    warmup = forms.IntegerField(min_value=0)
    packet_len = forms.IntegerField(min_value=1)
    oracle_sequences = forms.IntegerField(min_value=1)
    oracle_rounds = forms.IntegerField(min_value=1)
    output_path = forms.CharField(required=False)

    def clean_protocols(self):
        names = [name.strip() for name in self.cleaned_data['protocols'].split(',') if name.strip()]
        unknown = [name for name in names if name not in Protocol.values]
        if unknown:
            raise ValidationError(f'Unknown protocol(s): {", ".join(unknown)}')
        return names

    def clean_theta_values(self):
        thetas = self.cleaned_data['theta_values']
        if any(not 0.0 <= theta <= 1.0 for theta in thetas):
            raise ValidationError('theta values must lie in [0, 1].')
        return thetas

    def clean_m_values(self):
        values = self.cleaned_data['m_values']
        if any(m < 0.5 for m in values):
            raise ValidationError('Nakagami m values must be at least 0.5.')
        return values

    def clean_rho_values(self):
        values = self.cleaned_data['rho_values']
        if any(rho < 0 for rho in values):
            raise ValidationError('Packet arrival rates must be non-negative.')
        return values

    def clean_rho_fractions(self):
        values = self.cleaned_data['rho_fractions']
        if any(fraction < 0 for fraction in values):
            raise ValidationError('Arrival-rate fractions must be non-negative.')
        return values

    def clean(self):
        cleaned_data = super().clean()
        experiment = cleaned_data.get('experiment')
        horizon_T = cleaned_data.get('horizon_T')
        warmup = cleaned_data.get('warmup')

        if horizon_T is not None and warmup is not None and warmup >= horizon_T:
            raise ValidationError('warmup must be smaller than horizon_T.')

        if cleaned_data.get('placement') == Placement.FIXED:
            if cleaned_data.get('relay_x') is None or cleaned_data.get('relay_y') is None:
                raise ValidationError('Fixed placement needs relay_x and relay_y.')

        axis_field = AXIS_FIELDS.get(experiment)
        if experiment == Experiment.PAR_SWEEP:
            if not cleaned_data.get('rho_values') and not cleaned_data.get('rho_fractions'):
                self.add_error('rho_values', 'Give rho_values or rho_fractions.')
            if not cleaned_data.get('protocols'):
                self.add_error('protocols', 'At least one protocol is required.')
        elif axis_field and axis_field in cleaned_data and not cleaned_data[axis_field]:
            self.add_error(axis_field, 'At least one value is required for this experiment.')
        if experiment == Experiment.INVARIANT_CHECK and 'm_values' in cleaned_data and not cleaned_data['m_values']:
            self.add_error('m_values', 'At least one value is required for this experiment.')

        if not self.errors:
            try:
                cleaned_data['fading'] = fading_config_from_options(cleaned_data)
            except ValidationError as exc:
                raise ValidationError(exc.messages)
        return cleaned_data

    def to_spec(self):
        data = self.cleaned_data
        experiment = data['experiment']
        echo = {
            key: str(value) for key, value in sorted(self.data.items())
            if key not in NOT_ECHOED and key != 'experiment'
        }
        return SweepSpec(
            experiment=experiment,
            fading=data['fading'],
            axis=tuple(data[AXIS_FIELDS[experiment]]),
            m_values=tuple(data['m_values']),
            rho_fractions=tuple(data['rho_fractions']),
            protocols=tuple(data['protocols']),
            n_samples=data['n_samples'],
            horizon_T=data['horizon_T'],
            warmup=data['warmup'],
            packet_len=data['packet_len'],
            oracle_sequences=data['oracle_sequences'],
            oracle_rounds=data['oracle_rounds'],
            output_path=data['output_path'],
            seed=data['seed'],
            config_echo=echo,
        )


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    fading: FadingConfig
    axis: tuple
    m_values: tuple = ()
    rho_fractions: tuple = ()
    protocols: tuple = ()
    n_samples: int = 1
    horizon_T: int = 1
    warmup: int = 0
    packet_len: int = 10
    oracle_sequences: int = 1
    oracle_rounds: int = 1
    output_path: str = ''
    seed: int = 0
    config_echo: dict = field(default_factory=dict)


def default_options(experiment):
    defaults = {key: str(settings.TWR_SIM[name]) for key, name in SETTINGS_KEYS.items()}
    defaults.update(AXIS_DEFAULTS.get(experiment, {}))
    return defaults


def build_spec(experiment, config_path=None, overrides=(), seed=None, output_path=None):
    """
    Merge settings defaults, the config file and command-line overrides, then
    validate. Unknown keys are rejected.
    """
    data = default_options(experiment)
    layers = []
    if config_path:
        layers.append(read_config_file(config_path))
    if overrides:
        layers.append(parse_assignments(overrides, source='--set'))
    known = set(SweepSpecForm.base_fields) - {'experiment'}
    for layer in layers:
        unknown = sorted(set(layer) - known)
        if unknown:
            raise ValidationError(f'Unknown config key(s): {", ".join(unknown)}')
        data.update(layer)
    if seed is not None:
        data['seed'] = str(seed)
    if output_path:
        data['output_path'] = output_path
    data['experiment'] = experiment

    form = SweepSpecForm(data)
    if not form.is_valid():
        messages = []
        for name, errors in form.errors.items():
            prefix = '' if name == '__all__' else f'{name}: '
            messages.extend(f'{prefix}{error}' for error in errors)
        raise ValidationError(messages)
    return form.to_spec()

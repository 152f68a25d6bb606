#! /usr/bin/env python
#

""" Numerical tolerances and the batch analysis configuration."""

import configparser
import logging
import os

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


##############################
#                            #
#  Tolerances                #
#                            #
##############################

# snake_case configuration key : (attribute name, default)
TOLERANCE_KEYS = {
    'x_cap': ('xCap', 50.0),
    'smoothness_jump': ('smoothnessJump', 100.0),
    'quad_rtol': ('quadRtol', 1e-10),
    'quad_atol': ('quadAtol', 1e-12),
    'quad_max_depth': ('quadMaxDepth', 60),
    'truncation_rtol': ('truncationRtol', 1e-10),
    'divergence_onset': ('divergenceOnset', 2. ** 10),
    'divergence_run': ('divergenceRun', 4),
    'truncation_cap': ('truncationCap', 2. ** 16),
    'nondecreasing_slack': ('nondecreasingSlack', 1e-6),
    'delta_grid_size': ('deltaGridSize', 256),
    'ode_method': ('odeMethod', 'RK45'),
    'ode_rtol': ('odeRtol', 1e-10),
    'ode_atol': ('odeAtol', 1e-12),
    'residual_tol': ('residualTol', 1e-6),
    'horizon_start': ('horizonStart', 16.0),
    'horizon_cap': ('horizonCap', 2. ** 12),
    'sample_step': ('sampleStep', 1. / 32),
    'bisection_rtol': ('bisectionRtol', 1e-6),
    'bracket_margin': ('bracketMargin', 0.1),
    'bracket_widenings': ('bracketWidenings', 8),
    'qsd_tail': ('qsdTail', 1e-9),
    'power_law_horizon': ('powerLawHorizon', 64.0),
    'power_law_stability': ('powerLawStability', 1e-3),
    'normalization_tol': ('normalizationTol', 1e-6),
    'identity_tol': ('identityTol', 1e-4),
    'closed_form_tol': ('closedFormTol', 1e-5),
    'plateau_rtol': ('plateauRtol', 1e-3),
    'plateau_run': ('plateauRun', 3),
    'criterion_ratio': ('criterionRatio', 1e-6),
    'boundary_defect': ('boundaryDefect', 1e-3),
    'conditioned_horizon': ('conditionedHorizon', 64.0),
    'min_survivors': ('minSurvivors', 100),
    'bootstrap_samples': ('bootstrapSamples', 400),
    'ci_level': ('ciLevel', 0.99),
    'ks_level': ('ksLevel', 0.01),
    'heavy_tail_ci': ('heavyTailCi', 0.2),
    'clamp_rate': ('clampRate', 1e-3),
    'block_size': ('blockSize', 4096),
    'noise_factor': ('noiseFactor', 2.0),
}


class Tolerances:
    """
    Every numerical threshold used by the package, with its default.
    Attributes carry camelCase names; the batch configuration refers to
    them by the snake_case keys of TOLERANCE_KEYS.

    Examples:
        1) Defaults:
            tol = Tolerances()

        2) A tighter bisection and a shorter eigen horizon:
            tol = Tolerances(bisectionRtol=1e-8, horizonCap=1024.)

    A simulation is reproduced by its seed together with blockSize; the
    thread count does not enter.
    """

    def __init__(self, **overrides):
        for attribute, default in TOLERANCE_KEYS.values():
            setattr(self, attribute, default)
        attributes = {attribute for attribute, _ in TOLERANCE_KEYS.values()}
        for name, value in overrides.items():
            if name not in attributes:
                raise ConfigError('Unknown tolerance: %s' % name)
            setattr(self, name, value)

    def copy(self, **overrides):
        """
        Returns a new Tolerances with this one's values and *overrides*
        applied on top.
        """
        values = {attribute: getattr(self, attribute)
                  for attribute, _ in TOLERANCE_KEYS.values()}
        values.update(overrides)
        return Tolerances(**values)

    def __repr__(self):
        changed = ['%s=%r' % (attribute, getattr(self, attribute))
                   for attribute, default in TOLERANCE_KEYS.values()
                   if getattr(self, attribute) != default]
        return 'Tolerances(%s)' % ', '.join(changed)


def thread_count():
    """
    Returns the worker count for parallel sections, capped by the
    QSDLAB_THREADS environment variable when it is set.
    """
    value = os.environ.get('QSDLAB_THREADS')
    if value is None:
        return os.cpu_count() or 1
    try:
        count = int(value)
    except ValueError:
        raise ConfigError('QSDLAB_THREADS must be an integer, got %r' % value)
    if count < 1:
        raise ConfigError('QSDLAB_THREADS must be at least 1')
    return count


##############################
#                            #
#  AnalysisConfig            #
#                            #
##############################

COMMANDS = ('classify', 'lambda-c', 'qsd', 'rpositive',
            'simulate', 'validate', 'report')

SECTION = 'qsdlab'


class LambdaValue:
    """
    One entry of *lambda_values*: an absolute eigen-parameter, or a
    fraction of the critical eigenvalue written as "0.9*lambda_c".
    """

    def __init__(self, value, relative=False):
        self.value = float(value)
        self.relative = relative

    def resolve(self, lambdaC):
        if self.relative:
            return self.value * lambdaC
        return self.value

    def __repr__(self):
        if self.relative:
            return '%r*lambda_c' % self.value
        return repr(self.value)


class AnalysisConfig:
    """
    Validated batch configuration.

    Attributes:
        drift : *str*
            Drift string in the drift_expr grammar.
        commands : *list*
            Requested commands, a subset of COMMANDS.
        lambdaValues : *list* of *LambdaValue*
            QSD family members to build. Defaults to the critical one.
        outputDir : *str*
            Directory receiving report.txt, the CSVs and plots/.
        mc : *dict*
            Monte Carlo block: n, dt, tMax, seed, snapshotTimes, x0,
            bridge, window.
        referencePoint : *float* or None
            Reference point c of the conditioned process.
        tol : *Tolerances*
    """

    def __init__(self, drift, commands, lambdaValues=None,
                 outputDir='qsdlab_output', mc=None, referencePoint=None,
                 tol=None):
        self.drift = drift
        self.commands = list(commands)
        self.lambdaValues = lambdaValues or [LambdaValue(1.0, relative=True)]
        self.outputDir = outputDir
        self.mc = dict(MC_DEFAULTS)
        if mc:
            self.mc.update(mc)
        self.referencePoint = referencePoint
        self.tol = tol or Tolerances()

        for command in self.commands:
            if command not in COMMANDS:
                raise ConfigError('Unknown command: %s' % command)
        if not self.commands:
            raise ConfigError('At least one command is required')
        needsSeed = {'simulate', 'validate'} & set(self.commands)
        if needsSeed and self.mc['seed'] is None:
            raise ConfigError('mc.seed is required by the %s command'
                              % sorted(needsSeed)[0])

    def wants(self, command):
        return command in self.commands


MC_DEFAULTS = {'n': 100000, 'dt': 1e-3, 'tMax': 10.0, 'seed': None,
               'snapshotTimes': [0.5, 1.0, 2.0], 'x0': 1.0, 'bridge': True,
               'window': None}

# configuration key : (mc attribute, parser)
MC_KEYS = {'mc.n': ('n', 'int'),
           'mc.dt': ('dt', 'float'),
           'mc.t_max': ('tMax', 'float'),
           'mc.seed': ('seed', 'int'),
           'mc.snapshot_times': ('snapshotTimes', 'floats'),
           'mc.x0': ('x0', 'float'),
           'mc.bridge': ('bridge', 'bool'),
           'mc.window': ('window', 'pair')}


def _parse_value(key, text, kind):
    try:
        if kind == 'int':
            return int(text)
        if kind == 'float':
            return float(text)
        if kind == 'str':
            return text
        if kind == 'bool':
            lowered = text.lower()
            if lowered in ('true', 'yes', 'on', '1'):
                return True
            if lowered in ('false', 'no', 'off', '0'):
                return False
            raise ValueError(text)
        if kind == 'floats':
            return [float(item) for item in _split_list(text)]
        if kind == 'pair':
            values = [float(item) for item in _split_list(text)]
            if len(values) != 2 or values[0] >= values[1]:
                raise ValueError(text)
            return tuple(values)
    except ValueError:
        raise ConfigError('Malformed value for %s: %r' % (key, text))
    raise ConfigError('No parser for %s' % key)


def _split_list(text):
    return [item for item in text.replace(',', ' ').split() if item]


def _parse_lambda_values(text):
    values = []
    for item in text.split(','):
        item = item.strip().replace(' ', '')
        if not item:
            continue
        try:
            if item == 'lambda_c':
                values.append(LambdaValue(1.0, relative=True))
            elif item.endswith('*lambda_c'):
                values.append(LambdaValue(float(item[:-len('*lambda_c')]),
                                          relative=True))
            else:
                values.append(LambdaValue(float(item)))
        except ValueError:
            raise ConfigError('Malformed lambda value: %r' % item)
    if not values:
        raise ConfigError('lambda_values is empty')
    for value in values:
        if value.value <= 0:
            raise ConfigError('lambda values must be positive: %r' % value)
    return values


def parse_config(text):
    """
    Parses flat "key = value" configuration text into an AnalysisConfig.
    Dotted keys group the Monte Carlo block (mc.*), the tolerances
    (tolerances.*) and the conditioned process (conditioned.*).

    Parameters:
        text : *str*
            Configuration text. '#' starts a comment.

    Returns:
        config : *AnalysisConfig*
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       delimiters=('=',),
                                       comment_prefixes=('#', ';'),
                                       inline_comment_prefixes=('#',),
                                       default_section='qsdlab-defaults')
    parser.optionxform = str
    try:
        parser.read_string('[%s]\n%s' % (SECTION, text))
    except configparser.DuplicateOptionError as error:
        raise ConfigError('Duplicate key: %s' % error.option)
    except configparser.DuplicateSectionError:
        raise ConfigError('Section headers are not supported')
    except configparser.Error as error:
        raise ConfigError('Unreadable configuration: %s' % error)
    if parser.sections() != [SECTION]:
        raise ConfigError('Section headers are not supported')

    entries = dict(parser.items(SECTION))
    if 'drift' not in entries:
        raise ConfigError('Missing required key: drift')
    if 'commands' not in entries:
        raise ConfigError('Missing required key: commands')

    kwargs = {'drift': entries.pop('drift'),
              'commands': _split_list(entries.pop('commands'))}
    if 'lambda_values' in entries:
        kwargs['lambdaValues'] = _parse_lambda_values(
            entries.pop('lambda_values'))
    if 'output_dir' in entries:
        kwargs['outputDir'] = entries.pop('output_dir')
    if 'conditioned.reference_point' in entries:
        point = _parse_value('conditioned.reference_point',
                             entries.pop('conditioned.reference_point'),
                             'float')
        if point <= 0:
            raise ConfigError('conditioned.reference_point must be positive')
        kwargs['referencePoint'] = point

    mc = {}
    overrides = {}
    for key, text in entries.items():
        if key in MC_KEYS:
            attribute, kind = MC_KEYS[key]
            mc[attribute] = _parse_value(key, text, kind)
        elif key.startswith('tolerances.'):
            name = key[len('tolerances.'):]
            if name not in TOLERANCE_KEYS:
                raise ConfigError('Unknown tolerance key: %s' % key)
            attribute, default = TOLERANCE_KEYS[name]
            kind = ('str' if isinstance(default, str) else
                    'int' if isinstance(default, int) else 'float')
            overrides[attribute] = _parse_value(key, text, kind)
        else:
            raise ConfigError('Unknown key: %s' % key)

    if 'n' in mc and mc['n'] < 1:
        raise ConfigError('mc.n must be at least 1')
    if 'dt' in mc and mc['dt'] <= 0:
        raise ConfigError('mc.dt must be positive')
    if 'seed' in mc and mc['seed'] < 0:
        raise ConfigError('mc.seed must be nonnegative')

    kwargs['mc'] = mc
    kwargs['tol'] = Tolerances(**overrides)
    return AnalysisConfig(**kwargs)


def read_config(path):
    """
    Reads and parses the configuration file at *path*.
    """
    try:
        with open(path) as f:
            text = f.read()
    except OSError as error:
        raise ConfigError('Cannot read %s: %s' % (path, error))
    logger.debug('read configuration %s', path)
    return parse_config(text)

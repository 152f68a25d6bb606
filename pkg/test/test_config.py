import pytest

from qsdlab import config
import numpy as np


EXAMPLE = """
# constant drift, all commands
drift = const:1.0
commands = classify lambda-c qsd rpositive simulate validate report
lambda_values = 0.5*lambda_c, 0.9*lambda_c, lambda_c, 0.1
output_dir = out
mc.n = 2000
mc.dt = 0.002
mc.t_max = 4
mc.seed = 7
mc.snapshot_times = 0.5, 1, 2
mc.window = 1, 3
tolerances.bisection_rtol = 1e-8
tolerances.block_size = 512
tolerances.ode_method = DOP853
"""


@pytest.fixture
def exampleConfig():
    """Returns the parsed example configuration."""
    return config.parse_config(EXAMPLE)


def test_parse_example(exampleConfig):
    assert exampleConfig.drift == 'const:1.0'
    assert exampleConfig.wants('validate')
    assert exampleConfig.outputDir == 'out'
    assert exampleConfig.mc['n'] == 2000
    assert np.isclose(exampleConfig.mc['dt'], 0.002)
    assert exampleConfig.mc['seed'] == 7
    assert exampleConfig.mc['snapshotTimes'] == [0.5, 1.0, 2.0]
    assert exampleConfig.mc['window'] == (1.0, 3.0)
    assert exampleConfig.mc['bridge'] is True


def test_lambda_values(exampleConfig):
    values = [v.resolve(2.0) for v in exampleConfig.lambdaValues]
    assert np.allclose(values, [1.0, 1.8, 2.0, 0.1])


def test_tolerance_overrides(exampleConfig):
    tol = exampleConfig.tol
    assert tol.bisectionRtol == 1e-8
    assert tol.blockSize == 512
    assert isinstance(tol.blockSize, int)
    assert tol.odeMethod == 'DOP853'
    assert tol.identityTol == 1e-4


def test_defaults():
    parsed = config.parse_config('drift = linear:1.0\ncommands = classify')
    assert parsed.commands == ['classify']
    assert len(parsed.lambdaValues) == 1
    assert parsed.lambdaValues[0].resolve(3.0) == 3.0
    assert parsed.mc['seed'] is None
    assert parsed.outputDir == 'qsdlab_output'


@pytest.mark.parametrize('text', [
    'commands = classify',
    'drift = const:1.0',
    'drift = const:1.0\ncommands = classify\nbogus = 1',
    'drift = const:1.0\ncommands = classify\ntolerances.bogus = 1',
    'drift = const:1.0\ncommands = classify\ncommands = qsd',
    'drift = const:1.0\ncommands = fly',
    'drift = const:1.0\ncommands = simulate',
    'drift = const:1.0\ncommands = validate\nmc.seed = -1',
    'drift = const:1.0\ncommands = classify\nmc.n = many',
    'drift = const:1.0\ncommands = classify\nmc.window = 3, 1',
    'drift = const:1.0\ncommands = classify\nlambda_values = -1',
    'drift = const:1.0\ncommands = classify\nlambda_values = 2*mu',
    '[extra]\ndrift = const:1.0\ncommands = classify',
])
def test_rejects(text):
    with pytest.raises(config.ConfigError):
        config.parse_config(text)


def test_read_config_missing(tmpdir):
    with pytest.raises(config.ConfigError):
        config.read_config(str(tmpdir.join('missing.cfg')))


def test_read_config(tmpdir):
    path = tmpdir.join('run.cfg')
    path.write(EXAMPLE)
    assert config.read_config(str(path)).mc['tMax'] == 4.0


def test_tolerances_copy():
    tol = config.Tolerances(ksLevel=0.05)
    tighter = tol.copy(identityTol=1e-6)
    assert tighter.ksLevel == 0.05
    assert tighter.identityTol == 1e-6
    assert tol.identityTol == 1e-4
    with pytest.raises(config.ConfigError):
        config.Tolerances(noSuchTolerance=1.)


@pytest.mark.parametrize('value, expected', [
    ('1', 1),
    ('3', 3),
])
def test_thread_count(monkeypatch, value, expected):
    monkeypatch.setenv('QSDLAB_THREADS', value)
    assert config.thread_count() == expected


@pytest.mark.parametrize('value', ['0', 'four'])
def test_thread_count_invalid(monkeypatch, value):
    monkeypatch.setenv('QSDLAB_THREADS', value)
    with pytest.raises(config.ConfigError):
        config.thread_count()

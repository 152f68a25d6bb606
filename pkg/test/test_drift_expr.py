import pytest

from qsdlab import drift_expr
import numpy as np


@pytest.mark.parametrize('text, kind, a', [
    ('const:1.0', 'constant', 1.0),
    ('const:-2', 'constant', -2.0),
    ('linear:1.0', 'linear', 1.0),
    ('  linear: 0.5 ', 'linear', 0.5),
])
def test_parse_builtin(text, kind, a):
    spec = drift_expr.parse_drift(text)
    assert spec.kind == kind
    assert spec.a == a
    assert spec.builtin


@pytest.mark.parametrize('text, x, expected', [
    ('x*x + 1', 2., 5.),
    ('-x^2', 3., -9.),
    ('2^-x', 1., 0.5),
    ('exp(x) - 1', 0., 0.),
    ('sqrt(x + 1)', 3., 2.),
    ('pi*x', 1., np.pi),
    ('1 + 2*x/(1 + x)', 1., 2.),
    ('1e-3*x', 1000., 1.),
])
def test_parse_expression(text, x, expected):
    spec = drift_expr.parse_drift(text)
    assert spec.kind == 'expression'
    assert np.isclose(spec.evaluate(x), expected)


def test_evaluate_vectorized():
    spec = drift_expr.parse_drift('linear:2.0')
    x = np.array([0., 1., 2.5])
    assert np.allclose(spec.evaluate(x), [0., 2., 5.])
    assert isinstance(spec.evaluate(1.), float)


@pytest.mark.parametrize('text, position', [
    ('x +', 3),
    ('(x + 1', 6),
    ('x $ 2', 2),
    ('exp x', 4),
])
def test_syntax_error_position(text, position):
    with pytest.raises(drift_expr.DriftSyntaxError) as error:
        drift_expr.parse_drift(text)
    assert error.value.position == position


def test_unknown_identifier():
    with pytest.raises(drift_expr.UnknownIdentifierError) as error:
        drift_expr.parse_drift('x + y')
    assert error.value.position == 4


@pytest.mark.parametrize('text', [
    '',
    'const:abc',
    'linear:inf',
])
def test_malformed(text):
    with pytest.raises(drift_expr.DriftSyntaxError):
        drift_expr.parse_drift(text)


@pytest.mark.parametrize('text', [
    'log(x)',
    '1/x',
    'exp(x^2)',
])
def test_undefined_on_grid(text):
    with pytest.raises(drift_expr.DriftEvaluationError):
        drift_expr.parse_drift(text)


def test_eval_drift_rejects_negative():
    spec = drift_expr.parse_drift('const:1.0')
    with pytest.raises(ValueError):
        drift_expr.eval_drift(spec, -1.)


@pytest.mark.parametrize('text', [
    'const:1.5',
    'linear:-0.25',
    '-x^2 + 3*x',
    'exp(-x)*sqrt(x + 2)',
])
def test_format_reparses(text):
    spec = drift_expr.parse_drift(text)
    again = drift_expr.parse_drift(drift_expr.format_drift(spec))
    x = np.linspace(0., 10., 51)
    assert np.array_equal(spec.evaluate(x), again.evaluate(x))


def test_antiderivative_builtin():
    assert np.isclose(drift_expr.parse_drift('const:1.5').antiderivative(2.),
                      6.)
    assert np.isclose(drift_expr.parse_drift('linear:2.0').antiderivative(3.),
                      18.)
    assert drift_expr.parse_drift('x').antiderivative(1.) is None


@pytest.mark.parametrize('text, expected', [
    ('const:0', True),
    ('0*x', True),
    ('const:1.0', False),
    ('x', False),
])
def test_is_zero(text, expected):
    assert drift_expr.parse_drift(text).is_zero() is expected


@pytest.mark.parametrize('text', [
    'const:1.0',
    'linear:1.0',
    'x^3 - x',
])
def test_smoothness_passes(text):
    verdict = drift_expr.check_smoothness(drift_expr.parse_drift(text))
    assert verdict.passed


def test_smoothness_flags_square_root():
    verdict = drift_expr.check_smoothness(drift_expr.parse_drift('sqrt(x)'))
    assert not verdict.passed
    assert verdict.location < 1e-3

import pytest

from qsdlab import conditioned
from qsdlab import drift_expr
from qsdlab import eigen
from qsdlab import loggrid
from qsdlab import measures
import numpy as np
from scipy.integrate import quad


def principal_solve(text):
    spec = drift_expr.parse_drift(text)
    report = measures.classify_boundaries(spec)
    critical = eigen.lambda_c(spec, report)
    return spec, report, eigen.solve_eta(spec, critical.lo, 16.)


@pytest.fixture(scope='module')
def linearPrincipal():
    """Returns (spec, report, principal solve) for q(x) = x."""
    return principal_solve('linear:1.0')


@pytest.fixture(scope='module')
def constantPrincipal():
    """Returns (spec, report, principal solve) for q = 1."""
    return principal_solve('const:1.0')


@pytest.fixture(scope='module')
def linearModel(linearPrincipal):
    """Returns the conditioned model of q(x) = x with c = 1."""
    spec, _, principal = linearPrincipal
    return conditioned.build_conditioned(spec, principal, 1.)


def test_criterion_linear(linearPrincipal):
    # mu([x, inf)) Lambda(x) ~ 1/(4x^2)
    spec, report, _ = linearPrincipal
    result = conditioned.rpositivity_criterion(spec, report)
    assert result.verdict == 'R-positive'
    assert result.rPositive
    assert result.limit <= 1e-6 * result.peak
    assert len(result.rows()) == len(result.ladder)


def test_criterion_constant(constantPrincipal):
    # mu([x, inf)) Lambda(x) = (1 - e^{-2x})/4
    spec, report, _ = constantPrincipal
    result = conditioned.rpositivity_criterion(spec, report)
    assert result.verdict == 'criterion-not-satisfied'
    assert not result.rPositive
    assert np.isclose(result.limit, 0.25, rtol=1e-4)
    x, product = result.ladder[0]
    assert np.isclose(product, (1. - np.exp(-2. * x)) / 4., rtol=1e-8)


def test_criterion_needs_hypothesis():
    spec = drift_expr.parse_drift('const:-1.0')
    report = measures.classify_boundaries(spec)
    with pytest.raises(ValueError):
        conditioned.rpositivity_criterion(spec, report)


def test_linear_model(linearModel):
    # eta_1(x) = x, so phi(y) = y - 1/y and Q^Y(y) = y^2 - 1 - 2 log y
    assert linearModel.eigenfunction.usesRecessive
    y = np.array([0.5, 2., 4., 10.])
    assert np.allclose(linearModel.drift(y), y - 1. / y, rtol=1e-4)
    assert np.allclose(linearModel.qy(y), y * y - 1. - 2. * np.log(y),
                       atol=1e-4)
    nodes = linearModel.grid[(linearModel.grid > 0.1)
                             & (linearModel.grid < 10.)]
    assert np.allclose(linearModel.table_drift(nodes),
                       linearModel.drift(nodes), rtol=1e-8, atol=1e-8)


def test_linear_speed_mass(linearModel):
    # m(0, inf) = sqrt(pi) e^{c^2}/(2 c^2) at c = 1
    mass = linearModel.mTotal
    assert mass.status == 'converged'
    assert mass.finite
    assert np.isclose(mass.value, 0.5 * np.sqrt(np.pi) * np.e, rtol=1e-4)
    assert mass.boundaryDefect < 1e-3


def test_speed_mass_reference_scaling(linearModel):
    spec = linearModel.spec
    principal = linearModel.eigenfunction.solution
    one = conditioned.y_speed_mass(spec, principal, 1.)
    two = conditioned.y_speed_mass(spec, principal, 2.)
    assert np.isclose(two.value / one.value, np.exp(3.) / 4., rtol=1e-6)


def test_linear_scale_function(linearModel):
    assert linearModel.lambdaY(1.) == 0.
    assert linearModel.lambdaY(0.5) < 0.
    expected, _ = quad(lambda z: np.exp(z * z - 1.) / (z * z), 1., 2.)
    assert np.isclose(linearModel.lambdaY(2.), expected, rtol=1e-4)


def test_constant_model(constantPrincipal):
    # eta_1(x) = x e^x, so phi(y) = -1/y and eta_1 is not square
    # integrable against mu
    spec, _, principal = constantPrincipal
    model = conditioned.build_conditioned(spec, principal, 1.)
    assert not model.eigenfunction.usesRecessive
    assert model.mTotal.status == 'diverged'
    assert not model.mTotal.finite
    y = np.array([0.5, 2., 8.])
    assert np.allclose(model.drift(y), -1. / y, rtol=1e-4, atol=1e-4)


def test_default_reference_point(constantPrincipal):
    # median of y e^{-y}
    spec, _, principal = constantPrincipal
    model = conditioned.build_conditioned(spec, principal)
    assert np.isclose(model.referencePoint, 1.678346990, rtol=1e-4)


def test_conditioned_drift(linearPrincipal):
    spec, _, principal = linearPrincipal
    assert np.isclose(conditioned.conditioned_drift(spec, principal, 1.), 0.,
                      atol=1e-5)
    tiny = 1e-7
    assert np.isclose(conditioned.conditioned_drift(spec, principal, tiny),
                      tiny - 1. / tiny)
    with pytest.raises(ValueError):
        conditioned.conditioned_drift(spec, principal, 0.)
    with pytest.raises(loggrid.ExtrapolationError):
        conditioned.conditioned_drift(spec, principal, 17.)


def test_shoot_recessive_needs_mode():
    spec = drift_expr.parse_drift('const:0.5')
    with pytest.raises(ValueError):
        conditioned.shoot_recessive(spec, 0.2, 4.)


def test_reference_point_range(linearPrincipal):
    spec, _, principal = linearPrincipal
    with pytest.raises(ValueError):
        conditioned.build_conditioned(spec, principal, 100.)


def test_near_zero_drift():
    # q(y) - q(0) - 1/y
    spec = drift_expr.parse_drift('1 + x')
    y = np.array([1e-4, 1e-3, 1e-2])
    assert np.allclose(conditioned._near_zero_drift(spec, y), y - 1. / y,
                       rtol=1e-12)

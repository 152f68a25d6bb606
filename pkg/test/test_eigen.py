import pytest

from qsdlab import drift_expr
from qsdlab import eigen
from qsdlab import measures
import numpy as np


@pytest.fixture
def constantDrift():
    """Returns the constant drift q = 1."""
    return drift_expr.parse_drift('const:1.0')


@pytest.fixture
def linearDrift():
    """Returns the linear drift q(x) = x."""
    return drift_expr.parse_drift('linear:1.0')


def log_eta_constant(x, lam, a=1.):
    """log eta_lambda for q = a below a^2/2: e^{ax} sinh(kx)/k."""
    k = np.sqrt(a * a - 2. * lam)
    return a * x + k * x + np.log(-np.expm1(-2. * k * x)) - np.log(2. * k)


@pytest.mark.parametrize('lam', [0.1, 0.3, 0.45])
def test_solve_eta_constant(constantDrift, lam):
    sol = eigen.solve_eta(constantDrift, lam, 8.)
    assert not eigen.has_sign_change(sol)
    x = np.array([0.25, 1., 4., 8.])
    assert np.allclose(sol.path.log_eta(x), log_eta_constant(x, lam),
                       rtol=1e-7)
    assert sol.eta.grid[0] == 0.
    assert sol.eta.signs[0] == 0.


def test_solve_eta_linear_at_critical(linearDrift):
    # eta_1(x) = x for q(x) = x
    sol = eigen.solve_eta(linearDrift, 1., 6.)
    x = np.array([0.5, 2., 6.])
    assert np.allclose(sol.path.log_eta(x), np.log(x), atol=1e-7)
    assert np.allclose(sol.path.cot_theta(x), 1. / x, rtol=1e-6)


@pytest.mark.parametrize('lam', [0.5, 2., 8.])
def test_brownian_sign_change(lam):
    sol = eigen.solve_eta(drift_expr.parse_drift('const:0'), lam, 16.)
    assert eigen.has_sign_change(sol)
    assert np.isclose(sol.firstSignChange, np.pi / np.sqrt(2. * lam),
                      rtol=1e-6)


@pytest.mark.parametrize('lam, horizon', [
    (0., 1.),
    (-1., 1.),
    (1., 0.),
])
def test_solve_eta_rejects(constantDrift, lam, horizon):
    with pytest.raises(ValueError):
        eigen.solve_eta(constantDrift, lam, horizon)


def test_extend_solution(constantDrift):
    short = eigen.solve_eta(constantDrift, 0.3, 4.)
    extended = eigen.extend_solution(short, constantDrift, 8.)
    assert extended.horizon == 8.
    assert eigen.extend_solution(extended, constantDrift, 2.) is extended
    assert np.isclose(extended.path.log_eta(6.), log_eta_constant(6., 0.3),
                      rtol=1e-7)


@pytest.mark.parametrize('lam, status', [
    (0.4, 'certified-positive'),
    (0.6, 'located'),
])
def test_classify_lambda_constant(constantDrift, lam, status):
    classification = eigen.classify_lambda(constantDrift, lam)
    assert classification.status == status
    if status == 'located':
        omega = np.sqrt(2. * lam - 1.)
        assert np.isclose(classification.location, np.pi / omega, rtol=1e-6)


@pytest.mark.parametrize('text, below, above', [
    ('const:1.0', [0.1, 0.25, 0.4, 0.45], [0.6, 0.75, 1., 2.]),
    ('linear:1.0', [0.25, 0.5, 0.9], [1.5, 2., 3.]),
])
def test_sign_change_ladder(text, below, above):
    # no sign change up to lambda_c, a sign change moving in above it
    spec = drift_expr.parse_drift(text)
    for lam in below:
        assert eigen.classify_lambda(spec, lam).status == 'certified-positive'
    locations = []
    for lam in above:
        classification = eigen.classify_lambda(spec, lam)
        assert classification.status == 'located'
        locations.append(classification.location)
    assert np.all(np.diff(locations) < 0)


def test_rotation_certificate():
    spec = drift_expr.parse_drift('const:0.5')
    assert eigen.rotation_certificate(spec, 0.2, 4.)
    assert not eigen.rotation_certificate(spec, 0.1, 4.)


@pytest.mark.parametrize('text, expected', [
    ('const:1.0', 0.5),
    ('const:2.0', 2.0),
    ('linear:1.0', 1.0),
    ('linear:0.5', 0.5),
])
def test_lambda_c(text, expected):
    spec = drift_expr.parse_drift(text)
    report = measures.classify_boundaries(spec)
    critical = eigen.lambda_c(spec, report)
    assert np.isclose(critical.value, expected, rtol=1e-5)
    assert critical.lo < critical.hi
    assert not critical.provisional
    delta = report.delta.value
    assert 1. / (4. * delta) <= critical.hi * (1. + 1e-6)
    assert critical.lo <= 1. / delta


def test_lambda_c_needs_finite_delta():
    spec = drift_expr.parse_drift('const:0')
    with pytest.raises(ValueError):
        eigen.lambda_c(spec, measures.classify_boundaries(spec))


@pytest.mark.parametrize('lam', [0.1, 0.3, 0.5])
def test_phi_integral_constant(constantDrift, lam):
    mass = eigen.phi_integral(eigen.solve_eta(constantDrift, lam, 16.),
                              constantDrift)
    assert mass.status == 'converged'
    assert mass.tailModel == 'exponential'
    assert mass.relativeDefect < 1e-6


def test_phi_integral_power_tail(linearDrift):
    # phi decays like x^{-(1 + lambda)} below lambda_c = 1
    mass = eigen.phi_integral(eigen.solve_eta(linearDrift, 0.5, 16.),
                              linearDrift)
    assert mass.status == 'power-law'
    assert np.isclose(mass.exponent, 1.5, rtol=1e-3)
    assert mass.relativeDefect < 1e-4


def test_phi_integral_rejects_sign_change(constantDrift):
    sol = eigen.solve_eta(constantDrift, 0.6, 16.)
    with pytest.raises(ValueError):
        eigen.phi_integral(sol, constantDrift)


def test_solution_properties(constantDrift):
    sol = eigen.solve_eta(constantDrift, 0.3, 16.)
    assert eigen.ode_residual(sol, constantDrift) < 1e-6
    assert eigen.integral_form_residual(sol, constantDrift) < 1e-6
    assert eigen.is_increasing(sol)
    k = np.sqrt(0.4)
    assert np.isclose(eigen.growth_ratio_trend(sol, constantDrift),
                      -(1. - k), rtol=5e-2)


def test_phi_from_eta(constantDrift):
    sol = eigen.solve_eta(constantDrift, 0.5, 4.)
    phi = eigen.phi_from_eta(sol, constantDrift)
    # phi_{1/2}(x) = x e^{-x} for q = 1
    x = np.array([0.5, 1., 3.])
    assert np.allclose(phi(x), x * np.exp(-x), rtol=1e-5)
    assert np.allclose(eigen.log_phi(sol, constantDrift, x), np.log(x) - x,
                       atol=1e-7)

import pytest

from qsdlab import conditioned
from qsdlab import config
from qsdlab import drift_expr
from qsdlab import eigen
from qsdlab import measures
from qsdlab import montecarlo
from qsdlab import qsd
import numpy as np


@pytest.fixture(scope='module')
def constantDrift():
    """Returns the constant drift q = 1."""
    return drift_expr.parse_drift('const:1.0')


@pytest.fixture(scope='module')
def constantMinimal(constantDrift):
    """Returns the minimal QSD y e^{-y} of the constant drift."""
    report = measures.classify_boundaries(constantDrift)
    critical = eigen.lambda_c(constantDrift, report)
    return qsd.build_qsd(constantDrift, critical.value, critical)


@pytest.fixture(scope='module')
def linearDrift():
    """Returns the linear drift q(x) = x."""
    return drift_expr.parse_drift('linear:1.0')


@pytest.fixture(scope='module')
def linearMinimal(linearDrift):
    """Returns the minimal QSD 2y e^{-y^2} of the linear drift."""
    report = measures.classify_boundaries(linearDrift)
    critical = eigen.lambda_c(linearDrift, report)
    return qsd.build_qsd(linearDrift, critical.value, critical)


def binomial_sigma(p, n):
    return np.sqrt(p * (1. - p) / n)


def test_brownian_survival():
    assert montecarlo.brownian_survival(1., 0.) == 1.
    assert np.isclose(montecarlo.brownian_survival(1., 0.5), 0.8427007929)
    t = np.array([0.5, 1., 4.])
    assert np.allclose(montecarlo.constant_drift_survival(0., 1., t),
                       montecarlo.brownian_survival(1., t))


def test_simulate_deterministic(constantDrift, monkeypatch):
    tol = config.Tolerances(blockSize=256)
    monkeypatch.setenv('QSDLAB_THREADS', '1')
    single = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000, 3,
                                        [0.5], tol=tol)
    monkeypatch.setenv('QSDLAB_THREADS', '4')
    several = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000,
                                         3, [0.5], tol=tol)
    assert np.array_equal(single.killingTimes, several.killingTimes,
                          equal_nan=True)
    assert np.array_equal(single.snapshots[0.5], several.snapshots[0.5])
    other = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000, 4,
                                       tol=tol)
    assert not np.array_equal(single.killingTimes, other.killingTimes,
                              equal_nan=True)


def test_zero_drift_survival():
    spec = drift_expr.parse_drift('const:0')
    n = 20000
    ensemble = montecarlo.simulate_killed(spec, 1., 1., 1e-3, n, 5)
    fraction = montecarlo.survival_curve(ensemble, [1.]).fraction[0]
    exact = montecarlo.brownian_survival(1., 1.)
    assert abs(fraction - exact) < 4. * binomial_sigma(exact, n)


@pytest.mark.parametrize('t', [0.5, 2.])
def test_constant_drift_survival(constantDrift, t):
    n = 20000
    ensemble = montecarlo.simulate_killed(constantDrift, 1., 2., 1e-3, n, 6)
    fraction = montecarlo.survival_curve(ensemble, [t]).fraction[0]
    exact = montecarlo.constant_drift_survival(1., 1., t)
    assert abs(fraction - exact) < 4. * binomial_sigma(exact, n)


def test_survival_curve_monotone(constantDrift):
    ensemble = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 500, 1)
    curve = montecarlo.survival_curve(ensemble)
    assert curve.survivors[0] == 500
    assert np.all(np.diff(curve.survivors) <= 0)
    assert curve.rows().shape == (201, 3)


def test_decay_rate_from_qsd(constantDrift, constantMinimal):
    # started from the QSD, P(tau > t) = e^{-t/2}
    ensemble = montecarlo.simulate_killed(constantDrift, constantMinimal, 4.,
                                          1e-3, 20000, 8)
    assert ensemble.start.startswith('QSD')
    estimate = montecarlo.estimate_decay_rate(ensemble)
    assert estimate.window == (1., 3.)
    assert abs(estimate.rate - 0.5) < 0.05
    assert estimate.ci[0] < estimate.rate < estimate.ci[1]


def fit_closed_form(survival, window):
    """Returns (zeta, beta) of the prefactor fit to an exact survival."""
    times = np.linspace(window[0], window[1], 33)
    design = np.column_stack([np.ones_like(times), -times, -np.log(times)])
    coefficients = np.linalg.lstsq(design, np.log(survival(times)),
                                   rcond=None)[0]
    return coefficients[1], coefficients[2]


def width(ci):
    return ci[1] - ci[0]


def test_decay_rate_prefactor_from_qsd(constantDrift, constantMinimal):
    # P(tau > t) = e^{-t/2} exactly, so beta = 0
    ensemble = montecarlo.simulate_killed(constantDrift, constantMinimal, 3.,
                                          1e-3, 20000, 8)
    estimate = montecarlo.estimate_decay_rate(ensemble, (1., 3.),
                                              prefactor=True)
    assert abs(estimate.rate - 0.5) < width(estimate.ci)
    assert abs(estimate.prefactorExponent) < width(estimate.prefactorCi)


def test_decay_rate_prefactor_constant(constantDrift):
    # from x0 = 1 the survival carries a t^{-3/2} prefactor
    ensemble = montecarlo.simulate_killed(constantDrift, 1., 3., 1e-3, 20000,
                                          9)
    estimate = montecarlo.estimate_decay_rate(ensemble, (1., 3.),
                                              prefactor=True)
    zeta, beta = fit_closed_form(
        lambda t: montecarlo.constant_drift_survival(1., 1., t), (1., 3.))
    assert abs(estimate.rate - zeta) < width(estimate.ci)
    assert abs(estimate.prefactorExponent - beta) < \
        width(estimate.prefactorCi)
    plain = montecarlo.estimate_decay_rate(ensemble, (1., 3.))
    assert plain.prefactorExponent is None
    assert plain.prefactorCi is None
    with pytest.raises(ValueError):
        montecarlo.estimate_decay_rate(ensemble, (0., 3.), prefactor=True)
    with pytest.raises(ValueError):
        montecarlo.estimate_decay_rate(ensemble, (1., 5.))


def test_decay_rate_prefactor_linear(linearDrift):
    # P_x(tau > t) ~ (2/sqrt(pi)) x e^{-t}: zeta = 1 and beta = 0
    ensemble = montecarlo.simulate_killed(linearDrift, 1., 4., 1e-3, 20000,
                                          10)
    estimate = montecarlo.estimate_decay_rate(ensemble, (1., 4.),
                                              prefactor=True)
    assert abs(estimate.rate - 1.) < width(estimate.ci)
    assert abs(estimate.prefactorExponent) < width(estimate.prefactorCi)


def test_linear_drift_survival(linearDrift):
    n = 20000
    ensemble = montecarlo.simulate_killed(linearDrift, 1., 1., 1e-3, n, 11)
    fraction = montecarlo.survival_curve(ensemble, [1.]).fraction[0]
    exact = montecarlo.linear_drift_survival(1., 1., 1.)
    assert abs(fraction - exact) < 4. * binomial_sigma(exact, n)
    assert montecarlo.linear_drift_survival(1., 1., 0.) == 1.
    assert np.isclose(montecarlo.linear_drift_survival(1e-8, 1., 2.),
                      montecarlo.brownian_survival(1., 2.), rtol=1e-6)


def test_insufficient_survivors():
    spec = drift_expr.parse_drift('const:0')
    ensemble = montecarlo.simulate_killed(spec, 0.1, 2., 1e-2, 200, 2)
    with pytest.raises(montecarlo.InsufficientSurvivorsError):
        montecarlo.estimate_decay_rate(ensemble)


def test_decay_rate_without_bootstrap(constantDrift):
    ensemble = montecarlo.simulate_killed(constantDrift, 1., 2., 1e-2, 1000,
                                          2)
    tol = config.Tolerances(bootstrapSamples=0)
    with pytest.raises(montecarlo.InsufficientSurvivorsError):
        montecarlo.estimate_decay_rate(ensemble, tol=tol)


def test_bridge_never_kills_later(constantDrift):
    bridged = montecarlo.simulate_killed(constantDrift, 1., 1., 5e-2, 2000, 4)
    plain = montecarlo.simulate_killed(constantDrift, 1., 1., 5e-2, 2000, 4,
                                       bridge=False)
    assert np.all(bridged.lifetimes() <= plain.lifetimes())
    assert np.count_nonzero(np.isinf(bridged.lifetimes())) < \
        np.count_nonzero(np.isinf(plain.lifetimes()))


def test_bridge_reduces_bias(constantDrift):
    exact = montecarlo.constant_drift_survival(1., 1., 1.)
    errors = []
    for bridge in (True, False):
        ensemble = montecarlo.simulate_killed(constantDrift, 1., 1., 5e-2,
                                              20000, 5, bridge=bridge)
        fraction = montecarlo.survival_curve(ensemble, [1.]).fraction[0]
        errors.append(abs(fraction - exact))
    assert errors[0] < errors[1]


def test_refining_dt_reduces_bias(constantDrift):
    exact = montecarlo.constant_drift_survival(1., 1., 1.)
    errors = []
    for dt in (5e-2, 5e-3):
        ensemble = montecarlo.simulate_killed(constantDrift, 1., 1., dt,
                                              20000, 6, bridge=False)
        fraction = montecarlo.survival_curve(ensemble, [1.]).fraction[0]
        errors.append(abs(fraction - exact))
    assert errors[1] < errors[0]


def test_block_size_is_part_of_the_key(constantDrift):
    small = config.Tolerances(blockSize=256)
    first = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000, 3,
                                       tol=small)
    second = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000, 3,
                                        tol=small)
    other = montecarlo.simulate_killed(constantDrift, 1., 1., 1e-2, 1000, 3,
                                       tol=config.Tolerances(blockSize=512))
    assert np.array_equal(first.killingTimes, second.killingTimes,
                          equal_nan=True)
    assert not np.array_equal(first.killingTimes, other.killingTimes,
                              equal_nan=True)


@pytest.mark.parametrize('x0, tMax, dt, n, times', [
    (0., 1., 1e-2, 10, ()),
    (1., 1., 0., 10, ()),
    (1., 1e-3, 1e-2, 10, ()),
    (1., 1., 1e-2, 0, ()),
    (1., 1., 1e-2, 10, (2.,)),
])
def test_simulate_rejects(constantDrift, x0, tMax, dt, n, times):
    with pytest.raises(ValueError):
        montecarlo.simulate_killed(constantDrift, x0, tMax, dt, n, 1, times)


def test_nonfinite_drift_aborts():
    spec = drift_expr.DriftSpec('expression',
                                ast=drift_expr.Parser('1/(x - 1)').parse())
    ensemble = montecarlo.simulate_killed(spec, 1., 0.1, 1e-2, 50, 1)
    assert np.all(ensemble.aborted)
    assert ensemble.valid == 0


def test_qsd_invariance(constantDrift, constantMinimal):
    report = montecarlo.qsd_invariance_check(constantDrift, constantMinimal,
                                             [0.5, 1.], 4000, 1e-3, 12)
    assert [check.t for check in report.checks] == [0.5, 1.]
    assert all(not check.skipped for check in report.checks)
    assert report.passed


def test_semigroup(constantDrift, constantMinimal):
    principal = constantMinimal.solution
    report = montecarlo.semigroup_check(constantDrift, principal, 1., 1.,
                                        20000, 1e-3, 13)
    assert np.isclose(report.expected, np.exp(-constantMinimal.lam))
    assert abs(report.ratio - report.expected) < \
        2. * (report.ci[1] - report.ci[0])
    zero = montecarlo.semigroup_check(constantDrift, principal, 1., 0.,
                                      100, 1e-3, 13)
    assert zero.ratio == 1.


def test_semigroup_ladder(constantDrift, constantMinimal):
    reports, slope = montecarlo.semigroup_ladder(
        constantDrift, constantMinimal.solution, 1., [0.5, 1., 2.], 20000,
        1e-3, 14)
    assert len(reports) == 3
    assert abs(slope + constantMinimal.lam) < 0.05


def test_yaglom_trend(constantDrift, constantMinimal):
    trend = montecarlo.yaglom_check(constantDrift, constantMinimal, 0.2,
                                    [0.5, 1., 2.], 20000, 1e-3, 15)
    assert len(trend.checks) == 3
    assert trend.decreasing


@pytest.fixture(scope='module')
def linearModel():
    """Returns the conditioned model of q(x) = x with c = 1."""
    spec = drift_expr.parse_drift('linear:1.0')
    critical = eigen.lambda_c(spec, measures.classify_boundaries(spec))
    return conditioned.build_conditioned(
        spec, eigen.solve_eta(spec, critical.lo, 16.), 1.)


def test_simulate_conditioned(linearModel):
    # Y has stationary density 4/sqrt(pi) y^2 e^{-y^2}, mean 2/sqrt(pi)
    summary = montecarlo.simulate_conditioned(linearModel.spec, linearModel,
                                              1., 5., 1e-2, 2000, 16)
    assert np.isclose(summary.occupation.sum(), 1.)
    assert summary.clampRate <= 1e-3
    assert summary.meanTrace.shape[1] == 2
    assert abs(summary.meanTrace[-1, 1] - 2. / np.sqrt(np.pi)) < 0.06
    with pytest.raises(ValueError):
        montecarlo.simulate_conditioned(linearModel.spec, linearModel, 0.,
                                        1., 1e-2, 10, 1)
    assert summary.escapeRate == 0.


def test_conditioned_escapes_without_mass(constantDrift):
    # for q = 1, Y is a 3-dimensional Bessel process: transient
    critical = eigen.lambda_c(constantDrift,
                              measures.classify_boundaries(constantDrift))
    tol = config.Tolerances(conditionedHorizon=4.)
    model = conditioned.build_conditioned(
        constantDrift, eigen.solve_eta(constantDrift, critical.lo, 4.), 1.,
        tol=tol)
    assert model.horizon == 4.
    assert not model.mTotal.finite
    summary = montecarlo.simulate_conditioned(constantDrift, model, 1., 20.,
                                              1e-2, 500, 17, tol=tol)
    assert summary.escapeRate > 0.25
    assert summary.meanTrace[-1, 1] > 3. * summary.meanTrace[0, 1]


def test_qsd_invariance_linear(linearDrift, linearMinimal):
    report = montecarlo.qsd_invariance_check(linearDrift, linearMinimal,
                                             [0.5, 1.], 4000, 1e-3, 18)
    assert all(not check.skipped for check in report.checks)
    assert report.passed


def test_semigroup_linear(linearDrift, linearMinimal):
    # eta_1(x) = x and E_1[X_t; tau > t] = e^{-t}
    report = montecarlo.semigroup_check(linearDrift, linearMinimal.solution,
                                        1., 1., 20000, 1e-3, 19)
    assert np.isclose(report.expected, np.exp(-1.), rtol=1e-5)
    assert abs(report.ratio - report.expected) < \
        2. * (report.ci[1] - report.ci[0])

import os

import pytest

from qsdlab import conditioned
from qsdlab import drift_expr
from qsdlab import eigen
from qsdlab import measures
from qsdlab import montecarlo
from qsdlab import plot
from qsdlab import qsd
from qsdlab import report
import numpy as np


@pytest.fixture(scope='module')
def constantDrift():
    """Returns the constant drift q = 1."""
    return drift_expr.parse_drift('const:1.0')


@pytest.fixture(scope='module')
def constantClassification(constantDrift):
    """Returns the boundary classification of q = 1."""
    return measures.classify_boundaries(constantDrift)


@pytest.fixture(scope='module')
def constantMinimal(constantDrift, constantClassification):
    """Returns the minimal QSD y e^{-y} of the constant drift."""
    critical = eigen.lambda_c(constantDrift, constantClassification)
    return qsd.build_qsd(constantDrift, critical.value, critical)


@pytest.fixture(scope='module')
def smallEnsemble(constantDrift):
    """Returns 500 paths of q = 1 from x0 = 1 with snapshots."""
    return montecarlo.simulate_killed(constantDrift, 1., 2., 1e-2, 500, 3,
                                      [0.5, 1.])


def read_lines(path):
    with open(str(path)) as f:
        return f.read().splitlines()


def test_report_lines():
    rep = report.Report('title')
    rep.section('numbers')
    rep.verdict('delta', 'converged', 'error 1e-12')
    rep.note('a note')
    lines = rep.text().splitlines()
    assert lines[:2] == ['title', '=====']
    assert '[numbers]' in lines
    assert 'delta: converged (error 1e-12)' in lines
    assert lines[-1] == 'a note'
    assert rep.undecided == []
    assert rep.failures == []


def test_report_tracks_undecided_and_failures():
    rep = report.Report('checks')
    rep.verdict('H1', 'undecided')
    rep.check('passing', True, '1e-9', 'tol 1e-6')
    rep.check('failing', False, '1e-3', 'tol 1e-6')
    rep.check('skipped', None, 'n/a', 'tol 1e-6')
    assert rep.undecided == ['H1']
    assert rep.failures == ['failing']
    text = rep.text()
    assert 'PASS' in text
    assert 'FAIL' in text
    assert 'SKIP' in text


def test_report_write(tmpdir):
    rep = report.Report('λ report')
    rep.note('δ = ∞')
    path = str(tmpdir.join('report.txt'))
    rep.write(path)
    with open(path, encoding='utf-8') as f:
        assert f.read() == rep.text()


@pytest.mark.parametrize('lam, name', [
    (0.5, 'qsd_0.5.csv'),
    (0.25, 'qsd_0.25.csv'),
    (0.4999995, 'qsd_0.5.csv'),
])
def test_qsd_filename(lam, name):
    assert report.qsd_filename(lam) == name


def test_ensure_dirs(tmpdir):
    outputDir = str(tmpdir.join('out'))
    report.ensure_dirs(outputDir)
    report.ensure_dirs(outputDir)
    assert os.path.isdir(os.path.join(outputDir, 'plots'))


def test_classification_csv(tmpdir, constantClassification):
    path = tmpdir.join('classification.csv')
    report.write_classification_csv(constantClassification, str(path))
    lines = read_lines(path)
    assert lines[0] == 'quantity,status,value,error_bound'
    assert len(lines) == 1 + len(constantClassification.rows())
    assert all(len(line.split(',')) == 4 for line in lines[1:])


def test_qsd_csv(tmpdir, constantMinimal):
    path = tmpdir.join('qsd.csv')
    report.write_qsd_csv(constantMinimal, str(path))
    lines = read_lines(path)
    assert lines[0] == 'y,density,cdf'
    table = np.loadtxt(str(path), delimiter=',', skiprows=1)
    y, density, cdf = table.T
    assert np.all(np.diff(y) > 0)
    assert np.all(np.diff(cdf) >= 0)
    inside = y <= 10.
    assert np.allclose(density[inside], y[inside] * np.exp(-y[inside]),
                       rtol=1e-5, atol=1e-12)


def test_qsd_csv_repeatable(tmpdir, constantMinimal):
    first = tmpdir.join('first.csv')
    second = tmpdir.join('second.csv')
    report.write_qsd_csv(constantMinimal, str(first))
    report.write_qsd_csv(constantMinimal, str(second))
    assert first.read() == second.read()


def test_survival_and_snapshot_csv(tmpdir, smallEnsemble):
    curve = montecarlo.survival_curve(smallEnsemble)
    survivalPath = tmpdir.join('survival.csv')
    report.write_survival_csv(curve, str(survivalPath))
    lines = read_lines(survivalPath)
    assert lines[0] == 't,survivors,fraction'
    assert lines[1].split(',')[1] == '500'
    assert len(lines) == 202

    snapshotPath = tmpdir.join('snapshots.csv')
    report.write_snapshots_csv(smallEnsemble, str(snapshotPath))
    table = np.loadtxt(str(snapshotPath), delimiter=',', skiprows=1)
    assert read_lines(snapshotPath)[0] == 't,y'
    assert set(table[:, 0]) == {0.5, 1.}
    assert np.all(table[:, 1] > 0)


def test_criterion_csv(tmpdir, constantDrift, constantClassification):
    result = conditioned.rpositivity_criterion(constantDrift,
                                               constantClassification)
    path = tmpdir.join('criterion.csv')
    report.write_criterion_csv(result, str(path))
    lines = read_lines(path)
    assert lines[0] == 'x,product,sup_form'
    assert len(lines) == 1 + len(result.ladder)


def test_density_plot(tmpdir, constantDrift, constantMinimal):
    plot.density_plot([constantMinimal],
                      qsd.closed_form_minimal_density(constantDrift),
                      savePath=str(tmpdir))
    assert tmpdir.join('density_plot.svg').check()


def test_density_plot_no_save(tmpdir, constantMinimal):
    plot.density_plot([constantMinimal], save=False, savePath=str(tmpdir))
    assert not tmpdir.join('density_plot.svg').check()


def test_survival_plot(tmpdir, smallEnsemble):
    curve = montecarlo.survival_curve(smallEnsemble)
    plot.survival_plot(curve,
                       closedForm=lambda t:
                       montecarlo.constant_drift_survival(1., 1., t),
                       savePath=str(tmpdir))
    assert tmpdir.join('survival_plot.svg').check()


def test_criterion_plot(tmpdir, constantDrift, constantClassification):
    result = conditioned.rpositivity_criterion(constantDrift,
                                               constantClassification)
    plot.criterion_plot(result, savePath=str(tmpdir))
    assert tmpdir.join('criterion_plot.svg').check()

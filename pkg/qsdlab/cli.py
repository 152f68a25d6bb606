#! /usr/bin/env python
#

""" Batch front end:

    qsdlab run <config-path>
    qsdlab validate <config-path>
    qsdlab classify --drift "<expr>"

Exit status 0 on success, 2 when a verdict stays undecided, 1 on
errors and failed validation checks.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from . import plot
from .conditioned import build_conditioned, rpositivity_criterion
from .config import ConfigError, read_config
from .drift_expr import check_smoothness, parse_drift
from .eigen import lambda_c, phi_integral, solve_eta
from .measures import classify_boundaries
from .montecarlo import (InsufficientSurvivorsError, SimulationInvalidError,
                         brownian_survival, constant_drift_survival,
                         estimate_decay_rate, linear_drift_survival,
                         qsd_invariance_check,
                         semigroup_ladder, simulate_conditioned,
                         simulate_killed, survival_curve, yaglom_check)
from .qsd import (QsdRangeError, build_qsd, bump_family,
                  closed_form_deviation, closed_form_minimal_density,
                  eigenmeasure_residual, qsd_exists)
from .report import (Report, ensure_dirs, qsd_filename,
                     write_classification_csv, write_criterion_csv,
                     write_qsd_csv, write_snapshots_csv, write_survival_csv)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_UNDECIDED = 2

CLOSED_FORM_NAMES = {'constant': 'a²ye^{−ay}',
                     'linear': '2aye^{−ay²}'}


def expected_lambda_c(spec):
    """lambda_c of the builtin drifts with a > 0: a^2/2 and a."""
    if spec.kind == 'constant' and spec.a > 0:
        return 0.5 * spec.a * spec.a
    if spec.kind == 'linear' and spec.a > 0:
        return spec.a
    return None


##############################
#                            #
#  Analysis                  #
#                            #
##############################

class Analysis:
    """
    Lazily computed pieces of one configuration, shared between the
    commands so that each is computed once.
    """

    def __init__(self, config):
        self.config = config
        self.tol = config.tol
        self.spec = parse_drift(config.drift, tol=self.tol)
        self._classification = None
        self._existence = None
        self._critical = None
        self._minimal = None
        self.conditioned = None

    @property
    def classification(self):
        if self._classification is None:
            self._classification = classify_boundaries(self.spec, self.tol)
        return self._classification

    @property
    def existence(self):
        if self._existence is None:
            self._existence = qsd_exists(self.spec, self.classification,
                                         self.tol)
        return self._existence

    @property
    def critical(self):
        if self._critical is None:
            self._critical = lambda_c(self.spec, self.classification,
                                      self.tol)
        return self._critical

    @property
    def minimal(self):
        if self._minimal is None:
            self._minimal = build_qsd(self.spec, self.critical.lo,
                                      self.critical, self.tol)
        return self._minimal

    def path(self, *parts):
        return os.path.join(self.config.outputDir, *parts)


##############################
#                            #
#  run                       #
#                            #
##############################

def _smoothness_section(analysis, report):
    verdict = check_smoothness(analysis.spec, tol=analysis.tol)
    report.verdict('smoothness check', 'passed' if verdict.passed else
                   'failed', 'worst estimate %.3g at x = %g, smoothness_jump '
                   '= %g' % (verdict.worstEstimate, verdict.location,
                             verdict.threshold))


def _classification_section(analysis, report):
    classification = analysis.classification
    tol = analysis.tol
    write_classification_csv(classification,
                             analysis.path('classification.csv'))
    report.section('classification')
    report.verdict('H1 (Lambda(inf) = inf)', classification.h1,
                   'truncation_rtol = %g, truncation_cap = %g'
                   % (tol.truncationRtol, tol.truncationCap))
    report.verdict('H2 (S = inf)', classification.h2,
                   'truncation_rtol = %g' % tol.truncationRtol)
    delta = classification.delta
    report.verdict('delta', delta.status, 'value %.10g at x = %g, error '
                   'bound %.3g, truncation_rtol = %g'
                   % (delta.value, delta.location, delta.errorBound,
                      tol.truncationRtol))
    report.verdict('mu(0, inf)', classification.muTotal.status,
                   'value %.10g' % classification.muTotal.value)
    report.note('0 is %s' % ('regular' if classification.regularAtZero
                             else 'not regular'))

    existence = analysis.existence
    report.section('existence')
    report.verdict('QSD existence', existence.status, existence.reason)
    if existence.status == 'does-not-exist':
        if classification.delta.status == 'diverged':
            report.note('no QSD exists (δ = ∞)')
        else:
            report.note('no QSD exists (H1 fails)')
    elif existence.exists and not existence.familyValid:
        report.note('H2 is %s: the family construction is not certified'
                    % classification.h2)


def _lambda_c_section(analysis, report):
    critical = analysis.critical
    delta = analysis.classification.delta.value
    tol = analysis.tol
    report.section('critical eigenvalue')
    report.note('λ_c = %.10g in [%.12g, %.12g] (bisection_rtol = %g)%s'
                % (critical.value, critical.lo, critical.hi,
                   tol.bisectionRtol,
                   ', provisional' if critical.provisional else ''))
    if critical.provisional:
        report.undecided.append('lambda_c sign classification')
    sandwich = 1. / (4. * delta) <= critical.hi and \
        critical.lo <= 1. / delta
    report.verdict('(4 delta)^-1 <= lambda_c <= delta^-1',
                   'holds' if sandwich else 'fails',
                   '[%.8g, %.8g]' % (1. / (4. * delta), 1. / delta))
    expected = expected_lambda_c(analysis.spec)
    if expected is not None:
        report.note('closed form λ_c = %.10g, relative error %.3g'
                    % (expected, abs(critical.value - expected) / expected))


def _qsd_section(analysis, report):
    spec, tol, critical = analysis.spec, analysis.tol, analysis.critical
    report.section('quasi-stationary distributions')
    dists = []
    for entry in analysis.config.lambdaValues:
        lam = entry.resolve(critical.value)
        try:
            dist = analysis.minimal if entry.relative and \
                entry.value == 1.0 else build_qsd(spec, lam, critical, tol)
        except QsdRangeError as error:
            report.note('%r: %s' % (entry, error))
            continue
        write_qsd_csv(dist, analysis.path(qsd_filename(dist.lam)))
        passed = dist.normalizationDefect < tol.normalizationTol
        report.verdict('nu at lambda = %.10g' % dist.lam,
                       'normalized' if passed else 'defective',
                       'normalization defect %.3g, normalization_tol = %g, '
                       'support [0, %g], %s tail' % (
                           dist.normalizationDefect, tol.normalizationTol,
                           dist.supportTruncation, dist.tailModel))
        dists.append(dist)

    closed = closed_form_minimal_density(spec)
    if closed is not None:
        deviation = closed_form_deviation(analysis.minimal, spec)
        name = CLOSED_FORM_NAMES[spec.kind]
        if deviation < tol.closedFormTol:
            report.note('minimal QSD matches %s (sup deviation %.3g on '
                        '[0.01, 10], closed_form_tol = %g)'
                        % (name, deviation, tol.closedFormTol))
        else:
            report.note('minimal QSD deviates from %s by %.3g '
                        '(closed_form_tol = %g)'
                        % (name, deviation, tol.closedFormTol))
    return dists


def _rpositive_section(analysis, report):
    spec, tol = analysis.spec, analysis.tol
    classification = analysis.classification
    report.section('R-positivity')
    if classification.h1 == 'fails' or classification.h2 == 'fails':
        report.note('criterion not applicable: hypothesis H fails')
        return None
    result = rpositivity_criterion(spec, classification, tol)
    write_criterion_csv(result, analysis.path('criterion.csv'))
    if result.verdict == 'R-positive':
        detail = 'product %.3g below criterion_ratio = %g of its peak %.6g' \
            % (result.limit, tol.criterionRatio, result.peak)
    elif result.verdict == 'criterion-not-satisfied':
        detail = 'plateau at %.6g, plateau_rtol = %g over %d doublings' % (
            result.limit, tol.plateauRtol, tol.plateauRun)
    else:
        detail = 'no decision up to x = %g' % tol.truncationCap
    report.verdict('R-positivity criterion', result.verdict, detail)
    if result.verdict == 'R-positive':
        report.note('the killed process is R-positive')

    if analysis.existence.exists:
        model = build_conditioned(spec, analysis.minimal.solution,
                                  analysis.config.referencePoint,
                                  analysis.minimal, tol)
        mass = model.mTotal
        report.verdict('speed measure of Y', mass.status,
                       'mass %.10g with c = %.6g, boundary defect %s, '
                       'boundary_defect = %g'
                       % (mass.value, model.referencePoint,
                          'n/a' if mass.boundaryDefect is None else
                          '%.3g' % mass.boundaryDefect, tol.boundaryDefect))
        if result.rPositive and not mass.finite:
            report.note('warning: criterion satisfied but m(0, inf) is not '
                        'finite')
        analysis.conditioned = model
    return result


def _simulate_section(analysis, report):
    config, spec, tol = analysis.config, analysis.spec, analysis.tol
    mc = config.mc
    report.section('simulation')
    ensemble = simulate_killed(spec, mc['x0'], mc['tMax'], mc['dt'], mc['n'],
                               mc['seed'], mc['snapshotTimes'], mc['bridge'],
                               tol)
    curve = survival_curve(ensemble)
    write_survival_csv(curve, analysis.path('survival.csv'))
    write_snapshots_csv(ensemble, analysis.path('snapshots.csv'))
    report.note('%r' % ensemble)

    estimate = None
    try:
        estimate = estimate_decay_rate(ensemble, mc['window'], tol=tol)
        report.note('decay rate ζ = %.6g, %g%% CI [%.6g, %.6g] on [%g, %g]'
                    % (estimate.rate, 100. * tol.ciLevel, *estimate.ci,
                       *estimate.window))
        if estimate.window[0] > 0:
            corrected = estimate_decay_rate(ensemble, mc['window'],
                                            prefactor=True, tol=tol)
            report.note('decay rate with t^-beta prefactor ζ = %.6g, '
                        'CI [%.6g, %.6g], beta = %.3g, CI [%.3g, %.3g]'
                        % (corrected.rate, *corrected.ci,
                           corrected.prefactorExponent,
                           *corrected.prefactorCi))
    except InsufficientSurvivorsError as error:
        report.verdict('decay rate', 'undecided', str(error))

    if spec.is_zero():
        t = min(1., ensemble.tMax)
        fraction = float(survival_curve(ensemble, [t]).fraction[0])
        exact = float(brownian_survival(mc['x0'], t))
        sigma = np.sqrt(exact * (1. - exact) / ensemble.valid)
        report.note('survival at t = %g: %.6g, reflection principle %.6g '
                    '(3 sigma = %.3g)' % (t, fraction, exact, 3. * sigma))
    return ensemble, curve, estimate


CONDITIONED_PATHS = 4096


def _conditioned_section(analysis, report):
    model = analysis.conditioned
    mc, tol = analysis.config.mc, analysis.tol
    report.section('conditioned process')
    if not model.mTotal.finite:
        report.note('Y is not positive recurrent (speed mass %s); '
                    'occupation not simulated' % model.mTotal.status)
        return None
    try:
        n = min(mc['n'], CONDITIONED_PATHS)
        summary = simulate_conditioned(analysis.spec, model,
                                       model.referencePoint, mc['tMax'],
                                       mc['dt'], n, mc['seed'], tol=tol)
    except SimulationInvalidError as error:
        report.verdict('conditioned simulation', 'invalid', str(error))
        return None
    report.verdict('occupation of Y',
                   'converged' if summary.converged else 'not converged',
                   'window TV %.4g, noise floor %.4g, noise_factor = %g, '
                   'clamped steps %d' % (summary.windowDistance,
                                          summary.noiseFloor,
                                          tol.noiseFactor,
                                          summary.clampCount))
    report.note('escape rate beyond y = %g: %.4g of all steps'
                % (model.horizon, summary.escapeRate))
    return summary


def _closed_survival(spec, x0):
    if spec.kind == 'constant':
        return lambda t: constant_drift_survival(spec.a, x0, t)
    if spec.kind == 'linear' and spec.a > 0:
        return lambda t: linear_drift_survival(spec.a, x0, t)
    return None


def run(config):
    """
    Runs the requested commands in dependency order and writes
    report.txt, the CSV tables and, for the report command, the plots
    under the output directory. Returns the exit status.
    """
    analysis = Analysis(config)
    ensure_dirs(config.outputDir)
    report = Report('qsdlab report: drift %s' % analysis.spec.text)
    report.note('qsdlab %s' % __version__)
    _smoothness_section(analysis, report)
    _classification_section(analysis, report)

    existence = analysis.existence
    dists, criterion, simulation, occupation = [], None, None, None
    if existence.exists:
        if config.wants('lambda-c') or config.wants('qsd') or \
                config.wants('report'):
            _lambda_c_section(analysis, report)
        if config.wants('qsd') or config.wants('report'):
            dists = _qsd_section(analysis, report)
    if config.wants('rpositive'):
        criterion = _rpositive_section(analysis, report)
    if config.wants('simulate'):
        simulation = _simulate_section(analysis, report)
        if analysis.conditioned is not None:
            occupation = _conditioned_section(analysis, report)

    if config.wants('report'):
        savePath = analysis.path('plots')
        if dists:
            plot.density_plot(dists,
                              closed_form_minimal_density(analysis.spec),
                              savePath=savePath)
        if criterion is not None:
            plot.criterion_plot(criterion, savePath=savePath)
        if simulation is not None:
            ensemble, curve, estimate = simulation
            plot.survival_plot(curve, estimate,
                               _closed_survival(analysis.spec,
                                                config.mc['x0']),
                               savePath=savePath)
        if occupation is not None:
            plot.occupation_plot(occupation, savePath=savePath)

    report.write(analysis.path('report.txt'))
    if config.wants('validate'):
        status = validate(config, analysis)
        if status != EXIT_OK:
            return status
    if report.undecided:
        logger.warning('undecided: %s', ', '.join(report.undecided))
        return EXIT_UNDECIDED
    return EXIT_OK


##############################
#                            #
#  validate                  #
#                            #
##############################

def _check_identities(analysis, report):
    spec, tol, critical = analysis.spec, analysis.tol, analysis.critical
    delta = analysis.classification.delta.value

    for fraction in (0.5, 0.9, 1.0):
        lam = critical.lo if fraction == 1.0 else fraction * critical.value
        mass = phi_integral(solve_eta(spec, lam, tol.horizonStart, tol),
                            spec, tol)
        report.check('normalization %.1f lambda_c' % fraction,
                     mass.relativeDefect < tol.identityTol,
                     '|2 lambda int phi - 1| = %.3g' % mass.relativeDefect,
                     'identity_tol = %g' % tol.identityTol)

    slack = tol.bisectionRtol * critical.hi
    report.check('delta sandwich',
                 1. / (4. * delta) <= critical.hi + slack and
                 critical.lo - slack <= 1. / delta,
                 '%.8g <= %.8g <= %.8g' % (1. / (4. * delta), critical.value,
                                           1. / delta),
                 'bisection_rtol = %g' % tol.bisectionRtol)

    expected = expected_lambda_c(spec)
    if expected is not None:
        error = abs(critical.value - expected) / expected
        report.check('lambda_c closed form', error < 1e-3,
                     'relative error %.3g' % error, 'relative 1e-3')

    for fraction in (0.2, 0.4, 0.6, 0.8, 1.0):
        lam = critical.lo if fraction == 1.0 else fraction * critical.value
        dist = analysis.minimal if fraction == 1.0 else \
            build_qsd(spec, lam, critical, tol)
        # extrapolated power-law tails are judged at identity_tol
        if dist.tailModel == 'power':
            limit, name = tol.identityTol, 'identity_tol'
        else:
            limit, name = tol.normalizationTol, 'normalization_tol'
        report.check('family %.1f lambda_c' % fraction,
                     dist.normalizationDefect < limit,
                     'defect %.3g, %s tail' % (dist.normalizationDefect,
                                               dist.tailModel),
                     '%s = %g' % (name, limit))

    minimal = analysis.minimal
    worst = max(eigenmeasure_residual(minimal, center, width, tol)
                for center, width in bump_family(minimal))
    report.check('eigen-measure weak form', worst < tol.identityTol,
                 'worst relative residual %.3g' % worst,
                 'identity_tol = %g' % tol.identityTol)

    deviation = closed_form_deviation(minimal, spec)
    if deviation is not None:
        report.check('minimal QSD closed form',
                     deviation < tol.closedFormTol,
                     'sup deviation %.3g' % deviation,
                     'closed_form_tol = %g' % tol.closedFormTol)


def _decay_window(analysis):
    """
    Window of the decay check from the minimal QSD: up to the time
    where about 4 min_survivors paths are expected to remain.
    """
    mc, tol = analysis.config.mc, analysis.tol
    if mc['window']:
        return mc['window']
    end = np.log(mc['n'] / (4. * tol.minSurvivors)) / analysis.minimal.lam
    return (0., float(min(end, mc['tMax'])))


def _check_monte_carlo(analysis, report):
    config, spec, tol = analysis.config, analysis.spec, analysis.tol
    mc = config.mc
    critical, minimal = analysis.critical, analysis.minimal
    times = [t for t in mc['snapshotTimes'] if t > 0]

    window = _decay_window(analysis)
    if window[1] < 2. * mc['dt']:
        report.check('decay rate from the QSD', None,
                     'window [%g, %g] too short' % tuple(window),
                     'min_survivors = %d' % tol.minSurvivors)
    else:
        ensemble = simulate_killed(spec, minimal, window[1], mc['dt'],
                                   mc['n'], mc['seed'], (), mc['bridge'],
                                   tol)
        try:
            estimate = estimate_decay_rate(ensemble, window, tol=tol)
            report.check('decay rate from the QSD',
                         estimate.contains(critical.value),
                         '%.5g in [%.5g, %.5g] on [%g, %g]'
                         % (estimate.rate, *estimate.ci, *window),
                         'bootstrap %g%%, lambda_c = %.6g'
                         % (100. * tol.ciLevel, critical.value))
        except InsufficientSurvivorsError as error:
            report.check('decay rate from the QSD', None, str(error),
                         'min_survivors = %d' % tol.minSurvivors)

    invariance = qsd_invariance_check(spec, minimal, times, mc['n'], mc['dt'],
                                      mc['seed'], mc['bridge'], tol)
    for check in invariance.checks:
        report.check('QSD invariance t = %g' % check.t, check.passed,
                     'KS %.4g vs %.4g, n = %d' % (check.statistic,
                                                  check.critical,
                                                  check.sampleSize),
                     'ks_level = %g' % tol.ksLevel)
    report.check('exponential killing', invariance.killing.passed,
                 'KS %.4g vs %.4g' % (invariance.killing.statistic,
                                      invariance.killing.critical),
                 'ks_level = %g' % tol.ksLevel)
    report.check('mean lifetime', invariance.meanPassed,
                 '%.5g +- %.3g vs %.5g' % (invariance.meanLifetime,
                                           invariance.meanLifetimeSigma,
                                           1. / minimal.lam),
                 '3 sigma')

    reports, slope = semigroup_ladder(spec, minimal.solution, mc['x0'], times,
                                      mc['n'], mc['dt'], mc['seed'],
                                      mc['bridge'], tol)
    for semigroup in reports:
        report.check('semigroup t = %g' % semigroup.t, semigroup.passed,
                     'ratio %.5g in [%.5g, %.5g] vs %.5g'
                     % (semigroup.ratio, semigroup.ci[0], semigroup.ci[1],
                        semigroup.expected),
                     'bootstrap %g%%%s' % (100. * tol.ciLevel,
                                           ', heavy tail'
                                           if semigroup.heavyTail else ''))
    report.note('semigroup log-ratio slope %.5g (expected %.5g)'
                % (slope, -minimal.lam))

    trend = yaglom_check(spec, minimal, mc['x0'], times, mc['n'], mc['dt'],
                         mc['seed'], mc['bridge'], tol)
    report.check('Yaglom trend', trend.decreasing,
                 ', '.join('%.4g' % c.statistic for c in trend.checks),
                 'decreasing KS distance')


def _check_negative_control(analysis, report):
    config, spec, tol = analysis.config, analysis.spec, analysis.tol
    mc = config.mc
    t = min(1., mc['tMax'])
    ensemble = simulate_killed(spec, mc['x0'], t, mc['dt'], mc['n'],
                               mc['seed'], (), mc['bridge'], tol)
    fraction = float(survival_curve(ensemble, [t]).fraction[0])
    exact = float(brownian_survival(mc['x0'], t))
    sigma = np.sqrt(exact * (1. - exact) / ensemble.valid)
    report.check('Brownian survival t = %g' % t,
                 abs(fraction - exact) <= 3. * sigma,
                 '%.6g vs %.6g' % (fraction, exact), '3 binomial sigma')


def validate(config, analysis=None):
    """
    Runs the identity suite and writes validation.txt; each check
    reports its measured value and tolerance. Returns the exit status.
    """
    analysis = analysis or Analysis(config)
    ensure_dirs(config.outputDir)
    spec = analysis.spec
    report = Report('qsdlab validation: drift %s' % spec.text)
    existence = analysis.existence

    if spec.is_zero():
        report.check('existence (negative control)',
                     existence.exists is False, existence.reason,
                     'no QSD expected')
        _check_negative_control(analysis, report)
    elif existence.status == 'undecided':
        report.verdict('existence', 'undecided', existence.reason)
    elif not existence.exists:
        report.check('existence', None, existence.reason, 'no QSD')
    else:
        report.check('existence', True, existence.reason, 'H1 and delta')
        _check_identities(analysis, report)
        _check_monte_carlo(analysis, report)

    report.write(analysis.path('validation.txt'))
    sys.stdout.write(report.text())
    if report.failures:
        return EXIT_ERROR
    if report.undecided:
        return EXIT_UNDECIDED
    return EXIT_OK


##############################
#                            #
#  classify and main         #
#                            #
##############################

def classify(drift):
    """Prints the classification of *drift* and returns the exit status."""
    spec = parse_drift(drift)
    classification = classify_boundaries(spec)
    existence = qsd_exists(spec, classification)
    for quantity, status, value, errorBound in classification.rows():
        sys.stdout.write('%-18s %-10s %.10g  (error %.3g)\n'
                         % (quantity, status, value, errorBound))
    sys.stdout.write('QSD existence: %s (%s)\n' % (existence.status,
                                                  existence.reason))
    if classification.undecided or existence.status == 'undecided':
        return EXIT_UNDECIDED
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog='qsdlab',
        description='Quasi-stationary distributions of diffusions killed '
                    'at 0.')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='log numerical progress')
    parser.add_argument('--version', action='version',
                        version='qsdlab %s' % __version__)
    commands = parser.add_subparsers(dest='command')
    commands.required = True

    runParser = commands.add_parser('run', help='run a configuration')
    runParser.add_argument('config', help='configuration file')

    validateParser = commands.add_parser('validate',
                                         help='run the identity suite')
    validateParser.add_argument('config', help='configuration file')

    classifyParser = commands.add_parser('classify',
                                         help='classify a drift')
    classifyParser.add_argument('--drift', required=True,
                                help='drift, e.g. "const:1.0"')
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose
                        else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s',
                        stream=sys.stderr)
    try:
        if args.command == 'classify':
            return classify(args.drift)
        config = read_config(args.config)
        if args.command == 'run':
            return run(config)
        return validate(config)
    except ConfigError as error:
        sys.stderr.write('qsdlab: configuration error: %s\n' % error)
        return EXIT_ERROR
    except (ValueError, RuntimeError, OSError) as error:
        sys.stderr.write('qsdlab: %s failed: %s: %s\n'
                         % (args.command, type(error).__name__, error))
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())

#! /usr/bin/env python
#

""" Monte Carlo simulation of the killed diffusion and of the
conditioned process Y, with the statistical checks built on them:
decay rate, QSD invariance, exponential killing, the semigroup
identity and the Yaglom trend."""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import erf, log_ndtr, ndtr
from scipy.stats import kstest, kstwo

from .config import Tolerances, thread_count
from .eigen import extend_solution
from .qsd import qsd_quantile

logger = logging.getLogger(__name__)

BOOTSTRAP_STREAM = 1


class InsufficientSurvivorsError(ValueError):
    pass


class SimulationInvalidError(RuntimeError):
    pass


def _generator(seed, block):
    return np.random.Generator(np.random.Philox(seed).jumped(block))


def _side_generator(seed, stream):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, stream])))


def _run_blocks(worker, n, tol):
    """
    Runs worker(blockIndex, blockSize) over consecutive blocks of paths
    and returns the block results in block order.
    """
    sizes = [min(tol.blockSize, n - start)
             for start in range(0, n, tol.blockSize)]
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        return list(pool.map(worker, range(len(sizes)), sizes))


def _percentile_interval(values, tol):
    tail = 50. * (1. - tol.ciLevel)
    return tuple(float(v) for v in np.percentile(values, [tail, 100. - tail]))


def _check_grid(tMax, dt, n):
    if dt <= 0:
        raise ValueError('dt must be positive, got %r' % dt)
    if tMax < dt:
        raise ValueError('t_max must be at least dt')
    if n < 1:
        raise ValueError('n must be at least 1')
    return int(round(tMax / dt))


##############################
#                            #
#  Killed diffusion          #
#                            #
##############################

class PathEnsemble:
    """
    Killing times and survivor snapshots of a simulated ensemble.

    Attributes:
        nPaths : *int*
        dt : *float*
        tMax : *float*
        seed : *int*
        killingTimes : *numpy.ndarray*
            Step end time of absorption, nan for paths alive at tMax.
        aborted : *numpy.ndarray*
            True for paths stopped by a non-finite drift value.
        snapshots : *dict*
            Requested time -> positions of the paths alive at that time,
            in path order.
        bridge : *bool*
        start : *str*
    """

    def __init__(self, nPaths, dt, tMax, seed, killingTimes, aborted,
                 snapshots, bridge, start):
        self.nPaths = nPaths
        self.dt = dt
        self.tMax = tMax
        self.seed = seed
        self.killingTimes = killingTimes
        self.aborted = aborted
        self.snapshots = snapshots
        self.bridge = bridge
        self.start = start

    @property
    def valid(self):
        """Number of paths not aborted."""
        return int(self.nPaths - np.count_nonzero(self.aborted))

    def lifetimes(self):
        """Killing times with survivors at +inf, aborted paths dropped."""
        times = self.killingTimes[~self.aborted]
        return np.where(np.isnan(times), np.inf, times)

    def snapshot_rows(self):
        """(t, y) rows of the snapshot export."""
        rows = [np.column_stack([np.full(values.size, t), values])
                for t, values in sorted(self.snapshots.items())]
        return np.concatenate(rows) if rows else np.empty((0, 2))

    def __repr__(self):
        return ('PathEnsemble(n=%d, dt=%g, t_max=%g, seed=%r, start=%s)'
                % (self.nPaths, self.dt, self.tMax, self.seed, self.start))


def simulate_killed(spec, x0, tMax, dt, n, seed, snapshotTimes=(),
                    bridge=True, tol=None):
    """
    Euler-Maruyama simulation of dX = dB - q(X)dt killed at 0.

    A path is absorbed at the end of a step when the new point is <= 0
    or, with *bridge*, with probability exp(-2 X_k X_{k+1}/dt) when both
    ends are positive. Paths are simulated in blocks of blockSize; block
    b draws from the Philox stream of *seed* jumped b times, so the
    ensemble is fixed by (seed, blockSize) and does not depend on the
    number of worker threads. Changing blockSize changes the ensemble.

    Every step draws one normal and one uniform per path of the block,
    dead or alive, so runs with and without *bridge* share their noise
    and a bridged path is never killed later than the same path
    without the bridge.

    Parameters:
        spec : *DriftSpec*
        x0 : *float* or *QsdDistribution*
            Fixed start point, or a distribution to draw starts from.
        tMax, dt : *float*
        n : *int*
        seed : *int*
        snapshotTimes : *iterable* of *float*
            Times in [0, tMax] at which survivor positions are stored.
        bridge : *bool*
        tol : *Tolerances*, optional

    Returns:
        ensemble : *PathEnsemble*
    """
    tol = tol or Tolerances()
    nSteps = _check_grid(tMax, dt, n)
    fromDistribution = hasattr(x0, 'cdf_at')
    if not fromDistribution and not x0 > 0:
        raise ValueError('x0 must be positive, got %r' % x0)
    snapshotTimes = sorted(set(float(t) for t in snapshotTimes))
    if any(t < 0 or t > tMax for t in snapshotTimes):
        raise ValueError('Snapshot times must lie in [0, t_max]')
    stepTimes = {}
    for t in snapshotTimes:
        stepTimes.setdefault(int(round(t / dt)), []).append(t)
    sqrtDt = np.sqrt(dt)

    def block(index, size):
        rng = _generator(seed, index)
        if fromDistribution:
            x = qsd_quantile(x0, rng.random(size))
        else:
            x = np.full(size, float(x0))
        killing = np.full(size, np.nan)
        aborted = np.zeros(size, dtype=bool)
        alive = np.arange(size)
        snapshots = {t: x.copy() for t in stepTimes.get(0, [])}

        for step in range(1, nSteps + 1):
            if alive.size == 0:
                break
            position = x[alive]
            with np.errstate(all='ignore'):
                drift = spec.evaluate(position, checked=False)
            bad = ~np.isfinite(drift)
            if np.any(bad):
                logger.warning('aborting %d paths on a non-finite drift near '
                               'x = %g', np.count_nonzero(bad),
                               float(position[bad][0]))
                aborted[alive[bad]] = True
                alive, position, drift = (alive[~bad], position[~bad],
                                          drift[~bad])
            noise = rng.standard_normal(size)
            uniform = rng.random(size)
            new = position - drift * dt + sqrtDt * noise[alive]
            dead = new <= 0
            if bridge:
                with np.errstate(over='ignore', invalid='ignore'):
                    crossed = uniform[alive] < \
                        np.exp(-2. * position * new / dt)
                dead |= crossed
            killing[alive[dead]] = step * dt
            x[alive] = new
            alive = alive[~dead]
            for t in stepTimes.get(step, []):
                snapshots[t] = x[alive].copy()

        for t in snapshotTimes:
            snapshots.setdefault(t, np.empty(0))
        return killing, aborted, snapshots

    results = _run_blocks(block, n, tol)
    killing = np.concatenate([r[0] for r in results])
    aborted = np.concatenate([r[1] for r in results])
    snapshots = {t: np.concatenate([r[2][t] for r in results])
                 for t in snapshotTimes}
    start = 'QSD(lambda=%.10g)' % x0.lam if fromDistribution else \
        'x0=%r' % float(x0)
    ensemble = PathEnsemble(n, dt, tMax, seed, killing, aborted, snapshots,
                            bridge, start)
    logger.info('simulated %r: %d killed, %d aborted', ensemble,
                np.count_nonzero(np.isfinite(killing)),
                np.count_nonzero(aborted))
    return ensemble


class SurvivalCurve:
    """
    Empirical survival P(tau > t) of an ensemble.

    Attributes:
        times : *numpy.ndarray*
        survivors : *numpy.ndarray*
        fraction : *numpy.ndarray*
    """

    def __init__(self, times, survivors, fraction):
        self.times = times
        self.survivors = survivors
        self.fraction = fraction

    def rows(self):
        return np.column_stack([self.times, self.survivors, self.fraction])


def _survivors(sortedLifetimes, times):
    return sortedLifetimes.size - np.searchsorted(sortedLifetimes, times,
                                                  side='right')


def survival_curve(ensemble, times=None):
    """Survivor counts at *times* (default: 201 points on [0, tMax])."""
    if times is None:
        times = np.linspace(0., ensemble.tMax, 201)
    times = np.asarray(times, dtype=float)
    lifetimes = np.sort(ensemble.lifetimes())
    survivors = _survivors(lifetimes, times)
    order = np.argsort(times)
    assert np.all(np.diff(survivors[order]) <= 0), \
        'empirical survival must be nonincreasing'
    return SurvivalCurve(times, survivors, survivors / max(ensemble.valid, 1))


class DecayEstimate:
    """
    Least-squares decay rate zeta of the log survival over a window.

    Attributes:
        rate : *float*
        ci : (*float*, *float*)
            Path-bootstrap interval at level ciLevel.
        window : (*float*, *float*)
        prefactorExponent : *float* or None
            beta in log S(t) = c - zeta t - beta log t, when fitted.
        prefactorCi : (*float*, *float*) or None
            Path-bootstrap interval of beta at level ciLevel, when
            fitted.
        survivorsAtEnd : *int*
    """

    def __init__(self, rate, ci, window, prefactorExponent, survivorsAtEnd,
                 prefactorCi=None):
        self.rate = rate
        self.ci = ci
        self.window = window
        self.prefactorExponent = prefactorExponent
        self.prefactorCi = prefactorCi
        self.survivorsAtEnd = survivorsAtEnd

    def contains(self, value):
        return self.ci[0] <= value <= self.ci[1]

    def __repr__(self):
        return 'DecayEstimate(%.6g in [%.6g, %.6g] on [%g, %g])' % (
            self.rate, self.ci[0], self.ci[1], self.window[0],
            self.window[1])


def _fit_decay(times, survivors, prefactor):
    columns = [np.ones_like(times), -times]
    if prefactor:
        columns.append(-np.log(times))
    design = np.column_stack(columns)
    coefficients = np.linalg.lstsq(design, np.log(survivors), rcond=None)[0]
    return coefficients


def estimate_decay_rate(ensemble, window=None, prefactor=False, tol=None):
    """
    Fits log S(t) = c - zeta t (- beta log t with *prefactor*) on 33
    points of *window* (default [0.25, 0.75] tMax) and bootstraps the
    paths bootstrapSamples times for an interval at level ciLevel.

    Raises InsufficientSurvivorsError with fewer than minSurvivors
    survivors at the end of the window, or when no bootstrap resample
    keeps a survivor there.
    """
    tol = tol or Tolerances()
    if window is None:
        window = (0.25 * ensemble.tMax, 0.75 * ensemble.tMax)
    lo, hi = float(window[0]), float(window[1])
    if not 0 <= lo < hi <= ensemble.tMax:
        raise ValueError('Window [%g, %g] outside [0, %g]'
                         % (lo, hi, ensemble.tMax))
    if prefactor and lo <= 0:
        raise ValueError('A prefactor fit needs a window starting after 0')
    times = np.linspace(lo, hi, 33)
    curve = survival_curve(ensemble, times)
    if curve.survivors[-1] < tol.minSurvivors:
        raise InsufficientSurvivorsError(
            '%d survivors at t = %g, at least %d needed'
            % (curve.survivors[-1], hi, tol.minSurvivors))
    coefficients = _fit_decay(times, curve.survivors, prefactor)

    lifetimes = ensemble.lifetimes()
    rng = _side_generator(ensemble.seed, BOOTSTRAP_STREAM)
    fits = []
    for _ in range(tol.bootstrapSamples):
        sample = np.sort(lifetimes[rng.integers(0, lifetimes.size,
                                                lifetimes.size)])
        survivors = _survivors(sample, times)
        if survivors[-1] > 0:
            fits.append(_fit_decay(times, survivors, prefactor))
    if not fits:
        raise InsufficientSurvivorsError(
            'No bootstrap resample keeps a survivor at t = %g' % hi)
    fits = np.array(fits)
    ci = _percentile_interval(fits[:, 1], tol)
    prefactorCi = _percentile_interval(fits[:, 2], tol) if prefactor else None
    estimate = DecayEstimate(float(coefficients[1]), ci, (lo, hi),
                             float(coefficients[2]) if prefactor else None,
                             int(curve.survivors[-1]), prefactorCi)
    logger.info('decay rate %r', estimate)
    return estimate


##############################
#                            #
#  Closed-form survival      #
#                            #
##############################

def brownian_survival(x0, t):
    """P_x0(tau > t) = erf(x0/sqrt(2t)) for q = 0."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide='ignore'):
        return np.where(t > 0, erf(x0 / np.sqrt(2. * t)), 1.)


def constant_drift_survival(a, x0, t):
    """
    P_x0(tau > t) for q = a: Phi((x0 - a t)/sqrt(t)) - e^{2 a x0}
    Phi((-x0 - a t)/sqrt(t)).
    """
    t = np.asarray(t, dtype=float)
    root = np.sqrt(t)
    return ndtr((x0 - a * t) / root) \
        - np.exp(2. * a * x0 + log_ndtr((-x0 - a * t) / root))


def linear_drift_survival(a, x0, t):
    """
    P_x0(tau > t) for q(x) = a x:
    erf(x0 e^{-a t} sqrt(a) / sqrt(1 - e^{-2 a t})).
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        scale = np.sqrt(a / -np.expm1(-2. * a * t))
        return np.where(t > 0, erf(x0 * np.exp(-a * t) * scale), 1.)


##############################
#                            #
#  QSD checks                #
#                            #
##############################

class KsCheck:
    """
    A Kolmogorov-Smirnov comparison at one time.

    Attributes:
        t : *float*
        sampleSize : *int*
        statistic : *float*
        critical : *float*
            Critical value at level ksLevel for *sampleSize*.
        pvalue : *float*
        passed : *bool* or None
            None when the time was skipped for lack of survivors.
    """

    def __init__(self, t, sampleSize, statistic=np.nan, critical=np.nan,
                 pvalue=np.nan):
        self.t = t
        self.sampleSize = sampleSize
        self.statistic = statistic
        self.critical = critical
        self.pvalue = pvalue
        self.passed = None if np.isnan(statistic) else \
            bool(statistic < critical)

    @property
    def skipped(self):
        return self.passed is None

    def __repr__(self):
        return 'KsCheck(t=%g, n=%d, D=%.4g, critical=%.4g)' % (
            self.t, self.sampleSize, self.statistic, self.critical)


def _ks(t, sample, cdf, tol):
    if sample.size < tol.minSurvivors:
        logger.warning('only %d survivors at t = %g; KS check skipped',
                       sample.size, t)
        return KsCheck(t, sample.size)
    result = kstest(sample, cdf)
    return KsCheck(t, sample.size, float(result.statistic),
                   float(kstwo.ppf(1. - tol.ksLevel, sample.size)),
                   float(result.pvalue))


class InvarianceReport:
    """
    Attributes:
        lam : *float*
        checks : *list* of *KsCheck*
            Conditional law of the survivors against the QSD, per time.
        killing : *KsCheck*
            Killing times against Exp(lambda) truncated at tMax.
        meanLifetime : *float*
            Censored maximum-likelihood estimate of 1/lambda.
        meanLifetimeSigma : *float*
        meanPassed : *bool*
            |meanLifetime - 1/lambda| <= 3 sigma.
    """

    def __init__(self, lam, checks, killing, meanLifetime, meanLifetimeSigma):
        self.lam = lam
        self.checks = checks
        self.killing = killing
        self.meanLifetime = meanLifetime
        self.meanLifetimeSigma = meanLifetimeSigma
        self.meanPassed = bool(abs(meanLifetime - 1. / lam)
                               <= 3. * meanLifetimeSigma)

    @property
    def passed(self):
        return all(c.passed for c in self.checks if not c.skipped) and \
            bool(self.killing.passed) and self.meanPassed


def qsd_invariance_check(spec, dist, tChecks, n, dt, seed, bridge=True,
                         tol=None):
    """
    Starts *n* paths from *dist* and compares the survivors at each time
    of *tChecks* with dist by a KS test. The killing times, shifted back
    by dt/2, are compared with Exp(lambda) truncated at max(tChecks).
    """
    tol = tol or Tolerances()
    tChecks = sorted(float(t) for t in tChecks)
    tMax = max(tChecks[-1], dt)
    ensemble = simulate_killed(spec, dist, tMax, dt, n, seed, tChecks,
                               bridge, tol)
    checks = [_ks(t, ensemble.snapshots[t], dist.cdf_at, tol)
              for t in tChecks]

    lam = dist.lam
    lifetimes = ensemble.lifetimes()
    killed = lifetimes[np.isfinite(lifetimes)] - 0.5 * dt
    norm = -np.expm1(-lam * tMax)

    def truncated(t):
        return np.clip(-np.expm1(-lam * np.asarray(t)) / norm, 0., 1.)

    killing = _ks(tMax, killed, truncated, tol)
    exposure = np.sum(np.minimum(lifetimes, tMax))
    mean = exposure / max(killed.size, 1)
    sigma = mean / np.sqrt(max(killed.size, 1))
    report = InvarianceReport(lam, checks, killing, float(mean), float(sigma))
    logger.info('QSD invariance at lambda = %.10g: %s', lam,
                'passed' if report.passed else 'failed')
    return report


class YaglomTrend:
    """
    KS distances between the conditional law from a fixed start and the
    minimal QSD at increasing times.

    Attributes:
        checks : *list* of *KsCheck*
        decreasing : *bool*
            Least-squares slope of distance against t is negative and the
            last distance is below the first.
    """

    def __init__(self, checks):
        self.checks = checks
        used = [c for c in checks if not c.skipped]
        if len(used) >= 2:
            t = np.array([c.t for c in used])
            d = np.array([c.statistic for c in used])
            self.decreasing = bool(np.polyfit(t, d, 1)[0] < 0 and d[-1] < d[0])
        else:
            self.decreasing = False


def yaglom_check(spec, dist, x0, times, n, dt, seed, bridge=True, tol=None):
    """
    Simulates from the fixed point *x0* and reports the distance of the
    surviving law to *dist* at each of *times*.
    """
    tol = tol or Tolerances()
    times = sorted(float(t) for t in times)
    ensemble = simulate_killed(spec, x0, times[-1], dt, n, seed, times,
                               bridge, tol)
    return YaglomTrend([_ks(t, ensemble.snapshots[t], dist.cdf_at, tol)
                        for t in times])


##############################
#                            #
#  Semigroup identity        #
#                            #
##############################

class SemigroupReport:
    """
    E_x0[eta(X_t); tau > t] / eta(x0) against e^{-lambda t}.

    Attributes:
        t : *float*
        ratio : *float*
        expected : *float*
        ci : (*float*, *float*)
        passed : *bool*
            expected lies in ci.
        heavyTail : *bool*
            Relative width of ci above heavyTailCi.
    """

    def __init__(self, t, ratio, expected, ci, tol):
        self.t = t
        self.ratio = ratio
        self.expected = expected
        self.ci = ci
        self.passed = bool(ci[0] <= expected <= ci[1])
        self.heavyTail = bool((ci[1] - ci[0]) > tol.heavyTailCi * abs(ratio))
        if self.heavyTail:
            logger.warning('semigroup estimate at t = %g has a relative '
                           'interval width above %g', t, tol.heavyTailCi)

    def __repr__(self):
        return 'SemigroupReport(t=%g, ratio=%.6g in [%.6g, %.6g], ' \
               'expected=%.6g)' % (self.t, self.ratio, self.ci[0], self.ci[1],
                                   self.expected)


def _semigroup_reports(ensemble, principal, spec, x0, times, tol):
    largest = max([float(np.max(ensemble.snapshots[t], initial=0.))
                   for t in times if t > 0] + [x0])
    if largest > principal.horizon:
        principal = extend_solution(
            principal, spec, 2. ** np.ceil(np.log2(largest)), tol)
    logEta0 = float(principal.path.log_eta(x0))
    rng = _side_generator(ensemble.seed, BOOTSTRAP_STREAM)
    reports = []
    for t in times:
        expected = float(np.exp(-principal.lam * t))
        if t == 0:
            reports.append(SemigroupReport(0., 1., 1., (1., 1.), tol))
            continue
        survivors = ensemble.snapshots[t]
        weights = np.zeros(ensemble.valid)
        weights[:survivors.size] = np.exp(principal.path.log_eta(survivors)
                                          - logEta0)
        ratio = float(np.mean(weights))
        means = [np.mean(weights[rng.integers(0, weights.size,
                                              weights.size)])
                 for _ in range(tol.bootstrapSamples)]
        ci = _percentile_interval(means, tol)
        reports.append(SemigroupReport(t, ratio, expected, ci, tol))
    return reports


def semigroup_check(spec, principal, x0, t, n, dt, seed, bridge=True,
                    tol=None):
    """
    Monte Carlo estimate of P_t eta(x0)/eta(x0), which equals
    e^{-lambda t} for the eigenfunction eta of *principal*. t = 0 gives
    exactly 1.
    """
    tol = tol or Tolerances()
    if t == 0:
        return SemigroupReport(0., 1., 1., (1., 1.), tol)
    ensemble = simulate_killed(spec, x0, t, dt, n, seed, [t], bridge, tol)
    return _semigroup_reports(ensemble, principal, spec, x0, [t], tol)[0]


def semigroup_ladder(spec, principal, x0, times, n, dt, seed, bridge=True,
                     tol=None):
    """
    Semigroup ratios at several times from one ensemble, and the slope
    of log ratio against t (expected -lambda).
    """
    tol = tol or Tolerances()
    times = sorted(float(t) for t in times)
    ensemble = simulate_killed(spec, x0, max(times[-1], dt), dt, n, seed,
                               times, bridge, tol)
    reports = _semigroup_reports(ensemble, principal, spec, x0, times, tol)
    t = np.array([0.] + [r.t for r in reports if r.t > 0])
    logRatio = np.log([1.] + [r.ratio for r in reports if r.t > 0])
    slope = float(np.polyfit(t, logRatio, 1)[0])
    return reports, slope


##############################
#                            #
#  Conditioned process       #
#                            #
##############################

class ConditionedSummary:
    """
    Occupation statistics of a simulated conditioned process Y.

    Attributes:
        edges : *numpy.ndarray*
            Histogram edges; the last bin also counts everything beyond.
        occupation : *numpy.ndarray*
            Time-averaged occupation probabilities over (0, tMax].
        windowDistance : *float*
            Total variation distance between the occupation of
            [tMax/2, 3tMax/4) and [3tMax/4, tMax].
        noiseFloor : *float*
            Total variation distance between the even and odd paths over
            [tMax/2, tMax].
        converged : *bool*
            windowDistance <= noiseFactor * noiseFloor.
        meanTrace : *numpy.ndarray*
            (t, mean Y_t) rows at the recording times.
        clampCount : *int*
        clampRate : *float*
        escapeRate : *float*
            Fraction of steps spent beyond the model horizon.
    """

    def __init__(self, edges, occupation, windowDistance, noiseFloor,
                 meanTrace, clampCount, clampRate, escapeRate, tol):
        self.edges = edges
        self.occupation = occupation
        self.windowDistance = windowDistance
        self.noiseFloor = noiseFloor
        self.converged = bool(windowDistance <= tol.noiseFactor * noiseFloor)
        self.meanTrace = meanTrace
        self.clampCount = clampCount
        self.clampRate = clampRate
        self.escapeRate = escapeRate

    def __repr__(self):
        return ('ConditionedSummary(window TV=%.4g, floor=%.4g, converged=%s, '
                'clamped=%d)' % (self.windowDistance, self.noiseFloor,
                                 self.converged, self.clampCount))


def _total_variation(p, q):
    return 0.5 * float(np.sum(np.abs(p / max(p.sum(), 1)
                                     - q / max(q.sum(), 1))))


def simulate_conditioned(spec, model, y0, tMax, dt, n, seed, upper=None,
                         bins=64, tol=None):
    """
    Euler-Maruyama simulation of dY = dB - phi(Y)dt. A step that would
    end at or below 0 is redone as 2^j substeps of dt/2^j, j = 1..8;
    a path still crossing is clamped to the first grid node.

    Raises SimulationInvalidError when more than clampRate of all steps
    were clamped.

    Parameters:
        spec : *DriftSpec*
        model : *ConditionedModel*
        y0 : *float*
        tMax, dt : *float*
        n, seed : *int*
        upper : *float*, optional
            Upper histogram edge, default min(horizon, y0 + 8c).
        bins : *int*
        tol : *Tolerances*, optional

    Returns:
        summary : *ConditionedSummary*
    """
    tol = tol or Tolerances()
    if not y0 > 0:
        raise ValueError('y0 must be positive, got %r' % y0)
    nSteps = _check_grid(tMax, dt, n)
    if upper is None:
        upper = min(model.horizon, y0 + 8. * model.referencePoint)
    edges = np.linspace(0., upper, bins + 1)
    every = max(1, nSteps // 256)
    recordSteps = np.arange(every, nSteps + 1, every)
    floor = model.firstNode

    def histogram(y):
        return np.bincount(np.minimum(np.searchsorted(edges, y, 'right') - 1,
                                      bins - 1), minlength=bins)

    def step(y, h, rng):
        return y - model.table_drift(y) * h + np.sqrt(h) * \
            rng.standard_normal(y.size)

    def block(index, size):
        rng = _generator(seed, index)
        y = np.full(size, float(y0))
        even = np.arange(size) % 2 == 0
        occupation = np.zeros(bins, dtype=np.int64)
        windows = np.zeros((2, bins), dtype=np.int64)
        halves = np.zeros((2, bins), dtype=np.int64)
        sums = np.zeros(recordSteps.size)
        clamps, escapes, record = 0, 0, 0

        for k in range(1, nSteps + 1):
            new = step(y, dt, rng)
            crossing = np.flatnonzero(new <= 0)
            for level in range(1, 9):
                if crossing.size == 0:
                    break
                pieces = 2 ** level
                trial = y[crossing]
                failed = np.zeros(crossing.size, dtype=bool)
                for _ in range(pieces):
                    trial = step(trial, dt / pieces, rng)
                    failed |= trial <= 0
                    trial = np.where(trial <= 0, floor, trial)
                new[crossing[~failed]] = trial[~failed]
                crossing = crossing[failed]
            if crossing.size:
                new[crossing] = floor
                clamps += crossing.size
            y = new
            escapes += np.count_nonzero(y > model.horizon)

            if record < recordSteps.size and k == recordSteps[record]:
                counts = histogram(y)
                occupation += counts
                sums[record] += y.sum()
                t = k * dt
                if t >= 0.5 * tMax:
                    windows[0 if t < 0.75 * tMax else 1] += counts
                    halves[0] += histogram(y[even])
                    halves[1] += histogram(y[~even])
                record += 1
        return occupation, windows, halves, sums, clamps, escapes

    results = _run_blocks(block, n, tol)
    occupation = sum(r[0] for r in results)
    windows = sum(r[1] for r in results)
    halves = sum(r[2] for r in results)
    sums = sum(r[3] for r in results)
    clamps = int(sum(r[4] for r in results))
    escapes = int(sum(r[5] for r in results))
    totalSteps = float(n) * nSteps

    clampRate = clamps / totalSteps
    if clamps:
        logger.warning('%d conditioned steps clamped to y = %g (rate %.3g)',
                       clamps, floor, clampRate)
    if clampRate > tol.clampRate:
        raise SimulationInvalidError('Clamping rate %.3g exceeds %g'
                                     % (clampRate, tol.clampRate))
    summary = ConditionedSummary(
        edges, occupation / max(occupation.sum(), 1),
        _total_variation(windows[0], windows[1]),
        _total_variation(halves[0], halves[1]),
        np.column_stack([recordSteps * dt, sums / n]), clamps, clampRate,
        escapes / totalSteps, tol)
    logger.info('conditioned simulation: %r', summary)
    return summary

#! /usr/bin/env python
#

""" Shooting solver for (1/2)eta'' - q eta' + lambda eta = 0 with
eta(0) = 0, eta'(0) = 1, sign-change detection, and bisection for the
critical eigenvalue.

The ODE is integrated in angle/log-amplitude variables,
eta = m sin(theta), eta' = m cos(theta), L = log m:

    theta' = cos^2 - 2q sin cos + 2 lambda sin^2
    L'     = (1 - 2 lambda) sin cos + 2q cos^2

theta' = 1 whenever sin(theta) = 0, so eta changes sign exactly when
theta crosses pi. eta'/eta = cot(theta).
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.integrate import solve_ivp

from .config import Tolerances
from .loggrid import LogGridFunction
from .measures import big_q, scale_function
from .quadrature import cumulative_integral, log_cumulative_integral

logger = logging.getLogger(__name__)


class EigenSolveError(RuntimeError):
    pass


class BracketError(RuntimeError):
    pass


def _prufer_rhs(spec, lam):
    def rhs(x, y):
        q = spec.evaluate(x)
        s, c = np.sin(y[1]), np.cos(y[1])
        return [(1. - 2. * lam) * s * c + 2. * q * c * c,
                c * c - 2. * q * s * c + 2. * lam * s * s]
    return rhs


def _crossing_event(terminal):
    def crossing(x, y):
        return y[1] - np.pi
    crossing.terminal = terminal
    crossing.direction = 1.
    return crossing


def integrate_prufer(spec, lam, x0, y0, x1, tol, terminal):
    event = _crossing_event(terminal)
    result = solve_ivp(_prufer_rhs(spec, lam), (x0, x1), y0,
                       method=tol.odeMethod, rtol=tol.odeRtol,
                       atol=tol.odeAtol, dense_output=True, events=event)
    if result.status == -1:
        raise EigenSolveError('Shooting at lambda = %r failed on [%g, %g]: %s'
                              % (lam, x0, x1, result.message))
    return result


##############################
#                            #
#  Shooting path             #
#                            #
##############################

class ShootingPath:
    """
    Piecewise dense solution (L, theta) of the angle/log-amplitude
    system, one segment per integration call. Segments may run
    backwards.
    """

    def __init__(self, segments=()):
        self.segments = list(segments)

    def appended(self, start, end, solution):
        return ShootingPath(self.segments + [(min(start, end),
                                              max(start, end), solution)])

    @property
    def domain(self):
        return (min(s[0] for s in self.segments),
                max(s[1] for s in self.segments))

    def state(self, x):
        """
        Returns (L, theta) arrays at the points *x* (any shape).
        """
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        L = np.full(flat.shape, np.nan)
        theta = np.full(flat.shape, np.nan)
        for lower, upper, solution in self.segments:
            mask = np.isnan(L) & (flat >= lower) & (flat <= upper)
            if np.any(mask):
                values = solution(flat[mask])
                L[mask], theta[mask] = values[0], values[1]
        if np.any(np.isnan(L)):
            raise ValueError('Shooting path queried outside [%g, %g]'
                             % self.domain)
        return L.reshape(x.shape), theta.reshape(x.shape)

    def log_eta(self, x):
        """log eta for points where eta > 0."""
        L, theta = self.state(x)
        with np.errstate(divide='ignore', invalid='ignore'):
            return L + np.log(np.sin(theta))

    def cot_theta(self, x):
        """eta'/eta."""
        _, theta = self.state(x)
        with np.errstate(divide='ignore'):
            return np.cos(theta) / np.sin(theta)


##############################
#                            #
#  EigenSolution             #
#                            #
##############################

class EigenSolution:
    """
    One shooting solve at a fixed eigen-parameter.

    Attributes:
        lam : *float*
            The eigen-parameter lambda > 0.
        eta : *LogGridFunction*
            eta_lambda on the solution grid.
        etaPrime : *LogGridFunction*
            eta_lambda' on the same grid.
        firstSignChange : *float* or None
            Smallest x > 0 with eta(x) = 0, None if none up to the horizon.
        horizon : *float*
            Largest x integrated to.
        steps : *numpy.ndarray*
            Accepted solver steps.
        path : *ShootingPath*
            Dense solution used for off-grid evaluation.
        endState : *numpy.ndarray*
            (L, theta) at the horizon.
    """

    def __init__(self, lam, path, steps, horizon, firstSignChange, endState,
                 tol):
        self.lam = lam
        self.path = path
        self.steps = steps
        self.horizon = horizon
        self.firstSignChange = firstSignChange
        self.endState = endState

        grid = np.concatenate([steps, np.arange(0., horizon, tol.sampleStep),
                               np.geomspace(2. ** -20, tol.sampleStep, 32),
                               [horizon]])
        grid = np.unique(grid[(grid >= 0.) & (grid <= horizon)])
        L, theta = path.state(grid)
        L[0], theta[0] = 0., 0.
        sin, cos = np.sin(theta), np.cos(theta)
        sin[0], cos[0] = 0., 1.
        with np.errstate(divide='ignore'):
            self.eta = LogGridFunction(grid, np.sign(sin),
                                       L + np.log(np.abs(sin)))
            self.etaPrime = LogGridFunction(grid, np.sign(cos),
                                            L + np.log(np.abs(cos)))
        self.grid = grid

    def __repr__(self):
        return ('EigenSolution(lambda=%.10g, horizon=%g, sign change=%s)'
                % (self.lam, self.horizon, self.firstSignChange))


def solve_eta(spec, lam, horizon, tol=None):
    """
    Integrates eta_lambda from 0 to *horizon* with adaptive step control,
    recording the first sign change of eta.

    Parameters:
        spec : *DriftSpec*
        lam : *float*
            lambda > 0.
        horizon : *float*
            horizon > 0.
        tol : *Tolerances*, optional
            Uses odeMethod, odeRtol, odeAtol and sampleStep.

    Returns:
        sol : *EigenSolution*
    """
    tol = tol or Tolerances()
    if lam <= 0:
        raise ValueError('lambda must be positive, got %r' % lam)
    if horizon <= 0:
        raise ValueError('horizon must be positive, got %r' % horizon)
    result = integrate_prufer(spec, lam, 0., [0., 0.], float(horizon), tol,
                              terminal=False)
    crossings = result.t_events[0]
    first = float(crossings[0]) if crossings.size else None
    path = ShootingPath().appended(0., float(horizon), result.sol)
    return EigenSolution(lam, path, result.t, float(horizon), first,
                         result.y[:, -1], tol)


def extend_solution(sol, spec, horizon, tol=None):
    """
    Continues *sol* from its horizon to the larger *horizon*.
    """
    tol = tol or Tolerances()
    if horizon <= sol.horizon:
        return sol
    result = integrate_prufer(spec, sol.lam, sol.horizon, sol.endState,
                              float(horizon), tol, terminal=False)
    first = sol.firstSignChange
    if first is None and result.t_events[0].size:
        first = float(result.t_events[0][0])
    path = sol.path.appended(sol.horizon, float(horizon), result.sol)
    steps = np.concatenate([sol.steps, result.t[1:]])
    return EigenSolution(sol.lam, path, steps, float(horizon), first,
                         result.y[:, -1], tol)


def has_sign_change(sol):
    """True iff eta_lambda changed sign on the solved range."""
    return sol.firstSignChange is not None


##############################
#                            #
#  Sign classification       #
#                            #
##############################

def _monotone_beyond(spec, X, increasing):
    grid = X * np.geomspace(1., 2. ** 10, 513)
    values = spec.evaluate(grid, checked=False)
    if not np.all(np.isfinite(values)):
        return False, values
    steps = np.diff(values)
    slack = 1e-12 * (1. + np.abs(values[:-1]))
    if increasing:
        return bool(np.all(steps >= -slack)), values
    return bool(np.all(steps <= slack)), values


def positivity_certificate(spec, lam, X, state):
    """
    True when eta stays positive and increasing on [X, inf): q is
    nondecreasing beyond X (sampled), q(X) > 0, q(X)^2 > 2 lambda, and
    r = eta/eta' lies in (0, r+) with r+ = (q + sqrt(q^2 - 2 lambda))
    / (2 lambda), an interval that r cannot leave while q grows.
    """
    theta = state[1]
    if not 0. < theta < np.pi / 2:
        return False
    q = spec.evaluate(X, checked=False)
    if not np.isfinite(q) or q <= 0 or q * q <= 2. * lam:
        return False
    upper = (q + np.sqrt(q * q - 2. * lam)) / (2. * lam)
    if np.tan(theta) >= upper:
        return False
    monotone, _ = _monotone_beyond(spec, X, increasing=True)
    return monotone


def rotation_certificate(spec, lam, X):
    """
    True when eta must change sign beyond X: q^2 < 2 lambda on the sample
    beyond X, with q >= 0 nonincreasing or q <= 0 nondecreasing, so that
    theta' stays bounded below by a positive constant.
    """
    q = spec.evaluate(X, checked=False)
    if not np.isfinite(q):
        return False
    monotone, values = _monotone_beyond(spec, X, increasing=q < 0)
    if not monotone:
        return False
    if q >= 0 and np.any(values < 0) or q < 0 and np.any(values > 0):
        return False
    return bool(np.max(values * values) < 2. * lam * (1. - 1e-9))


class LambdaClassification:
    """
    Sign behaviour of eta_lambda as used by the bisection.

    Attributes:
        lam : *float*
        signChange : *bool*
        status : *str*
            'located' (sign change found at *location*),
            'certified-crossing' (sign change proven beyond *horizon*),
            'certified-positive' (positivity proven beyond *horizon*) or
            'provisional' (no sign change up to the horizon cap).
        location : *float* or None
        horizon : *float*
    """

    def __init__(self, lam, status, horizon, location=None):
        self.lam = lam
        self.status = status
        self.horizon = horizon
        self.location = location
        self.signChange = status in ('located', 'certified-crossing')

    def __repr__(self):
        return 'LambdaClassification(%.10g, %s, horizon=%g)' % (
            self.lam, self.status, self.horizon)


def classify_lambda(spec, lam, tol=None):
    """
    Decides whether eta_lambda changes sign. The horizon starts at
    horizonStart and doubles up to horizonCap; after each segment the
    positivity and rotation certificates are tried. Without a decision
    at the cap, the classification is 'provisional' (no sign change).
    """
    tol = tol or Tolerances()
    if lam <= 0:
        raise ValueError('lambda must be positive, got %r' % lam)
    x0, state = 0., np.array([0., 0.])
    X = min(tol.horizonStart, tol.horizonCap)
    while True:
        result = integrate_prufer(spec, lam, x0, state, X, tol, terminal=True)
        if result.status == 1:
            location = float(result.t_events[0][0])
            return LambdaClassification(lam, 'located', location, location)
        state = result.y[:, -1]
        x0 = X
        if positivity_certificate(spec, lam, X, state):
            return LambdaClassification(lam, 'certified-positive', X)
        if rotation_certificate(spec, lam, X):
            return LambdaClassification(lam, 'certified-crossing', X)
        if X >= tol.horizonCap:
            logger.warning('no sign change of eta at lambda = %.10g up to the '
                           'horizon cap %g; classification is provisional',
                           lam, X)
            return LambdaClassification(lam, 'provisional', X)
        X = min(2. * X, tol.horizonCap)


##############################
#                            #
#  Critical eigenvalue       #
#                            #
##############################

class CriticalEigenvalue:
    """
    lambda_c as the final bisection bracket.

    Attributes:
        value : *float*
            Midpoint of the bracket.
        lo : *float*
            Largest lambda classified without sign change.
        hi : *float*
            Smallest lambda classified with a sign change.
        provisional : *bool*
            True when a 'provisional' classification moved the bracket.
        initialBracket : (*float*, *float*)
        history : *list* of *LambdaClassification*
    """

    def __init__(self, lo, hi, provisional, initialBracket, history):
        self.lo = lo
        self.hi = hi
        self.value = 0.5 * (lo + hi)
        self.provisional = provisional
        self.initialBracket = initialBracket
        self.history = history

    def __float__(self):
        return self.value

    def __repr__(self):
        return 'CriticalEigenvalue(%.10g in [%.10g, %.10g]%s)' % (
            self.value, self.lo, self.hi,
            ', provisional' if self.provisional else '')


def lambda_c(spec, report, tol=None):
    """
    Bisection for lambda_c = sup{lambda : eta_lambda does not change
    sign} on the bracket [(4 delta)^-1 (1 - margin), delta^-1 (1 +
    margin)]. Both endpoints are classified concurrently; an endpoint
    on the wrong side is widened by a factor 2, up to bracketWidenings
    times.

    Parameters:
        spec : *DriftSpec*
        report : *ClassificationReport*
            Must have H1 holding and a finite delta.
        tol : *Tolerances*, optional

    Returns:
        critical : *CriticalEigenvalue*
    """
    tol = tol or Tolerances()
    if report.h1 != 'holds' or not report.delta.finite:
        raise ValueError('lambda_c needs H1 and a finite delta (H1 %s, delta '
                         '%s)' % (report.h1, report.delta.status))
    delta = report.delta.value
    lo = (1. - tol.bracketMargin) / (4. * delta)
    hi = (1. + tol.bracketMargin) / delta
    history = []

    with ThreadPoolExecutor(max_workers=2) as pool:
        low, high = pool.map(lambda lam: classify_lambda(spec, lam, tol),
                             (lo, hi))
    history += [low, high]
    widenings = 0
    while low.signChange or not high.signChange:
        if widenings >= tol.bracketWidenings:
            raise BracketError('No sign-change bracket for lambda_c after %d '
                               'widenings: [%g, %g]' % (widenings, lo, hi))
        if low.signChange:
            lo /= 2.
            low = classify_lambda(spec, lo, tol)
            history.append(low)
        if not high.signChange:
            hi *= 2.
            high = classify_lambda(spec, hi, tol)
            history.append(high)
        widenings += 1
    initialBracket = (lo, hi)
    provisional = low.status == 'provisional'

    while hi - lo > tol.bisectionRtol * hi:
        mid = 0.5 * (lo + hi)
        middle = classify_lambda(spec, mid, tol)
        history.append(middle)
        if middle.signChange:
            hi = mid
        else:
            lo = mid
            provisional = provisional or middle.status == 'provisional'
        logger.debug('lambda_c bracket [%.12g, %.12g]', lo, hi)

    critical = CriticalEigenvalue(lo, hi, provisional, initialBracket,
                                  history)
    logger.info('lambda_c for %s: %r', spec.text, critical)
    return critical


##############################
#                            #
#  phi = e^{-Q} eta          #
#                            #
##############################

def log_phi(sol, spec, x, tol=None):
    """log phi_lambda at points where eta > 0."""
    return sol.path.log_eta(x) - big_q(spec, x, tol)


def phi_from_eta(sol, spec, tol=None):
    """
    Returns phi_lambda = e^{-Q} eta_lambda on the grid of sol.eta. The
    signs of phi and eta agree node by node.
    """
    return sol.eta.scaled(-big_q(spec, sol.eta.grid, tol))


class PhiIntegral:
    """
    int_0^inf phi_lambda, to be compared with 1/(2 lambda).

    Attributes:
        value : *float*
            partial + tail.
        partial : *float*
            int_0^horizon phi.
        tail : *float*
            Tail estimate beyond the horizon (nan when unavailable).
        tailModel : *str*
            'exponential' (phi ~ e^{-r x}) or 'power' (phi ~ x^{-p}).
        exponent : *float*
            r or p.
        status : *str*
            'converged', 'power-law' or 'unconverged'.
        solution : *EigenSolution*
            The solve the integral was taken on, possibly extended.
        logCumulative : *numpy.ndarray*
            log int_0^x phi on solution.grid.
    """

    def __init__(self, lam, partial, tail, tailModel, exponent, status,
                 solution, logCumulative):
        self.lam = lam
        self.partial = partial
        self.tail = tail
        self.value = partial + (tail if np.isfinite(tail) else 0.)
        self.tailModel = tailModel
        self.exponent = exponent
        self.status = status
        self.solution = solution
        self.logCumulative = logCumulative

    @property
    def horizon(self):
        return self.solution.horizon

    @property
    def relativeDefect(self):
        """|int phi - 1/(2 lambda)| 2 lambda."""
        return abs(2. * self.lam * self.value - 1.)

    def __repr__(self):
        return 'PhiIntegral(%.12g, %s, horizon=%g)' % (
            self.value, self.status, self.horizon)


def tail_estimate(sol, spec, tol=None):
    """
    Estimates int_X^inf phi at the horizon X from the local log-slope
    r = -phi'/phi = 2q - cot(theta).

    A power law is used when s = X r is stable between X/2 and X and
    X >= powerLawHorizon. The tail is then modelled as
    phi ~ C x^{-p} (1 + b/x^2), with p and b solved from s(X/2) and
    s(X), which leaves an O(X^-4) relative error. Otherwise the tail
    is the exponential envelope phi(X)/r.

    Returns (logTail, model, exponent); logTail is +inf when r <= 0.
    """
    tol = tol or Tolerances()
    X = sol.horizon
    logPhiX = float(log_phi(sol, spec, X, tol))
    r = float(2. * spec.evaluate(X) - sol.path.cot_theta(X))
    s = X * r
    sHalf = 0.5 * X * float(2. * spec.evaluate(0.5 * X)
                            - sol.path.cot_theta(0.5 * X))
    if X >= tol.powerLawHorizon and s > 1. and \
            abs(s - sHalf) < tol.powerLawStability * s:
        b = (sHalf - s) * X * X / 6.
        p = s - 2. * b / (X * X)
        u = b / (X * X)
        if p > 1. and abs(u) < 0.5:
            logTail = logPhiX + np.log(X) - np.log1p(u) + \
                np.log(1. / (p - 1.) + u / (p + 1.))
            return logTail, 'power', p
    if r <= 0:
        return np.inf, 'exponential', r
    return logPhiX - np.log(r), 'exponential', r


def _log_cumulative_phi(sol, spec, tol):
    def logf(t):
        L, theta = sol.path.state(t)
        with np.errstate(divide='ignore', invalid='ignore'):
            return L + np.log(np.sin(theta)) - big_q(spec, t, tol)
    return log_cumulative_integral(logf, sol.grid, tol)


def phi_integral(sol, spec, tol=None):
    """
    Returns the PhiIntegral of a solve without sign change. The horizon
    is doubled (up to horizonCap) until the tail is below qsdTail of the
    total or the tail follows a stable power law.
    """
    tol = tol or Tolerances()
    if has_sign_change(sol):
        raise ValueError('phi_integral needs a solve without sign change '
                         '(eta vanishes at x = %g)' % sol.firstSignChange)
    while True:
        logCumulative = _log_cumulative_phi(sol, spec, tol)
        partial = float(np.exp(logCumulative[-1]))
        logTail, model, exponent = tail_estimate(sol, spec, tol)
        tail = float(np.exp(logTail))
        if np.isfinite(tail):
            if model == 'power':
                return PhiIntegral(sol.lam, partial, tail, model, exponent,
                                   'power-law', sol, logCumulative)
            if tail <= tol.qsdTail * (partial + tail):
                return PhiIntegral(sol.lam, partial, tail, model, exponent,
                                   'converged', sol, logCumulative)
        if sol.horizon >= tol.horizonCap:
            logger.warning('tail of phi at lambda = %.10g not converged at '
                           'horizon %g', sol.lam, sol.horizon)
            return PhiIntegral(sol.lam, partial, tail, model, exponent,
                               'unconverged', sol, logCumulative)
        sol = extend_solution(sol, spec, min(2. * sol.horizon,
                                             tol.horizonCap), tol)
        if has_sign_change(sol):
            raise EigenSolveError('eta at lambda = %.10g changes sign at x = '
                                  '%g beyond the first horizon'
                                  % (sol.lam, sol.firstSignChange))


##############################
#                            #
#  Solution properties       #
#                            #
##############################

def ode_residual(sol, spec, points=None, step=1e-2):
    """
    Returns the largest relative residual of eta'' = 2q eta' - 2 lambda
    eta at *points* (default: midpoints of the solver steps), with
    eta'' from a five-point difference of the dense eta'. All terms are
    scaled by the local amplitude m.
    """
    if points is None:
        points = 0.5 * (sol.steps[1:] + sol.steps[:-1])
    points = np.asarray(points, dtype=float)
    points = points[(points >= 2 * step) & (points <= sol.horizon - 2 * step)]
    if points.size == 0:
        return 0.

    L, theta = sol.path.state(points)
    offsets = np.array([-2., -1., 1., 2.]) * step
    Lo, thetao = sol.path.state(points[:, None] + offsets[None, :])
    primes = np.exp(Lo - L[:, None]) * np.cos(thetao)
    second = (primes[:, 0] - 8. * primes[:, 1] + 8. * primes[:, 2]
              - primes[:, 3]) / (12. * step)
    q = spec.evaluate(points)
    first = 2. * q * np.cos(theta)
    zeroth = 2. * sol.lam * np.sin(theta)
    scale = np.abs(second) + np.abs(first) + np.abs(zeroth)
    return float(np.max(np.abs(second - first + zeroth) / scale))


def is_increasing(sol):
    """True when eta' > 0 on the whole solution grid."""
    return bool(np.all(sol.etaPrime.signs > 0))


def growth_ratio_trend(sol, spec, tol=None):
    """
    Returns the least-squares slope of log(eta/Lambda) against x over
    the last decade of the grid. A negative slope is the expected
    decay of eta_lambda/Lambda at infinity.
    """
    grid = sol.grid
    decade = grid[(grid >= 0.1 * sol.horizon) & (grid > 0)]
    logRatio = sol.path.log_eta(decade) - scale_function(spec, decade, tol)
    return float(np.polyfit(decade, logRatio, 1)[0])


def integral_form_residual(sol, spec, points=None, tol=None):
    """
    Returns the largest residual of eta'(x) e^{-Q(x)} = 1 - 2 lambda
    int_0^x phi at *points* (default: 64 points on [0, min(horizon, 16)]),
    relative to max(1, |left-hand side|).
    """
    if points is None:
        points = np.linspace(0., min(sol.horizon, 16.), 65)
    points = np.unique(np.asarray(points, dtype=float))
    if points[0] != 0.:
        points = np.concatenate([[0.], points])

    def phi(t):
        L, theta = sol.path.state(t)
        return np.exp(L - big_q(spec, t, tol)) * np.sin(theta)

    integral = cumulative_integral(phi, points, tol)
    L, theta = sol.path.state(points)
    lhs = np.exp(L - big_q(spec, points, tol)) * np.cos(theta)
    rhs = 1. - 2. * sol.lam * integral
    return float(np.max(np.abs(lhs - rhs) / np.maximum(1., np.abs(lhs))))

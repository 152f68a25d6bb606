#! /usr/bin/env python
#

""" Existence of quasi-stationary distributions and construction of
the family nu_lambda(dy) = 2 lambda eta_lambda(y) e^{-Q(y)} dy."""

import logging

import numpy as np
from scipy.interpolate import PchipInterpolator

from .config import Tolerances
from .eigen import (has_sign_change, lambda_c, log_phi, phi_from_eta,
                    phi_integral, solve_eta)
from .measures import classify_boundaries
from .quadrature import integrate_panels

logger = logging.getLogger(__name__)


class QsdRangeError(ValueError):
    pass


class QsdExistenceError(ValueError):
    pass


class QsdInconsistencyError(RuntimeError):
    pass


##############################
#                            #
#  Existence                 #
#                            #
##############################

class ExistenceVerdict:
    """
    Attributes:
        status : *str*
            'exists', 'does-not-exist' or 'undecided'.
        exists : *bool* or None
        familyValid : *bool*
            True when H2 also holds, so the whole family construction
            applies.
        reason : *str*
        report : *ClassificationReport*
    """

    def __init__(self, status, reason, report):
        self.status = status
        self.exists = {'exists': True, 'does-not-exist': False}.get(status)
        self.familyValid = bool(self.exists) and report.h2 == 'holds'
        self.reason = reason
        self.report = report

    def __repr__(self):
        return 'ExistenceVerdict(%s: %s)' % (self.status, self.reason)


def qsd_exists(spec, report=None, tol=None):
    """
    A QSD exists iff H1 holds and delta is finite.

    Parameters:
        spec : *DriftSpec*
        report : *ClassificationReport*, optional
            Computed when not given.
        tol : *Tolerances*, optional

    Returns:
        verdict : *ExistenceVerdict*
    """
    if report is None:
        report = classify_boundaries(spec, tol)
    if report.delta.status == 'diverged':
        return ExistenceVerdict('does-not-exist', 'delta = inf', report)
    if report.h1 == 'fails':
        return ExistenceVerdict('does-not-exist',
                                'H1 fails (Lambda(inf) < inf)', report)
    if report.h1 == 'holds' and report.delta.finite:
        return ExistenceVerdict('exists', 'H1 holds and delta = %.10g'
                                % report.delta.value, report)
    return ExistenceVerdict('undecided', 'H1 %s, delta %s'
                            % (report.h1, report.delta.status), report)


##############################
#                            #
#  QsdDistribution           #
#                            #
##############################

def _monotone_cdf(raw, lam, tol):
    """
    Running maximum of *raw*. Warns when it lifts any point by more
    than normalizationTol.
    """
    cdf = np.maximum.accumulate(raw)
    correction = float(np.max(cdf - raw, initial=0.))
    if correction > tol.normalizationTol:
        logger.warning('CDF at lambda = %.10g decreases by up to %.3g '
                       '(tolerance %.1g)', lam, correction,
                       tol.normalizationTol)
    return cdf


class QsdDistribution:
    """
    One member nu_lambda of the QSD family.

    Attributes:
        lam : *float*
        density : *LogGridFunction*
            f(y) = 2 lambda eta_lambda(y) e^{-Q(y)} on the eigen grid.
        grid : *numpy.ndarray*
        cdf : *numpy.ndarray*
            Cumulative distribution on the grid, no renormalization.
        tailMass : *float*
            Estimated mass beyond supportTruncation.
        tailModel : *str*
            'exponential' or 'power'.
        tailExponent : *float*
            Decay rate r or power p of the density tail.
        normalizationDefect : *float*
            |cdf[-1] + tailMass - 1|.
        supportTruncation : *float*
            Upper end of the grid.
        solution : *EigenSolution*
    """

    def __init__(self, spec, phiMass, tol):
        sol = phiMass.solution
        self.spec = spec
        self.lam = sol.lam
        self.solution = sol
        self.tol = tol
        self.grid = sol.grid
        self.density = phi_from_eta(sol, spec, tol).scaled(
            np.log(2. * sol.lam))
        self.cdf = _monotone_cdf(2. * sol.lam * np.exp(phiMass.logCumulative),
                                 sol.lam, tol)
        self.tailMass = 2. * sol.lam * phiMass.tail \
            if np.isfinite(phiMass.tail) else 0.
        self.tailModel = phiMass.tailModel
        self.tailExponent = phiMass.exponent
        self.tailStatus = phiMass.status
        self.supportTruncation = sol.horizon
        self.normalizationDefect = abs(self.cdf[-1] + self.tailMass - 1.)
        if self.normalizationDefect >= tol.normalizationTol:
            logger.warning('QSD at lambda = %.10g has normalization defect '
                           '%.3g (tolerance %.1g)', self.lam,
                           self.normalizationDefect, tol.normalizationTol)

        keep = np.concatenate([[True], np.diff(self.cdf) > 0])
        self._cdfInterpolator = PchipInterpolator(self.grid, self.cdf)
        self._quantileInterpolator = PchipInterpolator(self.cdf[keep],
                                                       self.grid[keep])

    @property
    def totalMass(self):
        return self.cdf[-1] + self.tailMass

    def pdf(self, y):
        """
        Density at arbitrary points, from the dense eigen solution on
        the grid range and from the tail model beyond it.
        """
        y = np.asarray(y, dtype=float)
        X = self.supportTruncation
        inside = np.minimum(np.maximum(y, 0.), X)
        with np.errstate(divide='ignore', invalid='ignore'):
            logInside = np.log(2. * self.lam) + log_phi(self.solution,
                                                        self.spec, inside,
                                                        self.tol)
            values = np.where(inside > 0, np.exp(logInside), 0.)
        fX = float(self.density.values()[-1])
        with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
            if self.tailModel == 'power':
                beyond = fX * (y / X) ** -self.tailExponent
            else:
                beyond = fX * np.exp(-self.tailExponent * (y - X))
        values = np.where(y > X, beyond, values)
        return np.where(y < 0, 0., values)

    def tail_survival(self, y):
        """Mass beyond y >= supportTruncation under the tail model."""
        X = self.supportTruncation
        y = np.maximum(np.asarray(y, dtype=float), X)
        with np.errstate(over='ignore', divide='ignore'):
            if self.tailModel == 'power':
                return self.tailMass * (y / X) ** -(self.tailExponent - 1.)
            return self.tailMass * np.exp(-self.tailExponent * (y - X))

    def cdf_at(self, y):
        """Cumulative distribution at arbitrary points."""
        y = np.asarray(y, dtype=float)
        X = self.supportTruncation
        inside = np.clip(self._cdfInterpolator(np.clip(y, 0., X)), 0., None)
        beyond = self.totalMass - self.tail_survival(y)
        values = np.where(y > X, beyond, inside)
        return np.where(y < 0, 0., values)

    def table(self):
        """Returns the (y, density, cdf) columns of the CSV export."""
        return np.column_stack([self.grid, self.density.values(), self.cdf])

    def __repr__(self):
        return ('QsdDistribution(lambda=%.10g, defect=%.3g, support=%g, '
                'tail=%s)' % (self.lam, self.normalizationDefect,
                              self.supportTruncation, self.tailModel))


def qsd_from_solution(spec, sol, tol=None):
    """
    Builds nu_lambda from a shooting solve without sign change,
    extending its horizon as the tail requires.
    """
    tol = tol or Tolerances()
    if has_sign_change(sol):
        raise QsdInconsistencyError(
            'eta at lambda = %.10g changes sign at x = %g although lambda was '
            'accepted as at most lambda_c' % (sol.lam, sol.firstSignChange))
    return QsdDistribution(spec, phi_integral(sol, spec, tol), tol)


def build_qsd(spec, lam, critical=None, tol=None):
    """
    Builds the QSD nu_lambda for 0 < lam <= lambda_c. A lam inside the
    final bisection bracket (lo, hi] is moved to lo, the side certified
    without sign change.

    Parameters:
        spec : *DriftSpec*
        lam : *float*
        critical : *CriticalEigenvalue*, optional
            Computed (after an existence check) when not given.
        tol : *Tolerances*, optional

    Returns:
        dist : *QsdDistribution*
    """
    tol = tol or Tolerances()
    if critical is None:
        verdict = qsd_exists(spec, tol=tol)
        if not verdict.exists:
            raise QsdExistenceError('No QSD for drift %s: %s'
                                    % (spec.text, verdict.reason))
        critical = lambda_c(spec, verdict.report, tol)
    if lam <= 0:
        raise QsdRangeError('lambda must be positive, got %r' % lam)
    if lam > critical.hi:
        raise QsdRangeError('lambda = %.10g exceeds lambda_c = %.10g'
                            % (lam, critical.hi))
    if lam > critical.lo:
        logger.info('lambda = %.12g inside the lambda_c bracket; using %.12g',
                    lam, critical.lo)
        lam = critical.lo
    sol = solve_eta(spec, lam, tol.horizonStart, tol)
    return qsd_from_solution(spec, sol, tol)


##############################
#                            #
#  Quantiles and sampling    #
#                            #
##############################

def qsd_quantile(dist, p):
    """
    Inverse of the cumulative distribution by monotone cubic
    interpolation on the grid and inversion of the tail model beyond
    it. quantile(0) = 0 and quantile(1) = inf.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError('Quantile levels must lie in [0, 1]')
    X = dist.supportTruncation
    cdfEnd = dist.cdf[-1]

    inside = dist._quantileInterpolator(np.minimum(p, cdfEnd))
    inside = np.clip(inside, 0., X)

    remaining = dist.totalMass - p
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = dist.tailMass / remaining
        if dist.tailModel == 'power':
            beyond = X * ratio ** (1. / (dist.tailExponent - 1.))
        else:
            beyond = X + np.log(ratio) / dist.tailExponent
    beyond = np.where(remaining <= 0, np.inf, np.maximum(beyond, X))

    values = np.where(p > cdfEnd, beyond, inside)
    values = np.where(p == 0, 0., values)
    values = np.where(p == 1, np.inf, values)
    return values if values.ndim else float(values)


def sample_qsd(dist, n, seed):
    """
    Returns *n* independent draws from *dist* by inversion, from a
    counter-based generator keyed by *seed*.
    """
    if n < 1:
        raise ValueError('n must be at least 1')
    rng = np.random.Generator(np.random.Philox(seed))
    return qsd_quantile(dist, rng.random(int(n)))


##############################
#                            #
#  Checks                    #
#                            #
##############################

def closed_form_minimal_density(spec):
    """
    Returns the closed-form minimal QSD density of a builtin drift with
    a > 0 (constant: a^2 y e^{-a y}, linear: 2a y e^{-a y^2}), or None.
    """
    if spec.kind == 'constant' and spec.a > 0:
        a = spec.a
        return lambda y: a * a * y * np.exp(-a * y)
    if spec.kind == 'linear' and spec.a > 0:
        a = spec.a
        return lambda y: 2. * a * y * np.exp(-a * y * y)
    return None


def closed_form_deviation(dist, spec, lo=0.01, hi=10.):
    """
    Returns sup |density - closed form| over the grid nodes in [lo, hi],
    or None without a closed form.
    """
    closed = closed_form_minimal_density(spec)
    if closed is None:
        return None
    nodes = (dist.grid >= lo) & (dist.grid <= hi)
    return float(np.max(np.abs(dist.density.values()[nodes]
                               - closed(dist.grid[nodes]))))


def _bump(y, center, width):
    u = (y - center) / width
    s = 1. - u * u
    inside = s > 0
    safe = np.where(inside, s, 1.)
    g = np.where(inside, np.exp(-1. / safe), 0.)
    gu = g * (-2. * u / safe ** 2)
    guu = g * (4. * u * u / safe ** 4 - 2. / safe ** 2 - 8. * u * u /
               safe ** 3)
    return g, gu / width, guu / width ** 2


def eigenmeasure_residual(dist, center, width, tol=None):
    """
    Weak-form check of L* nu = -lambda nu with the bump test function
    g(y) = exp(-1/(1 - ((y - center)/width)^2)): returns
    |int (Lg) dnu + lambda int g dnu| / (lambda int g dnu), where
    Lg = g''/2 - q g'.
    """
    if center - width < 0 or center + width > dist.supportTruncation:
        raise ValueError('The bump must lie inside [0, supportTruncation]')
    spec = dist.spec
    edges = np.linspace(center - width, center + width, 9)

    def generator(y):
        g, gPrime, gSecond = _bump(y, center, width)
        return (0.5 * gSecond - spec.evaluate(y) * gPrime) * dist.pdf(y)

    def mass(y):
        return _bump(y, center, width)[0] * dist.pdf(y)

    lhs = float(np.sum(integrate_panels(generator, edges, tol)))
    weight = float(np.sum(integrate_panels(mass, edges, tol)))
    return abs(lhs + dist.lam * weight) / (dist.lam * weight)


def bump_family(dist):
    """Four (center, width) bumps placed at quantiles of *dist*."""
    centers = qsd_quantile(dist, np.array([0.2, 0.4, 0.6, 0.8]))
    return [(float(c), 0.5 * float(c)) for c in centers]

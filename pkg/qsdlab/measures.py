#! /usr/bin/env python
#

""" Q, the scale function, the speed measure and its tails, the
constants delta and S, and the classification of the boundaries."""

import logging

import numpy as np
from scipy.optimize import minimize_scalar

from .config import Tolerances
from .quadrature import (cumulative_integral, log_cumulative_integral,
                         log_integrate_panels, log_reverse_cumulative,
                         truncate_improper, TruncationResult)

logger = logging.getLogger(__name__)

LOG2 = np.log(2.)


def _nonnegative(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError('Measures are defined on x >= 0 only')
    return x


def _as_output(values, x):
    return values if np.ndim(x) else float(values)


##############################
#                            #
#  Q and the scale function  #
#                            #
##############################

def big_q(spec, x, tol=None):
    """
    Returns Q(x) = int_0^x 2q(y)dy, with Q(0) = 0 exactly. Builtin
    drifts use their closed-form antiderivative; expressions are
    integrated by adaptive Gauss-Kronrod panels between the sorted
    query points.

    Parameters:
        spec : *DriftSpec*
        x : *float* or *array*
            Query points, x >= 0. Any shape.
        tol : *Tolerances*, optional
    """
    xs = _nonnegative(x)
    closed = spec.antiderivative(xs)
    if closed is not None:
        return _as_output(closed, x)

    flat = xs.ravel()
    unique, inverse = np.unique(flat, return_inverse=True)
    edges = np.concatenate([[0.], unique])
    values = cumulative_integral(
        lambda t: 2. * spec.evaluate(t, checked=False), edges, tol)[1:]
    return _as_output(values[inverse].reshape(xs.shape), x)


def scale_function(spec, x, tol=None):
    """
    Returns log Lambda(x), where Lambda(x) = int_0^x e^{Q(y)}dy is the
    scale function. log Lambda(0) = -inf.
    """
    tol = tol or Tolerances()
    xs = _nonnegative(x)
    flat = xs.ravel()
    unique, inverse = np.unique(flat, return_inverse=True)
    edges = np.concatenate([[0.], unique])
    logs = log_cumulative_integral(lambda t: big_q(spec, t, tol), edges,
                                   tol)[1:]
    return _as_output(logs[inverse].reshape(xs.shape), x)


def _log_piece(spec, sign, tol):
    def piece(a, b):
        return log_integrate_panels(lambda t: sign * big_q(spec, t, tol),
                                    [a, b], tol)[0]
    return piece


def lambda_infinity(spec, tol=None):
    """
    Returns Lambda(inf) as a TruncationResult. Divergence is (H1).
    """
    tol = tol or Tolerances()
    return truncate_improper(_log_piece(spec, 1., tol), 0., tol,
                             'Lambda(inf)')


##############################
#                            #
#  Speed measure             #
#                            #
##############################

def mu_tail(spec, x, tol=None):
    """
    Returns mu([x, inf)) = int_x^inf e^{-Q(z)}dz as a TruncationResult
    (value +inf when divergence is detected, status 'undecided' when
    the truncation cap is hit without a decision).
    """
    tol = tol or Tolerances()
    x = float(_nonnegative(x))
    return truncate_improper(_log_piece(spec, -1., tol), x, tol,
                             'mu tail from %g' % x)


def log_mu_tails(spec, grid, tol=None):
    """
    Returns (log mu([x_i, inf)) for every node of the strictly
    increasing *grid*, tail TruncationResult beyond the last node).
    All values are +inf when the tail diverges.
    """
    tol = tol or Tolerances()
    grid = _nonnegative(grid)
    tail = mu_tail(spec, grid[-1], tol)
    if tail.status == 'diverged':
        return np.full(grid.shape, np.inf), tail
    logs = log_reverse_cumulative(lambda t: -big_q(spec, t, tol), grid,
                                  tail.logValue, tol)
    return logs, tail


def s_integral(spec, tol=None):
    """
    Returns S = int_0^inf e^{Q(y)} int_y^inf e^{-Q(z)}dz dy as a
    TruncationResult. S is evaluated in the exchanged order
    int_0^inf Lambda(z) e^{-Q(z)}dz; it is +inf whenever mu diverges.
    Divergence is (H2).
    """
    tol = tol or Tolerances()
    total = mu_tail(spec, 0., tol)
    if total.status == 'diverged':
        return TruncationResult('diverged', np.inf, np.inf, total.evidence)
    if total.status == 'undecided':
        return TruncationResult('undecided', total.logValue, np.inf,
                                total.evidence)

    def piece(a, b):
        return log_integrate_panels(
            lambda t: scale_function(spec, t, tol) - big_q(spec, t, tol),
            [a, b], tol)[0]

    return truncate_improper(piece, 0., tol, 'S')


##############################
#                            #
#  delta                     #
#                            #
##############################

class DeltaSup:
    """
    The constant delta = sup_x Lambda(x) 2 mu([x, inf)).

    Attributes:
        status : *str*
            'converged', 'diverged' or 'undecided'.
        value : *float*
            delta, +inf when diverged.
        location : *float* or None
            Maximizing x (the last grid point when the sup is approached
            at infinity).
        errorBound : *float*
            Change of the sup over the last horizon doubling.
        evidence : *list* of (*float*, *float*)
            (horizon X, sup over (0, X]) at every doubling.
    """

    def __init__(self, status, value, location, errorBound, evidence):
        self.status = status
        self.value = value
        self.location = location
        self.errorBound = errorBound
        self.evidence = evidence

    @property
    def finite(self):
        return self.status == 'converged'

    def __repr__(self):
        return 'DeltaSup(%s, value=%.10g)' % (self.status, self.value)


def log_delta_product(spec, x, tol=None):
    """
    Returns log( Lambda(x) 2 mu([x, inf)) ) on the strictly increasing
    points *x*.
    """
    logM, _ = log_mu_tails(spec, x, tol)
    return scale_function(spec, x, tol) + LOG2 + logM


def delta_sup(spec, tol=None):
    """
    Computes delta. The product is maximized over deltaGridSize points
    geometric on (X 2^-24, X], with golden-section refinement around an
    interior maximizer; X starts at horizonStart and doubles until the
    sup changes by at most truncationRtol. delta is +inf when mu
    diverges or when the sup keeps growing past divergenceOnset.
    """
    tol = tol or Tolerances()
    total = mu_tail(spec, 0., tol)
    if total.status == 'diverged':
        return DeltaSup('diverged', np.inf, None, np.inf, [])
    if total.status == 'undecided':
        return DeltaSup('undecided', np.nan, None, np.inf, [])

    X = tol.horizonStart
    evidence = []
    previous = None
    previousIncrement = None
    run = 0
    while True:
        xs = np.geomspace(X * 2. ** -24, X, tol.deltaGridSize)
        logProduct = log_delta_product(spec, xs, tol)
        i = int(np.argmax(logProduct))
        best, location = float(logProduct[i]), float(xs[i])

        if 0 < i < xs.size - 1:
            def objective(u):
                point = np.exp(u)
                logM = mu_tail(spec, point, tol).logValue
                return -(scale_function(spec, point, tol) + LOG2 + logM)
            refined = minimize_scalar(objective, method='golden',
                                      bracket=(np.log(xs[i - 1]),
                                               np.log(xs[i]),
                                               np.log(xs[i + 1])))
            if -refined.fun > best:
                best, location = float(-refined.fun), float(np.exp(refined.x))

        sup = float(np.exp(best))
        evidence.append((X, sup))
        logger.debug('delta sup over (0, %g] = %.15g at x = %.6g',
                     X, sup, location)

        if previous is not None:
            increment = sup - previous
            if abs(increment) <= tol.truncationRtol * sup:
                return DeltaSup('converged', sup, location, abs(increment),
                                evidence)
            if previousIncrement is not None and X >= tol.divergenceOnset \
                    and increment >= previousIncrement * \
                    (1. - tol.nondecreasingSlack):
                run += 1
            else:
                run = 0
            if run >= tol.divergenceRun:
                return DeltaSup('diverged', np.inf, None, np.inf, evidence)
            previousIncrement = increment
        if X >= tol.truncationCap:
            logger.info('delta undecided at horizon %g', X)
            return DeltaSup('undecided', sup, location, np.inf, evidence)
        previous = sup
        X *= 2.


##############################
#                            #
#  Classification            #
#                            #
##############################

def _verdict(result):
    return {'diverged': 'holds', 'converged': 'fails'}.get(result.status,
                                                          'undecided')


class ClassificationReport:
    """
    Verdicts and numeric evidence for the boundary behaviour of a drift.

    Attributes:
        drift : *str*
        h1 : *str*
            'holds' (Lambda(inf) = inf), 'fails' or 'undecided'.
        h1Evidence : *TruncationResult*
            Truncation ladder of Lambda(inf).
        h2 : *str*
            'holds' (S = inf), 'fails' or 'undecided'.
        h2Evidence : *TruncationResult*
            Truncation ladder of S.
        delta : *DeltaSup*
        muTotal : *TruncationResult*
            mu(0, inf).
        regularAtZero : *bool*
        zeroWitnesses : (*float*, *float*)
            int_0^1 e^{Q} and int_0^1 e^{-Q}.
        consistent : *bool*
            False when delta is finite but mu(0, inf) is not.
        tol : *Tolerances*
    """

    def __init__(self, drift, h1Evidence, h2Evidence, delta, muTotal,
                 zeroWitnesses, tol):
        self.drift = drift
        self.h1Evidence = h1Evidence
        self.h1 = _verdict(h1Evidence)
        self.h2Evidence = h2Evidence
        self.h2 = _verdict(h2Evidence)
        self.delta = delta
        self.muTotal = muTotal
        self.zeroWitnesses = zeroWitnesses
        self.regularAtZero = bool(np.all(np.isfinite(zeroWitnesses)))
        self.consistent = not (delta.finite and not muTotal.finite)
        self.tol = tol
        if not self.consistent:
            logger.warning('delta is finite but mu(0, inf) is not for drift '
                           '%s', drift)

    @property
    def hypothesisH(self):
        return self.h1 == 'holds' and self.h2 == 'holds'

    @property
    def undecided(self):
        """Names of the fields without a decision."""
        names = []
        if self.h1 == 'undecided':
            names.append('H1')
        if self.h2 == 'undecided':
            names.append('H2')
        if self.delta.status == 'undecided':
            names.append('delta')
        if self.muTotal.status == 'undecided':
            names.append('mu_total')
        return names

    def rows(self):
        """
        Returns (quantity, status, value, errorBound) rows.
        """
        return [('lambda_infinity', self.h1Evidence.status,
                 self.h1Evidence.value, self.h1Evidence.errorBound),
                ('h1', self.h1, np.nan, np.nan),
                ('s_integral', self.h2Evidence.status,
                 self.h2Evidence.value, self.h2Evidence.errorBound),
                ('h2', self.h2, np.nan, np.nan),
                ('delta', self.delta.status, self.delta.value,
                 self.delta.errorBound),
                ('mu_total', self.muTotal.status, self.muTotal.value,
                 self.muTotal.errorBound),
                ('int_0^1 exp(Q)', 'converged', self.zeroWitnesses[0],
                 np.nan),
                ('int_0^1 exp(-Q)', 'converged', self.zeroWitnesses[1],
                 np.nan)]

    def __repr__(self):
        return ('ClassificationReport(%s: H1 %s, H2 %s, delta=%.6g, '
                'mu=%.6g)' % (self.drift, self.h1, self.h2, self.delta.value,
                              self.muTotal.value))


def classify_boundaries(spec, tol=None):
    """
    Fills a ClassificationReport: H1 from the divergence of Lambda, H2
    from the divergence of S, delta, mu(0, inf) and regularity of 0
    (int_0^1 e^{Q} and int_0^1 e^{-Q} finite).
    """
    tol = tol or Tolerances()
    logger.info('classifying drift %s', spec.text)
    h1Evidence = lambda_infinity(spec, tol)
    muTotal = mu_tail(spec, 0., tol)
    h2Evidence = s_integral(spec, tol)
    delta = delta_sup(spec, tol)
    with np.errstate(over='ignore'):
        witnesses = (float(np.exp(_log_piece(spec, 1., tol)(0., 1.))),
                     float(np.exp(_log_piece(spec, -1., tol)(0., 1.))))
    return ClassificationReport(spec.text, h1Evidence, h2Evidence, delta,
                                muTotal, witnesses, tol)

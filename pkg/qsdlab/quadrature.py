#! /usr/bin/env python
#

""" Vectorized adaptive Gauss-Kronrod (G7/K15) quadrature, in the
linear and the log domain, and the doubling truncation of improper
integrals."""

import logging

import numpy as np
from scipy.special import logsumexp

from .config import Tolerances

logger = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    pass


# Kronrod abscissae on [0, 1]; the odd entries are the Gauss points
XGK = np.array([0.991455371120812639206854697526329,
                0.949107912342758524526189684047851,
                0.864864423359769072789712788640926,
                0.741531185599394439863864773280788,
                0.586087235467691130294144845693013,
                0.405845151377397166906606412076961,
                0.207784955007898467600689403773245,
                0.000000000000000000000000000000000])

WGK = np.array([0.022935322010529224963732008058970,
                0.063092092629978553290700663189204,
                0.104790010322250183839876322541518,
                0.140653259715525918745189590510238,
                0.169004726639267902826583426598550,
                0.190350578064785409913256402421014,
                0.204432940075298892414161999234649,
                0.209482141084727828012999174891714])

WG = np.array([0.129484966168869693270611432679082,
               0.279705391489276667901467771423780,
               0.381830050505118944950369775488975,
               0.417959183673469387755102040816327])

NODES = np.concatenate([-XGK[:7], [0.], XGK[6::-1]])
KRONROD_WEIGHTS = np.concatenate([WGK[:7], [WGK[7]], WGK[6::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5]] = WG[:3]
GAUSS_WEIGHTS[7] = WG[3]
GAUSS_WEIGHTS[[13, 11, 9]] = WG[:3]


def _panel_nodes(a, b):
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return center[:, None] + half[:, None] * NODES[None, :], center, half


##############################
#                            #
#  Linear domain             #
#                            #
##############################

def integrate_panels(f, edges, tol=None):
    """
    Integrates *f* over each interval [edges[i], edges[i+1]] by
    adaptive bisection of G7/K15 panels. All active panels of a sweep
    are evaluated in a single vectorized call of *f*.

    Parameters:
        f : *callable*
            Vectorized integrand, called with a 2-d array of abscissae.
        edges : *array*
            Nondecreasing interval edges.
        tol : *Tolerances*, optional
            Uses quadAtol, quadRtol and quadMaxDepth.

    Returns:
        integrals : *numpy.ndarray*
            One value per interval.
    """
    tol = tol or Tolerances()
    edges = np.asarray(edges, dtype=float)
    nOwner = len(edges) - 1
    totals = np.zeros(max(nOwner, 0))
    a, b = edges[:-1].copy(), edges[1:].copy()
    owner = np.arange(nOwner)

    depth = 0
    while a.size:
        if depth > tol.quadMaxDepth:
            raise QuadratureError('Adaptive quadrature exceeded depth %d near '
                                  'x = %r' % (tol.quadMaxDepth, float(a[0])))
        nodes, center, half = _panel_nodes(a, b)
        with np.errstate(all='ignore'):
            values = np.asarray(f(nodes), dtype=float)
        if not np.all(np.isfinite(values)):
            raise QuadratureError('Integrand is not finite near x = %r'
                                  % float(nodes[~np.isfinite(values)][0]))
        kronrod = half * (values @ KRONROD_WEIGHTS)
        gauss = half * (values @ GAUSS_WEIGHTS)
        error = np.abs(kronrod - gauss)
        accept = error <= np.maximum(tol.quadAtol,
                                     tol.quadRtol * np.abs(kronrod))
        np.add.at(totals, owner[accept], kronrod[accept])

        reject = ~accept
        a, b = (np.concatenate([a[reject], center[reject]]),
                np.concatenate([center[reject], b[reject]]))
        owner = np.concatenate([owner[reject], owner[reject]])
        depth += 1
    return totals


def cumulative_integral(f, grid, tol=None):
    """
    Returns int_{grid[0]}^{grid[i]} f for every grid node.
    """
    panels = integrate_panels(f, grid, tol)
    return np.concatenate([[0.], np.cumsum(panels)])


##############################
#                            #
#  Log domain                #
#                            #
##############################

def _group_logsumexp(values, groups, nGroups):
    peak = np.full(nGroups, -np.inf)
    np.maximum.at(peak, groups, values)
    shift = np.where(np.isfinite(peak), peak, 0.)
    total = np.zeros(nGroups)
    with np.errstate(all='ignore'):
        np.add.at(total, groups, np.exp(values - shift[groups]))
        return shift + np.log(total)


def log_integrate_panels(logf, edges, tol=None):
    """
    Returns log int f over each interval [edges[i], edges[i+1]] for a
    nonnegative integrand given through its logarithm *logf*
    (-inf where f vanishes). Panel sums use log-sum-exp, so integrands
    like e^{x^2} far beyond double range are handled.

    A panel is accepted once its Gauss-Kronrod error estimate is below
    quadRtol of the running estimate of its interval's total; panels
    negligible against the rest of their interval are accepted early.
    """
    tol = tol or Tolerances()
    edges = np.asarray(edges, dtype=float)
    nOwner = len(edges) - 1
    accepted = np.full(max(nOwner, 0), -np.inf)
    a, b = edges[:-1].copy(), edges[1:].copy()
    owner = np.arange(nOwner)
    logRtol = np.log(tol.quadRtol)

    depth = 0
    while a.size:
        if depth > tol.quadMaxDepth:
            raise QuadratureError('Log-domain quadrature exceeded depth %d '
                                  'near x = %r' % (tol.quadMaxDepth,
                                                   float(a[0])))
        nodes, center, half = _panel_nodes(a, b)
        with np.errstate(all='ignore'):
            values = np.asarray(logf(nodes), dtype=float)
            if np.any(np.isnan(values)) or np.any(values == np.inf):
                raise QuadratureError('Log integrand is not finite near x = %r'
                                      % float(center[0]))
            logK = logsumexp(values, axis=1,
                             b=half[:, None] * KRONROD_WEIGHTS[None, :])
            logG = logsumexp(values, axis=1,
                             b=half[:, None] * GAUSS_WEIGHTS[None, :])
            gap = np.abs(logK - logG)
            logError = np.maximum(logK, logG) + np.log(-np.expm1(-gap))
        logError = np.where(np.isneginf(logK) & np.isneginf(logG), -np.inf,
                            logError)
        logError = np.where(np.isnan(logError), np.inf, logError)

        pending = _group_logsumexp(logK, owner, nOwner)
        ownerTotal = np.logaddexp(accepted, pending)
        accept = logError <= ownerTotal[owner] + logRtol
        np.logaddexp.at(accepted, owner[accept], logK[accept])

        reject = ~accept
        a, b = (np.concatenate([a[reject], center[reject]]),
                np.concatenate([center[reject], b[reject]]))
        owner = np.concatenate([owner[reject], owner[reject]])
        depth += 1
    return accepted


def log_cumulative_integral(logf, grid, tol=None):
    """
    Returns log int_{grid[0]}^{grid[i]} f for every grid node
    (-inf at the first node).
    """
    panels = log_integrate_panels(logf, grid, tol)
    return np.concatenate([[-np.inf], np.logaddexp.accumulate(panels)])


def log_reverse_cumulative(logf, grid, logTail=-np.inf, tol=None):
    """
    Returns log( int_{grid[i]}^{grid[-1]} f + e^{logTail} ) for every
    grid node.
    """
    panels = log_integrate_panels(logf, grid, tol)
    reverse = np.logaddexp.accumulate(np.concatenate([[logTail],
                                                      panels[::-1]]))
    return reverse[::-1]


##############################
#                            #
#  Improper integrals        #
#                            #
##############################

class TruncationResult:
    """
    Outcome of a doubling truncation of an improper integral.

    Attributes:
        status : *str*
            'converged', 'diverged' or 'undecided'.
        value : *float*
            The integral, +inf when diverged, the last partial value when
            undecided.
        logValue : *float*
        errorBound : *float*
            Size of the last accepted increment (converged only).
        evidence : *list* of (*float*, *float*)
            (truncation point T, log partial integral) at every doubling.
    """

    def __init__(self, status, logValue, errorBound, evidence):
        self.status = status
        self.logValue = np.inf if status == 'diverged' else logValue
        with np.errstate(over='ignore'):
            self.value = float(np.exp(self.logValue))
        self.errorBound = errorBound
        self.evidence = evidence

    @property
    def finite(self):
        return self.status == 'converged'

    def __repr__(self):
        return ('TruncationResult(%s, value=%.10g, errorBound=%.3g)'
                % (self.status, self.value, self.errorBound))


def truncate_improper(logPiece, start, tol=None, label='integral'):
    """
    Evaluates int_start^inf f by doubling the truncation point:
    T_0 = start, T_1 = max(2*start, 1), T_{k+1} = 2*T_k.

    Converged when the last increment is at most truncationRtol of the
    running total. Diverged when the increments have been nondecreasing
    (up to nondecreasingSlack) for divergenceRun consecutive doublings
    with T past divergenceOnset. Undecided when T passes truncationCap.

    Parameters:
        logPiece : *callable*
            logPiece(a, b) returns log int_a^b f for a nonnegative f.
        start : *float*
        tol : *Tolerances*, optional
        label : *str*
            Name used in log messages.

    Returns:
        result : *TruncationResult*
    """
    tol = tol or Tolerances()
    lower = float(start)
    upper = max(2. * lower, 1.)
    logTotal = -np.inf
    previous = None
    run = 0
    evidence = []

    while True:
        logIncrement = float(logPiece(lower, upper))
        logTotal = float(np.logaddexp(logTotal, logIncrement))
        evidence.append((upper, logTotal))

        if logIncrement == -np.inf or \
                logIncrement <= logTotal + np.log(tol.truncationRtol):
            logger.debug('%s converged at T = %g', label, upper)
            return TruncationResult('converged', logTotal,
                                    float(np.exp(logIncrement)), evidence)

        if previous is not None and \
                logIncrement >= previous + np.log1p(-tol.nondecreasingSlack):
            run = run + 1 if upper >= tol.divergenceOnset else 0
        else:
            run = 0
        if run >= tol.divergenceRun:
            logger.debug('%s diverged at T = %g', label, upper)
            return TruncationResult('diverged', np.inf, np.inf, evidence)

        if upper >= tol.truncationCap:
            logger.info('%s undecided at truncation cap %g', label, upper)
            return TruncationResult('undecided', logTotal, np.inf, evidence)
        previous = logIncrement
        lower, upper = upper, 2. * upper

#! /usr/bin/env python
#

""" R-positivity of the killed process and the diffusion Y conditioned
to never be killed, dY = dB - phi(Y)dt with phi = q - eta_1'/eta_1."""

import logging

import numpy as np

from .config import Tolerances
from .eigen import (ShootingPath, extend_solution, integrate_prufer,
                    has_sign_change)
from .loggrid import ExtrapolationError, LogGridFunction
from .measures import big_q, log_mu_tails, mu_tail, scale_function
from .qsd import qsd_from_solution, qsd_quantile
from .quadrature import (log_cumulative_integral, log_integrate_panels,
                         log_reverse_cumulative)

logger = logging.getLogger(__name__)

VERDICTS = ('R-positive', 'criterion-not-satisfied', 'undecided')


##############################
#                            #
#  R-positivity criterion    #
#                            #
##############################

class CriterionResult:
    """
    The product mu([x, inf)) Lambda(x) along a doubling ladder of x.

    The criterion is one-directional: a product tending to 0 proves
    R-positivity, anything else leaves the question open.

    Attributes:
        verdict : *str*
            'R-positive', 'criterion-not-satisfied' or 'undecided'.
        limit : *float*
            Last product on the ladder (the plateau value when one is
            detected).
        peak : *float*
        ladder : *list* of (*float*, *float*)
            (x, product) pairs.
        supForm : *list* of (*float*, *float*)
            (n, sup_{r > n} mu([r, inf)) int_n^r e^Q) at every ladder
            point where the product is finite.
        tol : *Tolerances*
    """

    def __init__(self, verdict, limit, peak, ladder, supForm, tol):
        self.verdict = verdict
        self.limit = limit
        self.peak = peak
        self.ladder = ladder
        self.supForm = supForm
        self.tol = tol

    @property
    def rPositive(self):
        return self.verdict == 'R-positive'

    def rows(self):
        """(x, product, sup form) rows of the criterion export."""
        sup = dict(self.supForm)
        return [(x, p, sup.get(x, np.nan)) for x, p in self.ladder]

    def __repr__(self):
        return 'CriterionResult(%s, limit=%.6g, peak=%.6g)' % (
            self.verdict, self.limit, self.peak)


def _log_product(spec, x, tol):
    tail = mu_tail(spec, x, tol)
    if tail.status == 'diverged':
        return np.inf, tail.status
    return tail.logValue + float(scale_function(spec, x, tol)), tail.status


def _log_sup_form(spec, n, tol):
    r = n * 2. ** (np.arange(41) / 4.)
    logTails, _ = log_mu_tails(spec, r, tol)
    logScale = scale_function(spec, r, tol)
    with np.errstate(divide='ignore', invalid='ignore'):
        logInner = logScale[1:] + np.log(-np.expm1(logScale[0]
                                                   - logScale[1:]))
    return float(np.max(logTails[1:] + logInner))


def rpositivity_criterion(spec, report, tol=None):
    """
    Evaluates mu([x, inf)) Lambda(x) on x = 2^-4, 2^-3, ... up to the
    truncation cap.

    The verdict is 'R-positive' once the product falls below
    criterionRatio of its running peak, 'criterion-not-satisfied' once
    its relative change stays below plateauRtol for plateauRun
    consecutive doublings (or the product is infinite), and
    'undecided' when the cap is reached first.

    Parameters:
        spec : *DriftSpec*
        report : *ClassificationReport*
            Hypothesis H must hold.
        tol : *Tolerances*, optional

    Returns:
        result : *CriterionResult*
    """
    tol = tol or Tolerances()
    if report.h1 == 'fails' or report.h2 == 'fails':
        raise ValueError('The R-positivity criterion needs hypothesis H '
                         '(H1 %s, H2 %s)' % (report.h1, report.h2))
    if not report.hypothesisH:
        logger.warning('hypothesis H is undecided for %s; evaluating the '
                       'R-positivity criterion anyway', spec.text)

    ladder, supForm = [], []
    peak, previous, run = 0., None, 0
    x = 2. ** -4
    while x <= tol.truncationCap:
        logProduct, status = _log_product(spec, x, tol)
        with np.errstate(over='ignore'):
            product = float(np.exp(logProduct))
        ladder.append((x, product))
        if not np.isfinite(product):
            return CriterionResult('criterion-not-satisfied', np.inf, np.inf,
                                   ladder, supForm, tol)
        supForm.append((x, float(np.exp(_log_sup_form(spec, x, tol)))))
        peak = max(peak, product)
        logger.debug('criterion product at x = %g: %.6g (%s)', x, product,
                     status)

        if product <= tol.criterionRatio * peak:
            return CriterionResult('R-positive', product, peak, ladder,
                                   supForm, tol)
        if previous is not None and \
                abs(product - previous) < tol.plateauRtol * product:
            run += 1
        else:
            run = 0
        if run >= tol.plateauRun:
            return CriterionResult('criterion-not-satisfied', product, peak,
                                   ladder, supForm, tol)
        previous = product
        x *= 2.

    logger.info('R-positivity criterion undecided at x = %g',
                tol.truncationCap)
    return CriterionResult('undecided', ladder[-1][1], peak, ladder, supForm,
                           tol)


##############################
#                            #
#  Principal eigenfunction   #
#                            #
##############################

class RecessiveSolution:
    """
    The solution of the eigen equation that is recessive at infinity,
    shot backwards from *start* with eta/eta' = r+(start).

    Attributes:
        lam : *float*
        start : *float*
        path : *ShootingPath*
        boundaryDefect : *float*
            |sin theta(0)|, the normalized value of eta at 0. Small when
            the recessive solution also satisfies eta(0) = 0.
    """

    def __init__(self, lam, start, path, boundaryDefect):
        self.lam = lam
        self.start = start
        self.path = path
        self.boundaryDefect = boundaryDefect

    def __repr__(self):
        return 'RecessiveSolution(lambda=%.10g, start=%g, defect=%.3g)' % (
            self.lam, self.start, self.boundaryDefect)


def shoot_recessive(spec, lam, start, tol=None):
    """
    Integrates the eigen equation from *start* back to 0, starting on
    the slower of the two exponential modes, eta'/eta = q - sqrt(q^2 -
    2 lambda). Needs q(start) > 0 and q(start)^2 > 2 lambda.
    """
    tol = tol or Tolerances()
    q = float(spec.evaluate(start))
    disc = q * q - 2. * lam
    if q <= 0 or disc <= 0:
        raise ValueError('No recessive mode at x = %g: q = %g, 2 lambda = %g'
                         % (start, q, 2. * lam))
    theta = np.arctan((q + np.sqrt(disc)) / (2. * lam))
    result = integrate_prufer(spec, lam, float(start), [0., theta], 0., tol,
                              terminal=False)
    defect = float(abs(np.sin(result.y[1, -1])))
    path = ShootingPath().appended(float(start), 0., result.sol)
    return RecessiveSolution(lam, float(start), path, defect)


class PrincipalEigenfunction:
    """
    eta_1 for the conditioned process: the forward solve up to
    *matchPoint* and, when the recessive solution passes the boundary
    check, the recessive solution rescaled to agree with it beyond.

    Attributes:
        solution : *EigenSolution*
        recessive : *RecessiveSolution* or None
        usesRecessive : *bool*
        matchPoint : *float*
        horizon : *float*
        firstNode : *float*
            Smallest positive grid node.
    """

    def __init__(self, spec, solution, recessive, matchPoint, tol):
        self.spec = spec
        self.solution = solution
        self.recessive = recessive
        self.matchPoint = matchPoint
        self.usesRecessive = recessive is not None and \
            recessive.boundaryDefect <= tol.boundaryDefect
        self.horizon = solution.horizon
        self.firstNode = float(solution.grid[1])
        if self.usesRecessive:
            self._shift = float(solution.path.log_eta(matchPoint)
                                - recessive.path.log_eta(matchPoint))

    def log_eta(self, y):
        y = np.asarray(y, dtype=float)
        forward = self.solution.path.log_eta(np.minimum(y, self.horizon))
        if not self.usesRecessive:
            return forward
        beyond = self.recessive.path.log_eta(
            np.clip(y, self.matchPoint, self.horizon)) + self._shift
        return np.where(y > self.matchPoint, beyond, forward)

    def cot(self, y):
        """eta_1'/eta_1."""
        y = np.asarray(y, dtype=float)
        forward = self.solution.path.cot_theta(np.minimum(y, self.horizon))
        if not self.usesRecessive:
            return forward
        beyond = self.recessive.path.cot_theta(
            np.clip(y, self.matchPoint, self.horizon))
        return np.where(y > self.matchPoint, beyond, forward)


def principal_eigenfunction(spec, principal, tol=None):
    """
    Shoots the recessive solution back from the horizon of *principal*
    and matches it at min(1, horizon/2).
    """
    tol = tol or Tolerances()
    try:
        recessive = shoot_recessive(spec, principal.lam, principal.horizon,
                                    tol)
    except ValueError as error:
        logger.info('no recessive solution: %s', error)
        recessive = None
    matchPoint = min(1., 0.5 * principal.horizon)
    eigenfunction = PrincipalEigenfunction(spec, principal, recessive,
                                           matchPoint, tol)
    if recessive is not None:
        logger.info('recessive boundary defect %.3g (tolerance %.1g)',
                    recessive.boundaryDefect, tol.boundaryDefect)
    return eigenfunction


##############################
#                            #
#  phi and Y's speed measure #
#                            #
##############################

def _near_zero_drift(spec, y):
    return -1. / y + spec.evaluate(y) - spec.evaluate(0.)


def conditioned_drift(spec, principal, y, tol=None):
    """
    Returns phi(y) = q(y) - eta'(y)/eta(y) from the forward solve
    *principal*. Below the first positive grid node the expansion
    phi(y) = -1/y + q(y) - q(0) + O(y) is used.

    Parameters:
        spec : *DriftSpec*
        principal : *EigenSolution*
            Solve at a lambda inside the lambda_c bracket.
        y : *float* or *array*
            0 < y <= principal.horizon.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError('phi is defined for y > 0 only')
    if np.any(y > principal.horizon):
        raise ExtrapolationError('phi queried at y = %g beyond the solved '
                                 'range %g' % (float(np.max(y)),
                                               principal.horizon))
    firstNode = principal.grid[1]
    with np.errstate(divide='ignore'):
        values = np.where(y < firstNode, _near_zero_drift(spec, y),
                          spec.evaluate(y) - principal.path.cot_theta(
                              np.maximum(y, firstNode)))
    return values if values.ndim else float(values)


class SpeedMass:
    """
    Total mass of the speed measure of Y,
    m(dx) = 2 e^{Q(c)}/eta_1(c)^2 eta_1(x)^2 e^{-Q(x)} dx.

    Attributes:
        status : *str*
            'converged', 'diverged' (eta_1 not square integrable against
            mu) or 'undecided'.
        value : *float*
            +inf when diverged.
        partial : *float*
            Mass of [0, horizon].
        tail : *float*
        boundaryDefect : *float* or None
        referencePoint : *float*
    """

    def __init__(self, status, value, partial, tail, boundaryDefect,
                 referencePoint):
        self.status = status
        self.value = value
        self.partial = partial
        self.tail = tail
        self.boundaryDefect = boundaryDefect
        self.referencePoint = referencePoint

    @property
    def finite(self):
        return self.status == 'converged'

    def __repr__(self):
        return 'SpeedMass(%s, value=%.10g, c=%g)' % (self.status, self.value,
                                                   self.referencePoint)


def y_speed_mass(spec, principal, c, tol=None, eigenfunction=None):
    """
    Returns the SpeedMass of Y for the reference point *c*. The mass is
    finite exactly when the recessive solution satisfies the boundary
    condition at 0, in which case it is integrated on the matched
    eigenfunction and closed by an exponential envelope.
    """
    tol = tol or Tolerances()
    if eigenfunction is None:
        eigenfunction = principal_eigenfunction(spec, principal, tol)
    if not eigenfunction.firstNode < c < eigenfunction.horizon:
        raise ValueError('Reference point %g outside (%g, %g)'
                         % (c, eigenfunction.firstNode, eigenfunction.horizon))

    X = eigenfunction.horizon
    logPrefactor = np.log(2.) + float(big_q(spec, c, tol)) \
        - 2. * float(eigenfunction.log_eta(c))

    def logf(x):
        with np.errstate(divide='ignore', invalid='ignore'):
            values = logPrefactor + 2. * eigenfunction.log_eta(x) \
                - big_q(spec, x, tol)
        return np.where(x > 0, values, -np.inf)

    edges = np.unique(np.concatenate([principal.grid, [c]]))
    edges = edges[edges <= X]
    with np.errstate(over='ignore'):
        partial = float(np.exp(np.logaddexp.reduce(
            log_integrate_panels(logf, edges, tol))))

    recessive = eigenfunction.recessive
    defect = None if recessive is None else recessive.boundaryDefect
    if recessive is None:
        return SpeedMass('undecided', partial, partial, np.nan, defect, c)
    if not eigenfunction.usesRecessive:
        logger.info('eta_1 is not square integrable against mu (boundary '
                    'defect %.3g)', defect)
        return SpeedMass('diverged', np.inf, partial, np.inf, defect, c)

    rate = 2. * float(spec.evaluate(X) - eigenfunction.cot(X))
    with np.errstate(over='ignore'):
        tail = float(np.exp(logf(np.array(X)))) / rate if rate > 0 \
            else np.inf
    status = 'converged' if tail <= tol.qsdTail * (partial + tail) \
        else 'undecided'
    return SpeedMass(status, partial + tail, partial, tail, defect, c)


##############################
#                            #
#  ConditionedModel          #
#                            #
##############################

class ConditionedModel:
    """
    The conditioned diffusion Y on the grid of the principal solve.

    Attributes:
        lam : *float*
        referencePoint : *float*
            c > 0, base point of Q^Y and Lambda^Y.
        eigenfunction : *PrincipalEigenfunction*
        grid : *numpy.ndarray*
            Principal grid with c inserted.
        qy : *LogGridFunction*
            Q^Y(y) = Q(y) - Q(c) - 2 log(eta_1(y)/eta_1(c)).
        lambdaY : *LogGridFunction*
            Lambda^Y(y) = int_c^y e^{Q^Y}, zero at c, -inf at 0.
        mTotal : *SpeedMass*
        psiTable : *numpy.ndarray*
            phi(y) + 1/y on the grid, used to evaluate phi off the grid.
        firstNode : *float*
        horizon : *float*
    """

    def __init__(self, spec, eigenfunction, referencePoint, tol):
        self.spec = spec
        self.eigenfunction = eigenfunction
        self.lam = eigenfunction.solution.lam
        self.referencePoint = c = referencePoint
        self.firstNode = eigenfunction.firstNode
        self.horizon = eigenfunction.horizon
        self.tol = tol

        grid = np.unique(np.concatenate([eigenfunction.solution.grid, [c]]))
        self.grid = grid
        inner = grid[1:]
        logEta = eigenfunction.log_eta(inner)
        logEtaC = float(eigenfunction.log_eta(c))
        qC = float(big_q(spec, c, tol))
        qyInner = big_q(spec, inner, tol) - qC - 2. * (logEta - logEtaC)
        self.qy = LogGridFunction.from_values(grid,
                                              np.concatenate([[np.inf],
                                                              qyInner]))

        def logIntegrand(z):
            with np.errstate(divide='ignore', invalid='ignore'):
                return big_q(spec, z, tol) - qC \
                    - 2. * (eigenfunction.log_eta(z) - logEtaC)

        at = int(np.searchsorted(grid, c))
        logs = np.full(grid.size, -np.inf)
        signs = np.zeros(grid.size)
        above = grid[at:]
        if above.size > 1:
            logs[at:] = log_cumulative_integral(logIntegrand, above, tol)
            signs[at + 1:] = 1.
        below = grid[1:at + 1]
        if below.size > 1:
            logs[1:at] = log_reverse_cumulative(logIntegrand, below,
                                                tol=tol)[:-1]
            signs[1:at] = -1.
        logs[0], signs[0] = np.inf, -1.
        self.lambdaY = LogGridFunction(grid, signs, logs)

        self.mTotal = y_speed_mass(spec, eigenfunction.solution, c, tol,
                                   eigenfunction)
        self.psiTable = self.drift(inner) + 1. / inner
        self.psiTable = np.concatenate([[self.psiTable[0]], self.psiTable])

    def drift(self, y):
        """phi(y) = q(y) - eta_1'(y)/eta_1(y) for 0 < y <= horizon."""
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise ValueError('phi is defined for y > 0 only')
        if np.any(y > self.horizon):
            raise ExtrapolationError('phi queried at y = %g beyond %g'
                                     % (float(np.max(y)), self.horizon))
        with np.errstate(divide='ignore'):
            values = np.where(y < self.firstNode,
                              _near_zero_drift(self.spec, y),
                              self.spec.evaluate(y) - self.eigenfunction.cot(
                                  np.maximum(y, self.firstNode)))
        return values if values.ndim else float(values)

    def table_drift(self, y):
        """
        phi from the psi table; held constant in psi beyond the horizon.
        """
        return np.interp(y, self.grid, self.psiTable) - 1. / y

    def __repr__(self):
        return 'ConditionedModel(lambda=%.10g, c=%g, m=%r)' % (
            self.lam, self.referencePoint, self.mTotal)


def build_conditioned(spec, principal, referencePoint=None, dist=None,
                      tol=None):
    """
    Builds the ConditionedModel from a principal solve at a lambda in
    the lambda_c bracket. The solve is extended to conditionedHorizon.
    The reference point defaults to the median of *dist* (the minimal
    QSD, built from *principal* when not given).
    """
    tol = tol or Tolerances()
    if has_sign_change(principal):
        raise ValueError('The principal solve changes sign at x = %g'
                         % principal.firstSignChange)
    principal = extend_solution(principal, spec, tol.conditionedHorizon, tol)
    if has_sign_change(principal):
        raise ValueError('The principal solve changes sign at x = %g'
                         % principal.firstSignChange)
    if referencePoint is None:
        if dist is None:
            dist = qsd_from_solution(spec, principal, tol)
        referencePoint = float(qsd_quantile(dist, 0.5))
    eigenfunction = principal_eigenfunction(spec, principal, tol)
    if not eigenfunction.firstNode < referencePoint < eigenfunction.horizon:
        raise ValueError('Reference point %g outside (%g, %g)'
                         % (referencePoint, eigenfunction.firstNode,
                            eigenfunction.horizon))
    model = ConditionedModel(spec, eigenfunction, referencePoint, tol)
    logger.info('conditioned model: %r', model)
    return model

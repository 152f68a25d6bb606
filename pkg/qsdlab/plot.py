#! /usr/bin/env python
#

""" Static SVG plots of QSD densities, survival curves, the
R-positivity criterion ladder and the occupation of Y. """

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np

from .qsd import qsd_quantile

matplotlib.rcParams['svg.hashsalt'] = 'qsdlab'


def _save(fig, savePath, name):
    fig.savefig(savePath + '/' + name, format='svg', metadata={'Date': None})
    plt.close(fig)


def density_plot(distList,
                 closedForm=None,
                 yMax=None,
                 save=True,
                 savePath='.'):
    """
    Overlays the densities of a ladder of QSDs, with the closed-form
    minimal QSD dashed when one is given. Saved as density_plot.svg.

    Parameters:
        distList : *list* of *qsd.QsdDistribution*
        closedForm : *callable*, optional
            Closed-form density of the minimal QSD.
        yMax : *float*, optional
            Right end of the plot. Defaults to the largest 0.999
            quantile of the ladder, capped at the grid ends.
        save : *bool*
            Saves the produced plot. If set to False, no plot will be
            saved to disk.
        savePath : *str*
            Disk path to which the plot will be saved.
    """
    if yMax is None:
        yMax = max(min(qsd_quantile(dist, 0.999), dist.supportTruncation)
                   for dist in distList)
    y = np.linspace(0., yMax, 400)

    fig, ax = plt.subplots(figsize=(8, 5))
    for dist in distList:
        ax.plot(y, dist.pdf(y), label=r'$\lambda$ = %.4g' % dist.lam)
    if closedForm is not None:
        ax.plot(y, closedForm(y), 'k--', label='closed form')
    ax.set_xlabel('y')
    ax.set_ylabel('density')
    ax.set_title('Quasi-stationary densities')
    ax.legend()

    if save:
        _save(fig, savePath, 'density_plot.svg')


def survival_plot(curve,
                  estimate=None,
                  closedForm=None,
                  save=True,
                  savePath='.'):
    """
    Log survival of a simulated ensemble with the fitted decay over its
    window. Saved as survival_plot.svg.

    Parameters:
        curve : *montecarlo.SurvivalCurve*
        estimate : *montecarlo.DecayEstimate*, optional
        closedForm : *callable*, optional
            Closed-form survival function of t.
        save : *bool*
        savePath : *str*
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    positive = curve.fraction > 0
    ax.semilogy(curve.times[positive], curve.fraction[positive], 'b-',
                label='simulated')
    if closedForm is not None:
        ax.semilogy(curve.times, closedForm(curve.times), 'k--',
                    label='closed form')
    if estimate is not None:
        lo, hi = estimate.window
        t = np.linspace(lo, hi, 50)
        start = np.interp(lo, curve.times, curve.fraction)
        ax.semilogy(t, start * np.exp(-estimate.rate * (t - lo)), 'r:',
                    label=r'slope $\zeta$ = %.4g' % estimate.rate)
    ax.set_xlabel('t')
    ax.set_ylabel(r'P($\tau$ > t)')
    ax.set_title('Survival')
    ax.legend()

    if save:
        _save(fig, savePath, 'survival_plot.svg')


def criterion_plot(result,
                   save=True,
                   savePath='.'):
    """
    The product mu([x, inf)) Lambda(x) against x on log axes, with its
    sup form. Saved as criterion_plot.svg.

    Parameters:
        result : *conditioned.CriterionResult*
        save : *bool*
        savePath : *str*
    """
    rows = np.array(result.rows(), dtype=float)
    fig, ax = plt.subplots(figsize=(8, 5))
    finite = np.isfinite(rows[:, 1]) & (rows[:, 1] > 0)
    ax.loglog(rows[finite, 0], rows[finite, 1], 'bo-', label='product')
    sup = np.isfinite(rows[:, 2]) & (rows[:, 2] > 0)
    ax.loglog(rows[sup, 0], rows[sup, 2], 'g^--', label='sup form')
    ax.set_xlabel('x')
    ax.set_ylabel(r'$\mu([x,\infty))\,\Lambda(x)$')
    ax.set_title('R-positivity criterion: %s' % result.verdict)
    ax.legend()

    if save:
        _save(fig, savePath, 'criterion_plot.svg')


def occupation_plot(summary,
                    save=True,
                    savePath='.'):
    """
    Time-averaged occupation of the conditioned process. Saved as
    occupation_plot.svg.

    Parameters:
        summary : *montecarlo.ConditionedSummary*
        save : *bool*
        savePath : *str*
    """
    fig, ax = plt.subplots(figsize=(8, 5))
    widths = np.diff(summary.edges)
    ax.bar(summary.edges[:-1], summary.occupation / widths, width=widths,
           align='edge', alpha=0.6)
    ax.set_xlabel('y')
    ax.set_ylabel('occupation density')
    ax.set_title('Conditioned process (window TV %.3g, floor %.3g)'
                 % (summary.windowDistance, summary.noiseFloor))

    if save:
        _save(fig, savePath, 'occupation_plot.svg')

#! /usr/bin/env python
#

""" Functions sampled on a grid and stored as (sign, log-magnitude)
pairs, so that values like e^{Q} survive beyond double range."""

import numpy as np


class ExtrapolationError(ValueError):
    pass


class LogGridFunction:
    """
    A real function sampled on a strictly increasing grid starting at 0.
    Each value is kept as a sign in {-1, 0, +1} and a log-magnitude;
    a zero value carries the -inf sentinel and an infinite one +inf.

    Between two nodes of the same nonzero sign the log-magnitude is
    interpolated linearly. Otherwise the two values are rescaled to a
    common magnitude and interpolated linearly as reals.

    Attributes:
        grid : *numpy.ndarray*
        signs : *numpy.ndarray*
        logMagnitudes : *numpy.ndarray*

    Examples:
        1) From plain values:
            f = LogGridFunction.from_values([0., 1., 2.], [0., 1., 4.])

        2) From logarithms of huge positive values:
            f = LogGridFunction([0., 30.], [1, 1], [0., 900.])
    """

    def __init__(self, grid, signs, logMagnitudes):
        grid = np.asarray(grid, dtype=float)
        signs = np.asarray(signs, dtype=float)
        logMagnitudes = np.asarray(logMagnitudes, dtype=float).copy()

        if grid.ndim != 1 or grid.size < 2:
            raise ValueError('A grid needs at least two nodes')
        if signs.shape != grid.shape or logMagnitudes.shape != grid.shape:
            raise ValueError('grid, signs and logMagnitudes must have the '
                             'same length')
        if grid[0] != 0.:
            raise ValueError('The first grid node must be exactly 0')
        if not np.all(np.diff(grid) > 0):
            raise ValueError('The grid must be strictly increasing')
        if not np.all(np.isin(signs, (-1., 0., 1.))):
            raise ValueError('Signs must be -1, 0 or +1')
        if np.any(np.isnan(logMagnitudes)):
            raise ValueError('Log-magnitudes must not be NaN')

        signs = np.where(np.isneginf(logMagnitudes), 0., signs)
        logMagnitudes[signs == 0] = -np.inf
        self.grid = grid
        self.signs = signs
        self.logMagnitudes = logMagnitudes

    @classmethod
    def from_values(cls, grid, values):
        values = np.asarray(values, dtype=float)
        with np.errstate(divide='ignore'):
            return cls(grid, np.sign(values), np.log(np.abs(values)))

    def values(self):
        """
        Returns the node values as reals (may overflow to +-inf).
        """
        with np.errstate(over='ignore'):
            return self.signs * np.exp(self.logMagnitudes)

    def interpolate(self, x):
        """
        Returns (signs, logMagnitudes) at the query points *x*.
        Queries below 0 or beyond the last node raise.
        """
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise ValueError('LogGridFunction queried at negative x')
        if np.any(x > self.grid[-1]):
            raise ExtrapolationError('LogGridFunction queried at x = %r '
                                     'beyond its last node %r'
                                     % (float(np.max(x)), self.grid[-1]))

        i = np.clip(np.searchsorted(self.grid, x, side='right') - 1,
                    0, self.grid.size - 2)
        x0, x1 = self.grid[i], self.grid[i + 1]
        w = (x - x0) / (x1 - x0)
        s0, s1 = self.signs[i], self.signs[i + 1]
        l0, l1 = self.logMagnitudes[i], self.logMagnitudes[i + 1]

        with np.errstate(all='ignore'):
            same = (s0 == s1) & (s0 != 0)
            logLinear = np.where(w == 0, l0,
                                 np.where(w == 1, l1, l0 + w * (l1 - l0)))

            shift = np.maximum(np.where(s0 != 0, l0, -np.inf),
                               np.where(s1 != 0, l1, -np.inf))
            shift = np.where(np.isfinite(shift), shift, 0.)
            mixed = ((1 - w) * s0 * np.exp(l0 - shift)
                     + w * s1 * np.exp(l1 - shift))
            mixedLog = np.log(np.abs(mixed)) + shift

        signs = np.where(same, s0, np.sign(mixed))
        logs = np.where(same, logLinear, mixedLog)
        logs = np.where(signs == 0, -np.inf, logs)
        return signs, logs

    def __call__(self, x):
        signs, logs = self.interpolate(x)
        with np.errstate(over='ignore'):
            return signs * np.exp(logs)

    def scaled(self, logFactor):
        """
        Returns this function multiplied pointwise by e^{logFactor}
        (scalar or one value per node).
        """
        return LogGridFunction(self.grid, self.signs,
                               self.logMagnitudes + logFactor)

    def __repr__(self):
        return 'LogGridFunction(%d nodes on [0, %g])' % (self.grid.size,
                                                         self.grid[-1])

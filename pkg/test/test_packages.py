import numpy as np


def test_imports():
    import os
    import platform
    import sys
    import pytest
    import numpy
    import scipy
    import matplotlib
    import qsdlab


def test_scipy_features():
    from scipy.integrate import solve_ivp
    from scipy.interpolate import PchipInterpolator
    from scipy.special import logsumexp
    from scipy.stats import kstwo
    assert np.isclose(logsumexp([0., 0.]), np.log(2.))
    assert 0. < kstwo.ppf(0.99, 100) < 1.


def test_jumped_philox():
    first = np.random.Generator(np.random.Philox(7).jumped(1)).random(4)
    second = np.random.Generator(np.random.Philox(7).jumped(1)).random(4)
    other = np.random.Generator(np.random.Philox(7).jumped(2)).random(4)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, other)


def test_svg_backend():
    import matplotlib
    import qsdlab.plot
    assert matplotlib.get_backend().lower() == 'agg'

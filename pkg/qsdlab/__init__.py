#! /usr/bin/env python
#

from . import config
from . import drift_expr
from . import measures
from . import eigen
from . import qsd
from . import conditioned
from . import montecarlo
from . import plot

__license__ = "MIT"
__version__ = "1.0"

#! /usr/bin/env python
#

""" Parsing, validating, evaluating and formatting drift functions q(x)."""

import logging
import re

import numpy as np

from .config import Tolerances

logger = logging.getLogger(__name__)


class DriftSyntaxError(ValueError):
    """Malformed drift text. *position* is the offending character index."""

    def __init__(self, message, text, position):
        self.text = text
        self.position = position
        super().__init__('%s at index %d of %r' % (message, position, text))


class UnknownIdentifierError(DriftSyntaxError):
    pass


class DriftEvaluationError(ValueError):
    """The drift is undefined or overflows at some evaluation point."""
    pass


FUNCTIONS = {'exp': np.exp, 'log': np.log, 'sqrt': np.sqrt}
CONSTANTS = {'pi': np.pi}

NUMBER = re.compile(r'(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?')
IDENTIFIER = re.compile(r'[A-Za-z_][A-Za-z_0-9]*')


##############################
#                            #
#  Expression tree           #
#                            #
##############################

class Node:
    """
    One node of a drift expression tree.

    Attributes:
        op : *str*
            'num', 'x', 'neg', '+', '-', '*', '/', '^' or a function name.
        args : *tuple* of *Node*
        value : *float*
            Literal value of a 'num' node.
    """

    def __init__(self, op, args=(), value=None):
        self.op = op
        self.args = tuple(args)
        self.value = value

    def evaluate(self, x):
        if self.op == 'num':
            return np.full_like(x, self.value)
        if self.op == 'x':
            return x
        values = [arg.evaluate(x) for arg in self.args]
        if self.op == 'neg':
            return -values[0]
        if self.op == '+':
            return values[0] + values[1]
        if self.op == '-':
            return values[0] - values[1]
        if self.op == '*':
            return values[0] * values[1]
        if self.op == '/':
            return values[0] / values[1]
        if self.op == '^':
            return np.power(values[0], values[1])
        return FUNCTIONS[self.op](values[0])

    def format(self):
        if self.op == 'num':
            return repr(float(self.value))
        if self.op == 'x':
            return 'x'
        if self.op == 'neg':
            return '(-%s)' % self.args[0].format()
        if self.op in FUNCTIONS:
            return '%s(%s)' % (self.op, self.args[0].format())
        return '(%s%s%s)' % (self.args[0].format(), self.op,
                             self.args[1].format())


class Parser:
    """
    Recursive-descent parser for the drift grammar

        expr  := term (('+' | '-') term)*
        term  := unary (('*' | '/') unary)*
        unary := ('-' | '+') unary | power
        power := atom ('^' unary)?
        atom  := number | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'

    '^' is right associative and binds tighter than unary minus, so
    "-x^2" is -(x^2) and "2^-x" is 2^(-x).
    """

    def __init__(self, text):
        self.text = text
        self.index = 0

    def parse(self):
        node = self.parse_expression()
        self.skip_whitespace()
        if self.has_next():
            raise DriftSyntaxError('Unexpected character %r' % self.peek(),
                                   self.text, self.index)
        return node

    def peek(self):
        return self.text[self.index:self.index + 1]

    def has_next(self):
        return self.index < len(self.text)

    def skip_whitespace(self):
        while self.has_next() and self.peek() in ' \t\n\r':
            self.index += 1

    def parse_expression(self):
        node = self.parse_term()
        while True:
            self.skip_whitespace()
            char = self.peek()
            if char in ('+', '-'):
                self.index += 1
                node = Node(char, (node, self.parse_term()))
            else:
                return node

    def parse_term(self):
        node = self.parse_unary()
        while True:
            self.skip_whitespace()
            char = self.peek()
            if char in ('*', '/'):
                self.index += 1
                node = Node(char, (node, self.parse_unary()))
            else:
                return node

    def parse_unary(self):
        self.skip_whitespace()
        char = self.peek()
        if char == '-':
            self.index += 1
            return Node('neg', (self.parse_unary(),))
        if char == '+':
            self.index += 1
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        base = self.parse_atom()
        self.skip_whitespace()
        if self.peek() == '^':
            self.index += 1
            return Node('^', (base, self.parse_unary()))
        return base

    def parse_atom(self):
        self.skip_whitespace()
        start = self.index
        char = self.peek()
        if not char:
            raise DriftSyntaxError('Unexpected end of expression',
                                   self.text, start)

        if char == '(':
            self.index += 1
            node = self.parse_expression()
            self.expect(')')
            return node

        match = NUMBER.match(self.text, self.index)
        if match:
            self.index = match.end()
            return Node('num', value=float(match.group(0)))

        match = IDENTIFIER.match(self.text, self.index)
        if match:
            name = match.group(0)
            self.index = match.end()
            if name == 'x':
                return Node('x')
            if name in CONSTANTS:
                return Node('num', value=CONSTANTS[name])
            if name in FUNCTIONS:
                self.skip_whitespace()
                if self.peek() != '(':
                    raise DriftSyntaxError(
                        "Expected '(' after function %s" % name,
                        self.text, self.index)
                self.index += 1
                argument = self.parse_expression()
                self.expect(')')
                return Node(name, (argument,))
            raise UnknownIdentifierError('Unknown identifier %r' % name,
                                         self.text, start)

        raise DriftSyntaxError('Unexpected character %r' % char,
                               self.text, start)

    def expect(self, char):
        self.skip_whitespace()
        if self.peek() != char:
            raise DriftSyntaxError('Expected %r' % char, self.text,
                                   self.index)
        self.index += 1


##############################
#                            #
#  DriftSpec                 #
#                            #
##############################

class DriftSpec:
    """
    Validated representation of the drift q(x) of dX = dB - q(X)dt.
    Immutable after construction, so one spec may be shared by
    concurrent workers.

    Attributes:
        kind : *str*
            'constant' (q(x) = a), 'linear' (q(x) = a*x) or 'expression'.
        a : *float* or None
            Parameter of the builtin kinds.
        ast : *Node* or None
            Expression tree of the 'expression' kind.
        text : *str*
            Source text the spec was parsed from.
    """

    def __init__(self, kind, a=None, ast=None, text=None):
        if kind not in ('constant', 'linear', 'expression'):
            raise ValueError('Unknown drift kind: %s' % kind)
        if kind == 'expression' and ast is None:
            raise ValueError('An expression drift needs an expression tree')
        if kind != 'expression' and a is None:
            raise ValueError('A builtin drift needs its parameter a')
        self.kind = kind
        self.a = None if a is None else float(a)
        self.ast = ast
        self.text = text if text is not None else format_drift(self)

    @property
    def builtin(self):
        return self.kind != 'expression'

    def evaluate(self, x, checked=True):
        """
        Vectorized q(x). With *checked* a nonfinite value raises
        DriftEvaluationError, otherwise it is returned as is.
        """
        xs = np.asarray(x, dtype=float)
        if self.kind == 'constant':
            values = np.full_like(xs, self.a)
        elif self.kind == 'linear':
            values = self.a * xs
        else:
            with np.errstate(all='ignore'):
                values = np.asarray(self.ast.evaluate(xs), dtype=float)
        if checked and not np.all(np.isfinite(values)):
            bad = xs[~np.isfinite(values)] if xs.ndim else xs
            raise DriftEvaluationError(
                'Drift %s is undefined or overflows at x = %r'
                % (self.text, float(np.ravel(bad)[0])))
        return values if xs.ndim else float(values)

    def antiderivative(self, x):
        """
        Closed-form Q(x) = int_0^x 2q for the builtin kinds, None for
        expressions.
        """
        if self.kind == 'constant':
            return 2. * self.a * np.asarray(x, dtype=float)
        if self.kind == 'linear':
            return self.a * np.asarray(x, dtype=float) ** 2
        return None

    def is_zero(self):
        """True for the Brownian negative control q = 0."""
        if self.builtin:
            return self.a == 0.
        grid = np.linspace(0., 1., 17)
        return bool(np.all(self.evaluate(grid, checked=False) == 0.))

    def __call__(self, x):
        return self.evaluate(x)

    def __repr__(self):
        return 'DriftSpec(%s)' % self.text


def parse_drift(text, xCap=None, tol=None):
    """
    Parses a drift string. Builtin shorthands are "const:a" and
    "linear:a"; anything else is an expression in x.

    Parameters:
        text : *str*
            Drift text, e.g. "const:1.0", "linear:2.5", "x*x + 1".
        xCap : *float*, optional
            Upper end of the validation grid. Defaults to tol.xCap.
        tol : *Tolerances*, optional

    Returns:
        spec : *DriftSpec*

    Raises DriftSyntaxError (with position), UnknownIdentifierError, or
    DriftEvaluationError when q is undefined somewhere on [0, xCap].
    """
    tol = tol or Tolerances()
    xCap = tol.xCap if xCap is None else xCap
    if not isinstance(text, str) or not text.strip():
        raise DriftSyntaxError('Empty drift', str(text), 0)
    stripped = text.strip()

    for prefix, kind in (('const:', 'constant'), ('linear:', 'linear')):
        if stripped.startswith(prefix):
            parameter = stripped[len(prefix):].strip()
            try:
                a = float(parameter)
            except ValueError:
                raise DriftSyntaxError('Malformed parameter %r' % parameter,
                                       text, text.index(prefix) + len(prefix))
            if not np.isfinite(a):
                raise DriftSyntaxError('Parameter must be finite', text,
                                       text.index(prefix) + len(prefix))
            return DriftSpec(kind, a=a, text=stripped)

    spec = DriftSpec('expression', ast=Parser(text).parse(), text=stripped)
    grid = np.concatenate([[0.], np.geomspace(2. ** -20, 1., 41),
                           np.linspace(0., xCap, 1025)])
    spec.evaluate(np.unique(grid))
    logger.debug('parsed drift %s', spec.text)
    return spec


def eval_drift(spec, x):
    """
    Returns q(x) for x >= 0 (scalar or array).
    """
    if np.any(np.asarray(x) < 0):
        raise ValueError('The drift is defined on x >= 0 only')
    return spec.evaluate(x)


def format_drift(spec):
    """
    Formats a spec as text that parse_drift maps back to a spec with
    identical evaluations. Expressions are fully parenthesized.
    """
    if spec.kind == 'constant':
        return 'const:%r' % spec.a
    if spec.kind == 'linear':
        return 'linear:%r' % spec.a
    return spec.ast.format()


##############################
#                            #
#  Smoothness check          #
#                            #
##############################

class SmoothnessVerdict:
    """
    Advisory verdict on q being continuously differentiable.

    Attributes:
        passed : *bool*
        worstEstimate : *float*
            Largest normalized jump seen by either grid.
        location : *float*
            Abscissa of the worst jump.
        threshold : *float*
    """

    def __init__(self, passed, worstEstimate, location, threshold):
        self.passed = passed
        self.worstEstimate = worstEstimate
        self.location = location
        self.threshold = threshold

    def __repr__(self):
        return ('SmoothnessVerdict(passed=%s, worst=%.3g at x=%.3g)'
                % (self.passed, self.worstEstimate, self.location))


def check_smoothness(spec, xCap=None, tol=None):
    """
    Tests q for a continuous derivative. Near 0 the central difference
    quotients at x = 2^-k (k = 4..20, step x/2) must stay bounded
    relative to the coarsest one; on a uniform grid up to *xCap* no
    jump between adjacent difference quotients may exceed the
    neighbouring jumps by the smoothness factor.

    A finite grid cannot certify smoothness: the verdict is advisory.
    """
    tol = tol or Tolerances()
    xCap = tol.xCap if xCap is None else xCap
    if xCap <= 0:
        raise ValueError('xCap must be positive')
    threshold = tol.smoothnessJump

    # near-zero ladder
    ladder = 2. ** -np.arange(4, 21)
    quotients = ((spec.evaluate(1.5 * ladder, checked=False)
                  - spec.evaluate(0.5 * ladder, checked=False)) / ladder)
    with np.errstate(invalid='ignore'):
        ladderScore = np.abs(quotients) / (1. + abs(quotients[0]))
    ladderScore = np.where(np.isfinite(ladderScore), ladderScore, np.inf)
    iLadder = int(np.argmax(ladderScore))
    worst, location = float(ladderScore[iLadder]), float(ladder[iLadder])

    # uniform grid kinks
    grid = np.linspace(0., xCap, 4097)
    values = spec.evaluate(grid, checked=False)
    slopes = np.diff(values) / np.diff(grid)
    jumps = np.abs(np.diff(slopes))
    if jumps.size >= 3:
        neighbours = np.maximum(np.concatenate([[0.], jumps[:-1]]),
                                np.concatenate([jumps[1:], [0.]]))
        floor = 1e-8 * (1. + np.abs(slopes[:-1]))
        with np.errstate(invalid='ignore'):
            score = jumps / (neighbours + floor)
        score = np.where(np.isfinite(score), score, np.inf)
        iGrid = int(np.argmax(score))
        if score[iGrid] > worst:
            worst, location = float(score[iGrid]), float(grid[iGrid + 1])

    passed = worst <= threshold
    if not passed:
        logger.warning('drift %s failed the smoothness check: jump %.3g at '
                       'x = %.3g exceeds %.3g', spec.text, worst, location,
                       threshold)
    return SmoothnessVerdict(passed, worst, location, threshold)

#! /usr/bin/env python
#

""" Text report and CSV exports. Floats are written with 17
significant digits so that reruns compare byte for byte. """

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

FLOAT = '%.17g'


def qsd_filename(lam):
    return 'qsd_%.6g.csv' % lam


def _write_table(path, header, rows, fmt):
    np.savetxt(path, np.asarray(rows, dtype=float).reshape(-1, len(fmt)),
               fmt=fmt, delimiter=',', header=header, comments='')
    logger.debug('wrote %s', path)


def write_classification_csv(report, path):
    """quantity,status,value,error_bound rows of a ClassificationReport."""
    with open(path, 'w') as f:
        f.write('quantity,status,value,error_bound\n')
        for quantity, status, value, errorBound in report.rows():
            f.write('%s,%s,%s,%s\n' % (quantity, status, FLOAT % value,
                                       FLOAT % errorBound))
    logger.debug('wrote %s', path)


def write_qsd_csv(dist, path):
    _write_table(path, 'y,density,cdf', dist.table(), [FLOAT] * 3)


def write_survival_csv(curve, path):
    _write_table(path, 't,survivors,fraction', curve.rows(),
                 [FLOAT, '%d', FLOAT])


def write_snapshots_csv(ensemble, path):
    _write_table(path, 't,y', ensemble.snapshot_rows(), [FLOAT] * 2)


def write_criterion_csv(result, path):
    _write_table(path, 'x,product,sup_form', result.rows(), [FLOAT] * 3)


class Report:
    """
    Lines of report.txt. Every numeric verdict names the tolerance it
    was judged against.

    Attributes:
        lines : *list* of *str*
        undecided : *list* of *str*
            Names of verdicts left undecided.
        failures : *list* of *str*
            Names of failed checks.
    """

    def __init__(self, title):
        self.lines = [title, '=' * len(title)]
        self.undecided = []
        self.failures = []

    def section(self, name):
        self.lines += ['', '[%s]' % name]

    def note(self, text):
        self.lines.append(text)

    def verdict(self, name, status, detail=''):
        if status == 'undecided':
            self.undecided.append(name)
        self.lines.append('%s: %s%s' % (name, status,
                                        ' (' + detail + ')' if detail else ''))

    def check(self, name, passed, measured, tolerance):
        """
        One pass/fail line; *passed* None marks a skipped check.
        """
        if passed is None:
            label = 'SKIP'
        elif passed:
            label = 'PASS'
        else:
            label = 'FAIL'
            self.failures.append(name)
        self.lines.append('%-28s %s  %s  [%s]' % (name, label, measured,
                                                  tolerance))

    def text(self):
        return '\n'.join(self.lines) + '\n'

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            f.write(self.text())
        logger.info('wrote %s', path)


def ensure_dirs(outputDir):
    os.makedirs(os.path.join(outputDir, 'plots'), exist_ok=True)

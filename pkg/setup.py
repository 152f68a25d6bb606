#! /usr/bin/env python
#

DESCRIPTION = 'Quasi-stationary distributions of one-dimensional diffusions killed at 0'
DISTNAME = 'qsdlab'
LICENSE = 'MIT License'
import qsdlab
VERSION = qsdlab.__version__

from setuptools import setup

if __name__ == "__main__":

    setup(name=DISTNAME,
          description=DESCRIPTION,
          long_description=open('README.md').read(),
          license=LICENSE,
          version=VERSION,
          install_requires=['numpy', 'scipy', 'matplotlib'],
          setup_requires=['pytest-runner'],
          tests_require=['pytest'],
          packages=['qsdlab'],
          entry_points={'console_scripts': ['qsdlab=qsdlab.cli:main']},
          classifiers=[
              'Intended Audience :: Science/Research',
              'Programming Language :: Python :: 3',
              'License :: OSI Approved :: MIT License',
              'Topic :: Scientific/Engineering :: Mathematics',
              'Operating System :: POSIX',
              'Operating System :: Unix',
              'Operating System :: MacOS'],
      )

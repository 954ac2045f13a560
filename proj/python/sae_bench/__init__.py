"""Fay-Herriot benchmarked empirical Bayes estimation with analytic and
bootstrap MSE estimators."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

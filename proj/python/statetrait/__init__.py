"""State/trait profiling, variance decomposition and persona-sensitivity audits."""

from ._statetrait import *  # noqa: F401,F403
from ._statetrait import __doc__, version

__version__ = version()

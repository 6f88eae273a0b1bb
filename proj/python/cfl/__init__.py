"""Structural and potential-outcome counterfactuals on a shared probability space.

Thin wrapper over the compiled extension; see the project README for the
model format and the scenario registry.
"""

from cfl._cfl import *  # noqa: F401,F403
from cfl._cfl import __doc__  # noqa: F401

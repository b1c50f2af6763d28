"""reducerdyn: planar contact dynamics for precision reducers.

Explicit tooth/pin/bearing contact geometry, penalty contact with
multi-stage screening, generalized-alpha time integration, hysteresis
metric extraction (torsional stiffness, lost motion, backlash) and
geometric-error sensitivity studies.
"""

from .exceptions import ReducerDynError

__all__ = ["ReducerDynError"]
__version__ = "0.1.0"

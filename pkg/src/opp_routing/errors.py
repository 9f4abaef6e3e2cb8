"""Exceptions and warnings raised by opp_routing.

All of them derive from UserWarning.
"""


class ConfigError(UserWarning):
    """Invalid configuration or violated precondition."""


class GeometryError(UserWarning):
    """Degenerate geometry, e.g. two co-located nodes."""


class CalibrationError(UserWarning):
    """Power bisection did not reach its target.

    Args:
        msg (str): human readable reason
        history (list of (float, float)): evaluated (power, measure) pairs
    """

    def __init__(self, msg, history=()):
        UserWarning.__init__(self, msg)
        self.history = list(history)


class FitError(UserWarning):
    """Not enough simulation records to fit a scaling constant."""


class OccupancyWarning(UserWarning):
    """Cells are too small to hold a useful number of nodes."""

"""Exception types raised by the simulator and estimators"""


class SquintError(Exception):
    """Base class for every error raised by the package"""


class ConfigError(SquintError):
    """Invalid system or solver configuration

    Carries the full list of problems found, so a config file can be fixed
    in one pass.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__('; '.join(self.errors))


class NoPathsDetected(SquintError):
    """Every block was pruned: the observation holds no detectable path"""


class PilotError(SquintError):
    """Pilots cannot support the requested estimation"""


class DimensionError(SquintError, ValueError):
    """Shapes, indices or values outside their valid range"""

# errors.py

"""Exception types raised across criticalflow.

Every error derives from CriticalFlowError and from the builtin it specialises,
so callers can catch either one.
"""


class CriticalFlowError(Exception):
    """Base class for all toolkit errors."""


class GridError(CriticalFlowError, ValueError):
    pass


class ShapeMismatchError(CriticalFlowError, ValueError):
    pass


class GridMismatchError(CriticalFlowError, ValueError):
    pass


class ComponentError(CriticalFlowError, ValueError):
    pass


class BlockRangeError(CriticalFlowError, IndexError):
    pass


class ExponentError(CriticalFlowError, ValueError):
    pass


class ZeroBlockError(CriticalFlowError, ZeroDivisionError):
    pass


class VacuumError(CriticalFlowError, FloatingPointError):
    """Density reached zero (or below) somewhere on the grid."""

    def __init__(self, rho_min, t=None):
        self.rho_min = float(rho_min)
        self.t = t
        where = "" if t is None else f" at t={t:.6g}"
        super().__init__(f"vacuum detected{where}: min(1 + a) = {self.rho_min:.3e}")


class CFLError(CriticalFlowError, ValueError):
    """Time step violates the stability limit. `suggested_dt` is a safe value."""

    def __init__(self, dt, suggested_dt):
        self.dt = float(dt)
        self.suggested_dt = float(suggested_dt)
        super().__init__(f"dt={self.dt:.3e} violates CFL, use dt <= {self.suggested_dt:.3e}")


class NegativeEnergyError(CriticalFlowError, ArithmeticError):
    pass


class TimeGridMismatchError(CriticalFlowError, ValueError):
    pass


class EmptyTrajectoryError(CriticalFlowError, ValueError):
    pass


class DegenerateFitError(CriticalFlowError, ValueError):
    pass


class InitialDataError(CriticalFlowError, ValueError):
    pass


class ConfigError(CriticalFlowError, ValueError):
    pass


class OutputError(CriticalFlowError, OSError):
    pass

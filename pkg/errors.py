"""
Solver Errors
Exception types shared by the instance loader, flow kernel, surrogate and CLI
"""

from typing import Optional


class SolverError(Exception):
    """Base class for every error raised by the solver library"""


class InstanceFormatError(SolverError, ValueError):
    """Instance file is malformed; names the offending key"""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"Invalid instance field '{key}': {message}")


class InstanceValidationError(SolverError, ValueError):
    """Instance data violates a model invariant (sign, shape, feasibility)"""


class InfeasibleNetworkError(SolverError):
    """Demand cannot be routed through the network"""


class CapacityShortfallError(InfeasibleNetworkError):
    """Open capacity of one stage is below total demand"""

    def __init__(self, stage: str, capacity: int, demand: int):
        self.stage = stage
        self.capacity = capacity
        self.demand = demand
        self.shortfall = demand - capacity
        super().__init__(
            f"{stage} capacity {capacity} is short of total demand {demand} "
            f"by {self.shortfall}"
        )


class ModelNotTrainedError(SolverError, RuntimeError):
    """Prediction requested from an ELM that has no output weights yet"""


class ConfigError(SolverError, ValueError):
    """Configuration value out of range or unknown configuration key"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)


class DomainError(SolverError, ValueError):
    """Numeric argument outside the domain of a formula"""

class TvipmError(Exception):
    """
    Base class for every solver-side failure raised by tvipm.
    """


class EvaluationError(TvipmError):
    """
    An oracle returned a non-finite value.

    ``index`` is 0 for the objective, ``i`` for the i-th inequality
    constraint (1-based) and -1 for the equality system.
    """

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"non-finite value from oracle {index}")


class SingularSystem(TvipmError):
    """
    A factorization met a non-positive or zero pivot.
    """

    def __init__(self, pivot: int, message: str = ""):
        self.pivot = pivot
        super().__init__(message or f"singular system at pivot {pivot}")


class DomainViolation(TvipmError):
    """
    A point left the barrier domain: psi_i <= 0 for constraint ``index``.
    """

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"residual of constraint {index} is not positive")


class StepFailure(TvipmError):
    def __init__(self, t: float, backtracks: int):
        self.t = t
        self.backtracks = backtracks
        super().__init__(
            f"no interior point after {backtracks} backtracks at t={t:.6g}; "
            "reduce tau"
        )


class OracleFailure(TvipmError):
    pass


class GeometryError(TvipmError):
    """
    The robot center lies inside an obstacle inflated by the robot radius.
    """

    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"robot center inside inflated obstacle {index}")


class CollisionError(TvipmError):
    def __init__(self, t: float, margin: float):
        self.t = t
        self.margin = margin
        super().__init__(f"collision at t={t:.6g} (margin {margin:.3g})")


class ConfigError(TvipmError):
    pass

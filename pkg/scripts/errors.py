"""Exception hierarchy shared by the tracker, the CLI and the API server.

ScenarioError subclasses map to CLI exit code 2 and HTTP 422.
NumericalError subclasses map to CLI exit code 3 and HTTP 500.
"""
from typing import Optional


class TrackerError(Exception):
    exit_code = 1


class ScenarioError(TrackerError):
    exit_code = 2


class NumericalError(TrackerError):
    exit_code = 3


# --- scenario / input errors -------------------------------------------------

class ScenarioLoadError(ScenarioError):
    pass


class IoError(ScenarioError):
    pass


class NonRadialTopology(ScenarioError):
    pass


class DuplicateDeviceNode(ScenarioError):
    pass


class UnknownNode(ScenarioError):
    pass


class DimensionMismatch(ScenarioError):
    pass


class SignalOutOfRange(ScenarioError):
    pass


class TooFewSamples(ScenarioError):
    pass


class NegativeAvailablePower(ScenarioError):
    pass


class SocOutOfRange(ScenarioError):
    pass


class WindowNotFull(ScenarioError):
    pass


class MisalignedTrajectories(ScenarioError):
    pass


# --- numerical failures ------------------------------------------------------

class SingularIncidence(NumericalError):
    pass


class BarrierDomainViolation(NumericalError):
    def __init__(self, index: int, slack: float):
        super().__init__(f"barrier domain violated at constraint {index} (s - f_i = {slack:.3e})")
        self.index = index
        self.slack = slack


class IllConditionedHessian(NumericalError):
    pass


class StepRejected(NumericalError):
    def __init__(self, t: float, index: Optional[int], message: str = ""):
        detail = f" at constraint {index}" if index is not None else ""
        super().__init__(f"step rejected at t={t:.4f}s{detail}{': ' + message if message else ''}")
        self.t = t
        self.index = index


class RankDeficientExcitation(NumericalError):
    pass


class Infeasible(NumericalError):
    def __init__(self, message: str, violated: Optional[list] = None):
        super().__init__(message)
        self.violated = violated or []


class MaxIterations(NumericalError):
    pass

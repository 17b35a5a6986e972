"""Exception hierarchy shared by all stages.

Every error raised on a bad input or a failed solve is a subclass of
StentmechError, so batch drivers can distinguish input problems from
genuine bugs (which surface as ordinary Python exceptions).
"""

from __future__ import annotations


class StentmechError(Exception):
    """Base class for all structured errors."""


# --- case bundle I/O -------------------------------------------------------

class CaseIoError(StentmechError):
    pass


class MissingFileError(CaseIoError):
    def __init__(self, path):
        super().__init__(f"required file not found: {path}")
        self.path = path


class HeaderMismatchError(CaseIoError):
    """Declared dims disagree with the raw payload size."""


class InvariantViolationError(CaseIoError):
    """A loaded structure violates a type invariant.

    Carries the offending field name and, where meaningful, an index.
    """

    def __init__(self, field: str, message: str, index: int | None = None):
        where = f"{field}[{index}]" if index is not None else field
        super().__init__(f"{where}: {message}")
        self.field = field
        self.index = index


class IoFailureError(CaseIoError):
    pass


class IndexOutOfRangeError(CaseIoError, IndexError):
    pass


class ConfigError(StentmechError):
    """Unknown key, malformed value, or unreadable config file."""


# --- GMM segmentation ------------------------------------------------------

class GmmError(StentmechError):
    pass


class EmptySampleSetError(GmmError):
    pass


class NonFiniteLikelihoodError(GmmError):
    """EM produced a NaN/inf log-likelihood (degenerate input)."""


# --- meshing ---------------------------------------------------------------

class MeshError(StentmechError):
    pass


class ContourCrossingError(MeshError):
    """A lumen ray meets the intima-outer contour out of order."""


class DegenerateElementError(MeshError):
    def __init__(self, element: int, jacobian: float):
        super().__init__(f"element {element}: non-positive Jacobian {jacobian:.3e}")
        self.element = element
        self.jacobian = jacobian


class NoSamplesForSliceError(MeshError):
    pass


# --- constitutive / solver -------------------------------------------------

class SolverError(StentmechError):
    pass


class NonPositiveJacobianError(SolverError):
    """det F <= 0 at a quadrature point; carries the element id when known."""

    def __init__(self, element: int | None = None):
        where = f" in element {element}" if element is not None else ""
        super().__init__(f"non-positive deformation Jacobian{where}")
        self.element = element


class DivergedNewtonError(SolverError):
    pass


class SingularSystemError(SolverError):
    pass


class AbortedStepError(SolverError):
    def __init__(self, phase: int, step: int):
        super().__init__(f"load step aborted after repeated halving (phase {phase}, step {step})")
        self.phase = phase
        self.step = step


# --- statistics ------------------------------------------------------------

class AnalysisError(StentmechError):
    pass


class NonSymmetricError(AnalysisError):
    pass


class UnconvergedStateError(AnalysisError):
    pass


class EmptyInputError(AnalysisError):
    pass


class CorrelationError(StentmechError):
    pass


class ZeroReferenceError(CorrelationError):
    pass


class MissingDiameterError(CorrelationError):
    pass


class ConstantInputError(CorrelationError):
    pass


class LengthMismatchError(CorrelationError):
    pass

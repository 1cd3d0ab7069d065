"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 2, ``SolverError``
subclasses to exit code 3.
"""


class GmatsimError(Exception):
    pass


class ValidationError(GmatsimError, ValueError):
    pass


class SolverError(GmatsimError, RuntimeError):
    pass


class OverlappingRegions(ValidationError):
    pass


class DanglingGate(ValidationError):
    pass


class NegativeDimension(ValidationError):
    pass


class UnknownMaterial(ValidationError):
    pass


class SpacingTooCoarse(ValidationError):
    pass


class UnknownGate(ValidationError):
    pass


class MisalignedMirror(ValidationError):
    pass


class MeshMismatch(ValidationError):
    pass


class ZeroLarmor(ValidationError):
    pass


class DegenerateDenominator(ValidationError):
    pass


class SingularPrincipalFactor(ValidationError):
    pass


class SolverDiverged(SolverError):
    pass


class NotConverged(SolverError):
    pass


class DegenerateSubspaceUnresolved(SolverError):
    pass


class UnpairedState(SolverError):
    pass


class OverlapTooSmall(SolverError):
    pass


class DimensionTooLarge(SolverError):
    pass


class DegenerateExcitedState(SolverError):
    pass


class CacheCorrupt(SolverError):
    pass

"""Typed exceptions raised by the estimation pipeline.

Every failure mode that a caller may want to branch on gets its own class;
all of them derive from :class:`PnplError` so ``except PnplError`` catches
anything this package raises deliberately.
"""


class PnplError(Exception):
    """Base class for all errors raised by this package."""


class NotSkewSymmetric(PnplError):
    """Matrix passed to ``vee`` is not skew-symmetric within tolerance."""


class NearPiRotation(PnplError):
    """Rotation angle is within tolerance of pi; the log map axis is ambiguous."""


class DegenerateLine(PnplError):
    """Line endpoints coincide (or nearly so)."""


class SingularIntrinsics(PnplError):
    """Camera intrinsic matrix is not invertible."""


class BehindCamera(PnplError):
    """A 3D point has non-positive depth under the given pose."""


class DegenerateProjectedLine(PnplError):
    """Projected line has vanishing image-plane normal; its weight is undefined."""


class EmptyInput(PnplError):
    """No correspondences were supplied where at least one is required."""


class InsufficientCorrespondences(PnplError):
    """Too few correspondences for the requested estimation mode."""


class IllConditionedGram(PnplError):
    """Gram matrix is too ill-conditioned for a usable variance estimate."""


class RepeatedSmallestEigenvalue(PnplError):
    """Smallest eigenvalue is (numerically) repeated; eigenvector is not unique."""


class RankDeficient(PnplError):
    """Matrix block is rank deficient where full rank is required."""


class Underdetermined(PnplError):
    """Correspondence counts fall outside every supported estimation case."""


class SingularNormalEquations(PnplError):
    """Gauss-Newton normal equations are numerically singular."""


class RankDeficientConstraints(PnplError):
    """Constraint Jacobian does not have full row rank."""


class SingularProjectedFisher(PnplError):
    """Projected Fisher information is numerically singular."""

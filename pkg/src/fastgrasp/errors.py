"""Exception types shared across the package."""


class FastGraspError(Exception):
    """Base class for all package-specific errors."""


class EmptyCloud(FastGraspError):
    """A point cloud with zero points was passed where points are required."""


class InvalidAxis(FastGraspError):
    """Projection axis is not unit length."""


class InvalidRotation(FastGraspError):
    """Rotation matrix is not orthonormal with determinant +1."""


class ShapeError(FastGraspError):
    """Array dimensions do not match the expected layout."""


class NumericalError(FastGraspError):
    """A non-finite value appeared where finite math was required."""


class InsufficientPoints(FastGraspError):
    """Point cloud has too few points for feature encoding."""


class TrainingDiverged(FastGraspError):
    """Loss became non-finite during training."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class UnsupportedObject(FastGraspError):
    """Object primitive type is not one of box / cylinder / sphere."""


class DegenerateAxis(FastGraspError):
    """Finger and thumb tips coincide; the grasp axis is undefined."""


class ZeroExtent(FastGraspError):
    """Object projects to a zero-length interval along the requested axis."""


class QualityUndefined(FastGraspError):
    """Every finger axis is degenerate; the quality score has no value."""


class NoFeasibleGrasp(FastGraspError):
    """All grasp candidates were removed by the filters."""


class ResetFailed(FastGraspError):
    """Environment reset could not find a feasible guidance after retries."""


class CheckpointError(FastGraspError):
    """Checkpoint file has an incompatible version or architecture."""


class ConfigError(FastGraspError):
    """Configuration file is missing, malformed, or inconsistent."""


class MissingArtifact(FastGraspError):
    """A pipeline stage requires an artifact that has not been produced."""

    def __init__(self, stage_to_run: str, detail: str = ""):
        msg = f"missing artifact; run stage '{stage_to_run}' first"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.stage_to_run = stage_to_run

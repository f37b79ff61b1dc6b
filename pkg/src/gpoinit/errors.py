"""Exception hierarchy shared by all modules."""


class GpoInitError(Exception):
    """Base class for every error raised by this package."""


class DegenerateDepth(GpoInitError):
    pass


class BehindCamera(GpoInitError):
    pass


class DegeneratePlane(GpoInitError):
    pass


class RayParallelToPlane(GpoInitError):
    pass


class NegativeDepth(GpoInitError):
    pass


class EmptyWindow(GpoInitError):
    pass


class DegenerateConfiguration(GpoInitError):
    pass


class InsufficientInliers(GpoInitError):
    pass


class NumericalFailure(GpoInitError):
    pass


class NoValidSolution(GpoInitError):
    pass


class SolverDiverged(GpoInitError):
    pass


class InsufficientTracks(GpoInitError):
    pass


class InsufficientParallax(GpoInitError):
    pass


class NoCluster(GpoInitError):
    pass


class InvisibleScene(GpoInitError):
    pass


class DegenerateTrajectory(GpoInitError):
    pass


class DegenerateTransfer(GpoInitError):
    """A homography transfer landed at infinity (|z| too small)."""

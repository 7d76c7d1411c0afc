"""Exception hierarchy shared by all modules."""


class OTCalibError(Exception):
    """Base class for library errors."""


class CutLocus(OTCalibError, ValueError):
    """A point lies on (or within the safety margin of) the cost's cut locus."""


class DegenerateStep(OTCalibError, ValueError):
    pass


class Degenerate(OTCalibError, ValueError):
    """Mixed Hessian or metric is singular at the point."""


class NonpositiveDensity(OTCalibError, ValueError):
    pass


class NotSpacelike(OTCalibError, ValueError):
    pass


class ZeroOrientation(OTCalibError, ValueError):
    pass


class BadSignature(OTCalibError, ValueError):
    pass


class FlatCDF(OTCalibError, ValueError):
    pass


class SizeMismatch(OTCalibError, ValueError):
    pass


class NotPositiveDefinite(OTCalibError, ValueError):
    pass


class NoRoot(OTCalibError, RuntimeError):
    pass


class NotDifferentiable(OTCalibError, ValueError):
    pass


class OrientationFlip(OTCalibError, ValueError):
    pass


class NotMonotone(OTCalibError, ValueError):
    pass


class OrientationError(OTCalibError, ValueError):
    """Simplicial mesh orientation is inconsistent across shared faces."""


class NotComparable(OTCalibError, ValueError):
    pass


class BoundaryPoint(OTCalibError, ValueError):
    pass


class BoundaryTooClose(OTCalibError, ValueError):
    pass


class NoVanishingComponent(OTCalibError, ValueError):
    pass


class NotVanishing(OTCalibError, ValueError):
    pass


class ConfigError(OTCalibError, ValueError):
    pass

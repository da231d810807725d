"""Exception hierarchy shared by all boxgeom modules."""


class BoxGeomError(Exception):
    """Base class for every error raised by boxgeom."""


class DegenerateInput(BoxGeomError, ValueError):
    pass


class ParallelLines(BoxGeomError, ValueError):
    pass


class DegenerateQuad(BoxGeomError, ValueError):
    pass


class SingularHomography(BoxGeomError, ValueError):
    pass


class DegenerateFace(BoxGeomError, ValueError):
    pass


class DegenerateSilhouette(BoxGeomError, ValueError):
    pass


class AmbiguousAssembly(BoxGeomError, ValueError):
    pass


class NonOrthogonalConfiguration(BoxGeomError, ValueError):
    pass


class EmptyContour(BoxGeomError, ValueError):
    pass


class OutOfRange(BoxGeomError, ValueError):
    pass


class VPAtCenter(BoxGeomError, ValueError):
    pass


class InsufficientData(BoxGeomError, ValueError):
    pass


class MissingPrediction(BoxGeomError, KeyError):
    pass


class ZeroVector(BoxGeomError, ValueError):
    pass

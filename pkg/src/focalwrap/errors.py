"""Exception hierarchy shared by every stage of the pipeline."""


class FocalWrapError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FocalWrapError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# -- mesh topology / geometry -------------------------------------------------

class MeshError(FocalWrapError):
    pass


class NonManifold(MeshError):
    pass


class InconsistentOrientation(MeshError):
    pass


class DegenerateFace(MeshError):
    pass


class EmptyMesh(MeshError):
    pass


class DegenerateInput(FocalWrapError):
    """Point set is coplanar, collinear or otherwise has no volume."""


class DegenerateExtent(DegenerateInput):
    """A coordinate axis has zero range and cannot be normalized."""


# -- optics ---------------------------------------------------------------------

class OnAxisRay(FocalWrapError):
    """The reflected ray runs along the optical axis; crossing undefined."""


class RayParallelToPlane(FocalWrapError):
    pass


class InvalidBracket(FocalWrapError, ValueError):
    pass


# -- density ----------------------------------------------------------------------

class EmptyCloud(FocalWrapError):
    pass


# -- deformation / validation -----------------------------------------------------

class NonFiniteForce(FocalWrapError):
    pass


class OnSurface(FocalWrapError):
    """Query point lies on the mesh surface (within 1e-10)."""


# -- io -----------------------------------------------------------------------------

class IoFailure(FocalWrapError, OSError):
    pass


class ParseError(FocalWrapError, ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class EmptyFile(FocalWrapError, ValueError):
    pass

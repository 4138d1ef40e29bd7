"""Exception hierarchy shared by every stage of the renderer."""


class LFRasterError(Exception):
    """Base class for all errors raised by lfraster."""


# scene / ply
class MalformedHeader(LFRasterError, ValueError):
    pass


class TruncatedBody(LFRasterError, ValueError):
    pass


class UnsupportedFormat(LFRasterError, ValueError):
    pass


class NonFiniteValue(LFRasterError, ValueError):
    pass


class InvalidSpec(LFRasterError, ValueError):
    pass


class DegreeMismatch(LFRasterError, ValueError):
    pass


# display
class InvalidConfig(LFRasterError, ValueError):
    pass


class ConfigMismatch(LFRasterError, ValueError):
    pass


class CountMismatch(LFRasterError, ValueError):
    pass


class SizeMismatch(LFRasterError, ValueError):
    pass


class ViewOutOfRange(LFRasterError, IndexError):
    pass


# camera / raster
class InvalidSize(LFRasterError, ValueError):
    pass


class DegenerateCovariance(LFRasterError, ArithmeticError):
    pass


class TileIdOverflow(LFRasterError, OverflowError):
    pass


class InconsistentInputs(LFRasterError, ValueError):
    pass


# metrics
class EmptyMask(LFRasterError, ValueError):
    pass

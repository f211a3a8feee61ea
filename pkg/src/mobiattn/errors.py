"""Exception hierarchy. The CLI maps these onto exit codes."""


class MobiAttnError(Exception):
    pass


class ShapeError(MobiAttnError, ValueError):
    pass


class ParameterError(MobiAttnError, ValueError):
    pass


class NumericError(MobiAttnError, FloatingPointError):
    """Non-finite loss, gradient or logit."""


class DatasetError(MobiAttnError):
    pass


class ConfigError(MobiAttnError, ValueError):
    pass


class CheckpointError(MobiAttnError):
    pass


class CheckpointFormatError(CheckpointError):
    """Bad magic or unsupported version."""


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    """Stored tensors disagree with the stored model spec."""

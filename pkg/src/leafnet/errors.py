"""Exception hierarchy shared across the package."""


class LeafnetError(Exception):
    pass


class ShapeError(LeafnetError, ValueError):
    pass


class NumericError(LeafnetError, ArithmeticError):
    pass


class LabelError(LeafnetError, ValueError):
    pass


class DatasetError(LeafnetError):
    pass


class DecodeError(DatasetError):
    pass


class ConfigError(LeafnetError, ValueError):
    pass


class ModelFileError(LeafnetError):
    pass


class BadMagicError(ModelFileError):
    pass


class UnsupportedVersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


class TruncatedFileError(ModelFileError):
    pass

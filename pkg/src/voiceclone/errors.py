"""Exception types shared across the package."""


class VoicecloneError(Exception):
    """Base class for errors raised by this package."""


class DataError(VoicecloneError):
    """Malformed or unusable input data (audio, manifests, caches)."""

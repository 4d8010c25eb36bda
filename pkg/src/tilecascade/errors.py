"""Exception hierarchy; CLI exit codes map onto these families."""


class TileCascadeError(Exception):
    """Base class for all package errors."""


class ConfigError(TileCascadeError):
    """Bad run configuration (schema violation, invalid values). Exit code 2."""


class GridIoError(TileCascadeError):
    """Grid file serialization problems. Exit code 3."""


class ProtocolError(TileCascadeError):
    """Denoiser bridge transport or framing failure. Exit code 4."""


class BridgeConnectionError(ProtocolError):
    """Could not reach or keep the sidecar connection."""


class BridgeTimeoutError(ProtocolError):
    """Sidecar did not answer within the configured timeout."""


class MalformedFrameError(ProtocolError):
    """Wire bytes violate the PXB1 frame format."""


class RemoteFailureError(ProtocolError):
    """Sidecar answered with an ERROR frame."""

    def __init__(self, code: int, message: str):
        super().__init__(f"remote failure {code}: {message}")
        self.code = code
        self.message = message


class NumericError(TileCascadeError):
    """Non-finite values or other numeric breakdown. Exit code 5."""

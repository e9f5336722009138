class CodecError(ValueError):
    """Base class for codec failures."""


class ColorspaceError(CodecError):
    pass


class JpegEncodeError(CodecError):
    pass


class JpegParseError(CodecError):
    """Raised for malformed, truncated or unsupported JPEG streams."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)

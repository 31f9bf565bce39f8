"""Exception hierarchy shared by every neurokey module."""


class NeurokeyError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(NeurokeyError, ValueError):
    pass


class ParseError(NeurokeyError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(NeurokeyError):
    pass


class InsufficientDataError(NeurokeyError):
    pass


class DomainError(NeurokeyError, ValueError):
    pass


class RankError(NeurokeyError):
    pass


class MaskGenerationError(NeurokeyError):
    pass


class ParameterError(NeurokeyError, ValueError):
    pass


class IrrecoverableError(NeurokeyError):
    """The noisy word is too far from the enrolled word to be corrected."""


class ConfigError(NeurokeyError):
    pass


class AuthenticationError(NeurokeyError):
    """Key reproduction failed; no partial key material is ever returned."""


class RecordFormatError(NeurokeyError):
    pass


# --- link layer -----------------------------------------------------------

class LinkError(NeurokeyError):
    pass


class RekeyRequired(LinkError):
    pass


class BadMic(LinkError):
    pass


class Replay(LinkError):
    pass


class FrameError(LinkError):
    """Wire image could not be decoded."""


class FrameTooShort(FrameError):
    pass


class BadSync(FrameError):
    pass


class BadLength(FrameError):
    pass


class BadChecksum(FrameError):
    pass


class BadFrameType(FrameError):
    pass


class PayloadError(LinkError):
    pass


class ScenarioError(NeurokeyError):
    pass

"""Exception hierarchy. Every error carries a stable ``code`` used by the CLI."""

from __future__ import annotations


class GSPyramidError(Exception):
    code = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {"code": self.code, "message": str(self), **self.context}


class PlyFormatError(GSPyramidError):
    code = "malformed_ply"


class NonFiniteValue(PlyFormatError):
    code = "non_finite_value"

    def __init__(self, message: str, index: int, **context):
        super().__init__(message, index=index, **context)
        self.index = index


class InvalidCloud(GSPyramidError):
    code = "invalid_cloud"


class CameraError(GSPyramidError):
    code = "invalid_camera"


class NonOrthonormalRotation(CameraError):
    code = "non_orthonormal_rotation"


class ConfigError(GSPyramidError):
    code = "invalid_config"


class DegenerateDispersion(GSPyramidError):
    code = "degenerate_dispersion"


class DegenerateChannel(GSPyramidError):
    code = "degenerate_channel"


class CodecError(GSPyramidError):
    code = "codec_error"


class QuantOverflow(CodecError):
    code = "quant_overflow"


class AlphabetTooWide(CodecError):
    code = "alphabet_too_wide"


class SymbolOutOfRange(CodecError):
    code = "symbol_out_of_range"


class TruncatedStream(CodecError):
    code = "truncated_stream"


class CorruptStream(CodecError):
    code = "corrupt_stream"


class ContainerError(CodecError):
    code = "bad_container"


class BadMagic(ContainerError):
    code = "bad_magic"


class ChecksumMismatch(ContainerError):
    code = "checksum_mismatch"

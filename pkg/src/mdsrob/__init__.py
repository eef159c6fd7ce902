"""Message dissemination over Bluetooth device names with selective relay."""

from .codec import (
    Codebook,
    FrameTooLong,
    MalformedEscape,
    MalformedFrame,
    NotAFrame,
    PlainMessage,
    UndecryptablePayload,
    apply_codebook,
    decode_frame,
    decode_legacy,
    default_codebook,
    encode_frame,
    escape_text,
    load_codebook,
    unescape_and_expand,
)
from .ciphers import CipherSuite, keyed_test_cipher

__version__ = "0.1.0"

__all__ = [
    "CipherSuite",
    "Codebook",
    "FrameTooLong",
    "MalformedEscape",
    "MalformedFrame",
    "NotAFrame",
    "PlainMessage",
    "UndecryptablePayload",
    "apply_codebook",
    "decode_frame",
    "decode_legacy",
    "default_codebook",
    "encode_frame",
    "escape_text",
    "keyed_test_cipher",
    "load_codebook",
    "unescape_and_expand",
]

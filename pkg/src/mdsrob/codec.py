"""Frame codec: messages carried inside Bluetooth device names.

A modern frame is ``"MDSR" + type + payload`` where the payload is base64
text.  Before compression the message is laid out as ``id|body`` with ``|``
and ``\\`` escaped, and common words in the body swapped for short codes
from a :class:`Codebook`.

Type ``'0'``::

    base64(bzip2(plaintext))

Type ``'1'``::

    base64(bzip2(encrypt(bzip2(plaintext))))

The older ``JPC`` format is just the header followed by raw text.
"""

from __future__ import annotations

import base64
import binascii
import bz2
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence

from .ciphers import CipherSuite

HEADER = "MDSR"
LEGACY_HEADER = "JPC"
MAX_NAME_LENGTH = 248
ESCAPE = "\\"
DIVIDER = "|"

PLAIN = "0"
ENCRYPTED = "1"
TYPE_TABLE = {
    PLAIN: "bzip2 and base64",
    ENCRYPTED: "bzip2, encryption, bzip2 and base64",
}

BZIP2_LEVEL = 9

_PAYLOAD_RE = re.compile(r"[A-Za-z0-9+/=]*\Z")


class CodecError(ValueError):
    pass


class MalformedEscape(CodecError):
    pass


class MalformedFrame(CodecError):
    """A name carried the ``MDSR`` header but could not be decoded."""

    def __init__(self, detail: str, reason: str = "malformed"):
        super().__init__(detail)
        self.reason = reason


class UndecryptablePayload(CodecError):
    """Type-1 frame for which none of the offered keys works."""


class FrameTooLong(CodecError):
    def __init__(self, length: int, limit: int = MAX_NAME_LENGTH):
        super().__init__(f"frame is {length} characters, limit is {limit} ({length - limit} over)")
        self.length = length
        self.limit = limit

    @property
    def overflow(self) -> int:
        return self.length - self.limit


class UnknownType(CodecError):
    pass


class MissingCipher(CodecError):
    pass


class CodebookConflict(CodecError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class _NotAFrame:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotAFrame"

    def __bool__(self) -> bool:
        return False


NotAFrame = _NotAFrame()
"""Sentinel returned for names that are ordinary device names."""


@dataclass(frozen=True)
class PlainMessage:
    id: str
    body: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("message id must be non-empty")


# -- codebook ---------------------------------------------------------------


@dataclass(frozen=True)
class Codebook:
    entries: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((w, t) for w, t in self.entries))
        validate_entries(self.entries)
        object.__setattr__(self, "_by_word", dict(self.entries))
        object.__setattr__(self, "_by_token", {t: w for w, t in self.entries})
        lengths = sorted({len(t) for _, t in self.entries}, reverse=True)
        object.__setattr__(self, "_token_lengths", tuple(lengths))

    def __len__(self) -> int:
        return len(self.entries)

    def code_for(self, word: str) -> Optional[str]:
        return self._by_word.get(word)

    def match_token(self, s: str, start: int) -> Optional[tuple[str, str]]:
        """Longest code token at ``s[start:]``, as ``(token, word)``."""
        for size in self._token_lengths:
            tok = s[start:start + size]
            if len(tok) == size and tok in self._by_token:
                return tok, self._by_token[tok]
        return None


def _check_piece(text: str, what: str, line: Optional[int]) -> None:
    if not text:
        raise CodebookConflict(f"empty {what}", line)
    if ESCAPE in text or DIVIDER in text:
        raise CodebookConflict(f"{what} {text!r} contains a reserved character", line)


def validate_entries(entries: Sequence[tuple[str, str]], lines: Optional[Sequence[int]] = None) -> None:
    words: dict[str, int] = {}
    tokens: dict[str, int] = {}
    for i, (word, tok) in enumerate(entries):
        line = lines[i] if lines else None
        _check_piece(word, "word", line)
        _check_piece(tok, "code token", line)
        if not tok[0].isalnum():
            raise CodebookConflict(f"code token {tok!r} must start with a letter or digit", line)
        if word in words:
            raise CodebookConflict(f"duplicate word {word!r}", line)
        if tok in tokens:
            raise CodebookConflict(f"duplicate code token {tok!r}", line)
        for other in tokens:
            if other.startswith(tok) or tok.startswith(other):
                raise CodebookConflict(f"code token {tok!r} and {other!r} are not prefix-free", line)
        words[word] = i
        tokens[tok] = i


EMPTY_CODEBOOK = Codebook()


def load_codebook(source: str, *, sort_by_length: bool = False) -> Codebook:
    """Parse a ``word<TAB>code`` document into a validated codebook.

    ``#`` starts a comment line and blank lines are skipped.  Conflicts are
    reported with the 1-based line number of the offending entry.
    """
    entries = []
    lines = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if len(parts) != 2:
            raise CodebookConflict("expected 'word<TAB>code'", lineno)
        entries.append((parts[0], parts[1]))
        lines.append(lineno)
    validate_entries(entries, lines)
    if sort_by_length:
        entries.sort(key=lambda e: -len(e[0]))
    return Codebook(tuple(entries))


def default_codebook() -> Codebook:
    text = resources.files("mdsrob").joinpath("data/default_codebook.tsv").read_text("utf-8")
    return load_codebook(text, sort_by_length=True)


# -- escaping and substitution ---------------------------------------------


def escape_text(s: str) -> str:
    return s.replace(ESCAPE, ESCAPE * 2).replace(DIVIDER, ESCAPE + DIVIDER)


def apply_codebook(s: str, cb: Codebook) -> str:
    """Replace whole words in already-escaped text with ``\\`` + code."""
    if not cb.entries:
        return s
    out = []
    i, n = 0, len(s)
    while i < n:
        c = s[i]
        if c == ESCAPE:
            out.append(s[i:i + 2])
            i += 2
        elif c.isalpha():
            j = i
            while j < n and s[j].isalpha():
                j += 1
            word = s[i:j]
            tok = cb.code_for(word)
            out.append(word if tok is None else ESCAPE + tok)
            i = j
        else:
            out.append(c)
            i += 1
    return "".join(out)


def unescape_and_expand(s: str, cb: Codebook = EMPTY_CODEBOOK) -> str:
    out = []
    i, n = 0, len(s)
    while i < n:
        c = s[i]
        if c != ESCAPE:
            out.append(c)
            i += 1
            continue
        if i + 1 >= n:
            raise MalformedEscape(f"dangling escape at offset {i}")
        nxt = s[i + 1]
        if nxt in (ESCAPE, DIVIDER):
            out.append(nxt)
            i += 2
            continue
        hit = cb.match_token(s, i + 1)
        if hit is None:
            raise MalformedEscape(f"unknown escape {s[i:i + 2]!r} at offset {i}")
        tok, word = hit
        out.append(word)
        i += 1 + len(tok)
    return "".join(out)


def split_at_divider(s: str) -> Optional[tuple[str, str]]:
    """Split at the first ``|`` that is not part of an escape pair."""
    i, n = 0, len(s)
    while i < n:
        if s[i] == ESCAPE:
            i += 2
        elif s[i] == DIVIDER:
            return s[:i], s[i + 1:]
        else:
            i += 1
    return None


# -- frames -----------------------------------------------------------------


def plaintext_pre(msg: PlainMessage, cb: Codebook = EMPTY_CODEBOOK) -> str:
    return escape_text(msg.id) + DIVIDER + apply_codebook(escape_text(msg.body), cb)


def encode_frame(
    msg: PlainMessage,
    type_code: str = PLAIN,
    cb: Codebook = EMPTY_CODEBOOK,
    cipher: Optional[CipherSuite] = None,
) -> str:
    if type_code not in TYPE_TABLE:
        raise UnknownType(f"unknown frame type {type_code!r}")
    if type_code == ENCRYPTED and cipher is None:
        raise MissingCipher("type 1 frames need a cipher")
    if type_code == PLAIN and cipher is not None:
        raise ValueError("type 0 frames are not encrypted; drop the cipher or use type 1")

    inner = bz2.compress(plaintext_pre(msg, cb).encode("utf-8"), BZIP2_LEVEL)
    if type_code == ENCRYPTED:
        inner = bz2.compress(cipher.encrypt(inner), BZIP2_LEVEL)
    frame = HEADER + type_code + base64.b64encode(inner).decode("ascii")
    if len(frame) > MAX_NAME_LENGTH:
        raise FrameTooLong(len(frame))
    return frame


def _bunzip(data: bytes) -> bytes:
    dec = bz2.BZ2Decompressor()
    out = dec.decompress(data)
    if not dec.eof or dec.unused_data:
        raise OSError("truncated or trailing bzip2 data")
    return out


def _decode_payload(payload: str) -> bytes:
    if not _PAYLOAD_RE.match(payload):
        raise MalformedFrame("payload has non-base64 characters", "base64")
    try:
        raw = base64.b64decode(payload, validate=True)
    except binascii.Error as exc:
        raise MalformedFrame(f"bad base64: {exc}", "base64") from exc
    try:
        return _bunzip(raw)
    except (OSError, ValueError, EOFError) as exc:
        raise MalformedFrame(f"bad bzip2 stream: {exc}", "bzip2") from exc


def _decrypt(inner: bytes, ciphers: Iterable[CipherSuite]) -> bytes:
    for cipher in ciphers:
        try:
            return _bunzip(cipher.decrypt(inner))
        except (OSError, ValueError, EOFError):
            continue
    raise UndecryptablePayload("no key opens this frame")


def decode_frame(name: str, cb: Codebook = EMPTY_CODEBOOK, ciphers: Sequence[CipherSuite] = ()):
    """Decode a device name into a :class:`PlainMessage`.

    Returns :data:`NotAFrame` for names without the ``MDSR`` header.  Raises
    :class:`MalformedFrame` for broken frames and
    :class:`UndecryptablePayload` when a type-1 frame cannot be opened with
    any of ``ciphers``.
    """
    if not name.startswith(HEADER):
        return NotAFrame
    if len(name) == len(HEADER):
        raise MalformedFrame("missing type character", "type")
    type_code = name[len(HEADER)]
    if type_code not in TYPE_TABLE:
        raise MalformedFrame(f"unknown frame type {type_code!r}", "unknown_type")

    data = _decode_payload(name[len(HEADER) + 1:])
    if type_code == ENCRYPTED:
        data = _decrypt(data, ciphers)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedFrame("plaintext is not UTF-8", "utf8") from exc

    parts = split_at_divider(text)
    if parts is None:
        raise MalformedFrame("missing id divider", "divider")
    try:
        msg_id = unescape_and_expand(parts[0], EMPTY_CODEBOOK)
        body = unescape_and_expand(parts[1], cb)
    except MalformedEscape as exc:
        raise MalformedFrame(str(exc), "escape") from exc
    if not msg_id:
        raise MalformedFrame("empty message id", "divider")
    return PlainMessage(msg_id, body)


def decode_legacy(name: str):
    if not name.startswith(LEGACY_HEADER):
        return NotAFrame
    return name[len(LEGACY_HEADER):]


def frame_type(name: str) -> Optional[str]:
    if name.startswith(HEADER) and len(name) > len(HEADER):
        return name[len(HEADER)]
    return None

"""Pluggable ciphers for type-1 frames and the keyring file format."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union


class KeyringError(ValueError):
    pass


@dataclass(frozen=True)
class CipherSuite:
    """A named pair of byte transforms with ``decrypt(encrypt(x)) == x``."""

    key_id: str
    encrypt: Callable[[bytes], bytes]
    decrypt: Callable[[bytes], bytes]


def _keystream(secret: bytes, length: int) -> bytes:
    blocks = []
    for counter in range((length + 31) // 32):
        blocks.append(hashlib.sha256(secret + counter.to_bytes(8, "big")).digest())
    return b"".join(blocks)[:length]


def keyed_test_cipher(key_id: str, secret: Union[str, bytes]) -> CipherSuite:
    """Deterministic XOR stream cipher keyed by a preshared secret.

    Not meant to be secure; it exists so encrypted frames can be exercised
    end to end with byte-for-byte reproducible output.
    """
    if isinstance(secret, str):
        secret = secret.encode("utf-8")
    if not secret:
        raise KeyringError(f"key {key_id!r} has an empty secret")
    material = hashlib.sha256(b"mdsrob-key:" + secret).digest()

    def xor(data: bytes) -> bytes:
        ks = _keystream(material, len(data))
        return bytes(a ^ b for a, b in zip(data, ks))

    return CipherSuite(key_id, xor, xor)


def parse_keyring(text: str) -> dict[str, CipherSuite]:
    """Parse ``name<TAB>secret`` lines; ``#`` comments and blanks ignored."""
    keys: dict[str, CipherSuite] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        name, sep, secret = raw.partition("\t")
        if not sep or not name:
            raise KeyringError(f"line {lineno}: expected 'name<TAB>secret'")
        if name in keys:
            raise KeyringError(f"line {lineno}: duplicate key {name!r}")
        keys[name] = keyed_test_cipher(name, secret)
    return keys


def load_keyring(path: Union[str, Path]) -> dict[str, CipherSuite]:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise KeyringError(f"cannot read keyring {path}: {exc}") from exc
    return parse_keyring(text)

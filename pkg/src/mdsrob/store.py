"""Per-node message store with duplicate suppression and relay flags.

Every mutation appends one line to an in-memory log; the store state can be
rebuilt by folding that log with :meth:`MessageStore.replay`.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence, Union
from urllib.parse import quote, unquote

from . import codec
from .ciphers import CipherSuite
from .codec import Codebook, PlainMessage

log = logging.getLogger(__name__)

# base64 output never needs quoting, so modern frames stay verbatim in logs
_SAFE = "+/="


class UnknownKey(KeyError):
    pass


class IngestResult(str, enum.Enum):
    NEW = "new"
    DUPLICATE = "duplicate"
    CONFLICT = "conflict"
    OPAQUE = "opaque"
    NOT_A_FRAME = "not_a_frame"
    MALFORMED = "malformed"


@dataclass(frozen=True)
class OpaquePayload:
    frame_text: str

    def __post_init__(self):
        if not self.frame_text.startswith(codec.HEADER + codec.ENCRYPTED):
            raise ValueError("opaque payloads are type-1 frames")


@dataclass
class MessageRecord:
    dedup_key: str
    message: Union[PlainMessage, OpaquePayload]
    relay: bool
    first_seen: int
    first_source: str
    times_heard: int = 1
    # the name-string relayed for this record; None when it does not fit
    frame: Optional[str] = None
    local: bool = False

    @property
    def decodable(self) -> bool:
        return not isinstance(self.message, OpaquePayload)

    @property
    def body(self) -> Optional[str]:
        return None if isinstance(self.message, OpaquePayload) else self.message.body


RelayDecision = Callable[[MessageRecord], bool]


def frame_digest(frame: str) -> str:
    return hashlib.sha256(frame.encode("utf-8")).hexdigest()[:24]


def legacy_key(frame: str) -> str:
    return "JPC-" + frame_digest(frame)


def log_value(text: str) -> str:
    if not text:
        return "-"
    if text == "-":
        return "%2D"
    return quote(text, safe=_SAFE)


def parse_log_line(line: str) -> dict[str, str]:
    fields = {}
    for part in line.split():
        k, _, v = part.partition("=")
        fields[k] = "" if v == "-" else unquote(v)
    return fields


def relay_everything(record: MessageRecord) -> bool:
    return True


class MessageStore:
    def __init__(
        self,
        node_id: str,
        codebook: Codebook = codec.EMPTY_CODEBOOK,
        ciphers: Sequence[CipherSuite] = (),
        relay_policy: RelayDecision = relay_everything,
    ):
        self.node_id = node_id
        self.codebook = codebook
        self.ciphers = tuple(ciphers)
        self.relay_policy = relay_policy
        self.records: dict[str, MessageRecord] = {}
        self.log: list[str] = []
        self.counts = {r.value: 0 for r in IngestResult}
        self._seq = 0
        self._decoded: dict[str, object] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def get(self, key: str) -> Optional[MessageRecord]:
        return self.records.get(key)

    def _decode(self, frame: str):
        """Returns (key, message) or an IngestResult for unstored outcomes."""
        if frame not in self._decoded:
            self._decoded[frame] = self._decode_uncached(frame)
        return self._decoded[frame]

    def _decode_uncached(self, frame: str):
        try:
            msg = codec.decode_frame(frame, self.codebook, self.ciphers)
        except codec.UndecryptablePayload:
            return frame_digest(frame), OpaquePayload(frame)
        except codec.MalformedFrame as exc:
            log.info("%s: malformed frame (%s): %s", self.node_id, exc.reason, exc)
            return IngestResult.MALFORMED
        if msg is codec.NotAFrame:
            body = codec.decode_legacy(frame)
            if body is codec.NotAFrame:
                return IngestResult.NOT_A_FRAME
            key = legacy_key(frame)
            return key, PlainMessage(key, body)
        return msg.id, msg

    def ingest(self, frame: str, source: str, now: int) -> IngestResult:
        decoded = self._decode(frame)
        key = None
        if isinstance(decoded, IngestResult):
            result = decoded
        else:
            key, message = decoded
            existing = self.records.get(key)
            if existing is None:
                record = MessageRecord(key, message, False, now, source, frame=frame)
                record.relay = bool(self.relay_policy(record))
                self.records[key] = record
                result = IngestResult.OPAQUE if isinstance(message, OpaquePayload) else IngestResult.NEW
            elif existing.decodable and existing.message.body != message.body:
                log.warning("%s: conflicting body for id %r from %s", self.node_id, key, source)
                result = IngestResult.CONFLICT
            else:
                existing.times_heard += 1
                result = IngestResult.DUPLICATE
        self.counts[result.value] += 1
        line = f"tick={now} source={log_value(source)} frame={log_value(frame)} result={result.value}"
        if key is not None:
            line += f" key={log_value(key)}"
        self.log.append(line)
        return result

    def set_relay(self, key: str, relay: bool, now: int = 0) -> None:
        record = self.records.get(key)
        if record is None:
            raise UnknownKey(key)
        record.relay = bool(relay)
        self.log.append(
            f"tick={now} source={log_value(self.node_id)} frame=- result=relay_set "
            f"key={log_value(key)} relay={'true' if relay else 'false'}"
        )

    def relayed_set(self) -> list[MessageRecord]:
        chosen = [r for r in self.records.values() if r.relay]
        chosen.sort(key=lambda r: (r.first_seen, r.dedup_key))
        return chosen

    def originate(self, body: str, now: int, cipher: Optional[CipherSuite] = None) -> MessageRecord:
        """Author a message locally; its id is ``<node>-<n>``.

        The frame is encoded once here.  If it does not fit a device name the
        record is kept without one and is skipped when sessions are built.
        """
        self._seq += 1
        while f"{self.node_id}-{self._seq}" in self.records:
            self._seq += 1
        msg = PlainMessage(f"{self.node_id}-{self._seq}", body)
        try:
            if cipher is None:
                frame = codec.encode_frame(msg, codec.PLAIN, self.codebook)
            else:
                frame = codec.encode_frame(msg, codec.ENCRYPTED, self.codebook, cipher)
        except codec.FrameTooLong as exc:
            log.warning("%s: message %s will not fit a device name: %s", self.node_id, msg.id, exc)
            frame = None
        record = MessageRecord(msg.id, msg, True, now, self.node_id, frame=frame, local=True)
        self.records[msg.id] = record
        line = (
            f"tick={now} source={log_value(self.node_id)} frame={log_value(frame or '')} "
            f"result=originated key={log_value(msg.id)} body={log_value(body)}"
        )
        if cipher is not None:
            line += f" cipher={log_value(cipher.key_id)}"
        self.log.append(line)
        return record

    def snapshot(self) -> dict[str, MessageRecord]:
        return {k: replace(r) for k, r in self.records.items()}

    @classmethod
    def replay(
        cls,
        lines: Iterable[str],
        node_id: str,
        codebook: Codebook = codec.EMPTY_CODEBOOK,
        ciphers: Sequence[CipherSuite] = (),
        relay_policy: RelayDecision = relay_everything,
    ) -> "MessageStore":
        """Rebuild a store by folding its log."""
        store = cls(node_id, codebook, ciphers, relay_policy)
        by_id = {c.key_id: c for c in store.ciphers}
        for line in lines:
            if not line.strip():
                continue
            f = parse_log_line(line)
            tick = int(f["tick"])
            result = f["result"]
            if result == "originated":
                cipher = by_id[f["cipher"]] if f.get("cipher") else None
                store.originate(f.get("body", ""), tick, cipher)
            elif result == "relay_set":
                store.set_relay(f["key"], f["relay"] == "true", tick)
            else:
                store.ingest(f["frame"], f["source"], tick)
        return store

"""Relay-node behaviour.

A node is a pure state machine: every handler takes the current tick plus
the event data and returns a list of radio commands for the caller to
execute.  Received names always go through the node's store.

An exchange session toward a peer walks the relayed set one frame at a
time: set the local name to the frame and UUID-scan the peer (which makes
the peer read the name fresh), wait one tick, repeat, and finally restore
the human device name.  A session with ``k`` frames takes ``2k + 1`` ticks.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from . import codec
from .ciphers import CipherSuite
from .codec import Codebook
from .store import IngestResult, MessageRecord, MessageStore

log = logging.getLogger(__name__)


# -- radio commands -----------------------------------------------------------


@dataclass(frozen=True)
class Inquiry:
    pass


@dataclass(frozen=True)
class Connect:
    peer: str


@dataclass(frozen=True)
class UuidScan:
    peer: str


@dataclass(frozen=True)
class NameRequest:
    peer: str


@dataclass(frozen=True)
class SetName:
    name: str


Command = Union[Inquiry, Connect, UuidScan, NameRequest, SetName]


# -- relay policies -----------------------------------------------------------


@dataclass(frozen=True)
class RelayPolicy:
    name: str
    decide: Callable[[MessageRecord], bool]

    def __call__(self, record: MessageRecord) -> bool:
        return self.decide(record)


RELAY_EVERYTHING = RelayPolicy("relay-everything", lambda r: True)
RELAY_NOTHING = RelayPolicy("relay-nothing", lambda r: False)
RELAY_OWN_ONLY = RelayPolicy("relay-own-only", lambda r: r.local)


def body_contains(substring: str) -> RelayPolicy:
    """Relay only readable messages whose body contains ``substring``."""
    return RelayPolicy(
        f"predicate-on-body:{substring}",
        lambda r: r.decodable and substring in r.message.body,
    )


def seeded_coin(seed: int, node_id: str, p: float) -> RelayPolicy:
    """Relay each message with probability ``p``, fixed per (seed, node, key).

    The draw is a hash of its inputs, so the policy stays a pure function of
    the record while still varying with the scenario seed.
    """

    def decide(r: MessageRecord) -> bool:
        h = hashlib.sha256(f"{seed}\0{node_id}\0{r.dedup_key}".encode("utf-8")).digest()
        return int.from_bytes(h[:8], "big") / 2**64 < p

    return RelayPolicy(f"random:{p}", decide)


# -- node ---------------------------------------------------------------------


@dataclass
class NodeConfig:
    node_id: str
    base_name: str
    discoverable: bool = True
    scan_interval: int = 10
    relay_policy: RelayPolicy = RELAY_EVERYTHING
    codebook: Codebook = codec.EMPTY_CODEBOOK
    ciphers: Sequence[CipherSuite] = ()
    # test switch: with this off the session never prompts the peer to re-read
    uuid_scan: bool = True

    def __post_init__(self):
        if not self.node_id:
            raise ValueError("node_id must be non-empty")
        if self.scan_interval < 1:
            raise ValueError("scan_interval must be at least 1")
        if self.base_name.startswith((codec.HEADER, codec.LEGACY_HEADER)):
            raise ValueError("base_name must not look like a frame")
        if len(self.base_name) > codec.MAX_NAME_LENGTH:
            raise ValueError("base_name is longer than a device name may be")


class Phase(str, enum.Enum):
    IDLE = "IDLE"
    EXCHANGING = "EXCHANGING"


class Step(str, enum.Enum):
    SET_NAME = "SET_NAME"
    AWAIT_SCAN = "AWAIT_SCAN"


@dataclass
class SessionState:
    phase: Phase = Phase.IDLE
    peer: Optional[str] = None
    remaining: list[str] = field(default_factory=list)
    step: Step = Step.SET_NAME
    started: Optional[int] = None


class Node:
    def __init__(self, config: NodeConfig):
        self.config = config
        self.node_id = config.node_id
        self.store = MessageStore(
            config.node_id, config.codebook, config.ciphers, config.relay_policy
        )
        self.session = SessionState()
        self.last_session: dict[str, int] = {}
        self.skipped_frames = 0
        # a scan that fell due mid-session runs on the next idle tick
        self.scan_pending = False

    @property
    def idle(self) -> bool:
        return self.session.phase is Phase.IDLE

    def _ingest(self, name: str, source: str, now: int) -> IngestResult:
        return self.store.ingest(name, source, now)

    def choose_peer(self, peers: Sequence[str]) -> str:
        """Least recently contacted peer first; never-contacted peers lead.

        Ties go to the lowest node id, so the first ever choice is the lowest
        id and peers passed over are picked up on later scans.
        """
        return min(peers, key=lambda p: (self.last_session.get(p, -1), p))

    def start_session(self, peer: str, now: int) -> None:
        frames = []
        for record in self.store.relayed_set():
            if record.frame is None or len(record.frame) > codec.MAX_NAME_LENGTH:
                log.warning("%s: skipping %s, no frame fits a device name", self.node_id, record.dedup_key)
                self.skipped_frames += 1
                continue
            frames.append(record.frame)
        self.session = SessionState(Phase.EXCHANGING, peer, frames, Step.SET_NAME, now)
        self.last_session[peer] = now

    def _end_session(self) -> list[Command]:
        self.session = SessionState()
        return [SetName(self.config.base_name)]

    # -- handlers -------------------------------------------------------------

    def on_tick(self, now: int) -> list[Command]:
        if now % self.config.scan_interval == 0:
            self.scan_pending = True
        if self.idle:
            if self.scan_pending:
                self.scan_pending = False
                return [Inquiry()]
            return []
        return self.advance_session(now)

    def advance_session(self, now: int) -> list[Command]:
        s = self.session
        if s.phase is not Phase.EXCHANGING:
            return []
        if s.step is Step.AWAIT_SCAN:
            s.step = Step.SET_NAME
            return []
        if not s.remaining:
            return self._end_session()
        frame = s.remaining.pop(0)
        s.step = Step.AWAIT_SCAN
        cmds: list[Command] = [SetName(frame)]
        if self.config.uuid_scan:
            cmds.append(UuidScan(s.peer))
        return cmds

    def on_discovery_result(self, now: int, peers: Sequence[tuple[str, str]]) -> list[Command]:
        for peer, name in peers:
            self._ingest(name, peer, now)
        if not peers:
            return []
        if not self.idle:
            self.scan_pending = True
            return []
        target = self.choose_peer([p for p, _ in peers])
        self.start_session(target, now)
        return [Connect(target)]

    def on_inbound_connection(self, now: int, source: str) -> list[Command]:
        cmds: list[Command] = [NameRequest(source)]
        if self.idle:
            self.start_session(source, now)
        return cmds

    def on_uuid_scan(self, now: int, source: str) -> list[Command]:
        return [NameRequest(source)]

    def on_name_read(self, now: int, source: str, name: str) -> list[Command]:
        self._ingest(name, source, now)
        return []

    def on_command_failed(self, now: int, cmd: Command) -> list[Command]:
        peer = getattr(cmd, "peer", None)
        if not self.idle and peer is not None and peer == self.session.peer and not isinstance(cmd, NameRequest):
            log.info("%s: lost %s mid-session, restoring name", self.node_id, peer)
            return self._end_session()
        return []

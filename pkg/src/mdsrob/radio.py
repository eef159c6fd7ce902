"""Deterministic simulated piconet.

Models only what the protocol relies on: adjacency, discoverability-gated
inquiry, per-observer name caches that go stale, cache-bypassing name reads,
connections and UUID-scan signals.  Every scheduled event is delivered in
``(tick, target node, enqueue sequence)`` order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable, Optional
from urllib.parse import quote

from .codec import MAX_NAME_LENGTH

INQUIRY_COMPLETE = "InquiryComplete"
INBOUND_CONNECTION = "InboundConnection"
UUID_SCAN_RECEIVED = "UuidScanReceived"
NAME_READ_COMPLETE = "NameReadComplete"


class RadioError(Exception):
    pass


class OutOfRange(RadioError):
    pass


class NameTooLong(RadioError, ValueError):
    pass


class UnknownNode(RadioError, KeyError):
    pass


@dataclass(frozen=True)
class Latencies:
    inquiry: int = 3
    read: int = 1
    connect: int = 1
    scan: int = 1

    def __post_init__(self):
        for name in ("inquiry", "read", "connect", "scan"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} latency must be at least 1 tick")


@dataclass(order=True)
class Event:
    tick: int
    target: str
    seq: int
    kind: str = field(compare=False)
    source: Optional[str] = field(default=None, compare=False)
    # filled in at delivery time
    name: Optional[str] = field(default=None, compare=False)
    peers: Optional[list] = field(default=None, compare=False)
    lost: bool = field(default=False, compare=False)


def _q(text: str) -> str:
    return quote(text, safe="+/=") if text else "-"


def format_event(ev: Event) -> str:
    if ev.kind == INQUIRY_COMPLETE:
        detail = "peers=" + (",".join(f"{_q(p)}:{_q(n)}" for p, n in ev.peers) or "-")
    else:
        detail = f"from={_q(ev.source)}"
        if ev.lost:
            detail += ";lost=1"
        elif ev.kind == NAME_READ_COMPLETE:
            detail += f";name={_q(ev.name)}"
    return f"tick={ev.tick} seq={ev.seq} node={_q(ev.target)} kind={ev.kind} detail={detail}"


class Piconet:
    def __init__(self, latencies: Latencies = Latencies()):
        self.latencies = latencies
        self.true_name: dict[str, str] = {}
        self.discoverable: dict[str, bool] = {}
        self.adjacency: dict[str, set[str]] = {}
        self.name_cache: dict[tuple[str, str], str] = {}
        self.queue: list[Event] = []
        self.event_log: list[str] = []
        self._seq = 0

    # -- topology and node state -------------------------------------------

    def add_node(self, node_id: str, name: str, discoverable: bool = True) -> None:
        if node_id in self.true_name:
            raise ValueError(f"duplicate node {node_id!r}")
        self._check_name(name)
        self.true_name[node_id] = name
        self.discoverable[node_id] = discoverable
        self.adjacency[node_id] = set()

    def _require(self, node_id: str) -> None:
        if node_id not in self.true_name:
            raise UnknownNode(node_id)

    def add_edge(self, a: str, b: str) -> None:
        self._require(a)
        self._require(b)
        if a == b:
            raise ValueError("self loops are not allowed")
        self.adjacency[a].add(b)
        self.adjacency[b].add(a)

    def remove_edge(self, a: str, b: str) -> None:
        self.adjacency.get(a, set()).discard(b)
        self.adjacency.get(b, set()).discard(a)

    def adjacent(self, a: str, b: str) -> bool:
        return b in self.adjacency.get(a, ())

    def set_discoverable(self, node_id: str, flag: bool) -> None:
        self._require(node_id)
        self.discoverable[node_id] = bool(flag)

    @staticmethod
    def _check_name(name: str) -> None:
        if len(name) > MAX_NAME_LENGTH:
            raise NameTooLong(f"name is {len(name)} characters, limit is {MAX_NAME_LENGTH}")

    def set_name(self, node_id: str, name: str) -> None:
        """Change a node's advertised name.  Caches elsewhere are left alone."""
        self._require(node_id)
        self._check_name(name)
        self.true_name[node_id] = name

    def cached_name(self, observer: str, subject: str) -> Optional[str]:
        return self.name_cache.get((observer, subject))

    # -- commands that schedule events --------------------------------------

    def _schedule(self, tick: int, target: str, kind: str, source: Optional[str] = None) -> Event:
        ev = Event(tick, target, self._seq, kind, source)
        self._seq += 1
        heapq.heappush(self.queue, ev)
        return ev

    def _require_adjacent(self, a: str, b: str) -> None:
        self._require(a)
        self._require(b)
        if not self.adjacent(a, b):
            raise OutOfRange(f"{b} is not in range of {a}")

    def inquiry(self, observer: str, now: int) -> Event:
        self._require(observer)
        return self._schedule(now + self.latencies.inquiry, observer, INQUIRY_COMPLETE)

    def remote_name_request(self, observer: str, subject: str, now: int) -> Event:
        self._require_adjacent(observer, subject)
        return self._schedule(now + self.latencies.read, observer, NAME_READ_COMPLETE, subject)

    def connect(self, initiator: str, target: str, now: int) -> Event:
        self._require_adjacent(initiator, target)
        return self._schedule(now + self.latencies.connect, target, INBOUND_CONNECTION, initiator)

    def uuid_scan(self, scanner: str, target: str, now: int) -> Event:
        self._require_adjacent(scanner, target)
        return self._schedule(now + self.latencies.scan, target, UUID_SCAN_RECEIVED, scanner)

    # -- delivery -------------------------------------------------------------

    def _resolve(self, ev: Event) -> None:
        if ev.kind == INQUIRY_COMPLETE:
            peers = []
            for subject in sorted(self.adjacency[ev.target]):
                if not self.discoverable[subject]:
                    continue
                key = (ev.target, subject)
                if key not in self.name_cache:
                    self.name_cache[key] = self.true_name[subject]
                peers.append((subject, self.name_cache[key]))
            ev.peers = peers
        elif not self.adjacent(ev.target, ev.source):
            ev.lost = True
        elif ev.kind == NAME_READ_COMPLETE:
            ev.name = self.true_name[ev.source]
            self.name_cache[(ev.target, ev.source)] = ev.name

    def next_tick(self) -> Optional[int]:
        return self.queue[0].tick if self.queue else None

    def pop_due(self, now: int) -> Iterable[Event]:
        """Yield events due at or before ``now``, resolving each on delivery.

        Resolution is lazy so that handlers for earlier events in the same
        tick can affect what later ones observe.
        """
        while self.queue and self.queue[0].tick <= now:
            ev = heapq.heappop(self.queue)
            self._resolve(ev)
            self.event_log.append(format_event(ev))
            yield ev

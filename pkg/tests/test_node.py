import pytest
from hypothesis import given
from hypothesis import strategies as st

from mdsrob.codec import PlainMessage
from mdsrob.node import (
    RELAY_EVERYTHING,
    RELAY_NOTHING,
    RELAY_OWN_ONLY,
    Connect,
    Inquiry,
    NameRequest,
    Node,
    NodeConfig,
    Phase,
    SetName,
    UuidScan,
    body_contains,
    seeded_coin,
)
from mdsrob.store import MessageRecord

from .conftest import GOLDEN_B

GOLDEN = "MDSR0" + GOLDEN_B


def make(node_id="A", messages=(), **kw):
    kw.setdefault("base_name", "Nexus 7")
    n = Node(NodeConfig(node_id, **kw))
    for body in messages:
        n.store.originate(body, 0)
    return n


def run_session(n, start):
    """Advance an active session until idle; returns per-tick command lists."""
    ticks = []
    now = start
    while True:
        ticks.append(n.advance_session(now))
        now += 1
        if n.idle:
            return ticks


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"scan_interval": 0},
        {"base_name": "MDSR0abc"},
        {"base_name": "JPCname"},
        {"base_name": "x" * 249},
    ])
    def test_rejects(self, kw):
        kw.setdefault("base_name", "ok")
        with pytest.raises(ValueError):
            NodeConfig("A", **kw)


class TestOnTick:
    def test_schedule(self):
        n = make(scan_interval=10)
        assert n.on_tick(10) == [Inquiry()]
        assert n.on_tick(11) == []

    def test_busy_node_scans_later(self):
        n = make(messages=["x"], scan_interval=10)
        n.start_session("B", 9)
        cmds = n.on_tick(10)
        assert Inquiry() not in cmds
        assert cmds == [SetName(n.store.get("A-1").frame), UuidScan("B")]
        n.on_tick(11)
        assert n.on_tick(12) == [SetName("Nexus 7")]
        assert n.on_tick(13) == [Inquiry()]
        assert n.on_tick(14) == []


class TestDiscovery:
    def test_ingests_and_connects(self):
        n = make()
        cmds = n.on_discovery_result(3, [("B", GOLDEN)])
        assert cmds == [Connect("B")]
        assert n.store.get("1").message == PlainMessage("1", "hello")
        assert n.session.phase is Phase.EXCHANGING and n.session.peer == "B"

    def test_plain_name(self):
        n = make()
        assert n.on_discovery_result(3, [("B", "Nexus 7")]) == [Connect("B")]
        assert len(n.store) == 0
        assert n.store.counts["not_a_frame"] == 1

    def test_empty(self):
        n = make()
        assert n.on_discovery_result(3, []) == []
        assert n.idle and n.last_session == {}

    def test_lowest_id_first_then_rotation(self):
        n = make()
        peers = [("B", "b"), ("C", "c"), ("D", "d")]
        assert n.on_discovery_result(3, peers) == [Connect("B")]
        run_session(n, 3)
        assert n.on_discovery_result(13, peers) == [Connect("C")]
        run_session(n, 13)
        assert n.on_discovery_result(23, peers) == [Connect("D")]
        run_session(n, 23)
        assert n.on_discovery_result(33, peers) == [Connect("B")]

    def test_busy_ingests_only(self):
        n = make()
        n.start_session("C", 0)
        assert n.on_discovery_result(3, [("B", GOLDEN)]) == []
        assert "1" in n.store and n.session.peer == "C"
        assert n.scan_pending


class TestInbound:
    def test_reads_and_starts_session(self):
        n = make()
        assert n.on_inbound_connection(4, "B") == [NameRequest("B")]
        assert n.session.peer == "B"

    def test_busy_reads_only(self):
        n = make()
        n.start_session("C", 0)
        assert n.on_inbound_connection(4, "B") == [NameRequest("B")]
        assert n.session.peer == "C"

    def test_current_peer_reads_only(self):
        n = make(messages=["a"])
        n.start_session("B", 0)
        n.advance_session(0)
        assert n.on_inbound_connection(4, "B") == [NameRequest("B")]
        assert n.session.step.value == "AWAIT_SCAN"


class TestUuidScan:
    def test_fresh_read_and_ingest(self):
        n = make()
        assert n.on_uuid_scan(5, "B") == [NameRequest("B")]
        n.on_name_read(6, "B", GOLDEN)
        assert n.store.get("1").first_seen == 6

    def test_base_name_not_stored(self):
        n = make()
        n.on_name_read(6, "B", "GT-P1010")
        assert len(n.store) == 0

    def test_repeated(self):
        n = make()
        for t in range(3):
            n.on_name_read(t, "B", GOLDEN)
        assert n.store.get("1").times_heard == 3


class TestSession:
    def test_two_frames(self):
        n = make(messages=["one", "two"])
        f1, f2 = (r.frame for r in n.store.relayed_set())
        n.start_session("B", 0)
        ticks = run_session(n, 0)
        assert ticks == [
            [SetName(f1), UuidScan("B")],
            [],
            [SetName(f2), UuidScan("B")],
            [],
            [SetName("Nexus 7")],
        ]
        assert sum(isinstance(c, UuidScan) for t in ticks for c in t) == 2

    def test_empty(self):
        n = make()
        n.start_session("B", 0)
        assert run_session(n, 0) == [[SetName("Nexus 7")]]

    def test_three_frames(self):
        n = make(messages=["a", "b", "c"])
        n.start_session("B", 0)
        ticks = run_session(n, 0)
        pairs = [t for t in ticks if any(isinstance(c, UuidScan) for c in t)]
        assert len(pairs) == 3
        assert len(ticks) == 7
        assert ticks[-1] == [SetName("Nexus 7")]

    @given(st.integers(0, 12))
    def test_liveness(self, k):
        n = make(messages=[f"m{i}" for i in range(k)])
        n.start_session("B", 0)
        ticks = run_session(n, 0)
        assert len(ticks) == 2 * k + 1
        assert ticks[-1] == [SetName("Nexus 7")]

    def test_no_scan_switch(self):
        n = make(messages=["a"], uuid_scan=False)
        n.start_session("B", 0)
        assert run_session(n, 0)[0] == [SetName(n.store.get("A-1").frame)]

    def test_frames_without_name_skipped(self):
        body = "".join(chr(0x4E00 + (i * 7919) % 20000) for i in range(300))
        n = make(messages=["fits", body])
        n.start_session("B", 0)
        assert len(n.session.remaining) == 1
        assert n.skipped_frames == 1

    def test_relay_off_excluded(self):
        n = make(messages=["a", "b"])
        n.store.set_relay("A-1", False)
        n.start_session("B", 0)
        assert n.session.remaining == [n.store.get("A-2").frame]

    def test_peer_lost_restores_name(self):
        n = make(messages=["a", "b"])
        n.start_session("B", 0)
        assert n.on_command_failed(0, UuidScan("B")) == [SetName("Nexus 7")]
        assert n.idle
        assert n.on_command_failed(1, NameRequest("C")) == []


class TestPolicies:
    def rec(self, body="x", local=False, key="k"):
        return MessageRecord(key, PlainMessage(key, body), False, 0, "B", local=local)

    def test_builtin(self):
        assert RELAY_EVERYTHING(self.rec()) is True
        assert RELAY_NOTHING(self.rec()) is False
        assert RELAY_OWN_ONLY(self.rec()) is False
        assert RELAY_OWN_ONLY(self.rec(local=True)) is True

    def test_body_filter(self):
        p = body_contains("subway")
        assert p(self.rec("meet at the subway"))
        assert not p(self.rec("meet at the park"))

    @given(st.integers(), st.text(min_size=1, max_size=5))
    def test_random_policy_is_pure(self, seed, key):
        p = seeded_coin(seed, "A", 0.5)
        r = self.rec(key=key)
        assert p(r) == p(r)

    def test_random_policy_depends_on_seed(self):
        recs = [self.rec(key=f"k{i}") for i in range(64)]
        a = [seeded_coin(1, "A", 0.5)(r) for r in recs]
        b = [seeded_coin(2, "A", 0.5)(r) for r in recs]
        assert a != b
        assert 10 < sum(a) < 54

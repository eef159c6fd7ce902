"""Deterministic scenario runner.

Each tick runs three phases: scripted actions, delivery of due radio
events, then ``on_tick`` for every node.  Nodes always act in ascending
node-id order, so the output depends only on scenario content.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union
from urllib.parse import quote

import networkx as nx

from . import codec, node as nodemod
from .ciphers import keyed_test_cipher
from .node import Command, Connect, Inquiry, NameRequest, Node, NodeConfig, SetName, UuidScan
from .radio import (
    INBOUND_CONNECTION,
    INQUIRY_COMPLETE,
    NAME_READ_COMPLETE,
    UUID_SCAN_RECEIVED,
    Latencies,
    OutOfRange,
    Piconet,
)
from .scenario import PolicySpec, Scenario, parse_scenario
from .store import UnknownKey, frame_digest, parse_log_line

log = logging.getLogger(__name__)

INGESTED = ("new", "duplicate", "conflict", "opaque")


def build_policy(spec: PolicySpec, seed: int, node_id: str) -> nodemod.RelayPolicy:
    if spec.kind == "relay-everything":
        return nodemod.RELAY_EVERYTHING
    if spec.kind == "relay-nothing":
        return nodemod.RELAY_NOTHING
    if spec.kind == "relay-own-only":
        return nodemod.RELAY_OWN_ONLY
    if spec.kind == "predicate-on-body":
        return nodemod.body_contains(spec.substring)
    return nodemod.seeded_coin(seed, node_id, spec.p)


@dataclass
class RunResult:
    scenario: Scenario
    nodes: dict[str, Node]
    event_log: list[str]
    command_log: list[str]
    report: dict

    @property
    def store_logs(self) -> dict[str, list[str]]:
        return {nid: n.store.log for nid, n in self.nodes.items()}

    def event_log_text(self) -> str:
        return "".join(line + "\n" for line in self.event_log)

    def delivery(self, message_id: str, node_id: str) -> Optional[int]:
        return self.report["delivery"][message_id][node_id]


class Simulation:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        lat = scenario.latencies
        self.piconet = Piconet(Latencies(lat.inquiry, lat.read, lat.connect, lat.scan))
        self.rng = random.Random(scenario.seed)
        self.ciphers = {k: keyed_test_cipher(k, secret) for k, secret in sorted(scenario.keys.items())}
        self.command_log: list[str] = []
        default_cb = codec.default_codebook()

        self.nodes: dict[str, Node] = {}
        for spec in sorted(scenario.nodes, key=lambda n: n.id):
            cfg = NodeConfig(
                node_id=spec.id,
                base_name=spec.device_name,
                discoverable=spec.discoverable,
                scan_interval=spec.scan_interval,
                relay_policy=build_policy(spec.relay_policy, scenario.seed, spec.id),
                codebook=default_cb if spec.codebook == "default" else codec.EMPTY_CODEBOOK,
                ciphers=[self.ciphers[k] for k in spec.keys],
                uuid_scan=scenario.uuid_scan,
            )
            self.nodes[spec.id] = Node(cfg)
            self.piconet.add_node(spec.id, cfg.base_name, cfg.discoverable)
        for a, b in sorted(tuple(sorted(e)) for e in scenario.edges):
            self.piconet.add_edge(a, b)

        self.actions = []
        for spec in scenario.nodes:
            for i, act in enumerate(spec.actions):
                self.actions.append((act.tick, spec.id, i, act))
        self.actions.sort(key=lambda a: a[:3])

    # -- command execution ----------------------------------------------------

    def _log_command(self, now: int, nid: str, cmd: Command, failure: str = "") -> None:
        kind = type(cmd).__name__
        arg = getattr(cmd, "peer", None) or getattr(cmd, "name", None) or "-"
        line = f"tick={now} node={nid} cmd={kind} arg={quote(arg, safe='+/=')}"
        if failure:
            line += f" failed={failure}"
        self.command_log.append(line)

    def execute(self, nid: str, cmds: list[Command], now: int) -> None:
        radio = self.piconet
        for cmd in cmds:
            try:
                if isinstance(cmd, Inquiry):
                    radio.inquiry(nid, now)
                elif isinstance(cmd, SetName):
                    radio.set_name(nid, cmd.name)
                elif isinstance(cmd, Connect):
                    radio.connect(nid, cmd.peer, now)
                elif isinstance(cmd, UuidScan):
                    radio.uuid_scan(nid, cmd.peer, now)
                elif isinstance(cmd, NameRequest):
                    radio.remote_name_request(nid, cmd.peer, now)
                else:
                    raise TypeError(f"unknown command {cmd!r}")
            except OutOfRange:
                self._log_command(now, nid, cmd, "OutOfRange")
                self.execute(nid, self.nodes[nid].on_command_failed(now, cmd), now)
            else:
                self._log_command(now, nid, cmd)

    def dispatch(self, ev, now: int) -> None:
        node = self.nodes[ev.target]
        if ev.kind == INQUIRY_COMPLETE:
            cmds = node.on_discovery_result(now, ev.peers)
        elif ev.lost:
            return
        elif ev.kind == INBOUND_CONNECTION:
            cmds = node.on_inbound_connection(now, ev.source)
        elif ev.kind == UUID_SCAN_RECEIVED:
            cmds = node.on_uuid_scan(now, ev.source)
        elif ev.kind == NAME_READ_COMPLETE:
            cmds = node.on_name_read(now, ev.source, ev.name)
        else:
            raise ValueError(f"unknown event kind {ev.kind}")
        self.execute(ev.target, cmds, now)

    def _apply(self, nid: str, act, now: int) -> None:
        node = self.nodes[nid]
        kind = act.kind
        if kind == "originate":
            node.store.originate(act.originate, now, self.ciphers[act.key] if act.key else None)
        elif kind == "set_relay":
            try:
                node.store.set_relay(act.set_relay, act.relay, now)
            except UnknownKey:
                log.warning("%s: set_relay for unknown message %r at tick %d", nid, act.set_relay, now)
        elif kind == "set_discoverable":
            self.piconet.set_discoverable(nid, act.set_discoverable)
        elif kind == "add_edge":
            self.piconet.add_edge(*act.add_edge)
        elif kind == "remove_edge":
            self.piconet.remove_edge(*act.remove_edge)

    def run(self) -> RunResult:
        sc = self.scenario
        for nid in self.nodes:
            spec = sc.node(nid)
            for m in spec.messages:
                self.nodes[nid].store.originate(m.body, 0, self.ciphers[m.key] if m.key else None)

        pending = list(self.actions)
        for now in range(sc.horizon + 1):
            while pending and pending[0][0] == now:
                _, nid, _, act = pending.pop(0)
                self._apply(nid, act, now)
            for ev in self.piconet.pop_due(now):
                self.dispatch(ev, now)
            for nid, node in self.nodes.items():
                self.execute(nid, node.on_tick(now), now)

        report = build_report(sc, {nid: n.store.log for nid, n in self.nodes.items()}, self.command_log)
        return RunResult(sc, self.nodes, self.piconet.event_log, self.command_log, report)


def run(scenario: Union[Scenario, dict]) -> RunResult:
    if isinstance(scenario, dict):
        scenario = parse_scenario(scenario)
    return Simulation(scenario).run()


def replay_check(event_log_a: Union[str, bytes, list], event_log_b: Union[str, bytes, list]) -> bool:
    def as_bytes(x):
        if isinstance(x, list):
            x = "".join(line + "\n" for line in x)
        return x.encode("utf-8") if isinstance(x, str) else bytes(x)

    return as_bytes(event_log_a) == as_bytes(event_log_b)


# -- metrics ------------------------------------------------------------------


def build_report(scenario: Scenario, store_logs: dict[str, list[str]], command_log: list[str]) -> dict:
    """Compute the run report from the logs alone."""
    node_ids = sorted(store_logs)
    messages = []
    alias: dict[str, str] = {}
    for nid in node_ids:
        for line in store_logs[nid]:
            f = parse_log_line(line)
            if f["result"] != "originated":
                continue
            mid = f["key"]
            frame = f.get("frame", "")
            messages.append({
                "id": mid,
                "origin": nid,
                "tick": int(f["tick"]),
                "body": f.get("body", ""),
                "encrypted": bool(f.get("cipher")),
                "frame_length": len(frame) if frame else None,
            })
            alias[mid] = mid
            if frame:
                alias[frame_digest(frame)] = mid

    delivery = {m["id"]: {nid: None for nid in node_ids} for m in messages}
    counters = {
        "inquiries": 0, "name_sets": 0, "scans": 0, "connects": 0, "name_reads": 0,
        "frames_ingested": 0, "new": 0, "duplicates": 0, "opaque": 0,
        "malformed": 0, "conflicts": 0, "not_a_frame": 0,
    }
    for nid in node_ids:
        for line in store_logs[nid]:
            f = parse_log_line(line)
            result = f["result"]
            if result in INGESTED:
                counters["frames_ingested"] += 1
            counters_key = {"duplicate": "duplicates", "conflict": "conflicts"}.get(result, result)
            if counters_key in counters:
                counters[counters_key] += 1
            if result in ("new", "opaque", "originated"):
                mid = alias.get(f.get("key", ""))
                if mid is not None and delivery[mid][nid] is None:
                    delivery[mid][nid] = int(f["tick"])

    cmd_counter = {"Inquiry": "inquiries", "SetName": "name_sets", "UuidScan": "scans",
                   "Connect": "connects", "NameRequest": "name_reads"}
    for line in command_log:
        f = parse_log_line(line)
        if "failed" not in f:
            counters[cmd_counter[f["cmd"]]] += 1

    coverage = {}
    for mid, row in delivery.items():
        ticks = sorted(t for t in row.values() if t is not None)
        curve = []
        for i, t in enumerate(ticks, start=1):
            if curve and curve[-1][0] == t:
                curve[-1][1] = i
            else:
                curve.append([t, i])
        coverage[mid] = curve

    cells = len(messages) * len(node_ids)
    reached = sum(1 for row in delivery.values() for t in row.values() if t is not None)
    return {
        "schema": 1,
        "scenario": scenario.name,
        "seed": scenario.seed,
        "horizon": scenario.horizon,
        "nodes": node_ids,
        "messages": messages,
        "delivery": delivery,
        "coverage": coverage,
        "coverage_fraction": reached / cells if cells else 1.0,
        "counters": counters,
    }


def delivery_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["message", "origin", "node", "first_seen"])
    origin = {m["id"]: m["origin"] for m in report["messages"]}
    for mid, row in report["delivery"].items():
        for nid, tick in row.items():
            w.writerow([mid, origin[mid], nid, "never" if tick is None else tick])
    return buf.getvalue()


def summary_line(report: dict) -> str:
    return (f"messages={len(report['messages'])} nodes={len(report['nodes'])} "
            f"coverage={100.0 * report['coverage_fraction']:.1f}%")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_outputs(result: RunResult, out_dir: Union[str, Path]) -> Path:
    out = Path(out_dir)
    _atomic_write(out / "events.log", result.event_log_text())
    _atomic_write(out / "commands.log", "".join(line + "\n" for line in result.command_log))
    for nid, lines in result.store_logs.items():
        _atomic_write(out / "stores" / f"{quote(nid, safe='')}.log", "".join(line + "\n" for line in lines))
    _atomic_write(out / "delivery.csv", delivery_csv(result.report))
    _atomic_write(out / "report.json", json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    return out


# -- analysis helpers ---------------------------------------------------------


def topology(scenario: Scenario) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(n.id for n in scenario.nodes)
    g.add_edges_from(scenario.edges)
    return g


def dissemination_bound(scenario: Scenario) -> int:
    """Tick by which every message should have reached its whole component.

    Assumes relay-everything, a static topology and every edge having at
    least one discoverable end.  Each BFS layer away from the origin costs a
    full rotation of the busiest node through its neighbours, where one
    rotation step is a scan wait plus the complete exchange.
    """
    g = topology(scenario)
    lat = scenario.latencies
    longest_session = 2 * scenario.message_count() + 1
    max_scan = max(n.scan_interval for n in scenario.nodes)
    max_degree = max((d for _, d in g.degree()), default=0)
    step = max_scan + lat.inquiry + lat.connect + longest_session + lat.scan + lat.read
    per_layer = (max_degree + 1) * step
    bound = 0
    for spec in scenario.nodes:
        starts = [0] * len(spec.messages) + [a.tick for a in spec.actions if a.originate is not None]
        if not starts:
            continue
        layers = max(nx.single_source_shortest_path_length(g, spec.id).values())
        bound = max(bound, max(starts) + layers * per_layer)
    return bound


def random_connected_scenario(n: int, seed: int, *, edge_p: float = 0.3, scan_interval=(10, 30),
                              horizon: Optional[int] = None) -> Scenario:
    """Random connected graph, one message per node, everyone discoverable."""
    rng = random.Random(seed)
    while True:
        g = nx.gnp_random_graph(n, edge_p, seed=rng.randrange(2**32))
        if nx.is_connected(g):
            break
    ids = [f"N{i:02d}" for i in range(n)]
    nodes = [
        {
            "id": ids[i],
            "base_name": f"Phone {i}",
            "scan_interval": rng.randint(*scan_interval),
            "messages": [f"hello from {ids[i]}"],
        }
        for i in range(n)
    ]
    doc = {
        "schema": 1,
        "name": f"random-{n}-{seed}",
        "seed": seed,
        "horizon": 0,
        "nodes": nodes,
        "edges": [[ids[a], ids[b]] for a, b in sorted(g.edges())],
    }
    sc = parse_scenario(doc)
    doc["horizon"] = horizon if horizon is not None else dissemination_bound(sc)
    return parse_scenario(doc)

"""Scenario documents (JSON, ``schema: 1``) and their validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import codec

SCHEMA_VERSION = 1


class InvalidScenario(ValueError):
    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, validate_default=True)


class LatencySpec(_Strict):
    inquiry: int = Field(3, ge=1)
    read: int = Field(1, ge=1)
    connect: int = Field(1, ge=1)
    scan: int = Field(1, ge=1)


class PolicySpec(_Strict):
    kind: Literal["relay-everything", "relay-nothing", "relay-own-only", "predicate-on-body", "random"]
    substring: Optional[str] = None
    p: Optional[float] = Field(None, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _params(self):
        if self.kind == "predicate-on-body" and self.substring is None:
            raise ValueError("predicate-on-body needs 'substring'")
        if self.kind == "random" and self.p is None:
            raise ValueError("random needs 'p'")
        return self


class MessageSpec(_Strict):
    body: str
    key: Optional[str] = None


class ActionSpec(_Strict):
    tick: int = Field(ge=0)
    originate: Optional[str] = None
    key: Optional[str] = None
    set_relay: Optional[str] = None
    relay: Optional[bool] = None
    set_discoverable: Optional[bool] = None
    add_edge: Optional[tuple[str, str]] = None
    remove_edge: Optional[tuple[str, str]] = None

    @model_validator(mode="after")
    def _one_action(self):
        present = [
            k for k in ("originate", "set_relay", "set_discoverable", "add_edge", "remove_edge")
            if getattr(self, k) is not None
        ]
        if len(present) != 1:
            raise ValueError("each action needs exactly one of originate, set_relay, "
                             "set_discoverable, add_edge, remove_edge")
        if present[0] == "set_relay" and self.relay is None:
            raise ValueError("set_relay needs 'relay'")
        if present[0] != "set_relay" and self.relay is not None:
            raise ValueError("'relay' only applies to set_relay")
        if present[0] != "originate" and self.key is not None:
            raise ValueError("'key' only applies to originate")
        return self

    @property
    def kind(self) -> str:
        for k in ("originate", "set_relay", "set_discoverable", "add_edge", "remove_edge"):
            if getattr(self, k) is not None:
                return k
        raise AssertionError("unreachable")


class NodeSpec(_Strict):
    id: str = Field(min_length=1)
    base_name: Optional[str] = None
    discoverable: bool = True
    scan_interval: int = Field(10, ge=1)
    relay_policy: Union[PolicySpec, str] = "relay-everything"
    codebook: Literal["default", "none"] = "default"
    keys: list[str] = []
    messages: list[Union[str, MessageSpec]] = []
    actions: list[ActionSpec] = []

    @field_validator("relay_policy")
    @classmethod
    def _policy(cls, v):
        return PolicySpec(kind=v) if isinstance(v, str) else v

    @field_validator("messages")
    @classmethod
    def _messages(cls, v):
        return [MessageSpec(body=m) if isinstance(m, str) else m for m in v]

    @field_validator("base_name")
    @classmethod
    def _base_name(cls, v):
        if v is not None:
            if v.startswith((codec.HEADER, codec.LEGACY_HEADER)):
                raise ValueError("base_name must not start with MDSR or JPC")
            if len(v) > codec.MAX_NAME_LENGTH:
                raise ValueError(f"base_name longer than {codec.MAX_NAME_LENGTH} characters")
        return v

    @property
    def device_name(self) -> str:
        return self.base_name if self.base_name is not None else f"node {self.id}"


class Scenario(_Strict):
    schema_: Literal[1] = Field(alias="schema")
    name: str = "scenario"
    seed: int = 0
    horizon: int = Field(ge=0)
    latencies: LatencySpec = LatencySpec()
    uuid_scan: bool = True
    keys: dict[str, str] = {}
    nodes: list[NodeSpec]
    edges: list[tuple[str, str]] = []

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True, validate_default=True)

    @model_validator(mode="after")
    def _cross_refs(self):
        ids = [n.id for n in self.nodes]
        seen = set()
        for i, nid in enumerate(ids):
            if nid in seen:
                raise InvalidScenario(f"duplicate node id {nid!r}", f"nodes.{i}.id")
            seen.add(nid)
        for i, (a, b) in enumerate(self.edges):
            for end in (a, b):
                if end not in seen:
                    raise InvalidScenario(f"unknown node {end!r}", f"edges.{i}")
            if a == b:
                raise InvalidScenario("self loop", f"edges.{i}")
        for i, node in enumerate(self.nodes):
            for k in node.keys:
                if k not in self.keys:
                    raise InvalidScenario(f"unknown key {k!r}", f"nodes.{i}.keys")
            for j, m in enumerate(node.messages):
                if m.key is not None and m.key not in node.keys:
                    raise InvalidScenario(f"node does not hold key {m.key!r}", f"nodes.{i}.messages.{j}")
            for j, act in enumerate(node.actions):
                loc = f"nodes.{i}.actions.{j}"
                if act.tick > self.horizon:
                    raise InvalidScenario(f"tick {act.tick} is past the horizon", loc)
                if act.key is not None and act.key not in node.keys:
                    raise InvalidScenario(f"node does not hold key {act.key!r}", loc)
                for edge in (act.add_edge, act.remove_edge):
                    if edge is None:
                        continue
                    if edge[0] == edge[1]:
                        raise InvalidScenario("self loop", loc)
                    for end in edge:
                        if end not in seen:
                            raise InvalidScenario(f"unknown node {end!r}", loc)
        return self

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def message_count(self) -> int:
        return sum(len(n.messages) + sum(1 for a in n.actions if a.originate is not None) for n in self.nodes)


def _location(err: dict) -> str:
    # union and validator wrappers show up as loc parts like "function-after[...]"
    return ".".join(str(p) for p in err.get("loc", ()) if not (isinstance(p, str) and "[" in p))


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise InvalidScenario("scenario must be a JSON object")
    if data.get("schema") != SCHEMA_VERSION:
        raise InvalidScenario(f"unsupported schema {data.get('schema')!r}, expected {SCHEMA_VERSION}", "schema")
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        cause = err.get("ctx", {}).get("error")
        if isinstance(cause, InvalidScenario):
            raise cause from None
        raise InvalidScenario(err["msg"], _location(err)) from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InvalidScenario(f"cannot read scenario: {exc}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"not valid JSON: {exc.msg}", f"line {exc.lineno}") from exc
    return parse_scenario(data)

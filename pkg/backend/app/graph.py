"""Object and room layers: the semantic graph and goal matching."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum

import networkx as nx

from .errors import ConflictError, ValidationFailed
from .metric import GridIndex, MetricPoint

UNCATEGORIZED = "uncategorized"

DEFAULT_ROOM_CATEGORIES = frozenset(
    {
        "office",
        "corridor",
        "conference_room",
        "kitchen",
        "lounge",
        "storage_room",
        "bathroom",
        "living_room",
        "bedroom",
        UNCATEGORIZED,
    }
)


def normalize_label(text: str) -> str:
    return "_".join(text.strip().lower().split())


@dataclass
class RoomNode:
    id: str
    category: str
    centroid: MetricPoint
    cell_count: int
    label: int = 0
    attributes: list[str] = field(default_factory=list)


@dataclass
class ObjectNode:
    id: str
    class_label: str
    position: MetricPoint
    room_id: str


@dataclass(frozen=True)
class RoomEdge:
    room_a: str
    room_b: str
    weight: float
    portal: GridIndex

    def other(self, room_id: str) -> str:
        return self.room_b if room_id == self.room_a else self.room_a


@dataclass(frozen=True)
class ContainmentEdge:
    room_id: str
    object_id: str


class GoalKind(str, Enum):
    NODE_ID = "node-id"
    ROOM_CATEGORY = "room-category"
    OBJECT_CLASS = "object-class"


@dataclass(frozen=True)
class GoalQuery:
    text: str
    kind: GoalKind

    @classmethod
    def resolve(cls, graph: SemanticGraph, text: str, vocabulary=DEFAULT_ROOM_CATEGORIES) -> GoalQuery:
        """Infer the query kind: node id, then room category, then object class."""
        if text in graph.rooms or text in graph.objects:
            return cls(text, GoalKind.NODE_ID)
        label = normalize_label(text)
        categories = set(vocabulary) | {room.category for room in graph.rooms.values()}
        if label in categories:
            return cls(label, GoalKind.ROOM_CATEGORY)
        return cls(label, GoalKind.OBJECT_CLASS)


@dataclass(frozen=True)
class GoalState:
    nodes: tuple[str, ...] = ()

    def __len__(self):
        return len(self.nodes)

    def __bool__(self):
        return bool(self.nodes)


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


class SemanticGraph:
    def __init__(self):
        self.rooms: dict[str, RoomNode] = {}
        self.objects: dict[str, ObjectNode] = {}
        self.room_edges: dict[tuple[str, str], RoomEdge] = {}
        self.containment: list[ContainmentEdge] = []
        self._adjacency: dict[str, list[RoomEdge]] = {}
        self.frozen = False

    def __eq__(self, other):
        if not isinstance(other, SemanticGraph):
            return NotImplemented
        return (
            self.rooms == other.rooms
            and self.objects == other.objects
            and self.room_edges == other.room_edges
            and sorted(self.containment, key=_containment_key) == sorted(other.containment, key=_containment_key)
        )

    __hash__ = None

    def _check_mutable(self):
        if self.frozen:
            raise ConflictError("semantic graph is frozen")

    def _check_new_id(self, node_id: str):
        if node_id in self.rooms or node_id in self.objects:
            raise ConflictError(f"node id {node_id!r} already exists")

    def add_room(self, room: RoomNode) -> SemanticGraph:
        self._check_mutable()
        self._check_new_id(room.id)
        room.category = normalize_label(room.category)
        room.attributes = []
        self.rooms[room.id] = room
        self._adjacency[room.id] = []
        return self

    def add_object(self, obj: ObjectNode) -> SemanticGraph:
        self._check_mutable()
        self._check_new_id(obj.id)
        if obj.room_id not in self.rooms:
            raise ValidationFailed(f"object {obj.id!r} references unknown room {obj.room_id!r}")
        obj.class_label = normalize_label(obj.class_label)
        self.objects[obj.id] = obj
        self.containment.append(ContainmentEdge(room_id=obj.room_id, object_id=obj.id))
        room = self.rooms[obj.room_id]
        if obj.class_label not in room.attributes:
            room.attributes = sorted([*room.attributes, obj.class_label])
        return self

    def add_room_edge(self, edge: RoomEdge) -> SemanticGraph:
        self._check_mutable()
        if edge.room_a == edge.room_b:
            raise ValidationFailed(f"self-loop on room {edge.room_a!r}")
        for end in (edge.room_a, edge.room_b):
            if end not in self.rooms:
                raise ValidationFailed(f"edge references unknown room {end!r}")
        if not (edge.weight >= 0 and math.isfinite(edge.weight)):
            raise ValidationFailed(f"edge {edge.room_a}-{edge.room_b} has invalid weight {edge.weight}")
        key = _edge_key(edge.room_a, edge.room_b)
        if key in self.room_edges:
            raise ConflictError(f"edge {key[0]}-{key[1]} already exists")
        self.room_edges[key] = edge
        self._adjacency[edge.room_a].append(edge)
        self._adjacency[edge.room_b].append(edge)
        return self

    def freeze(self) -> SemanticGraph:
        for edges in self._adjacency.values():
            edges.sort(key=lambda e: (e.room_a, e.room_b))
        self.frozen = True
        return self

    def edges_of(self, room_id: str) -> list[RoomEdge]:
        return self._adjacency.get(room_id, [])

    def edge_between(self, a: str, b: str) -> RoomEdge | None:
        return self.room_edges.get(_edge_key(a, b))

    def room_of(self, node_id: str) -> str | None:
        if node_id in self.rooms:
            return node_id
        obj = self.objects.get(node_id)
        return obj.room_id if obj else None

    def room_by_label(self, label: int) -> RoomNode | None:
        for room in self.rooms.values():
            if room.label == label:
                return room
        return None

    def objects_in(self, room_id: str) -> list[ObjectNode]:
        return sorted((o for o in self.objects.values() if o.room_id == room_id), key=lambda o: o.id)

    def without_class(self, class_label: str) -> SemanticGraph:
        """Frozen copy of the graph with every object of ``class_label`` removed."""
        label = normalize_label(class_label)
        hidden = SemanticGraph()
        for room in self.rooms.values():
            hidden.add_room(copy.copy(room))
        for obj in self.objects.values():
            if obj.class_label != label:
                hidden.add_object(copy.copy(obj))
        for edge in self.room_edges.values():
            hidden.add_room_edge(edge)
        return hidden.freeze()

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for room in self.rooms.values():
            g.add_node(room.id, category=room.category, label=room.label)
        for edge in self.room_edges.values():
            g.add_edge(edge.room_a, edge.room_b, weight=edge.weight)
        return g


def _containment_key(edge: ContainmentEdge) -> tuple[str, str]:
    return edge.object_id, edge.room_id


def add_room(graph: SemanticGraph, room: RoomNode) -> SemanticGraph:
    return graph.add_room(room)


def add_object(graph: SemanticGraph, obj: ObjectNode) -> SemanticGraph:
    return graph.add_object(obj)


def add_room_edge(graph: SemanticGraph, edge: RoomEdge) -> SemanticGraph:
    return graph.add_room_edge(edge)


def find_goal_state(graph: SemanticGraph, goal: GoalQuery) -> GoalState:
    if goal.kind is GoalKind.NODE_ID:
        present = goal.text in graph.rooms or goal.text in graph.objects
        return GoalState((goal.text,) if present else ())

    label = normalize_label(goal.text)
    if goal.kind is GoalKind.ROOM_CATEGORY:
        matches = [r.id for r in graph.rooms.values() if r.category == label]
    else:
        matches = [o.id for o in graph.objects.values() if o.class_label == label]
    return GoalState(tuple(sorted(matches)))


def validate_graph(graph: SemanticGraph) -> list[str]:
    """Every broken graph invariant, one message per violation."""
    violations: list[str] = []

    for room_id, room in graph.rooms.items():
        if room.id != room_id:
            violations.append(f"room {room_id}: stored under a different id {room.id!r}")
        if room_id in graph.objects:
            violations.append(f"room {room_id}: id also used by an object")

    for key, edge in graph.room_edges.items():
        name = f"edge {edge.room_a}-{edge.room_b}"
        if edge.room_a == edge.room_b:
            violations.append(f"{name}: self-loop")
        for end in (edge.room_a, edge.room_b):
            if end not in graph.rooms:
                violations.append(f"{name}: dangling endpoint {end}")
        if not (edge.weight >= 0 and math.isfinite(edge.weight)):
            violations.append(f"{name}: weight {edge.weight} is not a non-negative number")
        if key != _edge_key(edge.room_a, edge.room_b):
            violations.append(f"{name}: stored under key {key}")

    owners: dict[str, list[str]] = {}
    for link in graph.containment:
        owners.setdefault(link.object_id, []).append(link.room_id)
        if link.object_id not in graph.objects:
            violations.append(f"containment {link.room_id}->{link.object_id}: dangling object")
        if link.room_id not in graph.rooms:
            violations.append(f"containment {link.room_id}->{link.object_id}: dangling room")

    expected: dict[str, set[str]] = {room_id: set() for room_id in graph.rooms}
    for obj_id, obj in graph.objects.items():
        if obj.id != obj_id:
            violations.append(f"object {obj_id}: stored under a different id {obj.id!r}")
        if obj.room_id not in graph.rooms:
            violations.append(f"object {obj_id}: dangling room reference {obj.room_id}")
        else:
            expected[obj.room_id].add(obj.class_label)
        links = owners.get(obj_id, [])
        if len(links) != 1:
            violations.append(f"object {obj_id}: has {len(links)} containment edges, expected 1")
        elif links[0] != obj.room_id:
            violations.append(f"object {obj_id}: containment edge names {links[0]}, room_id is {obj.room_id}")

    for room_id, room in graph.rooms.items():
        if room.attributes != sorted(expected[room_id]):
            violations.append(
                f"room {room_id}: attributes {room.attributes} differ from contained classes {sorted(expected[room_id])}"
            )

    return violations

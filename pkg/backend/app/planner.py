"""Semantic planning over the room graph: discovery, targeted and multi-target modes."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Literal

from .discovery import GoalOracle, NullOracle, goal_llm_response, room_contexts
from .errors import (
    BoundsError,
    ConsistencyError,
    DiscoveryFailed,
    UnreachableError,
    ValidationFailed,
)
from .graph import GoalQuery, SemanticGraph, find_goal_state
from .logger import get_logger
from .mapio import SemanticMap
from .metric import GridIndex, MetricPoint, grid_shortest_path, grid_to_world, world_to_grid
from .search import dijkstra as shortest_path

logger = get_logger(__name__)


class Mode(str, Enum):
    DISCOVERY = "discovery"
    TARGETED = "targeted"
    MULTI_TARGET = "multi-target"


class FailureReason(str, Enum):
    NO_ROUTE = "no-route"
    DISCOVERY_FAILED = "discovery-failed"
    INVALID_START = "invalid-start"


@dataclass(frozen=True)
class PlanOptions:
    allow_inscribed: bool = False
    refine_metric: bool = False
    cost_metric: Literal["weight", "hops"] = "weight"


@dataclass(frozen=True)
class PlanRequest:
    start: str | MetricPoint
    goal: GoalQuery | str
    options: PlanOptions = field(default_factory=PlanOptions)


@dataclass(frozen=True)
class SemanticPath:
    nodes: tuple[str, ...]
    graph_cost: float
    mode: Mode | None = None
    waypoints: tuple[MetricPoint, ...] | None = None
    metric_cost: float | None = None
    ends_at_object: bool = False

    @property
    def rooms(self) -> tuple[str, ...]:
        return self.nodes[:-1] if self.ends_at_object else self.nodes

    def hops(self) -> int:
        return len(self.rooms) - 1


@dataclass(frozen=True)
class PlanOutcome:
    result: SemanticPath | None
    failure_reason: FailureReason | None = None
    wall_time: float = 0.0
    mode: Mode | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.result is not None


class InvalidStart(ValidationFailed):
    pass


def dijkstra(
    graph: SemanticGraph,
    start_room: str,
    goal_node: str,
    cost_metric: Literal["weight", "hops"] = "weight",
) -> SemanticPath:
    """Cheapest room sequence from ``start_room`` to ``goal_node``.

    An object goal is reached through its containing room and appended as the
    final node. Equal-cost routes resolve to the lexicographically smallest
    node-id sequence.
    """
    if start_room not in graph.rooms:
        raise ValidationFailed(f"start {start_room!r} is not a room")
    goal_room = graph.room_of(goal_node)
    if goal_room is None:
        raise ValidationFailed(f"goal {goal_node!r} is not a node of the map")

    hops = cost_metric == "hops"

    def neighbors(room_id: str):
        for edge in graph.edges_of(room_id):
            yield edge.other(room_id), 1.0 if hops else edge.weight

    found = shortest_path(start_room, goal_room, neighbors, lexicographic=True)
    if found is None:
        raise UnreachableError(f"no route from {start_room} to {goal_room}")
    _, rooms = found

    cost = 0.0
    for a, b in zip(rooms, rooms[1:]):
        cost += graph.edge_between(a, b).weight

    object_goal = goal_node not in graph.rooms
    nodes = rooms + [goal_node] if object_goal else rooms
    return SemanticPath(nodes=tuple(nodes), graph_cost=cost, ends_at_object=object_goal)


def _search_length(path: SemanticPath, cost_metric: str) -> float:
    return float(path.hops()) if cost_metric == "hops" else path.graph_cost


def resolve_start(m: SemanticMap, start: str | MetricPoint) -> tuple[str, MetricPoint]:
    graph = m.graph
    if isinstance(start, MetricPoint):
        try:
            room = m.room_at(start)
        except BoundsError as exc:
            raise InvalidStart(str(exc)) from exc
        if room is None:
            raise InvalidStart(f"start ({start.x:.2f}, {start.y:.2f}) is not inside any room")
        return room.id, start
    if start in graph.rooms:
        return start, graph.rooms[start].centroid
    if start in graph.objects:
        obj = graph.objects[start]
        return obj.room_id, obj.position
    raise InvalidStart(f"start {start!r} is neither a node id nor a point")


def refine_to_metric(
    m: SemanticMap,
    path: SemanticPath,
    start_point: MetricPoint | None = None,
    allow_inscribed: bool = False,
) -> tuple[tuple[MetricPoint, ...], float]:
    """Waypoints start -> portal of each traversed edge -> goal, with their grid cost."""
    graph, costmap = m.graph, m.costmap
    rooms = list(path.rooms)
    if not rooms:
        raise ConsistencyError("cannot refine an empty path")

    if start_point is None:
        start_point = graph.rooms[rooms[0]].centroid
    last = path.nodes[-1]
    goal_point = graph.objects[last].position if path.ends_at_object else graph.rooms[last].centroid

    anchors: list[GridIndex] = [world_to_grid(costmap, start_point)]
    for a, b in zip(rooms, rooms[1:]):
        edge = graph.edge_between(a, b)
        if edge is None:
            raise ConsistencyError(f"path steps from {a} to {b} without a connecting edge")
        anchors.append(edge.portal)
    anchors.append(world_to_grid(costmap, goal_point))

    cells: list[GridIndex] = []
    total = 0.0
    for room_id, (a, b) in zip(rooms, zip(anchors, anchors[1:])):
        try:
            segment = grid_shortest_path(costmap, a, b, allow_inscribed=allow_inscribed)
        except (UnreachableError, ValidationFailed) as exc:
            raise ConsistencyError(f"room {room_id}: no grid route between {tuple(a)} and {tuple(b)} ({exc})") from exc
        cells.extend(segment.cells if not cells else segment.cells[1:])
        total += segment.cost
    return tuple(grid_to_world(costmap, c) for c in cells), total


def plan(m: SemanticMap, request: PlanRequest, oracle: GoalOracle | None = None) -> PlanOutcome:
    started = time.perf_counter()
    options = request.options
    graph = m.graph
    mode: Mode | None = None

    def finish(result=None, reason=None, detail=""):
        elapsed = (time.perf_counter() - started) * 1000.0
        return PlanOutcome(result=result, failure_reason=reason, wall_time=elapsed, mode=mode, detail=detail)

    try:
        start_room, start_point = resolve_start(m, request.start)
    except InvalidStart as exc:
        return finish(reason=FailureReason.INVALID_START, detail=str(exc))

    goal = request.goal if isinstance(request.goal, GoalQuery) else GoalQuery.resolve(graph, request.goal)
    goal_state = find_goal_state(graph, goal)

    try:
        if not goal_state:
            mode = Mode.DISCOVERY
            response = goal_llm_response(room_contexts(graph), goal, oracle or NullOracle())
            best = dijkstra(graph, start_room, response.top, options.cost_metric)
        elif len(goal_state) == 1:
            mode = Mode.TARGETED
            best = dijkstra(graph, start_room, goal_state.nodes[0], options.cost_metric)
        else:
            mode = Mode.MULTI_TARGET
            best, best_length = None, float("inf")
            for node in goal_state.nodes:
                try:
                    candidate = dijkstra(graph, start_room, node, options.cost_metric)
                except UnreachableError:
                    continue
                length = _search_length(candidate, options.cost_metric)
                if length < best_length:
                    best, best_length = candidate, length
            if best is None:
                raise UnreachableError(f"none of {len(goal_state)} goal nodes is reachable from {start_room}")
    except DiscoveryFailed as exc:
        logger.info("discovery failed for %r: %s", goal.text, exc)
        return finish(reason=FailureReason.DISCOVERY_FAILED, detail=str(exc))
    except UnreachableError as exc:
        return finish(reason=FailureReason.NO_ROUTE, detail=str(exc))

    best = replace(best, mode=mode)
    if options.refine_metric:
        waypoints, metric_cost = refine_to_metric(m, best, start_point, options.allow_inscribed)
        best = replace(best, waypoints=waypoints, metric_cost=metric_cost)
    return finish(result=best)


def outcome_to_dict(outcome: PlanOutcome) -> dict:
    path = outcome.result
    doc = {
        "ok": outcome.ok,
        "mode": outcome.mode.value if outcome.mode else None,
        "failure_reason": outcome.failure_reason.value if outcome.failure_reason else None,
        "detail": outcome.detail,
        "wall_time_ms": outcome.wall_time,
    }
    if path is not None:
        doc["nodes"] = list(path.nodes)
        doc["graph_cost"] = path.graph_cost
        if path.waypoints is not None:
            doc["metric_cost"] = path.metric_cost
            doc["waypoints"] = [[p.x, p.y] for p in path.waypoints]
    return doc


def parse_start(text: str) -> str | MetricPoint:
    """``x,y`` in meters, otherwise a room or object id."""
    x, sep, y = text.partition(",")
    if sep:
        try:
            return MetricPoint(float(x), float(y))
        except ValueError:
            pass
    return text

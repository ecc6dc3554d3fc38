import math

import networkx as nx
import numpy as np
import pytest

from app.discovery import KnownLocationOracle, NullOracle
from app.envgen import Rect
from app.errors import UnreachableError, ValidationFailed
from app.graph import GoalKind, GoalQuery, RoomEdge, RoomNode, SemanticGraph, find_goal_state
from app.mapio import MapMeta, SemanticMap
from app.metric import CostmapGrid, GridIndex, MetricPoint, polyline_length
from app.planner import (
    FailureReason,
    Mode,
    PlanOptions,
    PlanRequest,
    dijkstra,
    outcome_to_dict,
    parse_start,
    plan,
)
from app.segmentation import RoomLabelRaster
from conftest import build_floor


def graph_only_map(graph):
    """Room ids are enough to plan without refinement, so the metric layers are a single cell."""
    costmap = CostmapGrid(1, 1, 1.0, 0.0, 0.0, np.zeros((1, 1), dtype=np.uint8))
    raster = RoomLabelRaster(1, 1, np.zeros((1, 1), dtype=np.int32))
    return SemanticMap(costmap, raster, graph, MapMeta(name="graph-only"))


def random_graph(rng, n, p=0.4, scale=1.0):
    # Weights are multiples of 0.25 so every path sum is exact.
    g = SemanticGraph()
    for i in range(n):
        g.add_room(RoomNode(f"r{i}", "office", MetricPoint(0.0, 0.0), 1))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                weight = int(rng.integers(1, 12)) * 0.25 * scale
                g.add_room_edge(RoomEdge(f"r{i}", f"r{j}", weight, GridIndex(0, 0)))
    return g.freeze()


def brute_force(g, start, goal):
    nxg = g.to_networkx()
    best = None
    for path in nx.all_simple_paths(nxg, start, goal):
        cost = 0.0
        for a, b in zip(path, path[1:]):
            cost += g.edge_between(a, b).weight
        key = (cost, tuple(path))
        if best is None or key < best:
            best = key
    return best


def test_targeted_plan_to_room(office_floor):
    outcome = plan(office_floor, PlanRequest(start="office_1", goal="office_3"))
    assert outcome.ok and outcome.mode is Mode.TARGETED
    assert outcome.result.nodes == ("office_1", "corridor_1", "office_3")
    g = office_floor.graph
    expected = g.edge_between("office_1", "corridor_1").weight + g.edge_between("corridor_1", "office_3").weight
    assert outcome.result.graph_cost == pytest.approx(expected)
    assert outcome.wall_time >= 0.0


def test_single_instance_class_is_targeted(office_floor):
    outcome = plan(office_floor, PlanRequest(start="office_2", goal="Fridge"))
    assert outcome.mode is Mode.TARGETED
    assert outcome.result.nodes == ("office_2", "corridor_1", "kitchen_1", "fridge_1")


def test_multi_target_picks_nearer_desk(office_floor):
    outcome = plan(office_floor, PlanRequest(start="office_1", goal="desk"))
    assert outcome.mode is Mode.MULTI_TARGET
    assert outcome.result.nodes == ("office_1", "corridor_1", "office_3", "desk_1")
    assert outcome.result.rooms == ("office_1", "corridor_1", "office_3")
    assert outcome.result.ends_at_object


def test_object_start_uses_its_room(office_floor):
    outcome = plan(office_floor, PlanRequest(start="fridge_1", goal="office_2"))
    assert outcome.result.nodes == ("kitchen_1", "corridor_1", "office_2")


def test_goal_in_start_room_is_zero_cost(office_floor):
    outcome = plan(office_floor, PlanRequest(start="office_1", goal="chair_1"))
    assert outcome.result.nodes == ("office_1", "chair_1")
    assert outcome.result.graph_cost == 0.0
    assert outcome.result.hops() == 0


def test_discovery_goes_to_likely_room(office_floor, mock_oracle):
    found = plan(office_floor, PlanRequest(start="office_1", goal="coffee_machine"), mock_oracle)
    assert found.mode is Mode.DISCOVERY
    assert found.result.nodes[-1] == "kitchen_1"
    direct = plan(office_floor, PlanRequest(start="office_1", goal="kitchen_1"))
    assert found.result.graph_cost == direct.result.graph_cost


@pytest.mark.parametrize("oracle", [None, NullOracle()])
def test_discovery_without_oracle_fails(office_floor, oracle):
    outcome = plan(office_floor, PlanRequest(start="office_1", goal="coffee_machine"), oracle)
    assert not outcome.ok
    assert outcome.failure_reason is FailureReason.DISCOVERY_FAILED
    assert outcome.mode is Mode.DISCOVERY


def test_discovery_with_reference_oracle_matches_targeted(office_floor):
    hidden = SemanticMap(
        office_floor.costmap, office_floor.raster, office_floor.graph.without_class("desk"), office_floor.meta
    )
    oracle = KnownLocationOracle(office_floor.graph)
    goal = GoalQuery("desk", GoalKind.OBJECT_CLASS)
    outcome = plan(hidden, PlanRequest(start="office_1", goal=goal), oracle)
    assert outcome.mode is Mode.DISCOVERY
    assert outcome.result.nodes == ("office_1", "corridor_1", "office_3")


@pytest.mark.parametrize(
    "start",
    [MetricPoint(0.25, 0.25), MetricPoint(-1.0, 0.5), MetricPoint(3.0, 50.0), "nowhere_9"],
)
def test_invalid_start(office_floor, start):
    outcome = plan(office_floor, PlanRequest(start=start, goal="office_3"))
    assert outcome.failure_reason is FailureReason.INVALID_START
    assert outcome.result is None


def test_point_start(office_floor):
    outcome = plan(office_floor, PlanRequest(start=MetricPoint(9.0, 5.0), goal="fridge"))
    assert outcome.result.nodes == ("office_4", "corridor_1", "kitchen_1", "fridge_1")


def test_disconnected_rooms_have_no_route():
    rooms = [("office_1", "office", Rect(1, 1, 4, 4)), ("office_2", "office", Rect(5, 1, 8, 4))]
    m = build_floor(9, 5, rooms, [], [])
    outcome = plan(m, PlanRequest(start="office_1", goal="office_2"))
    assert outcome.failure_reason is FailureReason.NO_ROUTE


def test_refinement_follows_portals(office_floor):
    options = PlanOptions(refine_metric=True)
    outcome = plan(office_floor, PlanRequest(start="office_1", goal="desk_1", options=options))
    path = outcome.result
    start = office_floor.graph.rooms["office_1"].centroid
    goal = office_floor.graph.objects["desk_1"].position
    assert path.waypoints[0] == start
    assert path.waypoints[-1] == goal
    assert MetricPoint(1.75, 2.75) in path.waypoints
    assert MetricPoint(8.75, 2.75) in path.waypoints
    assert path.metric_cost >= math.dist(start, goal)
    assert path.metric_cost >= polyline_length(path.waypoints) - 1e-9


def test_refinement_from_point_starts_there(office_floor):
    point = MetricPoint(5.75, 3.75)
    options = PlanOptions(refine_metric=True)
    outcome = plan(office_floor, PlanRequest(start=point, goal="office_2", options=options))
    assert outcome.result.waypoints[0] == point
    assert outcome.result.waypoints[-1] == office_floor.graph.rooms["office_2"].centroid


def test_outcome_to_dict(office_floor):
    doc = outcome_to_dict(plan(office_floor, PlanRequest(start="office_1", goal="office_2")))
    assert doc["ok"] and doc["mode"] == "targeted" and doc["failure_reason"] is None
    assert doc["nodes"] == ["office_1", "corridor_1", "office_2"]
    assert "waypoints" not in doc

    doc = outcome_to_dict(plan(office_floor, PlanRequest(start="nowhere", goal="office_2")))
    assert not doc["ok"] and doc["failure_reason"] == "invalid-start"


def test_parse_start():
    assert parse_start("1.5,-2") == MetricPoint(1.5, -2.0)
    assert parse_start("office_1") == "office_1"
    assert parse_start("a,b") == "a,b"


def test_graph_dijkstra_rejects_unknown_nodes(office_floor):
    with pytest.raises(ValidationFailed):
        dijkstra(office_floor.graph, "desk_1", "office_2")
    with pytest.raises(ValidationFailed):
        dijkstra(office_floor.graph, "office_1", "unicorn_1")


def test_graph_dijkstra_matches_brute_force():
    rng = np.random.default_rng(5)
    compared = 0
    for _ in range(500):
        n = int(rng.integers(3, 8))
        g = random_graph(rng, n)
        start, goal = "r0", f"r{n - 1}"
        expected = brute_force(g, start, goal)
        if expected is None:
            with pytest.raises(UnreachableError):
                dijkstra(g, start, goal)
            continue
        found = dijkstra(g, start, goal)
        assert (found.graph_cost, found.nodes) == expected
        compared += 1
    assert compared > 200


def test_scaling_weights_keeps_the_path():
    for seed in range(30):
        base = random_graph(np.random.default_rng(seed), 6, p=0.5)
        scaled = random_graph(np.random.default_rng(seed), 6, p=0.5, scale=4.0)
        try:
            a = dijkstra(base, "r0", "r5")
        except UnreachableError:
            continue
        b = dijkstra(scaled, "r0", "r5")
        assert b.nodes == a.nodes
        assert b.graph_cost == 4.0 * a.graph_cost


def test_hops_metric_minimizes_edge_count():
    rng = np.random.default_rng(8)
    for _ in range(100):
        g = random_graph(rng, 7)
        nxg = g.to_networkx()
        if not nx.has_path(nxg, "r0", "r6"):
            continue
        path = dijkstra(g, "r0", "r6", cost_metric="hops")
        assert path.hops() == nx.shortest_path_length(nxg, "r0", "r6")


def test_multi_target_is_cheapest_instance():
    rng = np.random.default_rng(13)
    for _ in range(60):
        g = SemanticGraph()
        for i in range(7):
            category = "kitchen" if i in (2, 4, 6) else "office"
            g.add_room(RoomNode(f"r{i}", category, MetricPoint(0.0, 0.0), 1))
        for i in range(7):
            for j in range(i + 1, 7):
                if rng.random() < 0.4:
                    g.add_room_edge(RoomEdge(f"r{i}", f"r{j}", int(rng.integers(1, 12)) * 0.25, GridIndex(0, 0)))
        g.freeze()
        m = graph_only_map(g)
        outcome = plan(m, PlanRequest(start="r0", goal="kitchen"))

        costs = []
        for node in find_goal_state(g, GoalQuery("kitchen", GoalKind.ROOM_CATEGORY)).nodes:
            try:
                costs.append(dijkstra(g, "r0", node).graph_cost)
            except UnreachableError:
                pass
        if not costs:
            assert outcome.failure_reason is FailureReason.NO_ROUTE
            continue
        assert outcome.mode is Mode.MULTI_TARGET
        assert outcome.result.graph_cost == min(costs)
        assert g.rooms[outcome.result.nodes[-1]].category == "kitchen"

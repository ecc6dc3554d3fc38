import numpy as np
import pytest

from app.discovery import MockOracle, load_cooccurrence
from app.envgen import EnvSpec, Rect, generate, ground_truth_map
from app.graph import ObjectNode, RoomEdge, RoomNode, SemanticGraph
from app.mapio import MapMeta, SemanticMap
from app.metric import FREE, LETHAL, CostmapGrid, GridIndex, grid_to_world, polyline_length
from app.segmentation import RoomLabelRaster, load_category_rules
from app.config import settings


def build_floor(width, height, rooms, doors, objects, resolution=0.5, name="floor"):
    """Hand-laid map: rooms are (id, category, Rect); doors (a, b, Rect); objects (id, class, room, (col, row))."""
    cells = np.full((height, width), LETHAL, dtype=np.uint8)
    labels = np.zeros((height, width), dtype=np.int32)
    for label, (_, _, r) in enumerate(rooms, start=1):
        cells[r.row0 : r.row1, r.col0 : r.col1] = FREE
        labels[r.row0 : r.row1, r.col0 : r.col1] = label
    for _, _, r in doors:
        cells[r.row0 : r.row1, r.col0 : r.col1] = FREE
    costmap = CostmapGrid(width, height, resolution, 0.0, 0.0, cells)

    graph = SemanticGraph()
    for label, (room_id, category, r) in enumerate(rooms, start=1):
        graph.add_room(RoomNode(room_id, category, grid_to_world(costmap, r.center), r.area, label=label))
    for object_id, cls, room_id, (col, row) in objects:
        graph.add_object(ObjectNode(object_id, cls, grid_to_world(costmap, GridIndex(col, row)), room_id))
    for a, b, r in doors:
        through = grid_to_world(costmap, r.center)
        weight = polyline_length([graph.rooms[a].centroid, through, graph.rooms[b].centroid])
        graph.add_room_edge(RoomEdge(a, b, weight, r.center))

    raster = RoomLabelRaster(width, height, labels)
    return SemanticMap(costmap, raster, graph.freeze(), MapMeta(name=name, created="2024-01-01T00:00:00+00:00"))


@pytest.fixture
def office_floor():
    """Three offices above a corridor, a kitchen and a fourth office below it.

    office_4's door sits at the far end of the corridor, so office_3's desk is
    the nearer desk from office_1.
    """
    rooms = [
        ("office_1", "office", Rect(1, 1, 7, 5)),
        ("office_2", "office", Rect(8, 1, 14, 5)),
        ("office_3", "office", Rect(15, 1, 21, 5)),
        ("corridor_1", "corridor", Rect(1, 6, 21, 8)),
        ("kitchen_1", "kitchen", Rect(1, 9, 10, 12)),
        ("office_4", "office", Rect(11, 9, 21, 12)),
    ]
    doors = [
        ("office_1", "corridor_1", Rect(3, 5, 4, 6)),
        ("office_2", "corridor_1", Rect(10, 5, 11, 6)),
        ("office_3", "corridor_1", Rect(17, 5, 18, 6)),
        ("kitchen_1", "corridor_1", Rect(5, 8, 6, 9)),
        ("office_4", "corridor_1", Rect(20, 8, 21, 9)),
    ]
    objects = [
        ("bookcase_1", "bookcase", "office_1", (2, 2)),
        ("chair_1", "chair", "office_1", (5, 3)),
        ("desk_1", "desk", "office_3", (18, 2)),
        ("desk_2", "desk", "office_4", (19, 10)),
        ("fridge_1", "fridge", "kitchen_1", (2, 10)),
        ("fire_extinguisher_1", "fire_extinguisher", "corridor_1", (12, 6)),
    ]
    return build_floor(22, 13, rooms, doors, objects)


@pytest.fixture
def mock_oracle():
    return MockOracle(load_cooccurrence(settings.ORACLE_TABLE))


@pytest.fixture
def default_rules():
    return load_category_rules(settings.CATEGORY_RULES)


def coarse_spec(**overrides) -> EnvSpec:
    values = dict(seed=3, n_rooms=4, resolution=0.2, object_density=(2, 3))
    values.update(overrides)
    return EnvSpec(**values)


@pytest.fixture
def coarse_env():
    return generate(coarse_spec())


@pytest.fixture
def generated_map(coarse_env):
    costmap, truth, graph = coarse_env
    return ground_truth_map(costmap, truth, graph)


def two_room_grid(door_rows=(17, 25), resolution=0.1, pocket=False):
    """Two 4 m x 4 m rooms side by side; the wall between them is open on ``door_rows``."""
    height = 45 if pocket else 42
    cells = np.full((height, 83), LETHAL, dtype=np.uint8)
    cells[1:41, 1:41] = FREE
    cells[1:41, 42:82] = FREE
    cells[door_rows[0] : door_rows[1], 41] = FREE
    if pocket:
        cells[42:44, 2:4] = FREE
    return CostmapGrid(83, height, resolution, 0.0, 0.0, cells)

"""Deterministic synthetic office floors with ground truth for reconstruction checks.

Rooms are axis-aligned rectangles placed along a corridor spine (or chained
into a suite without a corridor). Every room gets a door, and objects are
drawn from a (class, category) vocabulary with the first class listed for a
category used as the room's anchor object.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, NamedTuple

import networkx as nx
import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator
from pydantic import ValidationError as PydanticValidationError

from .config import DATA_DIR, settings
from .errors import ConfigError, GenerationError
from .graph import ObjectNode, RoomEdge, RoomNode, SemanticGraph, normalize_label
from .logger import get_logger
from .mapio import MapMeta, SemanticMap, save_map
from .metric import FREE, LETHAL, CostmapGrid, GridIndex, MetricPoint, grid_to_world, polyline_length, write_costmap
from .pipeline import ObjectPlacement, assign_object_ids, dump_objects, room_ids_for
from .segmentation import RoomLabelRaster

logger = get_logger(__name__)

DEFAULT_ENV_SPEC = DATA_DIR / "default_env.yaml"
MAX_GRID_CELLS = 25_000_000

DEFAULT_VOCABULARY: list[tuple[str, str]] = [
    ("desk", "office"),
    ("computer", "office"),
    ("chair", "office"),
    ("conference_table", "conference_room"),
    ("projector", "conference_room"),
    ("fridge", "kitchen"),
    ("microwave", "kitchen"),
    ("shelf", "storage_room"),
    ("box", "storage_room"),
    ("sofa", "lounge"),
    ("plant", "lounge"),
]


class EnvSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    n_rooms: int = Field(6, ge=1)
    layout: Literal["spine", "suite"] = "spine"
    room_size_range: tuple[float, float] = (3.0, 5.0)
    corridor_width: float = Field(2.0, gt=0)
    door_width: float = Field(0.9, gt=0)
    wall_thickness: float = Field(0.1, gt=0)
    resolution: float = Field(0.05, gt=0)
    object_density: tuple[int, int] = (2, 4)
    neighbor_door_prob: float = Field(0.0, ge=0.0, le=1.0)
    corridor_objects: list[str] = ["fire_extinguisher"]
    vocabulary: list[tuple[str, str]] = DEFAULT_VOCABULARY

    @model_validator(mode="after")
    def _check_ranges(self):
        low, high = self.room_size_range
        if not 0 < low <= high:
            raise ValueError("room_size_range must satisfy 0 < low <= high")
        low, high = self.object_density
        if not 0 <= low <= high:
            raise ValueError("object_density must satisfy 0 <= low <= high")
        if self.corridor_width <= self.door_width:
            raise ValueError("corridor_width must exceed door_width")
        # segmentation would merge a narrower corridor into its rooms
        if self.corridor_width <= settings.DOOR_WIDTH_MAX:
            raise ValueError(f"corridor_width must exceed the segmentation door width ({settings.DOOR_WIDTH_MAX} m)")
        if not self.room_categories():
            raise ValueError("vocabulary needs at least one non-corridor room category")
        return self

    def room_categories(self) -> list[str]:
        return sorted({normalize_label(c) for _, c in self.vocabulary} - {"corridor"})

    def classes_for(self, category: str) -> list[str]:
        classes: list[str] = []
        for cls, cat in self.vocabulary:
            cls = normalize_label(cls)
            if normalize_label(cat) == category and cls not in classes:
                classes.append(cls)
        return classes


def load_env_spec(path: str | Path = DEFAULT_ENV_SPEC) -> EnvSpec:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not a key: value document ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected key: value lines")
    try:
        return EnvSpec.model_validate(raw)
    except PydanticValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in e['loc']) or 'spec'}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"{path}: {problems}") from exc


class Rect(NamedTuple):
    """Cell rectangle, end-exclusive."""

    col0: int
    row0: int
    col1: int
    row1: int

    @property
    def area(self) -> int:
        return (self.col1 - self.col0) * (self.row1 - self.row0)

    @property
    def center(self) -> GridIndex:
        return GridIndex(col=(self.col0 + self.col1) // 2, row=(self.row0 + self.row1) // 2)


class RoomTruth(BaseModel):
    id: str
    category: str
    label: int
    rect: Rect
    polygon: list[tuple[float, float]]


class ObjectTruth(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    id: str
    class_: str = Field(alias="class")
    x: float
    y: float
    room: str


class DoorTruth(BaseModel):
    rooms: tuple[str, str]
    rect: Rect
    x: float
    y: float


class GroundTruth(BaseModel):
    seed: int
    resolution: float
    width: int
    height: int
    wall_cells: int
    rooms: list[RoomTruth]
    objects: list[ObjectTruth]
    doors: list[DoorTruth]

    def raster(self) -> np.ndarray:
        labels = np.zeros((self.height, self.width), dtype=np.int32)
        for room in self.rooms:
            r = room.rect
            labels[r.row0 : r.row1, r.col0 : r.col1] = room.label
        return labels


@dataclass
class _Region:
    rect: Rect
    category: str


def _cells(meters: float, resolution: float) -> int:
    return max(1, round(meters / resolution))


def _pick_span(rng: np.random.Generator, lo: int, hi: int, size: int) -> int:
    """Start of a ``size``-cell opening inside [lo, hi) keeping one cell of wall at each end."""
    if hi - lo < size + 2:
        raise GenerationError(f"a {size}-cell door does not fit a {hi - lo}-cell wall")
    return int(rng.integers(lo + 1, hi - size))


def _row_of_rooms(widths, depths, wall: int, top: int, align_bottom: bool) -> list[Rect]:
    deepest = max(depths)
    rects, col = [], wall
    for w, d in zip(widths, depths):
        row0 = top + deepest - d if align_bottom else top
        rects.append(Rect(col, row0, col + w, row0 + d))
        col += w + wall
    return rects


def _side_doors(rng, rects: list[Rect], door: int, prob: float) -> list[tuple[int, int, Rect]]:
    """Doors through the shared walls of neighbouring rooms in one row."""
    doors = []
    for i, (a, b) in enumerate(zip(rects, rects[1:])):
        if rng.random() >= prob:
            continue
        top, bottom = max(a.row0, b.row0), min(a.row1, b.row1)
        start = _pick_span(rng, top, bottom, door)
        doors.append((i, i + 1, Rect(a.col1, start, b.col0, start + door)))
    return doors


def generate(
    spec: EnvSpec,
    door_width_max: float | None = None,
) -> tuple[CostmapGrid, GroundTruth, SemanticGraph]:
    door_width_max = settings.DOOR_WIDTH_MAX if door_width_max is None else door_width_max
    rng = np.random.default_rng(spec.seed)
    res = spec.resolution
    wall = _cells(spec.wall_thickness, res)
    door = _cells(spec.door_width, res)
    corridor = _cells(spec.corridor_width, res)
    if spec.layout == "spine" and corridor * res <= door_width_max:
        raise GenerationError(
            f"a {corridor * res:.2f} m corridor is not wider than the {door_width_max} m segmentation door width"
        )
    low, high = (_cells(v, res) for v in spec.room_size_range)
    if low < door + 2:
        raise GenerationError(f"rooms of {low} cells cannot hold a {door}-cell door")

    widths = rng.integers(low, high + 1, size=spec.n_rooms).tolist()
    depths = rng.integers(low, high + 1, size=spec.n_rooms).tolist()
    categories = spec.room_categories()
    room_cats = [categories[i] for i in rng.integers(len(categories), size=spec.n_rooms).tolist()]

    regions: list[_Region] = []
    doors: list[tuple[int, int, Rect]] = []
    if spec.n_rooms == 1 or spec.layout == "suite":
        rects = _row_of_rooms(widths, depths, wall, wall, align_bottom=True)
        width = rects[-1].col1 + wall
        height = wall + max(depths) + wall
        regions = [_Region(r, c) for r, c in zip(rects, room_cats)]
        if spec.n_rooms > 1:
            doors = _side_doors(rng, rects, door, 1.0)
    else:
        k = math.ceil(spec.n_rooms / 2)
        top = _row_of_rooms(widths[:k], depths[:k], wall, wall, align_bottom=True)
        corridor_row = wall + max(depths[:k]) + wall
        bottom = _row_of_rooms(widths[k:], depths[k:], wall, corridor_row + corridor + wall, align_bottom=False)
        width = max(top[-1].col1, bottom[-1].col1) + wall
        height = corridor_row + corridor + wall + max(depths[k:]) + wall
        hall = Rect(wall, corridor_row, width - wall, corridor_row + corridor)

        regions = [_Region(r, c) for r, c in zip(top + bottom, room_cats)]
        hall_index = len(regions)
        regions.append(_Region(hall, "corridor"))
        for i, rect in enumerate(top):
            start = _pick_span(rng, rect.col0, rect.col1, door)
            doors.append((i, hall_index, Rect(start, rect.row1, start + door, hall.row0)))
        for i, rect in enumerate(bottom, start=k):
            start = _pick_span(rng, rect.col0, rect.col1, door)
            doors.append((i, hall_index, Rect(start, hall.row1, start + door, rect.row0)))
        doors += _side_doors(rng, top, door, spec.neighbor_door_prob)
        doors += [(a + k, b + k, r) for a, b, r in _side_doors(rng, bottom, door, spec.neighbor_door_prob)]

    if width * height > MAX_GRID_CELLS:
        raise GenerationError(f"floor of {width}x{height} cells exceeds {MAX_GRID_CELLS} cells")

    cells = np.full((height, width), LETHAL, dtype=np.uint8)
    for region in regions:
        r = region.rect
        cells[r.row0 : r.row1, r.col0 : r.col1] = FREE
    for _, _, r in doors:
        cells[r.row0 : r.row1, r.col0 : r.col1] = FREE
    costmap = CostmapGrid(width=width, height=height, resolution=res, origin_x=0.0, origin_y=0.0, cells=cells)

    # Raster labels follow scan order of each room's first cell.
    order = sorted(range(len(regions)), key=lambda i: (regions[i].rect.row0, regions[i].rect.col0))
    label_of = {index: label for label, index in enumerate(order, start=1)}
    ids = room_ids_for({label_of[i]: regions[i].category for i in range(len(regions))})
    room_id = {i: ids[label_of[i]] for i in range(len(regions))}

    placements: list[tuple[ObjectPlacement, int]] = []
    for i in order:
        region = regions[i]
        if region.category == "corridor":
            classes = [normalize_label(c) for c in spec.corridor_objects]
        else:
            count = int(rng.integers(spec.object_density[0], spec.object_density[1] + 1))
            vocab = spec.classes_for(region.category)
            extras = vocab[1:] or vocab
            classes = vocab[:1] + [str(c) for c in rng.choice(extras, size=count - 1)] if count else []
        r = region.rect
        inner_w, inner_h = r.col1 - r.col0 - 2, r.row1 - r.row0 - 2
        if len(classes) > inner_w * inner_h:
            raise GenerationError(f"room {room_id[i]} is too small for {len(classes)} objects")
        for cls, flat in zip(classes, rng.choice(inner_w * inner_h, size=len(classes), replace=False).tolist()):
            cell = GridIndex(col=r.col0 + 1 + flat % inner_w, row=r.row0 + 1 + flat // inner_w)
            placements.append((ObjectPlacement(cls, grid_to_world(costmap, cell)), i))
    object_ids = assign_object_ids([p for p, _ in placements])

    graph = SemanticGraph()
    for i in order:
        rect = regions[i].rect
        graph.add_room(
            RoomNode(
                id=room_id[i],
                category=regions[i].category,
                centroid=grid_to_world(costmap, rect.center),
                cell_count=rect.area,
                label=label_of[i],
            )
        )
    for object_id, (placement, i) in zip(object_ids, placements):
        graph.add_object(ObjectNode(object_id, placement.class_label, placement.position, room_id[i]))

    door_truth = []
    for a, b, rect in doors:
        portal = rect.center
        through = grid_to_world(costmap, portal)
        ca, cb = graph.rooms[room_id[a]].centroid, graph.rooms[room_id[b]].centroid
        graph.add_room_edge(RoomEdge(room_id[a], room_id[b], polyline_length([ca, through, cb]), portal))
        door_truth.append(DoorTruth(rooms=(room_id[a], room_id[b]), rect=rect, x=through.x, y=through.y))

    truth = GroundTruth(
        seed=spec.seed,
        resolution=res,
        width=width,
        height=height,
        wall_cells=int(np.count_nonzero(cells == LETHAL)),
        rooms=[
            RoomTruth(
                id=room_id[i],
                category=regions[i].category,
                label=label_of[i],
                rect=regions[i].rect,
                polygon=_polygon(costmap, regions[i].rect),
            )
            for i in order
        ],
        objects=[
            ObjectTruth(id=oid, class_=p.class_label, x=p.position.x, y=p.position.y, room=room_id[i])
            for oid, (p, i) in zip(object_ids, placements)
        ],
        doors=door_truth,
    )
    logger.debug("generated seed %d: %dx%d cells, %d rooms", spec.seed, width, height, len(regions))
    return costmap, truth, graph.freeze()


def _polygon(costmap: CostmapGrid, rect: Rect) -> list[tuple[float, float]]:
    x0 = costmap.origin_x + rect.col0 * costmap.resolution
    y0 = costmap.origin_y + rect.row0 * costmap.resolution
    x1 = costmap.origin_x + rect.col1 * costmap.resolution
    y1 = costmap.origin_y + rect.row1 * costmap.resolution
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def truth_placements(truth: GroundTruth) -> list[ObjectPlacement]:
    return [ObjectPlacement(o.class_, MetricPoint(o.x, o.y), o.id) for o in truth.objects]


def ground_truth_map(costmap: CostmapGrid, truth: GroundTruth, graph: SemanticGraph, name: str = "") -> SemanticMap:
    raster = RoomLabelRaster(width=truth.width, height=truth.height, labels=truth.raster())
    return SemanticMap(costmap=costmap, raster=raster, graph=graph, meta=MapMeta(name=name or f"gen-{truth.seed}"))


def write_environment(
    out_dir: str | Path,
    costmap: CostmapGrid,
    truth: GroundTruth,
    graph: SemanticGraph,
) -> Path:
    """costmap.pgm/.meta, objects.json, ground_truth.json and a planning-ready map/ archive."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_costmap(costmap, out / "costmap.pgm", out / "costmap.meta")
    objects = dump_objects(truth_placements(truth))
    (out / "objects.json").write_text(json.dumps(objects, indent=2) + "\n", encoding="utf-8")
    (out / "ground_truth.json").write_text(truth.model_dump_json(indent=2, by_alias=True) + "\n", encoding="utf-8")
    save_map(ground_truth_map(costmap, truth, graph), out / "map")
    return out


@dataclass(frozen=True)
class ReconstructionScore:
    isomorphic: bool
    room_count: tuple[int, int]
    min_iou: float

    @property
    def ok(self) -> bool:
        return self.isomorphic and self.min_iou >= 0.8


def score_reconstruction(built: SemanticMap, truth: GroundTruth, reference: SemanticGraph) -> ReconstructionScore:
    """Compare a pipeline-built map against ground truth: graph isomorphism with categories, cell IoU per room."""
    same_category = nx.algorithms.isomorphism.categorical_node_match("category", None)
    isomorphic = nx.is_isomorphic(built.graph.to_networkx(), reference.to_networkx(), node_match=same_category)

    expected = truth.raster()
    found = built.raster.labels
    ious = []
    for room in truth.rooms:
        inside = expected == room.label
        overlap = np.bincount(found[inside].ravel(), minlength=1)
        overlap[0] = 0
        best = int(np.argmax(overlap))
        if best == 0:
            ious.append(0.0)
            continue
        union = np.count_nonzero(inside | (found == best))
        ious.append(float(overlap[best]) / union)

    score = ReconstructionScore(isomorphic, (len(built.graph.rooms), len(truth.rooms)), min(ious, default=1.0))
    if not score.ok:
        logger.warning(
            "seed %d: reconstruction mismatch (isomorphic=%s, rooms %d vs %d, min IoU %.2f)",
            truth.seed, score.isomorphic, *score.room_count, score.min_iou,
        )
    return score

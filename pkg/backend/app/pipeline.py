"""Costmap + detected objects -> three-layer semantic map."""

from __future__ import annotations

from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter
from pydantic import ValidationError as PydanticValidationError

from .config import settings
from .discovery import GoalOracle
from .errors import BoundsError, ConfigError
from .graph import UNCATEGORIZED, ObjectNode, RoomNode, SemanticGraph, normalize_label
from .logger import get_logger
from .mapio import MapMeta, SemanticMap
from .metric import CostmapGrid, MetricPoint, grid_to_world, world_to_grid
from .segmentation import (
    CategoryRule,
    categorize_room,
    elongation,
    extract_adjacency,
    room_centroids,
    segment_rooms,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class ObjectPlacement:
    class_label: str
    position: MetricPoint
    id: str | None = None


class PlacementDoc(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    class_: str = Field(alias="class", min_length=1)
    x: float
    y: float
    id: str | None = None


_placements = TypeAdapter(list[PlacementDoc])


def load_objects(path: str | Path) -> list[ObjectPlacement]:
    try:
        docs = _placements.validate_json(Path(path).read_bytes())
    except PydanticValidationError as exc:
        raise ConfigError(f"{path}: expected a JSON list of {{class, x, y[, id]}} ({exc.error_count()} errors)") from exc
    return [ObjectPlacement(d.class_, MetricPoint(d.x, d.y), d.id) for d in docs]


def dump_objects(placements: Sequence[ObjectPlacement]) -> list[dict]:
    return [
        {"id": p.id, "class": p.class_label, "x": p.position.x, "y": p.position.y}
        for p in placements
    ]


def room_ids_for(categories: Mapping[int, str]) -> dict[int, str]:
    """``<category>_<n>`` per raster label, n counting up per category in label order."""
    counters: Counter[str] = Counter()
    ids: dict[int, str] = {}
    for label in sorted(categories):
        prefix = "room" if categories[label] == UNCATEGORIZED else categories[label]
        counters[prefix] += 1
        ids[label] = f"{prefix}_{counters[prefix]}"
    return ids


def assign_object_ids(placements: Sequence[ObjectPlacement]) -> list[str]:
    taken = {p.id for p in placements if p.id}
    counters: Counter[str] = Counter()
    ids = []
    for p in placements:
        if p.id:
            ids.append(p.id)
            continue
        label = normalize_label(p.class_label)
        while True:
            counters[label] += 1
            candidate = f"{label}_{counters[label]}"
            if candidate not in taken:
                break
        taken.add(candidate)
        ids.append(candidate)
    return ids


def build_semantic_map(
    costmap: CostmapGrid,
    objects: Sequence[ObjectPlacement],
    rules: Sequence[CategoryRule],
    *,
    door_width_max: float | None = None,
    min_room_area: float | None = None,
    corridor_aspect: float | None = None,
    weighting: str | None = None,
    speed: float | None = None,
    oracle: GoalOracle | None = None,
    name: str = "map",
) -> SemanticMap:
    door_width_max = settings.DOOR_WIDTH_MAX if door_width_max is None else door_width_max
    min_room_area = settings.MIN_ROOM_AREA if min_room_area is None else min_room_area
    corridor_aspect = settings.CORRIDOR_ASPECT if corridor_aspect is None else corridor_aspect
    weighting = weighting or settings.EDGE_WEIGHTING
    speed = settings.ROBOT_SPEED if speed is None else speed

    min_cells = max(1, round(min_room_area / costmap.resolution**2))
    raster = segment_rooms(costmap, min_room_cells=min_cells, door_width_max=door_width_max)
    labels = raster.room_labels()

    placed: list[tuple[str, ObjectPlacement, int]] = []
    for object_id, placement in zip(assign_object_ids(objects), objects):
        try:
            label = raster.label_at(world_to_grid(costmap, placement.position))
        except BoundsError:
            label = 0
        if not label:
            logger.warning(
                "object %s (%s) at (%.2f, %.2f) is not inside any room; dropped",
                object_id, placement.class_label, placement.position.x, placement.position.y,
            )
            continue
        placed.append((object_id, placement, label))

    attributes: dict[int, set[str]] = {label: set() for label in labels}
    for _, placement, label in placed:
        attributes[label].add(normalize_label(placement.class_label))

    known_categories = sorted({rule.category for rule in rules})
    categories: dict[int, str] = {}
    for label in labels:
        category = categorize_room(attributes[label], list(rules))
        if category == UNCATEGORIZED and elongation(raster.labels == label) >= corridor_aspect:
            category = "corridor"
        if category == UNCATEGORIZED and oracle is not None:
            suggested = oracle.categorize(sorted(attributes[label]), known_categories)
            if suggested in known_categories:
                category = suggested
            elif suggested:
                logger.warning("oracle suggested unknown category %r for room label %d", suggested, label)
        categories[label] = category

    ids = room_ids_for(categories)
    centroids = room_centroids(raster)
    graph = SemanticGraph()
    for label in labels:
        graph.add_room(
            RoomNode(
                id=ids[label],
                category=categories[label],
                centroid=grid_to_world(costmap, centroids[label]),
                cell_count=raster.cell_count(label),
                label=label,
            )
        )
    for object_id, placement, label in placed:
        graph.add_object(
            ObjectNode(id=object_id, class_label=placement.class_label, position=placement.position, room_id=ids[label])
        )
    for edge in extract_adjacency(raster, costmap, ids, weighting=weighting, speed=speed):
        graph.add_room_edge(edge)

    logger.info(
        "built map %s: %d rooms, %d objects, %d edges",
        name, len(graph.rooms), len(graph.objects), len(graph.room_edges),
    )
    return SemanticMap(costmap=costmap, raster=raster, graph=graph.freeze(), meta=MapMeta(name=name))

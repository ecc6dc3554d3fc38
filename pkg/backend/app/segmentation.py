"""Room segmentation, room adjacency and rule-based place categorization."""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage
from skimage.segmentation import watershed

from .errors import ConfigError, ValidationFailed
from .graph import UNCATEGORIZED, RoomEdge, normalize_label
from .logger import get_logger
from .metric import CostmapGrid, GridIndex, grid_shortest_path

logger = get_logger(__name__)

DEFAULT_DOOR_WIDTH_MAX = 1.2
DEFAULT_MIN_ROOM_AREA = 4.0


@dataclass(frozen=True, eq=False)
class RoomLabelRaster:
    width: int
    height: int
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.size != self.width * self.height:
            raise ValidationFailed(f"raster has {labels.size} labels, expected {self.width * self.height}")
        if labels.size and (labels.min() < 0 or labels.max() > 65535):
            raise ValidationFailed("room labels must lie in [0, 65535]")
        labels = labels.reshape(self.height, self.width).astype(np.int32, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __eq__(self, other):
        if not isinstance(other, RoomLabelRaster):
            return NotImplemented
        return self.width == other.width and self.height == other.height and np.array_equal(self.labels, other.labels)

    __hash__ = None

    def label_at(self, index: GridIndex) -> int:
        if not (0 <= index.col < self.width and 0 <= index.row < self.height):
            return 0
        return int(self.labels[index.row, index.col])

    def room_labels(self) -> list[int]:
        return [int(v) for v in np.unique(self.labels) if v > 0]

    def cell_count(self, label: int) -> int:
        return int(np.count_nonzero(self.labels == label))


@dataclass(frozen=True)
class CategoryRule:
    category: str
    required: frozenset[str] = frozenset()
    score_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.required and not self.score_weights:
            raise ConfigError(f"rule {self.category!r} needs required classes or score weights")
        for cls, weight in self.score_weights.items():
            if not (weight > 0 and math.isfinite(weight)):
                raise ConfigError(f"rule {self.category!r}: weight for {cls!r} must be positive")

    def score(self, attributes: set[str]) -> float | None:
        """Summed weights over matching classes, or None when the rule does not apply."""
        if not self.required <= attributes:
            return None
        matching = attributes & set(self.score_weights)
        if not self.required and not matching:
            return None
        return float(sum(self.score_weights[c] for c in sorted(matching)))


_RULE_LINE = re.compile(r"^\s*([^:\s][^:]*?)\s*:\s*(.*)$")


def parse_category_rules(text: str, source: str = "<rules>") -> list[CategoryRule]:
    rules: list[CategoryRule] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        where = f"{source}:{lineno}"
        match = _RULE_LINE.match(stripped)
        if not match:
            raise ConfigError(f"{where}: expected 'category: required=...; weights=...'")
        category = normalize_label(match.group(1))
        if category in seen:
            raise ConfigError(f"{where}: duplicate rule for {category!r}")
        seen.add(category)

        required: set[str] = set()
        weights: dict[str, float] = {}
        parts_seen: set[str] = set()
        for part in filter(None, (p.strip() for p in match.group(2).split(";"))):
            key, sep, value = part.partition("=")
            key = key.strip()
            if not sep or key not in ("required", "weights") or key in parts_seen:
                raise ConfigError(f"{where}: bad or repeated clause {part!r}")
            parts_seen.add(key)
            items = [v.strip() for v in value.split(",") if v.strip()]
            if key == "required":
                required = {normalize_label(v) for v in items}
                continue
            for item in items:
                cls, sep, raw = item.partition(":")
                cls = normalize_label(cls)
                if not sep or cls in weights:
                    raise ConfigError(f"{where}: bad or duplicate weight {item!r}")
                try:
                    weights[cls] = float(raw)
                except ValueError as exc:
                    raise ConfigError(f"{where}: weight {raw!r} is not a number") from exc
        try:
            rules.append(CategoryRule(category, frozenset(required), weights))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return rules


def load_category_rules(path: str | Path) -> list[CategoryRule]:
    return parse_category_rules(Path(path).read_text(encoding="utf-8"), source=str(path))


def categorize_room(attributes: Iterable[str], rules: list[CategoryRule]) -> str:
    present = {normalize_label(a) for a in attributes}
    best, best_score = UNCATEGORIZED, -math.inf
    for rule in rules:
        score = rule.score(present)
        if score is not None and score > best_score:
            best, best_score = rule.category, score
    return best


def elongation(mask: np.ndarray) -> float:
    """Ratio of the principal-axis spreads of a region's cells."""
    rows, cols = np.nonzero(mask)
    if rows.size < 3:
        return 1.0
    eig = np.linalg.eigvalsh(np.cov(np.vstack([rows, cols]).astype(np.float64)))
    low, high = float(max(eig[0], 0.0)), float(eig[-1])
    if low == 0.0:
        return math.inf
    return math.sqrt(high / low)


def clearance(g: CostmapGrid) -> np.ndarray:
    """Distance in meters from each cell to the nearest blocked cell (map border counts as blocked)."""
    padded = np.pad(g.free_mask(), 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1] * g.resolution


def _pair_boundaries(labels: np.ndarray) -> dict[tuple[int, int], set[tuple[int, int]]]:
    """Cells on both sides of every 4-adjacent boundary between two labeled regions."""
    found: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for axis in (0, 1):
        here = labels[:-1, :] if axis == 0 else labels[:, :-1]
        there = labels[1:, :] if axis == 0 else labels[:, 1:]
        rows, cols = np.nonzero((here != there) & (here > 0) & (there > 0))
        for r, c in zip(rows.tolist(), cols.tolist()):
            r2, c2 = (r + 1, c) if axis == 0 else (r, c + 1)
            a, b = int(labels[r, c]), int(labels[r2, c2])
            key = (a, b) if a < b else (b, a)
            cells = found.setdefault(key, set())
            cells.add((r, c))
            cells.add((r2, c2))
    return found


def _relabel_scan_order(labels: np.ndarray) -> np.ndarray:
    values, first = np.unique(labels.ravel(), return_index=True)
    order = [int(v) for _, v in sorted(zip(first.tolist(), values.tolist())) if v > 0]
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    for new, old in enumerate(order, start=1):
        lut[old] = new
    return lut[labels]


def segment_rooms(
    g: CostmapGrid,
    min_room_cells: int | None = None,
    door_width_max: float = DEFAULT_DOOR_WIDTH_MAX,
) -> RoomLabelRaster:
    """Watershed on the clearance map, seeded by regions wider than a door."""
    free = g.free_mask()
    if not free.any():
        raise ValidationFailed("costmap has no free cells")
    if min_room_cells is None:
        min_room_cells = round(DEFAULT_MIN_ROOM_AREA / (g.resolution**2))

    components, count = ndimage.label(free)
    sizes = np.bincount(components.ravel(), minlength=count + 1)
    sizes[0] = 0
    reachable = components == int(np.argmax(sizes))

    dist = clearance(g)
    markers, seeds = ndimage.label(reachable & (dist > door_width_max / 2.0))
    if seeds == 0:
        markers = reachable.astype(np.int32)
    labels = watershed(-dist, markers, mask=reachable, connectivity=1).astype(np.int32)

    # Regions that meet along an opening wider than a door are one room.
    parent = {int(v): int(v) for v in np.unique(labels) if v > 0}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b), cells in sorted(_pair_boundaries(labels).items()):
        width = 2.0 * max(dist[r, c] for r, c in cells)
        if width > door_width_max:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    lut = np.zeros(int(labels.max()) + 1, dtype=np.int32)
    for label in parent:
        lut[label] = find(label)
    labels = lut[labels]

    while True:
        sizes = np.bincount(labels.ravel())
        boundaries = _pair_boundaries(labels)
        small = sorted(
            (int(sizes[v]), int(v))
            for v in np.unique(labels)
            if v > 0 and sizes[v] < min_room_cells
        )
        target = None
        for _, label in small:
            neighbours = [b if a == label else a for a, b in boundaries if label in (a, b)]
            if neighbours:
                target = (label, max(neighbours, key=lambda n: (int(sizes[n]), -n)))
                break
        if target is None:
            break
        labels = np.where(labels == target[0], target[1], labels)

    return RoomLabelRaster(width=g.width, height=g.height, labels=_relabel_scan_order(labels))


def room_centroids(raster: RoomLabelRaster) -> dict[int, GridIndex]:
    """Per room, the labeled cell closest to the mean of the room's cells."""
    centroids: dict[int, GridIndex] = {}
    for label in raster.room_labels():
        rows, cols = np.nonzero(raster.labels == label)
        d2 = (rows - rows.mean()) ** 2 + (cols - cols.mean()) ** 2
        best = int(np.lexsort((cols, rows, d2))[0])
        centroids[label] = GridIndex(col=int(cols[best]), row=int(rows[best]))
    return centroids


def edge_weight(
    g: CostmapGrid,
    centroid_a: GridIndex,
    portal: GridIndex,
    centroid_b: GridIndex,
    weighting: str = "distance",
    speed: float = 0.5,
) -> float:
    """Grid cost centroid -> portal -> centroid, optionally converted to travel time."""
    cost = grid_shortest_path(g, centroid_a, portal).cost + grid_shortest_path(g, portal, centroid_b).cost
    if weighting == "time":
        return cost / speed
    if weighting != "distance":
        raise ConfigError(f"unknown edge weighting {weighting!r}")
    return cost


def extract_adjacency(
    raster: RoomLabelRaster,
    g: CostmapGrid,
    room_ids: Mapping[int, str] | None = None,
    weighting: str = "distance",
    speed: float = 0.5,
) -> list[RoomEdge]:
    if (raster.width, raster.height) != (g.width, g.height):
        raise ValidationFailed("raster and costmap dimensions differ")
    if room_ids is None:
        room_ids = {label: f"room_{label}" for label in raster.room_labels()}
    centroids = room_centroids(raster)

    edges: list[RoomEdge] = []
    for (a, b), cells in sorted(_pair_boundaries(raster.labels).items()):
        ordered = sorted(cells)
        mean_r = sum(r for r, _ in ordered) / len(ordered)
        mean_c = sum(c for _, c in ordered) / len(ordered)
        r, c = min(ordered, key=lambda rc: ((rc[0] - mean_r) ** 2 + (rc[1] - mean_c) ** 2, rc))
        portal = GridIndex(col=c, row=r)
        weight = edge_weight(g, centroids[a], portal, centroids[b], weighting, speed)
        edges.append(RoomEdge(room_a=room_ids[a], room_b=room_ids[b], weight=weight, portal=portal))
    return edges

"""Metric layer: the costmap grid, its PGM/metadata files and grid search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
import yaml
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel, ConfigDict
from pydantic import ValidationError as PydanticValidationError

from .errors import BoundsError, ConfigError, FormatError, UnreachableError, ValidationFailed
from .logger import get_logger
from .search import dijkstra

logger = get_logger(__name__)

FREE = 0
INSCRIBED = 253
LETHAL = 254
UNKNOWN = 255

INSCRIBED_FACTOR = 3.0
SQRT2 = math.sqrt(2.0)

# (drow, dcol, diagonal)
MOVES = (
    (-1, 0, False), (1, 0, False), (0, -1, False), (0, 1, False),
    (-1, -1, True), (-1, 1, True), (1, -1, True), (1, 1, True),
)


class GridIndex(NamedTuple):
    col: int
    row: int


class MetricPoint(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class CostmapGrid:
    width: int
    height: int
    resolution: float
    origin_x: float
    origin_y: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationFailed(f"costmap dimensions must be positive, got {self.width}x{self.height}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValidationFailed(f"resolution must be positive, got {self.resolution}")
        cells = np.asarray(self.cells)
        if cells.size != self.width * self.height:
            raise ValidationFailed(
                f"cells has {cells.size} values, expected {self.width * self.height}"
            )
        if cells.size and (cells.min() < 0 or cells.max() > 255):
            raise ValidationFailed("cell values must lie in [0, 255]")
        cells = cells.reshape(self.height, self.width).astype(np.uint8, copy=True)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        if not isinstance(other, CostmapGrid):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.resolution == other.resolution
            and self.origin_x == other.origin_x
            and self.origin_y == other.origin_y
            and np.array_equal(self.cells, other.cells)
        )

    __hash__ = None

    def cost(self, index: GridIndex) -> int:
        check_index(self, index)
        return int(self.cells[index.row, index.col])

    def free_mask(self) -> np.ndarray:
        return self.cells < INSCRIBED

    @cached_property
    def _factors(self) -> list[float]:
        return _step_factors(self.cells, allow_inscribed=False)

    @cached_property
    def _factors_inscribed(self) -> list[float]:
        return _step_factors(self.cells, allow_inscribed=True)

    def step_factors(self, allow_inscribed: bool = False) -> list[float]:
        return self._factors_inscribed if allow_inscribed else self._factors


class CostmapMeta(BaseModel):
    model_config = ConfigDict(extra="forbid")

    resolution: float
    origin_x: float
    origin_y: float
    free_thresh: int = 250
    lethal_thresh: int = 50
    mode: Literal["scale", "raw"] = "scale"
    unknown_pixel: int | None = None


class GridPath(NamedTuple):
    cells: list[GridIndex]
    cost: float


def _step_factors(cells: np.ndarray, allow_inscribed: bool) -> list[float]:
    factors = 1.0 + cells.astype(np.float64) / 128.0
    factors[cells >= INSCRIBED] = math.inf
    if allow_inscribed:
        factors[cells == INSCRIBED] = INSCRIBED_FACTOR
    return factors.ravel().tolist()


def read_metadata(meta_path: str | Path) -> CostmapMeta:
    try:
        raw = yaml.safe_load(Path(meta_path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{meta_path}: not a key: value document ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{meta_path}: expected key: value lines")
    try:
        meta = CostmapMeta.model_validate(raw)
    except PydanticValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"{meta_path}: {problems}") from exc
    if meta.resolution <= 0:
        raise ValidationFailed(f"{meta_path}: resolution must be positive, got {meta.resolution}")
    if not 0 <= meta.lethal_thresh < meta.free_thresh - 1 <= 254:
        raise ConfigError(
            f"{meta_path}: need 0 <= lethal_thresh < free_thresh - 1, "
            f"got {meta.lethal_thresh}/{meta.free_thresh}"
        )
    return meta


def read_pgm(image_path: str | Path, sixteen_bit: bool = False) -> np.ndarray:
    path = Path(image_path)
    with path.open("rb") as fh:
        magic = fh.read(2)
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) image")
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            data = np.array(img)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise FormatError(f"{path}: malformed PGM ({exc})") from exc
    expected = ("I", "I;16", "I;16B") if sixteen_bit else ("L",)
    if mode not in expected:
        raise FormatError(f"{path}: unexpected PGM pixel mode {mode}")
    return data


def pixels_to_costs(pixels: np.ndarray, meta: CostmapMeta) -> np.ndarray:
    pixels = pixels.astype(np.int32)
    if meta.mode == "raw":
        return pixels.astype(np.uint8)

    free, lethal = meta.free_thresh, meta.lethal_thresh
    span = free - lethal - 2
    costs = 1 + ((free - 1 - pixels) * 251) // max(span, 1)
    costs = np.where(pixels >= free, FREE, costs)
    costs = np.where(pixels <= lethal, LETHAL, costs)
    if meta.unknown_pixel is not None:
        costs = np.where(pixels == meta.unknown_pixel, UNKNOWN, costs)
    return np.clip(costs, 0, 255).astype(np.uint8)


def load_costmap(image_path: str | Path, meta_path: str | Path) -> CostmapGrid:
    meta = read_metadata(meta_path)
    pixels = read_pgm(image_path)
    height, width = pixels.shape
    grid = CostmapGrid(
        width=width,
        height=height,
        resolution=meta.resolution,
        origin_x=meta.origin_x,
        origin_y=meta.origin_y,
        cells=pixels_to_costs(pixels, meta),
    )
    logger.debug("loaded costmap %s: %dx%d @ %.3f m", image_path, width, height, meta.resolution)
    return grid


def write_costmap(
    grid: CostmapGrid,
    image_path: str | Path,
    meta_path: str | Path,
    mode: Literal["scale", "raw"] | None = None,
) -> None:
    """Write PGM + metadata; "scale" (black/white) only when every cell is free or lethal."""
    binary = bool(np.isin(np.unique(grid.cells), (FREE, LETHAL)).all())
    if mode == "scale" and not binary:
        raise ValidationFailed("scale mode can only encode free and lethal cells")
    scale = binary if mode is None else mode == "scale"
    if scale:
        pixels = np.where(grid.cells == LETHAL, 0, 255).astype(np.uint8)
    else:
        pixels = grid.cells
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(image_path, format="PPM")

    lines = [
        f"resolution: {grid.resolution!r}",
        f"origin_x: {grid.origin_x!r}",
        f"origin_y: {grid.origin_y!r}",
        "free_thresh: 250",
        "lethal_thresh: 50",
        f"mode: {'scale' if scale else 'raw'}",
    ]
    Path(meta_path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def in_bounds(g: CostmapGrid, index: GridIndex) -> bool:
    return 0 <= index.col < g.width and 0 <= index.row < g.height


def check_index(g: CostmapGrid, index: GridIndex) -> None:
    if not in_bounds(g, index):
        raise BoundsError(f"cell {tuple(index)} outside {g.width}x{g.height} grid")


def world_to_grid(g: CostmapGrid, p: MetricPoint) -> GridIndex:
    if not (math.isfinite(p.x) and math.isfinite(p.y)):
        raise BoundsError(f"point {tuple(p)} is not finite")
    index = GridIndex(
        col=math.floor((p.x - g.origin_x) / g.resolution),
        row=math.floor((p.y - g.origin_y) / g.resolution),
    )
    if not in_bounds(g, index):
        raise BoundsError(f"point ({p.x:.3f}, {p.y:.3f}) lies outside the costmap")
    return index


def grid_to_world(g: CostmapGrid, i: GridIndex) -> MetricPoint:
    check_index(g, i)
    return MetricPoint(
        x=g.origin_x + (i.col + 0.5) * g.resolution,
        y=g.origin_y + (i.row + 0.5) * g.resolution,
    )


def is_traversable(g: CostmapGrid, index: GridIndex, allow_inscribed: bool = False) -> bool:
    if not in_bounds(g, index):
        return False
    value = g.cells[index.row, index.col]
    return value < INSCRIBED or (allow_inscribed and value == INSCRIBED)


def grid_shortest_path(
    g: CostmapGrid,
    start: GridIndex,
    goal: GridIndex,
    allow_inscribed: bool = False,
) -> GridPath:
    """8-connected minimum-cost path between two traversable cells.

    Step weight is the geometric step length times the mean of the two cells'
    cost factors (1 + cost/128). Diagonal steps may not cut a blocked corner.
    """
    for name, index in (("start", start), ("goal", goal)):
        check_index(g, index)
        if not is_traversable(g, index, allow_inscribed):
            raise ValidationFailed(
                f"{name} cell {tuple(index)} is not traversable (cost {g.cells[index.row, index.col]})"
            )

    width, height = g.width, g.height
    factors = g.step_factors(allow_inscribed)
    straight = g.resolution
    diagonal = g.resolution * SQRT2
    inf = math.inf

    def neighbors(node: int):
        row, col = divmod(node, width)
        here = factors[node]
        for drow, dcol, diag in MOVES:
            r, c = row + drow, col + dcol
            if not (0 <= r < height and 0 <= c < width):
                continue
            nxt = r * width + c
            there = factors[nxt]
            if there == inf:
                continue
            if diag:
                if factors[row * width + c] == inf or factors[r * width + col] == inf:
                    continue
                yield nxt, diagonal * (here + there) / 2.0
            else:
                yield nxt, straight * (here + there) / 2.0

    # always search from the lower flat index so a->b and b->a sum identical floats
    source, target = start.row * width + start.col, goal.row * width + goal.col
    swapped = target < source
    if swapped:
        source, target = target, source
    found = dijkstra(source, target, neighbors)
    if found is None:
        raise UnreachableError(f"no grid route from {tuple(start)} to {tuple(goal)}")
    cost, flat = found
    if swapped:
        flat.reverse()
    return GridPath(cells=[GridIndex(col=n % width, row=n // width) for n in flat], cost=cost)


def polyline_length(points: list[MetricPoint]) -> float:
    return float(sum(math.dist(a, b) for a, b in zip(points, points[1:])))

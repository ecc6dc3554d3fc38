"""The full three-layer map: on-disk archive and SVG rendering."""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import shutil
import tempfile
import zipfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from .errors import (
    ConflictError,
    ConsistencyError,
    CorruptArchiveError,
    FormatError,
    IntelliMoveError,
    ValidationFailed,
    VersionError,
)
from .graph import ObjectNode, RoomEdge, RoomNode, SemanticGraph, validate_graph
from .logger import get_logger
from .metric import (
    INSCRIBED,
    CostmapGrid,
    GridIndex,
    MetricPoint,
    load_costmap,
    read_pgm,
    world_to_grid,
    write_costmap,
)
from .segmentation import RoomLabelRaster

logger = get_logger(__name__)

FORMAT_VERSION = 1
ARCHIVE_FILES = ("costmap.pgm", "costmap.meta", "rooms.pgm", "graph.json", "meta.json")

BASE_DIR = Path(__file__).resolve().parent
templates = Environment(
    loader=FileSystemLoader(str(BASE_DIR / "templates")),
    autoescape=select_autoescape(default=True, default_for_string=True),
    trim_blocks=True,
    lstrip_blocks=True,
)

CATEGORY_COLORS = {
    "office": "#4e79a7",
    "corridor": "#bab0ac",
    "conference_room": "#f28e2b",
    "kitchen": "#59a14f",
    "lounge": "#b07aa1",
    "storage_room": "#9c755f",
    "uncategorized": "#d3d3d3",
}


@dataclass(frozen=True)
class MapMeta:
    name: str
    created: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    version: int = FORMAT_VERSION


@dataclass(eq=False)
class SemanticMap:
    costmap: CostmapGrid
    raster: RoomLabelRaster
    graph: SemanticGraph
    meta: MapMeta

    def __eq__(self, other):
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return (
            self.costmap == other.costmap
            and self.raster == other.raster
            and self.graph == other.graph
            and self.meta == other.meta
        )

    __hash__ = None

    def room_at(self, point: MetricPoint) -> RoomNode | None:
        label = self.raster.label_at(world_to_grid(self.costmap, point))
        return self.graph.room_by_label(label) if label else None


def check_map(m: SemanticMap) -> list[str]:
    """Cross-layer consistency between the costmap, the room raster and the graph."""
    problems: list[str] = []
    if (m.raster.width, m.raster.height) != (m.costmap.width, m.costmap.height):
        problems.append(
            f"raster is {m.raster.width}x{m.raster.height}, costmap is {m.costmap.width}x{m.costmap.height}"
        )
        return problems

    labeled = m.raster.labels > 0
    if np.any(labeled & (m.costmap.cells >= INSCRIBED)):
        problems.append("raster labels blocked costmap cells")

    counts = np.bincount(m.raster.labels.ravel())
    seen: dict[int, str] = {}
    for room in m.graph.rooms.values():
        if room.label in seen:
            problems.append(f"room {room.id}: raster label {room.label} also used by {seen[room.label]}")
        seen[room.label] = room.id
        present = 0 < room.label < counts.size and counts[room.label] > 0
        if not present:
            problems.append(f"room {room.id}: label {room.label} missing from raster")
            continue
        if room.cell_count != int(counts[room.label]):
            problems.append(f"room {room.id}: cell_count {room.cell_count} != {int(counts[room.label])} raster cells")
        if _label_of(m, room.centroid) != room.label:
            problems.append(f"room {room.id}: centroid outside its region")

    for obj in m.graph.objects.values():
        room = m.graph.rooms.get(obj.room_id)
        if room is not None and _label_of(m, obj.position) != room.label:
            problems.append(f"object {obj.id}: position not inside room {obj.room_id}")
    return problems


def _label_of(m: SemanticMap, point: MetricPoint) -> int:
    try:
        return m.raster.label_at(world_to_grid(m.costmap, point))
    except IntelliMoveError:
        return 0


class RoomDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    category: str
    label: int
    centroid: tuple[float, float]
    cell_count: int
    attributes: list[str]


class ObjectDoc(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    id: str
    class_: str = Field(alias="class")
    position: tuple[float, float]
    room: str


class EdgeDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    a: str
    b: str
    weight: float
    portal: tuple[int, int]


class GraphDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    rooms: list[RoomDoc]
    objects: list[ObjectDoc]
    edges: list[EdgeDoc]


class MetaDoc(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    name: str
    created: str


def graph_to_doc(graph: SemanticGraph) -> dict:
    return {
        "version": FORMAT_VERSION,
        "rooms": [
            {
                "id": r.id,
                "category": r.category,
                "label": r.label,
                "centroid": [r.centroid.x, r.centroid.y],
                "cell_count": r.cell_count,
                "attributes": list(r.attributes),
            }
            for r in sorted(graph.rooms.values(), key=lambda r: r.id)
        ],
        "objects": [
            {"id": o.id, "class": o.class_label, "position": [o.position.x, o.position.y], "room": o.room_id}
            for o in sorted(graph.objects.values(), key=lambda o: o.id)
        ],
        "edges": [
            {"a": e.room_a, "b": e.room_b, "weight": e.weight, "portal": [e.portal.col, e.portal.row]}
            for _, e in sorted(graph.room_edges.items())
        ],
    }


def graph_from_doc(doc: GraphDoc) -> SemanticGraph:
    graph = SemanticGraph()
    for r in doc.rooms:
        graph.add_room(
            RoomNode(id=r.id, category=r.category, centroid=MetricPoint(*r.centroid), cell_count=r.cell_count, label=r.label)
        )
    for o in doc.objects:
        graph.add_object(ObjectNode(id=o.id, class_label=o.class_, position=MetricPoint(*o.position), room_id=o.room))
    for e in doc.edges:
        graph.add_room_edge(RoomEdge(room_a=e.a, room_b=e.b, weight=e.weight, portal=GridIndex(*e.portal)))
    for r in doc.rooms:
        if graph.rooms[r.id].attributes != sorted(r.attributes):
            raise ConsistencyError(f"room {r.id}: stored attributes disagree with its objects")
    return graph.freeze()


def _write_archive_dir(m: SemanticMap, folder: Path) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    write_costmap(m.costmap, folder / "costmap.pgm", folder / "costmap.meta", mode="raw")
    Image.fromarray(m.raster.labels.astype(np.int32)).save(folder / "rooms.pgm", format="PPM")
    (folder / "graph.json").write_text(json.dumps(graph_to_doc(m.graph), indent=2) + "\n", encoding="utf-8")
    meta = {"version": m.meta.version, "name": m.meta.name, "created": m.meta.created}
    (folder / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _replace_dir(staged: Path, path: Path) -> None:
    staged.chmod(0o755)
    if not path.exists():
        os.replace(staged, path)
        return
    retired = Path(tempfile.mkdtemp(dir=path.parent, prefix=f".{path.name}.old-"))
    os.replace(path, retired / path.name)
    os.replace(staged, path)
    shutil.rmtree(retired)


def save_map(m: SemanticMap, path: str | Path) -> Path:
    """Write ``m`` as a directory or ``.zip`` archive.

    Everything is staged next to the target and moved into place at the end, so
    a failed save leaves any previous archive at ``path`` untouched.
    """
    problems = validate_graph(m.graph) + check_map(m)
    if problems:
        raise ConsistencyError(f"refusing to save an inconsistent map: {problems[0]} (+{len(problems) - 1} more)")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    staged = Path(tempfile.mkdtemp(dir=path.parent, prefix=f".{path.name}.new-"))
    try:
        if path.suffix != ".zip":
            _write_archive_dir(m, staged)
            _replace_dir(staged, path)
        else:
            _write_archive_dir(m, staged)
            packed = staged / "archive.zip"
            with zipfile.ZipFile(packed, "w", compression=zipfile.ZIP_DEFLATED) as archive:
                for name in ARCHIVE_FILES:
                    archive.write(staged / name, arcname=name)
            os.replace(packed, path)
    finally:
        shutil.rmtree(staged, ignore_errors=True)
    logger.info("saved map %s to %s", m.meta.name, path)
    return path


def _graph_or_corrupt(doc: GraphDoc, folder: Path) -> SemanticGraph:
    try:
        return graph_from_doc(doc)
    except (ValidationFailed, ConflictError) as exc:
        raise CorruptArchiveError(f"{folder}: graph.json: {exc}") from exc


def _load_archive_dir(folder: Path, check: bool = True) -> SemanticMap:
    missing = [name for name in ARCHIVE_FILES if not (folder / name).is_file()]
    if missing:
        raise CorruptArchiveError(f"{folder}: missing {', '.join(missing)}")
    try:
        meta = MetaDoc.model_validate_json((folder / "meta.json").read_bytes())
        doc = GraphDoc.model_validate_json((folder / "graph.json").read_bytes())
    except PydanticValidationError as exc:
        raise CorruptArchiveError(f"{folder}: unreadable map documents ({exc.error_count()} errors)") from exc
    for version in (meta.version, doc.version):
        if version != FORMAT_VERSION:
            raise VersionError(f"{folder}: format version {version}, this build reads {FORMAT_VERSION}")

    try:
        costmap = load_costmap(folder / "costmap.pgm", folder / "costmap.meta")
        labels = read_pgm(folder / "rooms.pgm", sixteen_bit=True)
    except FormatError as exc:
        raise CorruptArchiveError(str(exc)) from exc
    if labels.shape != (costmap.height, costmap.width):
        raise CorruptArchiveError(f"{folder}: rooms.pgm is {labels.shape[1]}x{labels.shape[0]}, costmap differs")
    raster = RoomLabelRaster(width=costmap.width, height=costmap.height, labels=labels)

    m = SemanticMap(
        costmap=costmap,
        raster=raster,
        graph=_graph_or_corrupt(doc, folder),
        meta=MapMeta(name=meta.name, created=meta.created, version=meta.version),
    )
    problems = validate_graph(m.graph) + check_map(m) if check else []
    if problems:
        raise ConsistencyError(f"{folder}: {problems[0]}")
    return m


def load_map(path: str | Path, check: bool = True) -> SemanticMap:
    """Read a map directory or zip; with ``check`` a cross-layer violation raises ConsistencyError."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(2, "no such map", str(path))
    if path.is_dir():
        return _load_archive_dir(path, check)

    with tempfile.TemporaryDirectory() as tmp:
        try:
            with zipfile.ZipFile(path) as archive:
                names = set(archive.namelist())
                for name in ARCHIVE_FILES:
                    if name in names:
                        archive.extract(name, tmp)
        except (zipfile.BadZipFile, EOFError, OSError) as exc:
            raise CorruptArchiveError(f"{path}: {exc}") from exc
        return _load_archive_dir(Path(tmp), check)


def category_color(category: str) -> str:
    if category in CATEGORY_COLORS:
        return CATEGORY_COLORS[category]
    digest = hashlib.md5(category.encode("utf-8")).hexdigest()
    return f"#{digest[:6]}"


def _costmap_png(costmap: CostmapGrid) -> str:
    cells = costmap.cells.astype(np.int16)
    gray = np.where(cells == 255, 205, 255 - cells).astype(np.uint8)
    buffer = io.BytesIO()
    Image.fromarray(gray).save(buffer, format="PNG")
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def _region_path(labels: np.ndarray, label: int, px: int) -> str:
    parts = []
    for row in np.nonzero((labels == label).any(axis=1))[0].tolist():
        line = np.concatenate(([0], (labels[row] == label).astype(np.int8), [0]))
        edges = np.flatnonzero(np.diff(line))
        for start, stop in zip(edges[::2].tolist(), edges[1::2].tolist()):
            parts.append(f"M{start * px},{row * px}h{(stop - start) * px}v{px}h-{(stop - start) * px}z")
    return "".join(parts)


def _to_svg(costmap: CostmapGrid, point: MetricPoint, px: int) -> tuple[float, float]:
    x = (point.x - costmap.origin_x) / costmap.resolution * px
    y = (point.y - costmap.origin_y) / costmap.resolution * px
    return round(x, 2), round(y, 2)


def render_svg(m: SemanticMap, path=None, out: str | Path | None = None, cell_px: int = 4) -> str:
    """SVG 1.1 drawing: costmap, room regions, objects, then the optional path in red."""
    rooms = []
    for room in sorted(m.graph.rooms.values(), key=lambda r: r.id):
        cx, cy = _to_svg(m.costmap, room.centroid, cell_px)
        rooms.append(
            {
                "id": room.id,
                "category": room.category,
                "color": category_color(room.category),
                "d": _region_path(m.raster.labels, room.label, cell_px),
                "cx": cx,
                "cy": cy,
            }
        )

    objects = []
    for obj in sorted(m.graph.objects.values(), key=lambda o: o.id):
        cx, cy = _to_svg(m.costmap, obj.position, cell_px)
        objects.append({"id": obj.id, "label": obj.class_label, "cx": cx, "cy": cy})

    route = None
    if path is not None:
        points = list(path.waypoints) if path.waypoints else node_positions(m, path.nodes)
        coords = [_to_svg(m.costmap, p, cell_px) for p in points]
        if coords:
            route = {
                "points": " ".join(f"{x},{y}" for x, y in coords),
                "start": coords[0],
                "goal": coords[-1],
            }

    svg = templates.get_template("map.svg.j2").render(
        width=m.costmap.width * cell_px,
        height=m.costmap.height * cell_px,
        name=m.meta.name,
        costmap_png=_costmap_png(m.costmap),
        rooms=rooms,
        objects=objects,
        route=route,
    )
    if out is not None:
        Path(out).write_text(svg, encoding="utf-8")
    return svg


def node_positions(m: SemanticMap, nodes) -> list[MetricPoint]:
    points = []
    for node_id in nodes:
        if node_id in m.graph.rooms:
            points.append(m.graph.rooms[node_id].centroid)
        elif node_id in m.graph.objects:
            points.append(m.graph.objects[node_id].position)
    return points


from collections.abc import Callable
from typing import Literal

from fastapi import APIRouter, Depends
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from ..bench import describe_layers
from ..config import settings
from ..deps import (
    OracleKind,
    get_map,
    get_maps_dir,
    get_oracle_lookup,
    get_query_oracle,
    get_unchecked_map,
    list_map_names,
)
from ..discovery import GoalOracle
from ..graph import validate_graph
from ..mapio import SemanticMap, check_map, render_svg
from ..metric import MetricPoint
from ..planner import FailureReason, PlanOptions, PlanRequest, outcome_to_dict, parse_start, plan

router = APIRouter(prefix="/maps", tags=["maps"])


class PlanBody(BaseModel):
    start: str | tuple[float, float]
    goal: str
    oracle: OracleKind = "mock"
    allow_inscribed: bool = False
    refine: bool = False
    cost_metric: Literal["weight", "hops"] = "weight"

    def to_request(self) -> PlanRequest:
        start = parse_start(self.start) if isinstance(self.start, str) else MetricPoint(*self.start)
        options = PlanOptions(
            allow_inscribed=self.allow_inscribed,
            refine_metric=self.refine,
            cost_metric=self.cost_metric,
        )
        return PlanRequest(start=start, goal=self.goal, options=options)


@router.get("")
def list_maps(maps_dir=Depends(get_maps_dir)):
    return {"maps": list_map_names(maps_dir)}


@router.get("/{name}")
def map_summary(m: SemanticMap = Depends(get_map)):
    return {
        "name": m.meta.name,
        "created": m.meta.created,
        "version": m.meta.version,
        "costmap": {
            "width": m.costmap.width,
            "height": m.costmap.height,
            "resolution": m.costmap.resolution,
        },
        "rooms": sorted(m.graph.rooms),
        "objects": len(m.graph.objects),
        "edges": len(m.graph.room_edges),
        "layers": describe_layers(m).model_dump(),
    }


@router.post("/{name}/plan")
def plan_path(
    body: PlanBody,
    m: SemanticMap = Depends(get_map),
    oracles: Callable[[OracleKind], GoalOracle] = Depends(get_oracle_lookup),
):
    outcome = plan(m, body.to_request(), oracles(body.oracle))
    if outcome.ok:
        return outcome_to_dict(outcome)
    status_code = 400 if outcome.failure_reason is FailureReason.INVALID_START else 422
    return JSONResponse(outcome_to_dict(outcome), status_code=status_code)


@router.get("/{name}/render")
def render_map(
    start: str | None = None,
    goal: str | None = None,
    refine: bool = False,
    m: SemanticMap = Depends(get_map),
    oracle: GoalOracle = Depends(get_query_oracle),
):
    path = None
    if start and goal:
        body = PlanBody(start=start, goal=goal, refine=refine)
        path = plan(m, body.to_request(), oracle).result
    svg = render_svg(m, path, cell_px=settings.SVG_CELL_PX)
    return Response(content=svg, media_type="image/svg+xml")


@router.get("/{name}/validate")
def validate_map(m: SemanticMap = Depends(get_unchecked_map)):
    violations = validate_graph(m.graph) + check_map(m)
    return {"ok": not violations, "violations": violations}

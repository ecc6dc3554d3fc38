"""Command-line entry point: gen, build, plan, bench, render, validate, info, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import describe_layers, run_bench
from .config import settings
from .discovery import build_oracle
from .envgen import DEFAULT_ENV_SPEC, EnvSpec, generate, load_env_spec, write_environment
from .errors import EXIT_INCONSISTENT, EXIT_INVALID_INPUT, EXIT_OK, EXIT_PLAN_FAILED, error_to_text, exit_code_for
from .graph import validate_graph
from .logger import configure_logging, get_logger
from .mapio import check_map, load_map, render_svg, save_map
from .metric import load_costmap
from .pipeline import build_semantic_map, load_objects
from .planner import FailureReason, PlanOptions, PlanRequest, outcome_to_dict, parse_start, plan
from .segmentation import load_category_rules

logger = get_logger(__name__)

ORACLES = ("mock", "http", "none")


def _plan_options(args) -> PlanOptions:
    return PlanOptions(
        allow_inscribed=args.allow_inscribed,
        refine_metric=args.refine or bool(getattr(args, "waypoints", None)),
        cost_metric="hops" if getattr(args, "hops", False) else "weight",
    )


def cmd_gen(args) -> int:
    spec = load_env_spec(args.spec)
    overrides = {k: v for k, v in (("seed", args.seed), ("n_rooms", args.n_rooms), ("resolution", args.resolution)) if v is not None}
    if overrides:
        spec = EnvSpec.model_validate(spec.model_dump() | overrides)
    costmap, truth, graph = generate(spec)
    out = write_environment(args.out, costmap, truth, graph)
    print(f"generated {len(graph.rooms)} rooms, {len(graph.objects)} objects, {len(graph.room_edges)} doors -> {out}")
    return EXIT_OK


def cmd_build(args) -> int:
    costmap = load_costmap(args.costmap, args.meta)
    objects = load_objects(args.objects) if args.objects else []
    rules = load_category_rules(args.rules)
    oracle = build_oracle(args.oracle, args.table) if args.categorize_with_oracle else None
    m = build_semantic_map(
        costmap,
        objects,
        rules,
        door_width_max=args.door_width_max,
        min_room_area=args.min_room_area,
        weighting=args.weighting,
        oracle=oracle,
        name=args.name or Path(args.out).stem,
    )
    save_map(m, args.out)
    print(f"built {len(m.graph.rooms)} rooms, {len(m.graph.objects)} objects, {len(m.graph.room_edges)} edges -> {args.out}")
    return EXIT_OK


def cmd_plan(args) -> int:
    m = load_map(args.map)
    oracle = build_oracle(args.oracle, args.table)
    request = PlanRequest(start=parse_start(args.start), goal=args.goal, options=_plan_options(args))
    outcome = plan(m, request, oracle)

    if args.json:
        print(json.dumps(outcome_to_dict(outcome), indent=2))
    elif outcome.ok:
        path = outcome.result
        print(f"mode: {outcome.mode.value}")
        print(f"path: {' -> '.join(path.nodes)}")
        print(f"cost: {path.graph_cost:.3f}")
        if path.metric_cost is not None:
            print(f"metric cost: {path.metric_cost:.3f} ({len(path.waypoints)} waypoints)")
    else:
        print(f"failed: {outcome.failure_reason.value}: {outcome.detail}", file=sys.stderr)

    if outcome.ok and args.waypoints:
        points = [[p.x, p.y] for p in outcome.result.waypoints]
        Path(args.waypoints).write_text(json.dumps(points) + "\n", encoding="utf-8")
    if outcome.ok:
        return EXIT_OK
    return EXIT_INVALID_INPUT if outcome.failure_reason is FailureReason.INVALID_START else EXIT_PLAN_FAILED


def cmd_bench(args) -> int:
    m = load_map(args.map)
    if args.oracle in ("correct", "adversarial"):
        oracle = args.oracle
    else:
        oracle = build_oracle(args.oracle, args.table)
    report = run_bench(
        m,
        trials=args.trials,
        modes=args.mode or ["targeted"],
        seed=args.seed,
        oracle=oracle,
        oracle_name=args.oracle,
        workers=args.workers,
    )
    print(report.table())
    print(report.to_json())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_render(args) -> int:
    m = load_map(args.map)
    path, code = None, EXIT_OK
    if args.goal:
        if not args.start:
            raise ValueError("--goal needs --start")
        request = PlanRequest(start=parse_start(args.start), goal=args.goal, options=_plan_options(args))
        outcome = plan(m, request, build_oracle(args.oracle, args.table))
        if outcome.ok:
            path = outcome.result
        else:
            print(f"failed: {outcome.failure_reason.value}: {outcome.detail}", file=sys.stderr)
            code = EXIT_PLAN_FAILED
    render_svg(m, path, out=args.out, cell_px=args.cell_px)
    print(f"wrote {args.out}")
    return code


def cmd_validate(args) -> int:
    m = load_map(args.map, check=False)
    problems = validate_graph(m.graph) + check_map(m)
    for problem in problems:
        print(problem)
    if problems:
        print(f"{len(problems)} violation(s)", file=sys.stderr)
        return EXIT_INCONSISTENT
    print("ok")
    return EXIT_OK


def cmd_info(args) -> int:
    m = load_map(args.map)
    g = m.costmap
    print(f"name: {m.meta.name}")
    print(f"created: {m.meta.created}")
    print(f"format version: {m.meta.version}")
    print(f"costmap: {g.width}x{g.height} cells @ {g.resolution} m")
    print(f"rooms: {len(m.graph.rooms)}  objects: {len(m.graph.objects)}  edges: {len(m.graph.room_edges)}")
    for layer, present in describe_layers(m).model_dump().items():
        print(f"  {layer.replace('_', ' '):<24} {'yes' if present else 'no'}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    if args.maps:
        settings.MAPS_DIR = Path(args.maps)
    uvicorn.run("app.main:app", host=args.host, port=args.port, log_level=args.log_level.lower())
    return EXIT_OK


def _add_plan_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--oracle", choices=ORACLES, default="mock")
    p.add_argument("--table", help="co-occurrence table for the mock oracle")
    p.add_argument("--allow-inscribed", action="store_true", help="let metric refinement cross inscribed cells")
    p.add_argument("--refine", action="store_true", help="refine the room path into metric waypoints")
    p.add_argument("--hops", action="store_true", help="compare paths by hop count instead of edge weight")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intellimove", description="Three-layer semantic map and planner")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic office floor")
    p.add_argument("--spec", default=str(DEFAULT_ENV_SPEC))
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-rooms", type=int)
    p.add_argument("--resolution", type=float)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build", help="segment a costmap and build the semantic map")
    p.add_argument("--costmap", required=True)
    p.add_argument("--meta", required=True)
    p.add_argument("--objects")
    p.add_argument("--out", required=True)
    p.add_argument("--name")
    p.add_argument("--rules", default=str(settings.CATEGORY_RULES))
    p.add_argument("--weighting", choices=("distance", "time"), default=settings.EDGE_WEIGHTING)
    p.add_argument("--door-width-max", type=float, default=settings.DOOR_WIDTH_MAX)
    p.add_argument("--min-room-area", type=float, default=settings.MIN_ROOM_AREA)
    p.add_argument("--categorize-with-oracle", action="store_true")
    p.add_argument("--oracle", choices=ORACLES, default="mock")
    p.add_argument("--table")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("plan", help="plan a semantic path")
    p.add_argument("--map", required=True)
    p.add_argument("--start", required=True, help="room id, object id or x,y")
    p.add_argument("--goal", required=True)
    p.add_argument("--waypoints", help="write refined waypoints as JSON")
    p.add_argument("--json", action="store_true")
    _add_plan_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="benchmark planning on a map")
    p.add_argument("--map", required=True)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--mode", action="append", choices=("targeted", "multi", "discovery", "mixed"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--oracle", choices=(*ORACLES, "correct", "adversarial"), default="mock")
    p.add_argument("--table")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("render", help="draw the map (and optionally a path) as SVG")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--start")
    p.add_argument("--goal")
    p.add_argument("--cell-px", type=int, default=settings.SVG_CELL_PX)
    _add_plan_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="list every invariant violation of a map")
    p.add_argument("--map", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("info", help="summarize a map and its layers")
    p.add_argument("--map", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--maps", help="directory of maps to serve")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except Exception as exc:
        code = exit_code_for(exc)
        if code == EXIT_INCONSISTENT:
            logger.exception("internal inconsistency")
        print(f"error: {error_to_text(exc)}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())

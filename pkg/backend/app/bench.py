"""Planning benchmark: sampled (start, goal) trials per mode and an aggregated report."""

from __future__ import annotations

import platform
import statistics
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel

from .discovery import GoalOracle, KnownLocationOracle
from .errors import ConfigError
from .graph import GoalKind, GoalQuery, SemanticGraph
from .logger import get_logger
from .mapio import SemanticMap
from .planner import PlanOutcome, PlanRequest, plan

logger = get_logger(__name__)

SCHEMA_VERSION = 1
BENCH_MODES = ("targeted", "multi", "discovery")

BenchMode = Literal["targeted", "multi", "discovery", "mixed"]


class WallTimeStats(BaseModel):
    mean: float
    p50: float
    max: float


class ModeStats(BaseModel):
    trials: int = 0
    successes: int = 0
    paths: int = 0
    success_rate: float | None = None
    path_rate: float | None = None
    wall_time_ms: WallTimeStats | None = None


class BenchReport(BaseModel):
    schema_version: int = SCHEMA_VERSION
    n_trials: int
    seed: int
    oracle: str
    modes: dict[str, ModeStats]
    success_rate: float | None = None
    wall_time_ms: WallTimeStats | None = None
    hardware: str

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True)

    def table(self) -> str:
        lines = [f"{'mode':<10} {'trials':>6} {'ok':>5} {'paths':>6} {'success':>8} {'mean ms':>8} {'max ms':>8}"]
        for name, stats in self.modes.items():
            rate = f"{stats.success_rate:.2f}" if stats.success_rate is not None else "-"
            mean = f"{stats.wall_time_ms.mean:.2f}" if stats.wall_time_ms else "-"
            peak = f"{stats.wall_time_ms.max:.2f}" if stats.wall_time_ms else "-"
            lines.append(
                f"{name:<10} {stats.trials:>6} {stats.successes:>5} {stats.paths:>6} {rate:>8} {mean:>8} {peak:>8}"
            )
        return "\n".join(lines)


class LayerSummary(BaseModel):
    metric_representation: bool
    object_layer: bool
    room_layer: bool
    object_based_planning: bool
    room_based_planning: bool


def describe_layers(m: SemanticMap) -> LayerSummary:
    has_objects = bool(m.graph.objects)
    has_rooms = bool(m.graph.rooms)
    return LayerSummary(
        metric_representation=m.costmap.width * m.costmap.height > 0,
        object_layer=has_objects,
        room_layer=has_rooms,
        object_based_planning=has_objects and has_rooms,
        room_based_planning=has_rooms,
    )


@dataclass(frozen=True)
class Trial:
    mode: str
    start: str
    goal: str
    hidden_class: str | None = None


def _expand_modes(modes: Sequence[str]) -> list[str]:
    expanded: list[str] = []
    for mode in modes:
        if mode == "mixed":
            expanded.extend(BENCH_MODES)
        elif mode in BENCH_MODES:
            expanded.append(mode)
        else:
            raise ConfigError(f"unknown bench mode {mode!r}")
    return list(dict.fromkeys(expanded))


def _multi_goals(graph: SemanticGraph) -> list[str]:
    counts: dict[str, int] = {}
    for obj in graph.objects.values():
        counts[obj.class_label] = counts.get(obj.class_label, 0) + 1
    for room in graph.rooms.values():
        counts[room.category] = counts.get(room.category, 0) + 1
    return sorted(label for label, n in counts.items() if n >= 2)


def sample_trials(graph: SemanticGraph, trials: int, modes: Sequence[str], seed: int) -> list[Trial]:
    """Starts are uniform over rooms; the goal is drawn per mode."""
    rng = np.random.default_rng(seed)
    rooms = sorted(graph.rooms)
    objects = sorted(graph.objects)
    classes = sorted({o.class_label for o in graph.objects.values()})
    multi = _multi_goals(graph)
    modes = _expand_modes(modes)

    sampled: list[Trial] = []
    if not rooms:
        return sampled
    for i in range(trials):
        mode = modes[i % len(modes)]
        start = rooms[int(rng.integers(len(rooms)))]
        if mode == "targeted":
            pool = objects or rooms
            sampled.append(Trial(mode, start, pool[int(rng.integers(len(pool)))]))
        elif mode == "multi":
            if not multi:
                logger.warning("map has no class or category with two instances; multi trial skipped")
                continue
            sampled.append(Trial(mode, start, multi[int(rng.integers(len(multi)))]))
        else:
            if not classes:
                logger.warning("map has no objects to hide; discovery trial skipped")
                continue
            cls = classes[int(rng.integers(len(classes)))]
            sampled.append(Trial(mode, start, cls, hidden_class=cls))
    return sampled


def _arrived(graph: SemanticGraph, trial: Trial, outcome: PlanOutcome) -> bool:
    if outcome.result is None:
        return False
    last = outcome.result.nodes[-1]
    if trial.mode == "targeted":
        return last == trial.goal
    if trial.mode == "multi":
        node = graph.objects.get(last)
        if node is not None:
            return node.class_label == trial.goal
        return graph.rooms[last].category == trial.goal
    return any(o.class_label == trial.hidden_class for o in graph.objects_in(graph.room_of(last)))


def _stats(times: list[float]) -> WallTimeStats | None:
    if not times:
        return None
    return WallTimeStats(mean=statistics.fmean(times), p50=statistics.median(times), max=max(times))


def run_bench(
    m: SemanticMap,
    trials: int,
    modes: Sequence[BenchMode] = ("targeted",),
    seed: int = 0,
    oracle: GoalOracle | Literal["correct", "adversarial"] | None = None,
    oracle_name: str = "mock",
    workers: int = 1,
) -> BenchReport:
    """Plan every sampled trial and aggregate per-mode success and timing.

    Discovery trials plan on a copy of the map with the goal class removed and
    count as successes only when the chosen room really holds that class.
    """
    if oracle in ("correct", "adversarial"):
        oracle_name = oracle
        oracle = KnownLocationOracle(m.graph, adversarial=oracle == "adversarial")

    sampled = sample_trials(m.graph, trials, modes, seed)
    hidden_maps: dict[str, SemanticMap] = {}
    for trial in sampled:
        if trial.hidden_class and trial.hidden_class not in hidden_maps:
            hidden_maps[trial.hidden_class] = SemanticMap(
                costmap=m.costmap,
                raster=m.raster,
                graph=m.graph.without_class(trial.hidden_class),
                meta=m.meta,
            )

    def run(trial: Trial) -> PlanOutcome:
        target = hidden_maps[trial.hidden_class] if trial.hidden_class else m
        goal = GoalQuery(trial.goal, GoalKind.OBJECT_CLASS) if trial.hidden_class else trial.goal
        return plan(target, PlanRequest(start=trial.start, goal=goal), oracle)

    if sampled:
        run(sampled[0])  # warm-up, not recorded

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, sampled))
    else:
        outcomes = [run(trial) for trial in sampled]

    per_mode: dict[str, ModeStats] = {}
    times: dict[str, list[float]] = {}
    for trial, outcome in zip(sampled, outcomes):
        stats = per_mode.setdefault(trial.mode, ModeStats())
        stats.trials += 1
        stats.paths += outcome.ok
        stats.successes += _arrived(m.graph, trial, outcome)
        times.setdefault(trial.mode, []).append(outcome.wall_time)
    for mode, stats in per_mode.items():
        stats.success_rate = stats.successes / stats.trials
        stats.path_rate = stats.paths / stats.trials
        stats.wall_time_ms = _stats(times[mode])

    total = len(sampled)
    successes = sum(s.successes for s in per_mode.values())
    return BenchReport(
        n_trials=total,
        seed=seed,
        oracle=oracle_name,
        modes=dict(sorted(per_mode.items())),
        success_rate=successes / total if total else None,
        wall_time_ms=_stats([o.wall_time for o in outcomes]),
        hardware=f"{platform.machine()} {platform.processor() or platform.system()} / python {platform.python_version()}",
    )

"""Goal discovery: ask an oracle which rooms most likely hold an unmapped goal."""

from __future__ import annotations

import csv
import math
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import httpx
from pydantic import BaseModel, Field
from pydantic import ValidationError as PydanticValidationError

from .config import settings
from .errors import ConfigError, DiscoveryFailed, OracleParseError, OracleTransportError, ValidationFailed
from .graph import GoalQuery, SemanticGraph, normalize_label
from .logger import get_logger

logger = get_logger(__name__)

CO_OBJECT_FACTOR = 0.1


@dataclass(frozen=True)
class RoomContext:
    room_id: str
    category: str
    attributes: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiscoveryResponse:
    ranked_rooms: tuple[tuple[str, float], ...]
    rationale: str = ""

    @property
    def top(self) -> str:
        return self.ranked_rooms[0][0]


@dataclass
class CooccurrenceTable:
    entries: dict[tuple[str, str], float] = field(default_factory=dict)

    def affinity(self, object_class: str, other: str) -> float:
        return self.entries.get((object_class, other), 0.0)


def parse_cooccurrence(text: str, source: str = "<table>") -> CooccurrenceTable:
    entries: dict[tuple[str, str], float] = {}
    rows = (line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#"))
    for lineno, row in enumerate(csv.reader(rows, skipinitialspace=True), start=1):
        if len(row) != 3:
            raise ConfigError(f"{source}: row {lineno}: expected 'object_class, room_category, score'")
        key = (normalize_label(row[0]), normalize_label(row[1]))
        try:
            score = float(row[2])
        except ValueError as exc:
            raise ConfigError(f"{source}: row {lineno}: score {row[2]!r} is not a number") from exc
        if not (score >= 0 and math.isfinite(score)):
            raise ConfigError(f"{source}: row {lineno}: score must be finite and non-negative")
        if key in entries:
            raise ConfigError(f"{source}: row {lineno}: duplicate entry {key}")
        entries[key] = score
    return CooccurrenceTable(entries)


def load_cooccurrence(path: str | Path) -> CooccurrenceTable:
    return parse_cooccurrence(Path(path).read_text(encoding="utf-8"), source=str(path))


def room_contexts(graph: SemanticGraph) -> list[RoomContext]:
    return [
        RoomContext(room.id, room.category, tuple(room.attributes))
        for room in sorted(graph.rooms.values(), key=lambda r: r.id)
    ]


def _goal_class(goal: GoalQuery | str) -> str:
    return normalize_label(goal.text if isinstance(goal, GoalQuery) else goal)


def mock_rank(table: CooccurrenceTable, contexts: Sequence[RoomContext], goal: GoalQuery | str) -> DiscoveryResponse:
    target = _goal_class(goal)
    scores = {
        ctx.room_id: table.affinity(target, ctx.category)
        + sum(table.affinity(target, a) * CO_OBJECT_FACTOR for a in ctx.attributes)
        for ctx in contexts
    }
    top = max(scores.values(), default=0.0)
    if top > 0:
        confidences = {room_id: score / top for room_id, score in scores.items()}
    else:
        confidences = {room_id: 1.0 / len(scores) for room_id in scores}
    ranked = sorted(confidences.items(), key=lambda item: (-item[1], item[0]))
    return DiscoveryResponse(tuple(ranked), rationale=f"co-occurrence scores for {target}")


class GoalOracle(Protocol):
    def rank(self, contexts: Sequence[RoomContext], goal: GoalQuery) -> DiscoveryResponse: ...

    def categorize(self, attributes: Iterable[str], categories: Sequence[str]) -> str | None: ...


class MockOracle:
    def __init__(self, table: CooccurrenceTable):
        self.table = table

    def rank(self, contexts, goal):
        return mock_rank(self.table, contexts, goal)

    def categorize(self, attributes, categories):
        objects = [normalize_label(a) for a in attributes]
        scored = [
            (sum(self.table.affinity(obj, category) for obj in objects), category)
            for category in sorted(categories)
        ]
        best = max(scored, key=lambda item: item[0], default=(0.0, None))
        return best[1] if best[0] > 0 else None


class NullOracle:
    def rank(self, contexts, goal):
        raise DiscoveryFailed(f"no oracle configured to locate {_goal_class(goal)!r}")

    def categorize(self, attributes, categories):
        return None


class KnownLocationOracle:
    """Ranks rooms from a reference graph; with ``adversarial`` the true rooms go last."""

    def __init__(self, reference: SemanticGraph, adversarial: bool = False):
        self.reference = reference
        self.adversarial = adversarial

    def rank(self, contexts, goal):
        target = _goal_class(goal)
        holders = {o.room_id for o in self.reference.objects.values() if o.class_label == target}
        if goal.text in self.reference.rooms or goal.text in self.reference.objects:
            holders = {self.reference.room_of(goal.text)}
        favoured = [c.room_id for c in contexts if (c.room_id in holders) != self.adversarial]
        rest = [c.room_id for c in contexts if c.room_id not in favoured]
        ranked = [(room_id, 1.0) for room_id in sorted(favoured)] + [(room_id, 0.0) for room_id in sorted(rest)]
        return DiscoveryResponse(tuple(ranked), rationale="reference map lookup")

    def categorize(self, attributes, categories):
        return None


class RankedRoom(BaseModel):
    id: str
    confidence: float = Field(ge=0.0, le=1.0)


class OracleRanking(BaseModel):
    ranking: list[RankedRoom]
    rationale: str = ""


class OracleCategory(BaseModel):
    category: str | None = None


class HttpOracle:
    """Oracle behind an HTTP endpoint speaking the {goal, rooms} / {ranking, rationale} contract."""

    def __init__(
        self,
        url: str,
        token: str | None = None,
        timeout: float = 10.0,
        retries: int = 2,
        backoff: float = 0.5,
        categorize_url: str | None = None,
        client: httpx.Client | None = None,
    ):
        self.url = url
        self.categorize_url = categorize_url
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._owns_client = client is None
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        if self._owns_client:
            self._client.close()

    def _post(self, url: str, payload: dict) -> httpx.Response:
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                response = self._client.post(url, json=payload, headers=self.headers, timeout=self.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("oracle request to %s failed (attempt %d): %s", url, attempt + 1, exc)
                continue
            if response.status_code >= 500:
                last_error = OracleTransportError(f"oracle answered HTTP {response.status_code}")
                logger.warning("oracle %s answered %d (attempt %d)", url, response.status_code, attempt + 1)
                continue
            if response.status_code >= 400:
                raise OracleTransportError(f"oracle rejected the request with HTTP {response.status_code}")
            return response
        raise OracleTransportError(f"oracle unreachable after {self.retries + 1} attempts: {last_error}")

    def rank(self, contexts, goal):
        payload = {
            "goal": _goal_class(goal),
            "rooms": [{"id": c.room_id, "category": c.category, "objects": list(c.attributes)} for c in contexts],
        }
        response = self._post(self.url, payload)
        try:
            parsed = OracleRanking.model_validate_json(response.content)
        except PydanticValidationError as exc:
            logger.error("malformed oracle ranking: %s", response.text)
            raise OracleParseError(f"{exc.error_count()} schema errors", payload=response.text) from exc
        return DiscoveryResponse(
            tuple((item.id, item.confidence) for item in parsed.ranking),
            rationale=parsed.rationale,
        )

    def categorize(self, attributes, categories):
        if not self.categorize_url:
            return None
        payload = {"objects": sorted(normalize_label(a) for a in attributes), "categories": list(categories)}
        response = self._post(self.categorize_url, payload)
        try:
            parsed = OracleCategory.model_validate_json(response.content)
        except PydanticValidationError as exc:
            logger.error("malformed oracle category: %s", response.text)
            raise OracleParseError(f"{exc.error_count()} schema errors", payload=response.text) from exc
        return normalize_label(parsed.category) if parsed.category else None


def goal_llm_response(
    contexts: Sequence[RoomContext],
    goal: GoalQuery,
    oracle: GoalOracle,
) -> DiscoveryResponse:
    if not contexts:
        raise ValidationFailed("discovery needs at least one room context")

    response = oracle.rank(contexts, goal)
    known = {c.room_id for c in contexts}
    kept = []
    for room_id, confidence in response.ranked_rooms:
        if room_id not in known:
            logger.warning("oracle ranked unknown room %r for goal %r; dropped", room_id, goal.text)
            continue
        kept.append((room_id, float(confidence)))
    if not kept:
        raise DiscoveryFailed(f"oracle named no known room for {goal.text!r}")

    kept.sort(key=lambda item: -item[1])
    logger.debug("discovery for %r: %s (%s)", goal.text, kept[0], response.rationale)
    return DiscoveryResponse(tuple(kept), rationale=response.rationale)


def build_oracle(kind: str, table: str | Path | None = None) -> GoalOracle:
    """Oracle named on the command line or in a request: mock, http or none."""
    if kind == "mock":
        return MockOracle(load_cooccurrence(table or settings.ORACLE_TABLE))
    if kind == "http":
        if not settings.ORACLE_URL:
            raise ConfigError("--oracle http needs INTELLIMOVE_ORACLE_URL")
        return HttpOracle(
            settings.ORACLE_URL,
            token=settings.ORACLE_TOKEN,
            timeout=settings.ORACLE_TIMEOUT,
            retries=settings.ORACLE_RETRIES,
            backoff=settings.ORACLE_BACKOFF,
            categorize_url=settings.ORACLE_CATEGORIZE_URL,
        )
    if kind == "none":
        return NullOracle()
    raise ConfigError(f"unknown oracle {kind!r} (expected mock, http or none)")

import httpx
import pytest
from fastapi.testclient import TestClient

from app.config import settings
from app.discovery import (
    CooccurrenceTable,
    DiscoveryResponse,
    HttpOracle,
    KnownLocationOracle,
    MockOracle,
    NullOracle,
    RoomContext,
    build_oracle,
    goal_llm_response,
    mock_rank,
    parse_cooccurrence,
    room_contexts,
)
from app.errors import ConfigError, DiscoveryFailed, OracleParseError, OracleTransportError, ValidationFailed
from app.graph import GoalKind, GoalQuery
from app.main import app

CONTEXTS = [
    RoomContext("corridor_1", "corridor", ("fire_extinguisher",)),
    RoomContext("kitchen_1", "kitchen", ("fridge",)),
    RoomContext("lounge_1", "lounge", ("sofa",)),
    RoomContext("office_1", "office", ("desk",)),
]

COFFEE = GoalQuery("coffee_machine", GoalKind.OBJECT_CLASS)


class FixedOracle:
    def __init__(self, ranked):
        self.ranked = tuple(ranked)

    def rank(self, contexts, goal):
        return DiscoveryResponse(self.ranked, rationale="fixed")

    def categorize(self, attributes, categories):
        return None


def test_parse_table():
    table = parse_cooccurrence("# header\nCoffee Machine, kitchen, 0.9\n\nmug,  coffee_machine , 0.7\n")
    assert table.affinity("coffee_machine", "kitchen") == 0.9
    assert table.affinity("mug", "coffee_machine") == 0.7
    assert table.affinity("mug", "garage") == 0.0


@pytest.mark.parametrize(
    "text",
    ["mug, kitchen\n", "mug, kitchen, lots\n", "mug, kitchen, -0.5\n", "mug, kitchen, 0.5\nmug, kitchen, 0.6\n"],
)
def test_parse_table_errors(text):
    with pytest.raises(ConfigError):
        parse_cooccurrence(text)


def test_mock_rank_weights_category_and_objects(mock_oracle):
    response = mock_rank(mock_oracle.table, CONTEXTS, COFFEE)
    assert response.top == "kitchen_1"
    assert response.ranked_rooms[0][1] == 1.0
    scores = dict(response.ranked_rooms)
    # lounge: 0.3 for the category, no co-located objects
    assert scores["lounge_1"] == pytest.approx(0.3 / (0.9 + 0.1 * 0.6))
    assert scores["office_1"] == 0.0


def test_mock_rank_without_evidence_is_uniform(mock_oracle):
    response = mock_rank(mock_oracle.table, CONTEXTS, GoalQuery("unicorn", GoalKind.OBJECT_CLASS))
    assert [room for room, _ in response.ranked_rooms] == ["corridor_1", "kitchen_1", "lounge_1", "office_1"]
    assert {score for _, score in response.ranked_rooms} == {0.25}


def test_scaled_table_keeps_the_order(mock_oracle):
    a = mock_rank(mock_oracle.table, CONTEXTS, COFFEE)
    scaled = CooccurrenceTable({key: value * 3.0 for key, value in mock_oracle.table.entries.items()})
    b = mock_rank(scaled, CONTEXTS, COFFEE)
    assert [r for r, _ in a.ranked_rooms] == [r for r, _ in b.ranked_rooms]


def test_mock_categorize(mock_oracle):
    categories = ["kitchen", "lounge", "office"]
    assert mock_oracle.categorize(["fridge", "microwave"], categories) == "kitchen"
    assert mock_oracle.categorize(["Armchair"], categories) == "lounge"
    assert mock_oracle.categorize(["unicorn"], categories) is None


def test_room_contexts_follow_the_graph(office_floor):
    contexts = room_contexts(office_floor.graph)
    assert [c.room_id for c in contexts] == sorted(office_floor.graph.rooms)
    office_1 = next(c for c in contexts if c.room_id == "office_1")
    assert office_1.attributes == ("bookcase", "chair")


def test_unknown_rooms_are_dropped():
    oracle = FixedOracle([("garage_1", 0.9), ("office_1", 0.2), ("kitchen_1", 0.7)])
    response = goal_llm_response(CONTEXTS, COFFEE, oracle)
    assert response.ranked_rooms == (("kitchen_1", 0.7), ("office_1", 0.2))


def test_only_unknown_rooms_is_a_failure():
    with pytest.raises(DiscoveryFailed):
        goal_llm_response(CONTEXTS, COFFEE, FixedOracle([("garage_1", 1.0)]))
    with pytest.raises(DiscoveryFailed):
        goal_llm_response(CONTEXTS, COFFEE, NullOracle())


def test_discovery_needs_rooms(mock_oracle):
    with pytest.raises(ValidationFailed):
        goal_llm_response([], COFFEE, mock_oracle)


def test_known_location_oracle(office_floor):
    contexts = room_contexts(office_floor.graph)
    desk = GoalQuery("desk", GoalKind.OBJECT_CLASS)
    honest = KnownLocationOracle(office_floor.graph).rank(contexts, desk)
    assert [room for room, _ in honest.ranked_rooms[:2]] == ["office_3", "office_4"]
    liar = KnownLocationOracle(office_floor.graph, adversarial=True).rank(contexts, desk)
    assert liar.ranked_rooms[0][0] not in ("office_3", "office_4")
    assert [room for room, _ in liar.ranked_rooms[-2:]] == ["office_3", "office_4"]


def test_build_oracle(monkeypatch):
    assert isinstance(build_oracle("mock"), MockOracle)
    assert isinstance(build_oracle("none"), NullOracle)
    with pytest.raises(ConfigError):
        build_oracle("crystal-ball")
    monkeypatch.setattr(settings, "ORACLE_URL", None)
    with pytest.raises(ConfigError):
        build_oracle("http")
    monkeypatch.setattr(settings, "ORACLE_URL", "http://oracle.invalid/rank")
    assert isinstance(build_oracle("http"), HttpOracle)


def test_http_oracle_against_the_service():
    with TestClient(app) as client:
        oracle = HttpOracle(
            "http://testserver/oracle/rank",
            categorize_url="http://testserver/oracle/categorize",
            client=client,
        )
        response = goal_llm_response(CONTEXTS, COFFEE, oracle)
        assert response.top == "kitchen_1"
        assert oracle.categorize(["sofa", "tv"], ["kitchen", "lounge"]) == "lounge"


def scripted(*replies):
    """An httpx client whose transport answers with ``replies`` in turn and records the requests."""
    seen = []

    def handler(request):
        seen.append(request)
        status, body = replies[min(len(seen), len(replies)) - 1]
        return httpx.Response(status, content=body)

    return httpx.Client(transport=httpx.MockTransport(handler)), seen


GOOD = b'{"ranking": [{"id": "kitchen_1", "confidence": 0.8}], "rationale": "coffee lives there"}'


def test_http_oracle_retries_server_errors():
    client, seen = scripted((503, b"busy"), (200, GOOD))
    oracle = HttpOracle("http://oracle/rank", token="s3cret", backoff=0.0, client=client)
    response = oracle.rank(CONTEXTS, COFFEE)
    assert response.ranked_rooms == (("kitchen_1", 0.8),)
    assert response.rationale == "coffee lives there"
    assert len(seen) == 2
    assert seen[0].headers["Authorization"] == "Bearer s3cret"


def test_http_oracle_gives_up():
    client, seen = scripted((500, b"down"))
    oracle = HttpOracle("http://oracle/rank", retries=2, backoff=0.0, client=client)
    with pytest.raises(OracleTransportError):
        oracle.rank(CONTEXTS, COFFEE)
    assert len(seen) == 3


def test_http_oracle_client_errors_are_not_retried():
    client, seen = scripted((404, b"nope"))
    with pytest.raises(OracleTransportError):
        HttpOracle("http://oracle/rank", backoff=0.0, client=client).rank(CONTEXTS, COFFEE)
    assert len(seen) == 1


@pytest.mark.parametrize(
    "body",
    [b"not json", b'{"ranking": "kitchen"}', b'{"ranking": [{"id": "kitchen_1", "confidence": 1.5}]}'],
)
def test_http_oracle_malformed_output(body):
    client, _ = scripted((200, body))
    with pytest.raises(OracleParseError) as info:
        HttpOracle("http://oracle/rank", client=client).rank(CONTEXTS, COFFEE)
    assert info.value.payload == body.decode()


def test_http_oracle_without_categorize_url():
    client, seen = scripted((200, b"{}"))
    assert HttpOracle("http://oracle/rank", client=client).categorize(["desk"], ["office"]) is None
    assert seen == []

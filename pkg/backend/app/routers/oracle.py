from fastapi import APIRouter, Depends
from pydantic import BaseModel

from ..deps import get_mock_oracle
from ..discovery import MockOracle, OracleCategory, OracleRanking, RankedRoom, RoomContext
from ..graph import GoalKind, GoalQuery

router = APIRouter(prefix="/oracle", tags=["oracle"])


class RoomEntry(BaseModel):
    id: str
    category: str
    objects: list[str] = []


class RankBody(BaseModel):
    goal: str
    rooms: list[RoomEntry]


class CategorizeBody(BaseModel):
    objects: list[str]
    categories: list[str]


@router.post("/rank", response_model=OracleRanking)
def rank_rooms(body: RankBody, oracle: MockOracle = Depends(get_mock_oracle)):
    contexts = [RoomContext(r.id, r.category, tuple(r.objects)) for r in body.rooms]
    response = oracle.rank(contexts, GoalQuery(body.goal, GoalKind.OBJECT_CLASS))
    return OracleRanking(
        ranking=[RankedRoom(id=room_id, confidence=score) for room_id, score in response.ranked_rooms],
        rationale=response.rationale,
    )


@router.post("/categorize", response_model=OracleCategory)
def categorize_room(body: CategorizeBody, oracle: MockOracle = Depends(get_mock_oracle)):
    return OracleCategory(category=oracle.categorize(body.objects, body.categories))

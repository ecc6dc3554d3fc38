from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict

DATA_DIR = Path(__file__).resolve().parent / "data"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="INTELLIMOVE_", extra="ignore")

    # Discovery oracle
    ORACLE_URL: str | None = None
    ORACLE_CATEGORIZE_URL: str | None = None
    ORACLE_TOKEN: str | None = None
    ORACLE_TIMEOUT: float = 10.0
    ORACLE_RETRIES: int = 2
    ORACLE_BACKOFF: float = 0.5
    ORACLE_TABLE: Path = DATA_DIR / "cooccurrence.csv"

    # Map building
    CATEGORY_RULES: Path = DATA_DIR / "category_rules.txt"
    DOOR_WIDTH_MAX: float = 1.2
    MIN_ROOM_AREA: float = 4.0
    CORRIDOR_ASPECT: float = 3.0
    EDGE_WEIGHTING: str = "distance"
    ROBOT_SPEED: float = 0.5

    # Service / rendering
    MAPS_DIR: Path = Path("maps")
    SVG_CELL_PX: int = 4
    LOG_LEVEL: str = "INFO"


settings = Settings()

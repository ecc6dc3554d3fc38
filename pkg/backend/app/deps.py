import threading
from collections.abc import Callable
from pathlib import Path
from typing import Literal

from fastapi import Depends

from .config import settings
from .discovery import GoalOracle, MockOracle, build_oracle, load_cooccurrence
from .errors import ValidationFailed
from .mapio import SemanticMap, load_map

OracleKind = Literal["mock", "http", "none"]

# resolved path -> (stamp, map); a rewritten archive replaces its entry
_maps: dict[Path, tuple[float, SemanticMap]] = {}
_oracles: dict[str, GoalOracle] = {}
_lock = threading.Lock()


def get_maps_dir() -> Path:
    return Path(settings.MAPS_DIR)


def list_map_names(maps_dir: Path) -> list[str]:
    if not maps_dir.is_dir():
        return []
    names = {
        p.stem for p in maps_dir.iterdir() if not p.name.startswith(".") and (p.is_dir() or p.suffix == ".zip")
    }
    return sorted(names)


def map_path(name: str, maps_dir: Path) -> Path:
    if not name or "/" in name or "\\" in name or name.startswith("."):
        raise ValidationFailed(f"bad map name {name!r}")
    for candidate in (maps_dir / name, maps_dir / f"{name}.zip"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(2, "no such map", name)


def _stamp(path: Path) -> float:
    if path.is_dir():
        return max((p.stat().st_mtime for p in path.iterdir()), default=path.stat().st_mtime)
    return path.stat().st_mtime


def get_map(name: str, maps_dir: Path = Depends(get_maps_dir)) -> SemanticMap:
    """Loaded maps are immutable, so the latest version of each file is shared by all requests."""
    path = map_path(name, maps_dir)
    key, stamp = path.resolve(), _stamp(path)
    with _lock:
        cached = _maps.get(key)
    if cached is not None and cached[0] == stamp:
        return cached[1]
    loaded = load_map(path)
    with _lock:
        _maps[key] = (stamp, loaded)
    return loaded


def get_unchecked_map(name: str, maps_dir: Path = Depends(get_maps_dir)) -> SemanticMap:
    return load_map(map_path(name, maps_dir), check=False)


def get_mock_oracle() -> MockOracle:
    return oracle_for("mock")


def oracle_for(kind: OracleKind) -> GoalOracle:
    """One oracle per kind for the life of the process."""
    with _lock:
        oracle = _oracles.get(kind)
        if oracle is None:
            if kind == "mock":
                oracle = MockOracle(load_cooccurrence(settings.ORACLE_TABLE))
            else:
                oracle = build_oracle(kind)
            _oracles[kind] = oracle
    return oracle


def get_oracle_lookup() -> Callable[[OracleKind], GoalOracle]:
    return oracle_for


def get_query_oracle(oracle: OracleKind = "mock") -> GoalOracle:
    return oracle_for(oracle)


def close_oracles() -> None:
    with _lock:
        oracles = list(_oracles.values())
        _oracles.clear()
    for oracle in oracles:
        close = getattr(oracle, "close", None)
        if close is not None:
            close()


def clear_map_cache() -> None:
    with _lock:
        _maps.clear()

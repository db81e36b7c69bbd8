"""Bundled case files (physical units, schema opf-case/1)."""

from importlib import resources
from pathlib import Path


def bundled_case_path(name: str) -> Path:
    """Filesystem path of a bundled case, e.g. ``bundled_case_path("case33")``."""
    if not name.endswith(".json"):
        name = name + ".json"
    with resources.as_file(resources.files(__package__) / name) as path:
        if not path.exists():
            available = sorted(
                p.name for p in path.parent.glob("*.json")
            )
            raise FileNotFoundError(
                f"no bundled case {name!r}; available: {available}"
            )
        return Path(path)

"""Ground-truth fixture files: `<image-stem>.truth.json` sidecars."""

from __future__ import annotations

import json
from pathlib import Path


class FixtureStore:
    """Lazy stem -> truth lookup over one or more directories."""

    def __init__(self, directories):
        if isinstance(directories, (str, Path)):
            directories = [directories]
        self._directories = [Path(d) for d in directories]
        self._cache: dict[str, dict] = {}

    def get(self, stem: str) -> dict:
        if stem in self._cache:
            return self._cache[stem]
        for directory in self._directories:
            candidate = directory / f"{stem}.truth.json"
            if candidate.exists():
                data = json.loads(candidate.read_text(encoding="utf-8"))
                self._cache[stem] = data
                return data
        return {"objects": []}

    def known_classes(self) -> list[str]:
        classes = set()
        for directory in self._directories:
            for path in sorted(directory.glob("*.truth.json")):
                data = json.loads(path.read_text(encoding="utf-8"))
                classes.update(obj["class"] for obj in data.get("objects", []))
        return sorted(classes)

"""Target profiles: the configuration that stands in for learned text
grounding. Each profile names a segmentable concept and the intensity
statistics the built-in segmenter needs to find it."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import VoxloopError


@dataclass(frozen=True)
class TargetProfile:
    name: str
    synonyms: tuple[str, ...] = ()
    intensity_range: tuple[float, float] = (0.0, 1.0)
    min_area: int = 1
    grow_tolerance: float = 1.0

    def __post_init__(self):
        lo, hi = self.intensity_range
        if not lo < hi:
            raise VoxloopError(f"profile {self.name!r}: intensity_range lo must be < hi")
        if self.min_area < 1:
            raise VoxloopError(f"profile {self.name!r}: min_area must be >= 1")
        if not self.grow_tolerance > 0:
            raise VoxloopError(f"profile {self.name!r}: grow_tolerance must be > 0")
        object.__setattr__(self, "name", self.name.strip().lower())
        object.__setattr__(self, "synonyms", tuple(s.strip().lower() for s in self.synonyms))
        object.__setattr__(self, "intensity_range", (float(lo), float(hi)))

    @property
    def phrases(self) -> tuple[str, ...]:
        return (self.name,) + self.synonyms


@dataclass
class ProfileSet:
    """Ordered, name-unique collection of target profiles."""

    profiles: tuple[TargetProfile, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.profiles = tuple(self.profiles)
        names = [p.name for p in self.profiles]
        if len(set(names)) != len(names):
            raise VoxloopError(f"duplicate profile names: {names}")
        self._by_name = {p.name: p for p in self.profiles}

    def __iter__(self):
        return iter(self.profiles)

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, name: str) -> TargetProfile:
        try:
            return self._by_name[name.strip().lower()]
        except KeyError:
            raise VoxloopError(f"no profile named {name!r}") from None


def load_profiles(path) -> ProfileSet:
    """Read profiles from a JSON file: a list of objects (or {"profiles": [...]})
    with keys name, synonyms, intensity_range, min_area, grow_tolerance."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise VoxloopError(f"cannot read profiles from {path}: {e}") from e
    if isinstance(data, dict):
        data = data.get("profiles", [])
    if not isinstance(data, list) or not data:
        raise VoxloopError(f"{path}: expected a non-empty list of profiles")
    out = []
    for entry in data:
        try:
            out.append(
                TargetProfile(
                    name=entry["name"],
                    synonyms=tuple(entry.get("synonyms", ())),
                    intensity_range=tuple(entry["intensity_range"]),
                    min_area=int(entry.get("min_area", 1)),
                    grow_tolerance=float(entry.get("grow_tolerance", 1.0)),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise VoxloopError(f"{path}: malformed profile entry {entry!r}: {e}") from e
    return ProfileSet(profiles=tuple(out))


def save_profiles(profiles: ProfileSet, path) -> Path:
    path = Path(path)
    payload = [
        {
            "name": p.name,
            "synonyms": list(p.synonyms),
            "intensity_range": list(p.intensity_range),
            "min_area": p.min_area,
            "grow_tolerance": p.grow_tolerance,
        }
        for p in profiles
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"profiles": payload}, indent=2) + "\n")
    return path

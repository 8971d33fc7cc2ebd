"""Circumplex affect types, the legacy [0, 99] scale, and the 400-anchor mood lookup."""

from __future__ import annotations

import colorsys
import csv
import io
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .genres import GENRE_PROFILES

LEGACY_MAX = 99
GRID = 20
CELL = 5


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


@dataclass(frozen=True)
class CircumplexPoint:
    """Valence/arousal pair on Russell's circumplex, clamped to [-1, 1]."""

    valence: float = 0.0
    arousal: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "valence", _clamp(float(self.valence), -1.0, 1.0))
        object.__setattr__(self, "arousal", _clamp(float(self.arousal), -1.0, 1.0))

    def distance(self, other: CircumplexPoint) -> float:
        return math.hypot(self.valence - other.valence, self.arousal - other.arousal)


@dataclass(frozen=True)
class LegacyPoint:
    """Integer emotion/energy scores in [0, 99]."""

    emotion: int
    energy: int

    def __post_init__(self) -> None:
        for name in ("emotion", "energy"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise TypeError(f"{name} must be an int, got {v!r}")
            if not 0 <= v <= LEGACY_MAX:
                raise ValueError(f"{name} out of range [0, 99]: {v}")


def _axis_to_legacy(x: float) -> int:
    return int(_clamp(round_half_up((x + 1.0) / 2.0 * LEGACY_MAX), 0, LEGACY_MAX))


def to_legacy(p: CircumplexPoint) -> LegacyPoint:
    return LegacyPoint(_axis_to_legacy(p.valence), _axis_to_legacy(p.arousal))


def from_legacy(q: LegacyPoint) -> CircumplexPoint:
    return CircumplexPoint(q.emotion / 49.5 - 1.0, q.energy / 49.5 - 1.0)


def legacy_clamped(emotion: float, energy: float, lo: int = 0, hi: int = LEGACY_MAX) -> LegacyPoint:
    """Round (half-up) and clamp a pair of real legacy coordinates."""
    return LegacyPoint(
        int(_clamp(round_half_up(emotion), lo, hi)),
        int(_clamp(round_half_up(energy), lo, hi)),
    )


@dataclass(frozen=True)
class MoodAnchor:
    row: int
    col: int
    label: str
    color: str
    synonyms: tuple[str, ...]
    seed_genres: tuple[str, ...]
    search_terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.seed_genres:
            raise ValueError(f"anchor ({self.row},{self.col}) has no seed genres")
        if not self.search_terms:
            raise ValueError(f"anchor ({self.row},{self.col}) has no search terms")

    @property
    def id(self) -> tuple[int, int]:
        return (self.row, self.col)

    @property
    def center(self) -> LegacyPoint:
        return LegacyPoint(self.row * CELL + CELL // 2, self.col * CELL + CELL // 2)


class MoodLookup:
    """A total 20x20 grid of mood anchors over legacy space.

    Rows index emotion (valence), columns index energy (arousal); each cell is
    5 legacy units wide, the last cell absorbs 95..99.
    """

    def __init__(self, anchors: list[MoodAnchor]):
        if len(anchors) != GRID * GRID:
            raise ValueError(f"lookup needs exactly {GRID * GRID} anchors, got {len(anchors)}")
        grid: dict[tuple[int, int], MoodAnchor] = {}
        for a in anchors:
            if not (0 <= a.row < GRID and 0 <= a.col < GRID):
                raise ValueError(f"anchor id out of grid: {a.id}")
            if a.id in grid:
                raise ValueError(f"duplicate anchor id: {a.id}")
            grid[a.id] = a
        self._grid = grid

    def __len__(self) -> int:
        return len(self._grid)

    def __iter__(self):
        for r in range(GRID):
            for c in range(GRID):
                yield self._grid[(r, c)]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MoodLookup) and self._grid == other._grid

    def anchor(self, row: int, col: int) -> MoodAnchor:
        return self._grid[(row, col)]

    def to_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for a in self:
            w.writerow([a.row, a.col, a.label, a.color, "|".join(a.synonyms),
                        "|".join(a.seed_genres), "|".join(a.search_terms)])
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> MoodLookup:
        anchors = []
        for lineno, rec in enumerate(csv.reader(io.StringIO(text)), start=1):
            if not rec:
                continue
            if len(rec) != 7:
                raise ValueError(f"lookup line {lineno}: expected 7 columns, got {len(rec)}")
            row, col, label, color, syn, genres, terms = rec
            split = lambda s: tuple(t for t in s.split("|") if t)  # noqa: E731
            anchors.append(MoodAnchor(int(row), int(col), label, color,
                                      split(syn), split(genres), split(terms)))
        return cls(anchors)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> MoodLookup:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _cell(x: int) -> int:
    return min(x // CELL, GRID - 1)


def nearest_anchor(lookup: MoodLookup, target: LegacyPoint) -> MoodAnchor:
    return lookup.anchor(_cell(target.emotion), _cell(target.energy))


def adjacent_expansion(lookup: MoodLookup, anchor: MoodAnchor, radius_legacy: int = 10) -> set[MoodAnchor]:
    """Anchors whose centres lie within +-radius legacy units of ``anchor``'s centre on both axes."""
    if radius_legacy < 0:
        raise ValueError("radius must be >= 0")
    c = anchor.center
    out = set()
    for a in lookup:
        ac = a.center
        if abs(ac.emotion - c.emotion) <= radius_legacy and abs(ac.energy - c.energy) <= radius_legacy:
            out.add(a)
    return out


# Vocabulary for procedurally authored anchors, ordered from low to high.
_VALENCE_WORDS = ["bleak", "gloomy", "somber", "wistful", "pensive", "neutral",
                  "content", "warm", "cheerful", "joyful"]
_AROUSAL_WORDS = ["still", "sleepy", "drowsy", "calm", "relaxed", "steady",
                  "lively", "energetic", "excited", "frantic"]
_SYNONYMS = {
    "bleak": ["desolate", "hopeless"], "gloomy": ["dark", "heavy"],
    "somber": ["grave", "sober"], "wistful": ["longing", "nostalgic"],
    "pensive": ["reflective", "thoughtful"], "neutral": ["even", "plain"],
    "content": ["satisfied", "easy"], "warm": ["tender", "cozy"],
    "cheerful": ["bright", "sunny"], "joyful": ["elated", "blissful"],
    "still": ["hushed", "motionless"], "sleepy": ["dreamy", "hazy"],
    "drowsy": ["languid", "slow"], "calm": ["serene", "peaceful"],
    "relaxed": ["mellow", "loose"], "steady": ["balanced", "grounded"],
    "lively": ["upbeat", "spirited"], "energetic": ["driving", "vigorous"],
    "excited": ["thrilled", "charged"], "frantic": ["wild", "intense"],
}
_TERM_SUFFIXES = ["music", "songs", "vibes", "playlist", "mix", "tracks"]


def _anchor_genres(rng: random.Random, center: LegacyPoint, k: int = 3) -> tuple[str, ...]:
    v = center.emotion / LEGACY_MAX
    e = center.energy / LEGACY_MAX
    scored = []
    for name, prof in GENRE_PROFILES.items():
        d = math.hypot(prof.valence - v, prof.energy - e) + rng.uniform(0.0, 0.04)
        scored.append((d, name))
    scored.sort()
    return tuple(name for _, name in scored[:k])


def generate_default_lookup(seed: int = 1) -> MoodLookup:
    """Deterministically author 400 anchors; the same seed gives an identical lookup."""
    rng = random.Random(seed)
    anchors = []
    for row in range(GRID):
        for col in range(GRID):
            vw = _VALENCE_WORDS[row // 2]
            aw = _AROUSAL_WORDS[col // 2]
            label = f"{aw} {vw}" if (row + col) % 2 == 0 else f"{vw} and {aw}"
            hue = (math.atan2(col - 9.5, row - 9.5) / (2 * math.pi)) % 1.0
            hue = (hue + rng.uniform(-0.02, 0.02)) % 1.0
            sat = 0.35 + 0.6 * min(1.0, math.hypot(row - 9.5, col - 9.5) / 13.5)
            r, g, b = colorsys.hsv_to_rgb(hue, sat, 0.55 + 0.4 * col / (GRID - 1))
            color = f"#{round(r * 255):02x}{round(g * 255):02x}{round(b * 255):02x}"
            syn = _SYNONYMS[vw] + _SYNONYMS[aw]
            rng.shuffle(syn)
            synonyms = tuple(syn[:3])
            anchor_center = LegacyPoint(row * CELL + CELL // 2, col * CELL + CELL // 2)
            genres = _anchor_genres(rng, anchor_center)
            terms = [f"{aw} {vw} {rng.choice(_TERM_SUFFIXES)}",
                     f"{synonyms[0]} {genres[0].replace('_', ' ')}",
                     f"{vw} {aw} {genres[1].replace('_', ' ')}"]
            anchors.append(MoodAnchor(row, col, label, color, synonyms, genres, tuple(terms)))
    return MoodLookup(anchors)

"""Deterministic synthetic track catalog and the audio-feature arousal prior."""

from __future__ import annotations

import csv
import io
import random
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .affect import CircumplexPoint
from .genres import GENRE_PROFILES, LOG_GENRES

CSV_COLUMNS = ["id", "title", "artist", "genre", "duration", "energy", "valence",
               "danceability", "acousticness", "tempo", "loudness"]


@dataclass(frozen=True)
class AudioFeatures:
    energy: float
    valence: float
    danceability: float
    acousticness: float
    tempo: float
    loudness: float

    def __post_init__(self) -> None:
        for name in ("energy", "valence", "danceability", "acousticness"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.tempo <= 0:
            raise ValueError(f"tempo must be positive, got {self.tempo}")


@dataclass(frozen=True)
class Track:
    id: str
    title: str
    artist: str
    genre: str
    duration: float
    features: AudioFeatures

    def __post_init__(self) -> None:
        if not 60 <= self.duration <= 600:
            raise ValueError(f"track {self.id}: duration {self.duration} outside [60, 600] s")
        if self.genre != self.genre.lower():
            raise ValueError(f"track {self.id}: genre must be lowercase")


def mei_prior(track: Track) -> float:
    """Population arousal prior: linear map of audio energy onto [-1, 1]."""
    return 2.0 * track.features.energy - 1.0


def valence_prior(track: Track) -> float:
    return 2.0 * track.features.valence - 1.0


def track_mood(track: Track) -> CircumplexPoint:
    return CircumplexPoint(valence_prior(track), mei_prior(track))


class Catalog:
    def __init__(self, tracks: Iterable[Track]):
        self._by_id: dict[str, Track] = {}
        self._by_genre: dict[str, list[Track]] = {}
        for t in tracks:
            if t.id in self._by_id:
                raise ValueError(f"duplicate track id {t.id}")
            self._by_id[t.id] = t
            self._by_genre.setdefault(t.genre, []).append(t)
        for lst in self._by_genre.values():
            lst.sort(key=lambda t: t.id)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(sorted(self._by_id.values(), key=lambda t: t.id))

    def __getitem__(self, track_id: str) -> Track:
        return self._by_id[track_id]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Catalog) and self._by_id == other._by_id

    @property
    def genres(self) -> set[str]:
        return set(self._by_genre)

    def by_genre(self, genre: str) -> list[Track]:
        return list(self._by_genre.get(genre, []))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in self:
            f = t.features
            w.writerow([t.id, t.title, t.artist, t.genre, f"{t.duration:.1f}",
                        f"{f.energy:.4f}", f"{f.valence:.4f}", f"{f.danceability:.4f}",
                        f"{f.acousticness:.4f}", f"{f.tempo:.1f}", f"{f.loudness:.2f}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Catalog:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != CSV_COLUMNS:
            raise ValueError(f"catalog header must be {','.join(CSV_COLUMNS)}")
        tracks = []
        for r in reader:
            feats = AudioFeatures(float(r["energy"]), float(r["valence"]), float(r["danceability"]),
                                  float(r["acousticness"]), float(r["tempo"]), float(r["loudness"]))
            tracks.append(Track(r["id"], r["title"], r["artist"], r["genre"],
                                float(r["duration"]), feats))
        return cls(tracks)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Catalog:
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))


def search(catalog: Catalog, genres: Iterable[str], limit: int | None = None) -> list[Track]:
    """All tracks in any of ``genres``, ordered by id."""
    wanted = set(genres)
    out = sorted((t for g in wanted for t in catalog.by_genre(g)), key=lambda t: t.id)
    return out if limit is None else out[:limit]


_TITLE_A = ["Midnight", "Golden", "Paper", "Electric", "Quiet", "Neon", "Silver", "Broken",
            "Velvet", "Distant", "Summer", "Hollow", "Crimson", "Gentle", "Wild"]
_TITLE_B = ["Rain", "Hearts", "Skyline", "Letters", "Harbor", "Pulse", "Garden", "Echoes",
            "Signal", "Tides", "Motion", "Lanterns", "Waves", "Roads", "Fire"]
_ARTIST = ["The {}s", "{} Collective", "DJ {}", "{} Quartet", "{} & Co", "Lil {}", "{} Orchestra"]
_NAMES = ["Orbit", "Maple", "Juno", "Cobalt", "Vesper", "Nova", "Atlas", "Ember", "Lumen", "Kite"]


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def generate(seed: int = 0, n: int = 1000, genres: Iterable[str] | None = None) -> Catalog:
    """Synthetic catalog of ``n`` tracks.

    The first ``len(genres)`` tracks cover every genre once, so any n >= that
    count contains every genre (the log genres come first).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if genres is None:
        names = list(LOG_GENRES) + sorted(set(GENRE_PROFILES) - set(LOG_GENRES))
    else:
        names = list(dict.fromkeys(genres))
    rng = random.Random(seed)
    tracks = []
    for i in range(n):
        genre = names[i] if i < len(names) else rng.choice(names)
        p = GENRE_PROFILES[genre]
        feats = AudioFeatures(
            energy=round(_clip01(rng.gauss(p.energy, p.spread)), 4),
            valence=round(_clip01(rng.gauss(p.valence, p.spread)), 4),
            danceability=round(_clip01(rng.gauss(p.danceability, 0.08)), 4),
            acousticness=round(_clip01(rng.gauss(p.acousticness, 0.08)), 4),
            tempo=round(max(40.0, rng.gauss(p.tempo, 8.0)), 1),
            loudness=round(min(0.0, rng.gauss(p.loudness, 1.5)), 2),
        )
        title = f"{rng.choice(_TITLE_A)} {rng.choice(_TITLE_B)}"
        artist = rng.choice(_ARTIST).format(rng.choice(_NAMES))
        duration = round(rng.uniform(150.0, 330.0), 1)
        tracks.append(Track(f"t{i:05d}", title, artist, genre, duration, feats))
    return Catalog(tracks)

"""Genre profiles shared by the mood lookup generator and the synthetic catalog.

Each profile gives the centre of the genre's tracks in audio-feature space
(valence and energy in [0, 1]) plus typical tempo / loudness / acousticness /
danceability. The lookup uses the centres to pick seed genres for each
anchor, the catalog samples tracks around them, so the two always agree.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GenreProfile:
    name: str
    valence: float
    energy: float
    tempo: float
    loudness: float
    acousticness: float
    danceability: float
    spread: float = 0.12


# Genres observed in the behavioral log shipped with the package.
LOG_GENRES = (
    "pop",
    "jazz",
    "house",
    "dance",
    "hard_rock",
    "classic_rock",
    "classical",
    "electronic",
    "cantopop",
    "mandopop",
    "edm",
)

_PROFILES = [
    GenreProfile("pop", 0.70, 0.66, 118, -6.0, 0.15, 0.68),
    GenreProfile("jazz", 0.55, 0.36, 110, -12.0, 0.60, 0.52),
    GenreProfile("house", 0.66, 0.76, 124, -6.5, 0.05, 0.80),
    GenreProfile("dance", 0.74, 0.80, 122, -5.5, 0.06, 0.82),
    GenreProfile("hard_rock", 0.38, 0.88, 136, -4.5, 0.04, 0.45),
    GenreProfile("classic_rock", 0.58, 0.70, 126, -8.0, 0.18, 0.50),
    GenreProfile("classical", 0.42, 0.20, 90, -20.0, 0.92, 0.25),
    GenreProfile("electronic", 0.50, 0.70, 120, -7.0, 0.08, 0.66),
    GenreProfile("cantopop", 0.50, 0.42, 100, -8.5, 0.35, 0.55),
    GenreProfile("mandopop", 0.52, 0.40, 98, -8.5, 0.38, 0.54),
    GenreProfile("edm", 0.62, 0.92, 128, -4.0, 0.02, 0.78),
    GenreProfile("ambient", 0.40, 0.10, 70, -22.0, 0.85, 0.20),
    GenreProfile("lofi", 0.58, 0.25, 80, -14.0, 0.55, 0.60),
    GenreProfile("folk", 0.56, 0.32, 100, -12.0, 0.80, 0.45),
    GenreProfile("blues", 0.30, 0.40, 96, -10.0, 0.50, 0.48),
    GenreProfile("soul", 0.68, 0.50, 102, -9.0, 0.30, 0.62),
    GenreProfile("funk", 0.86, 0.72, 108, -7.0, 0.12, 0.84),
    GenreProfile("reggae", 0.80, 0.52, 90, -9.0, 0.20, 0.78),
    GenreProfile("metal", 0.18, 0.94, 150, -4.0, 0.01, 0.35),
    GenreProfile("punk", 0.34, 0.90, 170, -4.5, 0.02, 0.42),
    GenreProfile("hip_hop", 0.56, 0.64, 95, -6.5, 0.12, 0.80),
    GenreProfile("darkwave", 0.16, 0.58, 115, -8.0, 0.10, 0.55),
    GenreProfile("dark_ambient", 0.10, 0.16, 65, -24.0, 0.70, 0.15),
    GenreProfile("sad_indie", 0.14, 0.34, 92, -11.0, 0.45, 0.40),
    GenreProfile("latin", 0.88, 0.78, 104, -6.0, 0.15, 0.86),
    GenreProfile("disco", 0.92, 0.74, 118, -7.0, 0.08, 0.88),
    GenreProfile("acoustic", 0.74, 0.28, 96, -12.0, 0.88, 0.50),
    GenreProfile("bossa_nova", 0.82, 0.30, 94, -13.0, 0.75, 0.62),
    GenreProfile("industrial", 0.08, 0.82, 132, -5.0, 0.03, 0.50),
]

GENRE_PROFILES: dict[str, GenreProfile] = {p.name: p for p in _PROFILES}

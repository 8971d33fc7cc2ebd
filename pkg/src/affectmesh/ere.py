"""Emotional resolution engine: organic mood, track-mood fusion, mesh isolation window."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .affect import CircumplexPoint

ISOLATION_S = 60.0
FUSION_BETA = 0.2


class FusionPath(str, Enum):
    PLAYLIST_CORRELATION = "playlist_correlation"
    TRACK_CHANGE = "track_change"


@dataclass(frozen=True)
class FusionInput:
    track_mood: CircumplexPoint
    path: FusionPath
    now: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", FusionPath(self.path))


@dataclass(frozen=True)
class EreState:
    organic_mood: CircumplexPoint = CircumplexPoint(0.0, 0.0)
    last_fusion: float | None = None
    isolation_expires_at: float | None = None
    # tag of whatever caused the active window (a peer id, usually)
    isolation_source: str | None = None

    def isolated(self, now: float) -> bool:
        return self.isolation_expires_at is not None and now < self.isolation_expires_at


def mark_mesh_induced(state: EreState, now: float, source: str | None = None,
                      window: float = ISOLATION_S) -> EreState:
    """Open (or push out) the isolation window; the latest mark wins."""
    return replace(state, isolation_expires_at=now + window, isolation_source=source)


def fuse(state: EreState, inp: FusionInput, beta: float = FUSION_BETA) -> EreState:
    if state.isolated(inp.now):
        return state
    o, t = state.organic_mood, inp.track_mood
    mood = CircumplexPoint((1 - beta) * o.valence + beta * t.valence,
                           (1 - beta) * o.arousal + beta * t.arousal)
    return replace(state, organic_mood=mood, last_fusion=inp.now)


def set_organic(state: EreState, mood: CircumplexPoint) -> EreState:
    """A direct user action (mood dial). Never suppressed by the isolation window."""
    return replace(state, organic_mood=mood)


def outbound_mood(state: EreState) -> CircumplexPoint:
    return state.organic_mood

"""Proactive curation: project the trajectory, gate on confidence, re-queue on divergence."""

from __future__ import annotations

import csv
import io
import math
import random
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum

from .affect import CircumplexPoint, LegacyPoint, MoodLookup, adjacent_expansion, nearest_anchor, round_half_up, to_legacy
from .catalog import Catalog, Track, search
from .cfc import TrajectoryOutput


@dataclass(frozen=True)
class PolicyConfig:
    tick_s: float = 300.0
    horizon_s: float = 300.0
    confidence_gate: float = 0.4
    divergence: int = 15
    exploration_gate: float = 0.3
    exploration_noise: float = 5.0
    clamp: tuple[int, int] = (5, 95)
    validity_s: float = 1800.0
    intent_offsets: dict[str, tuple[int, int]] = field(
        default_factory=lambda: {"energize": (5, 15), "calm": (0, -15)})
    expansion_radius: int = 10
    mesh_bias: bool = False
    mesh_lambda: float = 0.5

    def __post_init__(self) -> None:
        if min(self.tick_s, self.horizon_s, self.validity_s) <= 0:
            raise ValueError("durations must be positive")
        lo, hi = self.clamp
        if not 0 <= lo <= hi <= 99:
            raise ValueError("clamp must satisfy 0 <= lo <= hi <= 99")

    def offset(self, intent: str) -> tuple[int, int]:
        return self.intent_offsets.get(intent, (0, 0))


DEFAULT_POLICY = PolicyConfig()


class CatalogMismatch(LookupError):
    """No catalog track matches the genres the lookup asked for."""


@dataclass(frozen=True)
class Playlist:
    tracks: tuple[Track, ...]
    created_at: float
    target: LegacyPoint
    validity_s: float = 1800.0
    catalog_exhausted: bool = False
    genre: str | None = None

    @property
    def valid_until(self) -> float:
        return self.created_at + self.validity_s

    @property
    def total_duration(self) -> float:
        return sum(t.duration for t in self.tracks)

    def valid(self, now: float) -> bool:
        return now < self.valid_until


def _clamp_axis(x: float, lo: int, hi: int) -> int:
    return int(min(hi, max(lo, round_half_up(x))))


def project(traj: TrajectoryOutput, intent: str = "maintain", exploration: float = 0.0,
            rng: random.Random | None = None, config: PolicyConfig = DEFAULT_POLICY) -> LegacyPoint:
    """Target mood ``horizon_s`` ahead, in legacy units, clamped to the safe interior."""
    de, dn = config.offset(intent)
    e = traj.emotion + config.horizon_s * traj.v_emotion + de
    n = traj.energy + config.horizon_s * traj.v_energy + dn
    if exploration > config.exploration_gate:
        if rng is None:
            raise ValueError("exploration noise needs an rng")
        e += rng.uniform(-config.exploration_noise, config.exploration_noise)
        n += rng.uniform(-config.exploration_noise, config.exploration_noise)
    lo, hi = config.clamp
    return LegacyPoint(_clamp_axis(e, lo, hi), _clamp_axis(n, lo, hi))


def mesh_bias(target: LegacyPoint, room_mood: CircumplexPoint, rho: float,
              lam: float = 0.5, enabled: bool = True, clamp: tuple[int, int] = (5, 95)) -> LegacyPoint:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho {rho} outside [0, 1]")
    if not enabled or rho == 0.0:
        return target
    room = to_legacy(room_mood)
    w = lam * rho
    lo, hi = clamp
    return LegacyPoint(_clamp_axis((1 - w) * target.emotion + w * room.emotion, lo, hi),
                       _clamp_axis((1 - w) * target.energy + w * room.energy, lo, hi))


class Reason(str, Enum):
    DIVERGENCE = "divergence"
    EXPIRED = "expired"
    COLD_START = "cold-start"
    MESH = "mesh"


@dataclass(frozen=True)
class Action:
    kind: str  # "none" | "requeue"
    target: LegacyPoint | None = None
    reason: Reason | None = None
    confidence: float = 0.0

    @property
    def requeue(self) -> bool:
        return self.kind == "requeue"


NONE = Action("none")


def diverges(a: LegacyPoint, b: LegacyPoint, threshold: int = 15) -> bool:
    return abs(a.emotion - b.emotion) > threshold or abs(a.energy - b.energy) > threshold


def tick(now: float, traj: TrajectoryOutput, cached: Playlist | None,
         config: PolicyConfig = DEFAULT_POLICY, intent: str = "maintain",
         exploration: float = 0.0, rng: random.Random | None = None) -> Action:
    if traj.confidence < config.confidence_gate:
        return Action("none", confidence=traj.confidence)
    target = project(traj, intent, exploration, rng, config)
    if cached is None:
        return Action("requeue", target, Reason.COLD_START, traj.confidence)
    if not cached.valid(now):
        return Action("requeue", target, Reason.EXPIRED, traj.confidence)
    if diverges(cached.target, target, config.divergence):
        return Action("requeue", target, Reason.DIVERGENCE, traj.confidence)
    return Action("none", target, None, traj.confidence)


def feature_distance(track: Track, target: LegacyPoint) -> float:
    f = track.features
    return math.hypot(f.valence - target.emotion / 99.0, f.energy - target.energy / 99.0)


def candidate_genres(target: LegacyPoint, lookup: MoodLookup, radius: int = 10) -> set[str]:
    anchor = nearest_anchor(lookup, target)
    out: set[str] = set()
    for a in adjacent_expansion(lookup, anchor, radius):
        out.update(g.lower() for g in a.seed_genres)
    return out


def build_playlist(target: LegacyPoint, lookup: MoodLookup, catalog: Catalog, now: float,
                   rng: random.Random, genre: str | None = None,
                   config: PolicyConfig = DEFAULT_POLICY) -> Playlist:
    """Nearest-feature tracks from the target's neighbourhood, filling the validity window.

    A set ``genre`` (from genre affecting) replaces the lookup's seed genres.
    Ties in feature distance are broken by a seeded shuffle.
    """
    genres = {genre.lower()} if genre else candidate_genres(target, lookup, config.expansion_radius)
    pool = {t.id: t for t in search(catalog, genres)}
    if not pool:
        raise CatalogMismatch(f"no catalog tracks for genres {sorted(genres)}")
    ids = sorted(pool)
    tiebreak = {tid: i for i, tid in enumerate(rng.sample(ids, len(ids)))}
    ranked = sorted(ids, key=lambda tid: (round(feature_distance(pool[tid], target), 12), tiebreak[tid]))
    chosen, total = [], 0.0
    for tid in ranked:
        if total >= config.validity_s:
            break
        chosen.append(pool[tid])
        total += pool[tid].duration
    return Playlist(tuple(chosen), now, target, config.validity_s, total < config.validity_s, genre)


@dataclass(frozen=True)
class RequeueRecord:
    time: float
    agent: str
    old_target: LegacyPoint | None
    new_target: LegacyPoint
    reason: Reason


def _fmt(p: LegacyPoint | None) -> str:
    return "" if p is None else f"{p.emotion}/{p.energy}"


def requeue_csv(records: Iterable[RequeueRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "agent", "old_target", "new_target", "reason"])
    for r in records:
        w.writerow([f"{r.time:.3f}", r.agent, _fmt(r.old_target), _fmt(r.new_target), Reason(r.reason).value])
    return buf.getvalue()

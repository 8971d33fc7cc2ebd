"""Mesh node: CMB broadcast and receive, echo drop, SVAF admission, peer influence, coherence."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .affect import CircumplexPoint, LegacyPoint, to_legacy
from .cfc import MeshCfc, MeshCfcConfig
from .cmb import (DIM, FIELD_ORDER, Cmb, CmbDecodeError, Embedder, FieldName, KeyGenerator, SessionContext,
                  derive_cmb, deserialize, extract_genre, is_echo, make_cmb)
from .ere import EreState, outbound_mood
from .svaf import AnchorMemory, Band, BandConfig, FieldWeights, FusionResult, admit, evaluate, FRESHNESS_S

GENRE_COOLDOWN_S = 300.0
MUSIC = "music"
NON_MUSIC = "non-music"


class InfluenceLevel(str, Enum):
    GENTLE = "gentle"
    RESPONSIVE = "responsive"

    @property
    def threshold(self) -> int:
        return 15 if self is InfluenceLevel.GENTLE else 5


@dataclass
class PeerRecord:
    peer_id: str
    last_mood: CircumplexPoint
    last_genre: str | None
    last_seen: float
    mood_ema: CircumplexPoint
    domain: str = MUSIC

    def fresh(self, now: float, window: float = FRESHNESS_S) -> bool:
        return now - self.last_seen <= window


@dataclass(frozen=True)
class NodeConfig:
    influence: InfluenceLevel = InfluenceLevel.GENTLE
    weights: FieldWeights = FieldWeights()
    bands: BandConfig = BandConfig()
    domain: str = MUSIC
    memory_capacity: int = 64
    mesh_cfc: MeshCfcConfig = MeshCfcConfig()

    @classmethod
    def from_dict(cls, doc: dict) -> NodeConfig:
        weights = doc.get("weights")
        bands = doc.get("bands", {})
        return cls(
            influence=InfluenceLevel(doc.get("influence", "gentle").lower()),
            weights=FieldWeights({FieldName(k): float(v) for k, v in weights.items()}) if weights else FieldWeights(),
            bands=BandConfig(**bands),
            domain=doc.get("domain", MUSIC),
            memory_capacity=int(doc.get("memory_capacity", 64)),
            mesh_cfc=MeshCfcConfig(seed=int(doc.get("mesh_seed", 0))),
        )

    @classmethod
    def load(cls, path: str | Path) -> NodeConfig:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def should_curate(peer_mood: LegacyPoint, playing_mood: LegacyPoint, peer_genre: str | None,
                  current_genre: str | None, influence: InfluenceLevel = InfluenceLevel.GENTLE) -> bool:
    """Skip curation only when the genre matches and both axes sit within the threshold."""
    t = influence.threshold
    close = (abs(peer_mood.emotion - playing_mood.emotion) <= t
             and abs(peer_mood.energy - playing_mood.energy) <= t)
    return not (peer_genre == current_genre and close)


def coherence_of(moods: list[CircumplexPoint]) -> float:
    """1 minus the root-mean-square pairwise distance over the maximum possible (2*sqrt 2).

    The quadratic mean tracks total variance, so pulling any participant
    toward the centroid can never lower the score.
    """
    if len(moods) < 2:
        return 1.0
    sq = [a.distance(b) ** 2 for a, b in itertools.combinations(moods, 2)]
    rho = 1.0 - math.sqrt(sum(sq) / len(sq)) / (2.0 * math.sqrt(2.0))
    return min(1.0, max(0.0, rho))


@dataclass(frozen=True)
class ReceiveOutcome:
    status: str  # recorded | echo | stale | decode-error
    peer_id: str | None = None
    result: FusionResult | None = None
    trigger: bool = False
    genre_change: str | None = None
    peer_mood: LegacyPoint | None = None
    error: str | None = None

    @property
    def dropped(self) -> bool:
        return self.status != "recorded"


class MeshNode:
    """One agent's view of the mesh. Single writer: the owning agent."""

    def __init__(self, node_id: str, config: NodeConfig = NodeConfig(), embedder: Embedder | None = None):
        self.node_id = node_id
        self.config = config
        self.influence = config.influence
        self.domain = config.domain
        self.embedder = embedder or Embedder()
        self.keys = KeyGenerator(node_id)
        self.own_keys: set[str] = set()
        self.memory = AnchorMemory(config.memory_capacity)
        self.cfc = MeshCfc(config.mesh_cfc)
        self.h = self.cfc.zero_state()
        self.last_cfc_time: float | None = None
        self.peers: dict[str, PeerRecord] = {}
        self.last_genre_change = -math.inf
        self.genre: str | None = None

    # -- genre authority ----------------------------------------------------------

    def genre_change_allowed(self, now: float, sender_domain: str = MUSIC) -> bool:
        if sender_domain != MUSIC:
            return False
        return now - self.last_genre_change >= GENRE_COOLDOWN_S

    def set_genre(self, genre: str | None, now: float) -> None:
        if genre != self.genre:
            self.genre = genre
            self.last_genre_change = now

    # -- outbound -----------------------------------------------------------------

    def broadcast(self, ere: EreState, ctx: SessionContext, now: float) -> Cmb:
        """Fresh CMB carrying only the organic mood; its key joins the own-keys set."""
        ctx = SessionContext(ctx.track, self.genre, ctx.issue, ctx.intent, ctx.motivation,
                             ctx.commitment, ctx.perspective)
        cmb = make_cmb(self.node_id, self.domain, outbound_mood(ere), ctx, now, self.embedder, self.keys)
        self.own_keys.add(cmb.key)
        return cmb

    def remix(self, parent: Cmb, mood: CircumplexPoint, ctx: SessionContext, now: float) -> Cmb:
        cmb = derive_cmb(parent, self.node_id, self.domain, mood, ctx, now, self.embedder, self.keys)
        self.own_keys.add(cmb.key)
        return cmb

    # -- inbound ------------------------------------------------------------------

    def _cfc_input(self, cmb: Cmb, result: FusionResult, dt: float) -> np.ndarray:
        gates = [result.fields[n].gate for n in FIELD_ORDER]
        admitted = len(result.admitted) / len(FIELD_ORDER)
        x = [cmb.mood.valence, cmb.mood.arousal, *gates, result.drift_total, math.log1p(dt) / 10.0, admitted]
        out = np.zeros(self.cfc.config.input_dim)
        out[: min(len(x), len(out))] = x[: len(out)]
        return out

    def _step_cfc(self, cmb: Cmb, result: FusionResult, now: float) -> None:
        # the first step integrates over the message's age on arrival
        since = cmb.timestamp if self.last_cfc_time is None else self.last_cfc_time
        dt = max(0.0, now - since)
        self.h = self.cfc.step(self.h, self._cfc_input(cmb, result, dt), dt)
        self.last_cfc_time = now

    def _record_peer(self, cmb: Cmb, now: float) -> PeerRecord:
        mood = cmb.mood
        genre = extract_genre(cmb)
        rec = self.peers.get(cmb.agent_id)
        if rec is None:
            rec = PeerRecord(cmb.agent_id, mood, genre, now, mood, cmb.domain)
        else:
            if now < rec.last_seen:
                raise ValueError("peer last_seen must be nondecreasing")
            k = self.cfc.fast_mix(now - rec.last_seen)
            ema = CircumplexPoint((1 - k) * rec.mood_ema.valence + k * mood.valence,
                                  (1 - k) * rec.mood_ema.arousal + k * mood.arousal)
            rec.last_mood, rec.last_genre, rec.last_seen, rec.mood_ema = mood, genre, now, ema
            rec.domain = cmb.domain
        self.peers[cmb.agent_id] = rec
        return rec

    def on_receive(self, data: bytes | Cmb, now: float, playing_mood: LegacyPoint) -> ReceiveOutcome:
        try:
            cmb = data if isinstance(data, Cmb) else deserialize(data, DIM)
        except CmbDecodeError as exc:
            return ReceiveOutcome("decode-error", error=str(exc))
        if is_echo(cmb, self.own_keys):
            return ReceiveOutcome("echo", cmb.agent_id)
        result = evaluate(cmb, self.memory, self.config.weights, now, FRESHNESS_S, self.config.bands)
        if not result.fresh:
            return ReceiveOutcome("stale", cmb.agent_id, result)
        admit(result, cmb, self.memory, now)
        rec = self._record_peer(cmb, now)
        self._step_cfc(cmb, result, now)

        peer_legacy = to_legacy(rec.last_mood)
        authority = self.genre_change_allowed(now, cmb.domain)
        peer_genre = rec.last_genre if authority and rec.last_genre else self.genre
        trigger = should_curate(peer_legacy, playing_mood, peer_genre, self.genre, self.influence)
        change = None
        if trigger and peer_genre != self.genre:
            change = peer_genre
            self.set_genre(peer_genre, now)
        return ReceiveOutcome("recorded", cmb.agent_id, result, trigger, change, peer_legacy)

    # -- room signal ----------------------------------------------------------------

    def fresh_peers(self, now: float) -> list[PeerRecord]:
        return [p for p in self.peers.values() if p.fresh(now)]

    def coherence(self, now: float, own_mood: CircumplexPoint) -> float:
        return coherence_of([own_mood] + [p.mood_ema for p in self.fresh_peers(now)])

    def room_mood(self, now: float, own_mood: CircumplexPoint) -> CircumplexPoint:
        moods = [own_mood] + [p.mood_ema for p in self.fresh_peers(now)]
        return CircumplexPoint(sum(m.valence for m in moods) / len(moods),
                               sum(m.arousal for m in moods) / len(moods))


def band_of(result: FusionResult, name: FieldName = FieldName.MOOD) -> Band:
    return result.fields[name].band


# -- privacy scan ---------------------------------------------------------------------

def scan_payload(data: bytes) -> list[str]:
    """Problems with a wire record: anything beyond seven 32-d field embeddings is a violation."""
    problems = []
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return ["not JSON"]

    def walk(node, path):
        if isinstance(node, dict):
            for k, v in node.items():
                walk(v, f"{path}.{k}" if path else k)
        elif isinstance(node, list):
            if any(isinstance(x, (int, float)) and not isinstance(x, bool) for x in node):
                ok = (path.startswith("fields.") and path.endswith(".embedding") and len(node) == DIM
                      and path.count(".") == 2)
                if not ok:
                    problems.append(f"numeric array at {path} (length {len(node)})")
            for i, v in enumerate(node):
                walk(v, f"{path}[{i}]")

    walk(doc, "")
    fields = doc.get("fields", {}) if isinstance(doc, dict) else {}
    if set(fields) != {n.value for n in FIELD_ORDER}:
        problems.append("field set is not the seven CAT7 fields")
    try:
        deserialize(data, DIM)
    except CmbDecodeError as exc:
        problems.append(str(exc))
    return problems

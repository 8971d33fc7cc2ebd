"""Deterministic discrete-event simulation of listener agents on a simulated mesh.

Everything runs on a virtual clock. Randomness comes from named generators
seeded off the script seed and recorded at the top of the event log, so a
script replays to a byte-identical log. Metrics are computed from that log
alone.
"""

from __future__ import annotations

import csv
import functools
import heapq
import io
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import curation
from .affect import CircumplexPoint, LegacyPoint, MoodLookup, from_legacy, generate_default_lookup, to_legacy
from .catalog import Catalog, generate as generate_catalog, mei_prior, track_mood
from .cfc import CfcConfig, CfcModel, EventFeatures, TrajectoryOutput, encode_event, forward
from .cmb import FIELD_ORDER, SessionContext, deserialize, serialize
from .ere import EreState, FusionInput, FusionPath, fuse, mark_mesh_induced, outbound_mood, set_organic
from .mesh import InfluenceLevel, MeshNode, NodeConfig

SCRIPT_EVENTS = ("play", "skip", "pause", "resume", "mood_dial", "set_genre", "join", "leave", "set_influence")
TRAJECTORY_SOURCES = ("organic", "cfc")
LOG_COLUMNS = ["time", "kind", "agent", "peer", "detail"]
TRACK_CHANGE_DELAY_S = 0.5


class ScenarioError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class LinkModel:
    base: float = 0.05
    jitter: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        if self.jitter < 0 or self.base - self.jitter <= 0:
            raise ValueError("link latency must stay positive (base > jitter >= 0)")

    def sample(self, rng: random.Random) -> float:
        return self.base + rng.uniform(-self.jitter, self.jitter)


@dataclass(frozen=True)
class AgentConfig:
    id: str
    influence: str = "gentle"
    domain: str = "music"
    trajectory_source: str = "organic"
    isolation: bool = True
    initial_mood: tuple[float, float] = (0.0, 0.0)
    genre: str | None = None
    intent: str = "maintain"
    heartbeat_s: float | None = None
    remix_on_curate: bool = False
    mesh_bias: bool = False
    joined: bool = True
    seed: int = 0


@dataclass(frozen=True)
class ScriptEvent:
    time: float
    kind: str
    agent: str
    args: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    agents: tuple[AgentConfig, ...]
    events: tuple[ScriptEvent, ...]
    duration: float
    seed: int = 0
    link: LinkModel = LinkModel()
    tick_s: float = 300.0
    rho_sample_s: float | None = None
    start_hour: float = 14.0
    catalog_seed: int = 0
    catalog_size: int = 1000
    lookup_seed: int = 1

    def validate(self) -> None:
        problems = []
        ids = [a.id for a in self.agents]
        if not ids:
            problems.append("no agents declared")
        if len(set(ids)) != len(ids):
            problems.append("duplicate agent ids")
        if self.duration <= 0:
            problems.append("duration must be positive")
        if self.tick_s <= 0:
            problems.append("tick_s must be positive")
        for a in self.agents:
            if a.trajectory_source not in TRAJECTORY_SOURCES:
                problems.append(f"agent {a.id}: unknown trajectory_source {a.trajectory_source!r}")
            try:
                InfluenceLevel(a.influence.lower())
            except ValueError:
                problems.append(f"agent {a.id}: unknown influence {a.influence!r}")
            if a.heartbeat_s is not None and a.heartbeat_s <= 0:
                problems.append(f"agent {a.id}: heartbeat_s must be positive")
        last = -math.inf
        for i, ev in enumerate(self.events):
            where = f"event {i}"
            if ev.time < last:
                problems.append(f"{where}: events must be time-ordered")
            last = ev.time
            if not 0 <= ev.time <= self.duration:
                problems.append(f"{where}: time {ev.time} outside [0, duration]")
            if ev.kind not in SCRIPT_EVENTS:
                problems.append(f"{where}: unknown kind {ev.kind!r}")
            if ev.agent not in ids:
                problems.append(f"{where}: undeclared agent {ev.agent!r}")
            if ev.kind == "mood_dial" and not {"valence", "arousal"} <= set(ev.args):
                problems.append(f"{where}: mood_dial needs valence and arousal")
            if ev.kind == "set_genre" and "genre" not in ev.args:
                problems.append(f"{where}: set_genre needs genre")
            if ev.kind == "set_influence":
                try:
                    InfluenceLevel(str(ev.args.get("level", "")).lower())
                except ValueError:
                    problems.append(f"{where}: set_influence needs level gentle|responsive")
        if problems:
            raise ScenarioError(problems)

    # -- file format --------------------------------------------------------------

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["agents"] = [asdict(a) for a in self.agents]
        for a in doc["agents"]:
            a["initial_mood"] = list(a["initial_mood"])
        doc["events"] = [asdict(e) for e in self.events]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> ScenarioScript:
        try:
            agents = tuple(AgentConfig(**{**a, "initial_mood": tuple(a.get("initial_mood", (0.0, 0.0)))})
                           for a in doc["agents"])
            events = tuple(ScriptEvent(float(e["time"]), e["kind"], e["agent"], dict(e.get("args", {})))
                           for e in doc.get("events", []))
            link = LinkModel(**doc.get("link", {}))
            rest = {k: v for k, v in doc.items() if k not in ("agents", "events", "link")}
            script = cls(agents=agents, events=events, link=link, **rest)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError([f"malformed scenario: {exc}"]) from None
        script.validate()
        return script

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> ScenarioScript:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError([f"not valid JSON: {exc}"]) from None
        if not isinstance(doc, dict):
            raise ScenarioError(["scenario must be a JSON object"])
        return cls.from_dict(doc)

    @classmethod
    def load(cls, path: str | Path) -> ScenarioScript:
        p = Path(path)
        if not p.is_file():
            raise ScenarioError([f"no such scenario file: {p}"])
        return cls.loads(p.read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


# -- canned scenarios -------------------------------------------------------------

def scenario_echo(isolation: bool = True, dial: bool = True, seed: int = 0) -> ScenarioScript:
    """Two responsive agents; A's mood dial at t=60 is the only organic change."""
    agents = tuple(AgentConfig(i, influence="responsive", isolation=isolation, genre="pop", seed=seed + k)
                   for k, i in enumerate(("A", "B")))
    events = (ScriptEvent(60.0, "mood_dial", "A", {"valence": 0.9, "arousal": 0.9}),) if dial else ()
    name = f"echo-isolation-{'on' if isolation else 'off'}" + ("" if dial else "-nodial")
    return ScenarioScript(name, agents, events, 600.0, seed)


def scenario_colisten(seed: int = 0, identical_dials: bool = False) -> ScenarioScript:
    """Two co-listeners with matching memories. A makes a large dial change, then switches genre twice."""
    agents = tuple(AgentConfig(i, genre="pop", heartbeat_s=10.0, seed=seed + k)
                   for k, i in enumerate(("A", "B")))
    if identical_dials:
        events = (ScriptEvent(30.0, "mood_dial", "A", {"valence": 0.6, "arousal": 0.5}),
                  ScriptEvent(30.0, "mood_dial", "B", {"valence": 0.6, "arousal": 0.5}))
        return ScenarioScript("colisten-identical", agents, events, 600.0, seed, rho_sample_s=10.0)
    events = (
        ScriptEvent(30.0, "mood_dial", "A", {"valence": -0.6, "arousal": 0.7}),
        ScriptEvent(120.0, "set_genre", "A", {"genre": "jazz"}),
        ScriptEvent(180.0, "set_genre", "A", {"genre": "electronic"}),
    )
    return ScenarioScript("colisten", agents, events, 400.0, seed, rho_sample_s=10.0)


def scenario_solo(seed: int = 15) -> ScenarioScript:
    """A 60-minute solo session driven by the listener CfC.

    The default seed gives a run that hits the confidence gate, a divergence
    requeue and an expiry requeue.
    """
    agents = (AgentConfig("solo", trajectory_source="cfc", genre=None, seed=seed),)
    rng = random.Random(seed)
    events = []
    t = 20.0
    while t < 3500.0:
        kind = rng.choice(["play", "skip", "skip", "pause", "resume", "mood_dial"])
        args = {}
        if kind == "mood_dial":
            args = {"valence": round(rng.uniform(-0.9, 0.9), 2), "arousal": round(rng.uniform(-0.9, 0.9), 2)}
        events.append(ScriptEvent(round(t, 1), kind, "solo", args))
        t += rng.expovariate(1 / 90.0)
    return ScenarioScript("solo-60min", agents, tuple(events), 3600.0, seed)


# -- runtime ----------------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _catalog(seed: int, n: int) -> Catalog:
    return generate_catalog(seed, n)


@functools.lru_cache(maxsize=4)
def _lookup(seed: int) -> MoodLookup:
    return generate_default_lookup(seed)


def _fmt_point(p: LegacyPoint | None) -> str:
    return "" if p is None else f"{p.emotion}/{p.energy}"


def _parse_point(s: str) -> LegacyPoint | None:
    if not s:
        return None
    e, n = s.split("/")
    return LegacyPoint(int(e), int(n))


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    if isinstance(v, LegacyPoint):
        return _fmt_point(v)
    if v is None:
        return ""
    return str(v)


class _Agent:
    def __init__(self, cfg: AgentConfig, script: ScenarioScript):
        self.cfg = cfg
        self.id = cfg.id
        self.node = MeshNode(cfg.id, NodeConfig(influence=InfluenceLevel(cfg.influence.lower()),
                                                domain=cfg.domain))
        self.node.genre = cfg.genre
        # the node starts out knowing its own listening context
        seed_cmb = self.node.broadcast(EreState(CircumplexPoint(*cfg.initial_mood)), SessionContext(
            genre=cfg.genre, intent=cfg.intent, perspective="shared listening"), 0.0)
        self.node.memory.seed_from(seed_cmb, 0.0)
        self.ere = EreState(CircumplexPoint(*cfg.initial_mood))
        self.joined = cfg.joined
        self.playlist: curation.Playlist | None = None
        self.position = 0
        self.paused = False
        self.last_broadcast: LegacyPoint | None = None
        self.intent = cfg.intent
        self.exploration = 0.0
        self.rng = random.Random(f"{script.seed}:{cfg.seed}:curation:{cfg.id}")
        self.model = CfcModel(CfcConfig(seed=cfg.seed)) if cfg.trajectory_source == "cfc" else None
        self.state = None
        self.last_event_t = 0.0
        self.traj: TrajectoryOutput | None = None

    @property
    def playing(self):
        if self.playlist is None or not self.playlist.tracks:
            return None
        return self.playlist.tracks[self.position % len(self.playlist.tracks)]

    def playing_mood(self) -> LegacyPoint:
        if self.playlist is not None:
            return self.playlist.target
        return to_legacy(outbound_mood(self.ere))

    def context(self) -> SessionContext:
        t = self.playing
        return SessionContext(track=t.title if t else "", genre=self.node.genre, intent=self.intent,
                              commitment="paused" if self.paused else "playing",
                              perspective="shared listening")


class Simulator:
    def __init__(self, script: ScenarioScript, lookup: MoodLookup | None = None, catalog: Catalog | None = None):
        script.validate()
        self.script = script
        self.catalog = catalog if catalog is not None else _catalog(script.catalog_seed, script.catalog_size)
        self.lookup = lookup if lookup is not None else _lookup(script.lookup_seed)
        self.policy = curation.PolicyConfig(tick_s=script.tick_s)
        self.agents = {a.id: _Agent(a, script) for a in script.agents}
        self.link_seed = f"{script.seed}:{script.link.seed}:link"
        self.link_rng = random.Random(self.link_seed)
        self.link_tail: dict[tuple[str, str], float] = {}
        self.queue: list = []
        self.seq = 0
        self.now = 0.0
        self.rows: list[tuple[float, str, str, str, str]] = []
        self.traffic: list[bytes] = []

    # -- plumbing -----------------------------------------------------------------

    def push(self, t: float, kind: str, payload: Any = None) -> None:
        heapq.heappush(self.queue, (t, self.seq, kind, payload))
        self.seq += 1

    def log(self, kind: str, agent: str = "", peer: str = "", **detail: Any) -> None:
        body = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(detail.items()))
        self.rows.append((self.now, kind, agent, peer, body))

    def peers_of(self, agent: _Agent) -> list[_Agent]:
        if not agent.joined:
            return []
        return [a for a in self.agents.values() if a is not agent and a.joined]

    # -- listener model -----------------------------------------------------------

    def step_model(self, agent: _Agent, kind: str, dial: tuple[float, float] | None = None) -> None:
        if agent.model is None:
            return
        dt = max(0.0, self.now - agent.last_event_t)
        track = agent.playing
        if track is not None:
            f = track.features
            feats = (f.energy, f.valence, f.danceability, f.acousticness, f.tempo / 200.0, (f.loudness + 60) / 60)
            mood = (track_mood(track).valence, track_mood(track).arousal)
            paf = mei_prior(track)
        else:
            feats, mood, paf = (0.0,) * 6, (0.0, 0.0), 0.0
        ev = EventFeatures(kind, mood, feats, (self.script.start_hour + self.now / 3600.0) % 24, dt, paf, dial,
                           agent.position)
        traj, _, pred, intent, agent.state = forward(agent.model, agent.state,
                                                     encode_event(ev, agent.model.config.input_dim), dt)
        agent.traj, agent.exploration, agent.intent = traj, pred.exploration, intent.label
        agent.last_event_t = self.now

    def trajectory(self, agent: _Agent) -> TrajectoryOutput:
        if agent.model is None:
            p = to_legacy(outbound_mood(agent.ere))
            return TrajectoryOutput(p.emotion, p.energy, 0.0, 0.0, 1.0, 1.0)
        self.step_model(agent, "tick")
        return agent.traj

    # -- actions ------------------------------------------------------------------

    def broadcast(self, agent: _Agent, force: bool = False) -> None:
        peers = self.peers_of(agent)
        if not peers:
            return
        cur = to_legacy(outbound_mood(agent.ere))
        if not force and cur == agent.last_broadcast:
            return
        cmb = agent.node.broadcast(agent.ere, agent.context(), self.now)
        agent.last_broadcast = cur
        self.log("broadcast", agent.id, key=cmb.key, mood=cur, genre=agent.node.genre)
        self.send(agent, peers, serialize(cmb))

    def send(self, src: _Agent, peers: list[_Agent], data: bytes) -> None:
        for dst in peers:
            self.traffic.append(data)
            link = (src.id, dst.id)
            t = max(self.now + self.script.link.sample(self.link_rng), self.link_tail.get(link, 0.0))
            self.link_tail[link] = t
            self.push(t, "deliver", (src.id, dst.id, data))

    def fuse(self, agent: _Agent, mood: CircumplexPoint, path: FusionPath) -> None:
        suppressed = agent.ere.isolated(self.now)
        agent.ere = fuse(agent.ere, FusionInput(mood, path, self.now))
        self.log("fuse", agent.id, path=path.value, suppressed=int(suppressed),
                 organic=to_legacy(outbound_mood(agent.ere)))
        self.broadcast(agent)

    def curate(self, agent: _Agent, target: LegacyPoint, reason: curation.Reason, conf: float,
               peer: str | None = None, parent=None) -> None:
        if peer is not None and agent.cfg.isolation:
            agent.ere = mark_mesh_induced(agent.ere, self.now, peer)
            self.log("isolation-mark", agent.id, peer, until=agent.ere.isolation_expires_at)
            self.push(agent.ere.isolation_expires_at, "isolation-expire", agent.id)
        old = agent.playlist.target if agent.playlist else None
        try:
            playlist = curation.build_playlist(target, self.lookup, self.catalog, self.now, agent.rng,
                                               agent.node.genre, self.policy)
        except curation.CatalogMismatch:
            playlist = curation.build_playlist(target, self.lookup, self.catalog, self.now, agent.rng,
                                               None, self.policy)
        agent.playlist, agent.position = playlist, 0
        self.log("requeue", agent.id, peer or "", old=old, new=target, reason=reason.value, conf=float(conf),
                 tracks=len(playlist.tracks), exhausted=int(playlist.catalog_exhausted))
        self.fuse(agent, from_legacy(target), FusionPath.PLAYLIST_CORRELATION)
        if playlist.tracks:
            self.push(self.now + TRACK_CHANGE_DELAY_S, "track-change", (agent.id, playlist.tracks[0].id))
        if parent is not None and agent.cfg.remix_on_curate:
            remix = agent.node.remix(parent, from_legacy(target), agent.context(), self.now)
            self.log("remix", agent.id, peer or "", key=remix.key, parent=parent.key)
            self.send(agent, self.peers_of(agent), serialize(remix))

    # -- handlers -----------------------------------------------------------------

    def on_tick(self, agent: _Agent) -> None:
        nxt = self.now + self.script.tick_s
        if nxt < self.script.duration:
            self.push(nxt, "tick", agent.id)
        self.evaluate(agent, "schedule")

    def evaluate(self, agent: _Agent, cause: str) -> None:
        traj = self.trajectory(agent)
        cached = agent.playlist
        action = curation.tick(self.now, traj, cached, self.policy, agent.intent, agent.exploration, agent.rng)
        target = action.target
        if action.requeue and agent.cfg.mesh_bias:
            own = outbound_mood(agent.ere)
            target = curation.mesh_bias(target, agent.node.room_mood(self.now, own),
                                        agent.node.coherence(self.now, own), self.policy.mesh_lambda)
        self.log("tick", agent.id, cause=cause, conf=float(traj.confidence), target=target,
                 cached=cached.target if cached else None,
                 valid_until=cached.valid_until if cached else None,
                 action=action.kind, reason=action.reason.value if action.reason else "")
        if action.requeue:
            self.curate(agent, target, action.reason, traj.confidence)

    def on_deliver(self, src_id: str, dst_id: str, data: bytes) -> None:
        dst = self.agents[dst_id]
        if not dst.joined or not self.agents[src_id].joined:
            self.log("drop", dst_id, src_id, reason="not-joined")
            return
        outcome = dst.node.on_receive(data, self.now, dst.playing_mood())
        if outcome.dropped:
            self.log("receive", dst_id, src_id, status=outcome.status)
            return
        res = outcome.result
        bands = "".join(_BAND_CODES[res.fields[n].band.value] for n in FIELD_ORDER)
        self.log("receive", dst_id, src_id, status=outcome.status, bands=bands,
                 drifts="|".join(f"{res.fields[n].drift:.4f}" for n in FIELD_ORDER),
                 gates="|".join(f"{res.fields[n].gate:.4f}" for n in FIELD_ORDER),
                 drift=float(outcome.result.drift_total), mood=outcome.peer_mood,
                 playing=dst.playing_mood())
        self.step_model(dst, "peer_update")
        rec = dst.node.peers[src_id]
        if outcome.genre_change:
            self.log("genre-change", dst_id, src_id, genre=outcome.genre_change)
        elif rec.last_genre and rec.last_genre != dst.node.genre:
            self.log("genre-blocked", dst_id, src_id, genre=rec.last_genre,
                     since=float(self.now - dst.node.last_genre_change))
        if outcome.trigger:
            cmb = deserialize(data)
            self.log("trigger", dst_id, src_id, key=cmb.key)
            lo, hi = self.policy.clamp
            p = outcome.peer_mood
            target = LegacyPoint(min(hi, max(lo, p.emotion)), min(hi, max(lo, p.energy)))
            self.curate(dst, target, curation.Reason.MESH, 1.0, peer=src_id, parent=cmb)

    def on_script(self, ev: ScriptEvent) -> None:
        agent = self.agents[ev.agent]
        k = ev.kind
        if k == "mood_dial":
            mood = CircumplexPoint(float(ev.args["valence"]), float(ev.args["arousal"]))
            agent.ere = set_organic(agent.ere, mood)
            self.log("dial", agent.id, mood=to_legacy(mood))
            self.step_model(agent, "mood_dial", (mood.valence, mood.arousal))
            # a dial is an explicit request, so the policy is consulted right away
            self.evaluate(agent, "dial")
            self.broadcast(agent)
        elif k in ("play", "skip"):
            if agent.playlist is None or not agent.playlist.tracks:
                self.log(k, agent.id, track="")
                self.step_model(agent, k)
                return
            if k == "skip":
                agent.position += 1
            track = agent.playing
            self.log(k, agent.id, track=track.id)
            self.step_model(agent, k)
            self.fuse(agent, track_mood(track), FusionPath.TRACK_CHANGE)
        elif k in ("pause", "resume"):
            agent.paused = k == "pause"
            self.log(k, agent.id)
            self.step_model(agent, k)
        elif k == "set_genre":
            agent.node.set_genre(str(ev.args["genre"]).lower(), self.now)
            self.log("set-genre", agent.id, genre=agent.node.genre)
            self.broadcast(agent, force=True)
        elif k == "join":
            agent.joined = True
            self.log("join", agent.id)
        elif k == "leave":
            agent.joined = False
            self.log("leave", agent.id)
        elif k == "set_influence":
            agent.node.influence = InfluenceLevel(str(ev.args["level"]).lower())
            self.log("set-influence", agent.id, level=agent.node.influence.value)

    def run(self) -> str:
        s = self.script
        self.log("seed", "", "", script=s.seed, link=self.link_seed, catalog=s.catalog_seed, lookup=s.lookup_seed)
        for a in self.agents.values():
            self.log("seed", a.id, "", curation=f"{s.seed}:{a.cfg.seed}:curation:{a.id}",
                     cfc=a.cfg.seed if a.model else "", source=a.cfg.trajectory_source,
                     isolation=int(a.cfg.isolation), influence=a.node.influence.value)
        for a in self.agents.values():
            self.push(0.0, "tick", a.id)
            if a.cfg.heartbeat_s:
                self.push(a.cfg.heartbeat_s, "heartbeat", a.id)
        for ev in s.events:
            self.push(ev.time, "script", ev)
        if s.rho_sample_s:
            self.push(s.rho_sample_s, "rho", None)
        while self.queue:
            t, _, kind, payload = heapq.heappop(self.queue)
            if t >= s.duration and kind != "script":
                continue
            if t > s.duration:
                continue
            assert t >= self.now, "virtual clock went backwards"
            self.now = t
            if kind == "tick":
                self.on_tick(self.agents[payload])
            elif kind == "deliver":
                self.on_deliver(*payload)
            elif kind == "script":
                self.on_script(payload)
            elif kind == "track-change":
                agent = self.agents[payload[0]]
                track = agent.playing
                if track is not None and track.id == payload[1]:
                    self.fuse(agent, track_mood(track), FusionPath.TRACK_CHANGE)
            elif kind == "isolation-expire":
                agent = self.agents[payload]
                if agent.ere.isolation_expires_at == t:
                    self.log("isolation-expire", agent.id, agent.ere.isolation_source or "")
            elif kind == "heartbeat":
                agent = self.agents[payload]
                self.broadcast(agent, force=True)
                self.push(t + agent.cfg.heartbeat_s, "heartbeat", agent.id)
            elif kind == "rho":
                for a in self.agents.values():
                    if a.joined:
                        self.log("rho", a.id, value=a.node.coherence(t, outbound_mood(a.ere)))
                self.push(t + s.rho_sample_s, "rho", None)
        return self.log_csv()

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for t, kind, agent, peer, detail in self.rows:
            w.writerow([f"{t:.6f}", kind, agent, peer, detail])
        return buf.getvalue()


# -- metrics ----------------------------------------------------------------------

@dataclass(frozen=True)
class LogRow:
    time: float
    kind: str
    agent: str
    peer: str
    detail: dict[str, str]


def parse_log(text: str) -> list[LogRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != LOG_COLUMNS:
        raise ValueError(f"event log header must be {','.join(LOG_COLUMNS)}")
    rows = []
    for rec in reader:
        t, kind, agent, peer, body = rec
        detail = dict(kv.split("=", 1) for kv in body.split(";")) if body else {}
        rows.append(LogRow(float(t), kind, agent, peer, detail))
    return rows


@dataclass
class SimMetrics:
    requeues: dict[str, list[tuple[float, str, str, str]]]
    triggers: dict[str, list[tuple[float, str]]]
    propagation: list[tuple[str, str, float, float]]  # (source, receiver, dial time, latency)
    oscillation_count: int
    rho: dict[str, list[tuple[float, float]]]
    band_histogram: dict[str, int]
    genre_changes: list[tuple[float, str, str]]
    genre_blocked: list[tuple[float, str, str]]
    messages: int
    event_log: str = ""

    @property
    def requeue_counts(self) -> dict[str, int]:
        return {a: len(v) for a, v in self.requeues.items()}

    @property
    def band_fractions(self) -> dict[str, float]:
        total = sum(self.band_histogram.values())
        return {b: (c / total if total else 0.0) for b, c in self.band_histogram.items()}

    def report(self) -> str:
        doc = {
            "requeue_counts": self.requeue_counts,
            "requeues": self.requeues,
            "triggers": self.triggers,
            "propagation": self.propagation,
            "oscillation_count": self.oscillation_count,
            "rho": self.rho,
            "band_histogram": self.band_histogram,
            "band_fractions": self.band_fractions,
            "genre_changes": self.genre_changes,
            "genre_blocked": self.genre_blocked,
            "messages": self.messages,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


_BAND_NAMES = {"r": "redundant", "a": "aligned", "g": "guarded", "x": "rejected"}
_BAND_CODES = {v: k for k, v in _BAND_NAMES.items()}


def metrics_from_log(text: str) -> SimMetrics:
    rows = parse_log(text)
    agents = sorted({r.agent for r in rows if r.agent})
    requeues = {a: [] for a in agents}
    triggers = {a: [] for a in agents}
    rho = {}
    hist = {name: 0 for name in _BAND_NAMES.values()}
    genre_changes, blocked = [], []
    messages = 0
    for r in rows:
        if r.kind == "requeue":
            requeues[r.agent].append((r.time, r.detail["reason"], r.detail.get("old", ""), r.detail["new"]))
        elif r.kind == "trigger":
            triggers[r.agent].append((r.time, r.peer))
        elif r.kind == "rho":
            rho.setdefault(r.agent, []).append((r.time, float(r.detail["value"])))
        elif r.kind == "receive":
            messages += 1
            for ch in r.detail.get("bands", ""):
                hist[_BAND_NAMES[ch]] += 1
        elif r.kind == "genre-change":
            genre_changes.append((r.time, r.agent, r.detail["genre"]))
        elif r.kind == "genre-blocked":
            blocked.append((r.time, r.agent, r.detail["genre"]))

    all_triggers = sorted((t, a, p) for a, v in triggers.items() for t, p in v)
    osc, prev = 0, None
    for _, a, _ in all_triggers:
        if a != prev:
            osc += 1
        prev = a

    propagation = []
    dials = [r for r in rows if r.kind == "dial"]
    for d in dials:
        later = [r for r in dials if r.agent == d.agent and r.time > d.time]
        horizon = later[0].time if later else math.inf
        for t, a, p in all_triggers:
            if p == d.agent and a != d.agent and d.time <= t < horizon:
                propagation.append((d.agent, a, d.time, t - d.time))
                break
    return SimMetrics(requeues, triggers, propagation, osc, rho, hist, genre_changes, blocked, messages, text)


@dataclass
class SimResult:
    metrics: SimMetrics
    event_log: str
    traffic: list[bytes]


def simulate(script: ScenarioScript, lookup: MoodLookup | None = None,
             catalog: Catalog | None = None) -> SimResult:
    sim = Simulator(script, lookup, catalog)
    text = sim.run()
    return SimResult(metrics_from_log(text), text, sim.traffic)


def run(script: ScenarioScript) -> SimMetrics:
    return simulate(script).metrics


def fusion_csv(text: str) -> str:
    """One row per (received CMB, field): time, from, to, field, drift, band, gate."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "from", "to", "field", "drift", "band", "gate"])
    for r in parse_log(text):
        if r.kind != "receive" or "bands" not in r.detail:
            continue
        drifts, gates = r.detail["drifts"].split("|"), r.detail["gates"].split("|")
        for name, code, d, g in zip(FIELD_ORDER, r.detail["bands"], drifts, gates):
            w.writerow([f"{r.time:.6f}", r.peer, r.agent, name.value, d, _BAND_NAMES[code], g])
    return buf.getvalue()


def replay_requeue_check(text: str, policy: curation.PolicyConfig = curation.DEFAULT_POLICY) -> list[str]:
    """Re-derive every tick decision from the log; returns disagreements (empty when consistent)."""
    problems = []
    lo, hi = policy.clamp
    for r in parse_log(text):
        if r.kind != "tick":
            continue
        conf = float(r.detail["conf"])
        target = _parse_point(r.detail.get("target", ""))
        cached = _parse_point(r.detail.get("cached", ""))
        valid_until = float(r.detail["valid_until"]) if r.detail.get("valid_until") else None
        if conf < policy.confidence_gate:
            expected = "none"
        elif cached is None or valid_until is None or r.time >= valid_until:
            expected = "requeue"
        else:
            expected = "requeue" if curation.diverges(cached, target, policy.divergence) else "none"
        if r.detail["action"] != expected:
            problems.append(f"t={r.time}: logged {r.detail['action']}, expected {expected}")
        if target is not None and not (lo <= target.emotion <= hi and lo <= target.energy <= hi):
            problems.append(f"t={r.time}: target {target} outside [{lo},{hi}]")
    return problems

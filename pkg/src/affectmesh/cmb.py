"""Cognitive Memory Blocks: the seven-field record that is the only thing agents exchange.

The wire schema is closed. A record carries a key, the sender identity, a
domain tag, a timestamp, lineage keys and exactly seven fields, each with a
text label and a unit-norm embedding of dimension ``DIM``. There is no slot
for anything else, which is what keeps recurrent hidden state off the wire.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import re
import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import TYPE_CHECKING, Any

import numpy as np

from .affect import CircumplexPoint, LegacyPoint, from_legacy, legacy_clamped, to_legacy

if TYPE_CHECKING:
    from .cfc import TrajectoryOutput

DIM = 32
NORM_TOL = 1e-6
_Q = 1e-6  # wire quantum for floats (6 decimals)


class FieldName(str, Enum):
    FOCUS = "focus"
    ISSUE = "issue"
    INTENT = "intent"
    MOTIVATION = "motivation"
    COMMITMENT = "commitment"
    PERSPECTIVE = "perspective"
    MOOD = "mood"


FIELD_ORDER: tuple[FieldName, ...] = tuple(FieldName)


class CmbDecodeError(ValueError):
    """Raised for malformed wire bytes; ``field`` names the offending slot."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _q6(x: float) -> float:
    return round(float(x), 6)


def unit_vector(v: np.ndarray | list[float]) -> tuple[float, ...]:
    """Normalise and quantise to 6 decimals while keeping the norm within 1e-6 of one.

    Rounding each coordinate can move the norm by a few 1e-6, so the largest
    coordinate is nudged one quantum at a time until the norm is back in range.
    """
    a = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(a))
    if not math.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalise a zero or non-finite vector")
    q = np.round(a / n, 6)
    i = int(np.argmax(np.abs(q)))
    step = _Q if q[i] >= 0 else -_Q
    for _ in range(64):
        err = float(np.linalg.norm(q)) - 1.0
        if abs(err) <= 0.5 * NORM_TOL:
            break
        q[i] = round(q[i] - step if err > 0 else q[i] + step, 6)
    return tuple(q.tolist())


@dataclass(frozen=True)
class CmbField:
    label: str
    embedding: tuple[float, ...]
    valence: float | None = None
    arousal: float | None = None

    def __post_init__(self) -> None:
        q = np.round(np.asarray(self.embedding, dtype=np.float64), 6)
        norm = float(np.sqrt(q @ q)) if q.ndim == 1 else math.nan
        if not abs(norm - 1.0) <= NORM_TOL:
            raise ValueError(f"embedding norm {norm:.9f} is not 1 +- {NORM_TOL}")
        object.__setattr__(self, "embedding", tuple(q.tolist()))
        if (self.valence is None) != (self.arousal is None):
            raise ValueError("valence and arousal must be given together")
        if self.valence is not None:
            for name in ("valence", "arousal"):
                x = float(getattr(self, name))
                if not -1.0 <= x <= 1.0:
                    raise ValueError(f"{name} {x} outside [-1, 1]")
                object.__setattr__(self, name, _q6(x))

    @property
    def has_mood(self) -> bool:
        return self.valence is not None

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.embedding, dtype=np.float64)


@dataclass(frozen=True)
class Cmb:
    key: str
    agent_id: str
    domain: str
    timestamp: float
    parents: tuple[str, ...]
    ancestors: tuple[str, ...]
    fields: dict[FieldName, CmbField] = field(hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "timestamp", _q6(self.timestamp))
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "ancestors", tuple(self.ancestors))
        missing = set(FIELD_ORDER) - set(self.fields)
        if missing or len(self.fields) != len(FIELD_ORDER):
            raise ValueError(f"CMB needs exactly the seven fields; missing {sorted(m.value for m in missing)}")
        if not set(self.parents) <= set(self.ancestors):
            raise ValueError("parents must be a subset of ancestors")
        for name, f in self.fields.items():
            if f.has_mood != (name is FieldName.MOOD):
                raise ValueError(f"numeric mood payload allowed only on the mood field (got it on {name.value})")
        dims = {len(f.embedding) for f in self.fields.values()}
        if len(dims) != 1:
            raise ValueError("all field embeddings must share one dimension")

    @property
    def mood(self) -> CircumplexPoint:
        m = self.fields[FieldName.MOOD]
        return CircumplexPoint(m.valence, m.arousal)

    @property
    def lineage(self) -> set[str]:
        return set(self.parents) | set(self.ancestors)


class KeyGenerator:
    """Per-agent monotone key source, safe under concurrent producers."""

    def __init__(self, agent_id: str):
        self.agent_id = agent_id
        self._counter = itertools.count(1)
        self._lock = threading.Lock()

    def __call__(self) -> str:
        with self._lock:
            n = next(self._counter)
        return f"{self.agent_id}#{n}"


_TOKEN = re.compile(r"[a-z0-9_]+")


class Embedder:
    """Deterministic label embeddings without a learned model.

    Text labels are embedded as a normalised bag of hashed token vectors, so
    labels sharing words are close. Mood embeddings are a smooth function of
    (valence, arousal) so nearby moods have nearby embeddings.
    """

    def __init__(self, dim: int = DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        rng = np.random.default_rng([seed, 7])
        basis, _ = np.linalg.qr(rng.standard_normal((dim, 3)))
        self._mood_basis = basis.T

    @lru_cache(maxsize=4096)
    def _token(self, token: str) -> np.ndarray:
        digest = hashlib.sha256(f"{self.seed}:{token}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def text(self, label: str) -> tuple[float, ...]:
        tokens = _TOKEN.findall(label.lower()) or ["<empty>"]
        acc = np.zeros(self.dim)
        for t in tokens:
            acc += self._token(t)
        if np.linalg.norm(acc) < 1e-9:
            acc = self._token("<empty>")
        return unit_vector(acc)

    def mood(self, valence: float, arousal: float) -> tuple[float, ...]:
        b, u, w = self._mood_basis
        return unit_vector(b + valence * u + arousal * w)


@dataclass(frozen=True)
class SessionContext:
    """Public session context projected into the six non-mood fields."""

    track: str = ""
    genre: str | None = None
    issue: str = "none"
    intent: str = "maintain"
    motivation: str = "steady listening"
    commitment: str = "playing"
    perspective: str = "solo listening"


_GENRE_TOKEN = re.compile(r"^[a-z0-9_]+$")


def focus_label(track: str, genre: str | None) -> str:
    if not genre:
        return track
    g = genre.lower()
    if not _GENRE_TOKEN.match(g):
        raise ValueError(f"genre must be a single lowercase token, got {genre!r}")
    return f"genre:{g} | {track}" if track else f"genre:{g}"


def extract_genre(cmb: Cmb) -> str | None:
    label = cmb.fields[FieldName.FOCUS].label
    if not label.startswith("genre:"):
        return None
    token = label[len("genre:"):].split(" | ", 1)[0].strip()
    return token if _GENRE_TOKEN.match(token) else None


def mood_label(mood: CircumplexPoint) -> str:
    return f"valence {mood.valence:+.2f} arousal {mood.arousal:+.2f}"


def build_fields(mood: CircumplexPoint, ctx: SessionContext, embedder: Embedder) -> dict[FieldName, CmbField]:
    labels = {
        FieldName.FOCUS: focus_label(ctx.track, ctx.genre),
        FieldName.ISSUE: ctx.issue,
        FieldName.INTENT: ctx.intent,
        FieldName.MOTIVATION: ctx.motivation,
        FieldName.COMMITMENT: ctx.commitment,
        FieldName.PERSPECTIVE: ctx.perspective,
    }
    fields = {name: CmbField(label, embedder.text(label)) for name, label in labels.items()}
    v, a = _q6(mood.valence), _q6(mood.arousal)
    fields[FieldName.MOOD] = CmbField(mood_label(mood), embedder.mood(v, a), v, a)
    return {name: fields[name] for name in FIELD_ORDER}


def make_cmb(agent_id: str, domain: str, trajectory: TrajectoryOutput | CircumplexPoint,
             session_context: SessionContext, now: float, embedder: Embedder,
             keys: KeyGenerator | None = None) -> Cmb:
    """Fresh, lineage-free CMB whose mood field is the trajectory's current point."""
    if isinstance(trajectory, CircumplexPoint):
        mood = trajectory
    else:
        mood = from_legacy(legacy_clamped(trajectory.emotion, trajectory.energy))
    key = keys() if keys is not None else f"{agent_id}#{uuid.uuid4().hex}"
    return Cmb(key, agent_id, domain, now, (), (), build_fields(mood, session_context, embedder))


def derive_cmb(parent: Cmb, agent_id: str, domain: str, mood: CircumplexPoint,
               session_context: SessionContext, now: float, embedder: Embedder,
               keys: KeyGenerator | None = None) -> Cmb:
    """A remix of ``parent``: lineage records the parent and all its ancestors."""
    ancestors = tuple(dict.fromkeys(parent.ancestors + (parent.key,)))
    key = keys() if keys is not None else f"{agent_id}#{uuid.uuid4().hex}"
    return Cmb(key, agent_id, domain, now, (parent.key,), ancestors,
               build_fields(mood, session_context, embedder))


def is_echo(cmb: Cmb, self_keys: set[str]) -> bool:
    return not cmb.lineage.isdisjoint(self_keys)


# -- wire format ----------------------------------------------------------------

_TOP_KEYS = {"key", "agent_id", "domain", "timestamp", "parents", "ancestors", "fields"}


def _encode(value: Any) -> str:
    if isinstance(value, dict):
        items = sorted(value.items())
        return "{" + ",".join(json.dumps(k) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_encode(v) for v in value) + "]"
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    if isinstance(value, float):
        s = f"{value:.6f}"
        return "0.000000" if s == "-0.000000" else s
    raise TypeError(f"cannot encode {type(value).__name__}")


def serialize(cmb: Cmb) -> bytes:
    fields = {}
    for name in FIELD_ORDER:
        f = cmb.fields[name]
        rec: dict[str, Any] = {"label": f.label, "embedding": list(f.embedding)}
        if f.has_mood:
            rec["valence"] = f.valence
            rec["arousal"] = f.arousal
        fields[name.value] = rec
    doc = {"key": cmb.key, "agent_id": cmb.agent_id, "domain": cmb.domain,
           "timestamp": cmb.timestamp, "parents": list(cmb.parents),
           "ancestors": list(cmb.ancestors), "fields": fields}
    return _encode(doc).encode("utf-8")


def _expect(cond: bool, where: str, msg: str) -> None:
    if not cond:
        raise CmbDecodeError(where, msg)


def _number(x: Any, where: str) -> float:
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool), where, "expected a number")
    _expect(math.isfinite(x), where, "non-finite number")
    return float(x)


def _str_list(x: Any, where: str) -> tuple[str, ...]:
    _expect(isinstance(x, list) and all(isinstance(s, str) for s in x), where, "expected a list of keys")
    return tuple(x)


def deserialize(data: bytes, dim: int = DIM) -> Cmb:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CmbDecodeError("<record>", f"not valid UTF-8 JSON ({exc})") from None
    _expect(isinstance(doc, dict), "<record>", "top level must be an object")
    extra = set(doc) - _TOP_KEYS
    _expect(not extra, sorted(extra)[0] if extra else "", "unknown top-level slot")
    missing = _TOP_KEYS - set(doc)
    _expect(not missing, sorted(missing)[0] if missing else "", "missing top-level slot")
    for k in ("key", "agent_id", "domain"):
        _expect(isinstance(doc[k], str) and doc[k] != "", k, "expected a non-empty string")
    ts = _number(doc["timestamp"], "timestamp")
    parents = _str_list(doc["parents"], "parents")
    ancestors = _str_list(doc["ancestors"], "ancestors")
    _expect(set(parents) <= set(ancestors), "parents", "parents must be a subset of ancestors")
    raw_fields = doc["fields"]
    _expect(isinstance(raw_fields, dict), "fields", "expected an object")
    names = {n.value for n in FIELD_ORDER}
    extra = set(raw_fields) - names
    _expect(not extra, f"fields.{sorted(extra)[0]}" if extra else "", "unknown field")
    missing = names - set(raw_fields)
    _expect(not missing, f"fields.{sorted(missing)[0]}" if missing else "", "missing field")
    fields = {}
    for name in FIELD_ORDER:
        where = f"fields.{name.value}"
        rec = raw_fields[name.value]
        _expect(isinstance(rec, dict), where, "expected an object")
        allowed = {"label", "embedding"} | ({"valence", "arousal"} if name is FieldName.MOOD else set())
        extra = set(rec) - allowed
        _expect(not extra, f"{where}.{sorted(extra)[0]}" if extra else where, "unknown slot")
        missing = allowed - set(rec)
        _expect(not missing, f"{where}.{sorted(missing)[0]}" if missing else where, "missing slot")
        _expect(isinstance(rec["label"], str), f"{where}.label", "expected a string")
        emb = rec["embedding"]
        _expect(isinstance(emb, list) and len(emb) == dim, f"{where}.embedding",
                f"expected {dim} numbers")
        vec = tuple(_number(x, f"{where}.embedding") for x in emb)
        norm = math.sqrt(sum(x * x for x in vec))
        _expect(abs(norm - 1.0) <= NORM_TOL, f"{where}.embedding", f"norm {norm:.6f} is not 1")
        if name is FieldName.MOOD:
            v = _number(rec["valence"], f"{where}.valence")
            a = _number(rec["arousal"], f"{where}.arousal")
            _expect(-1.0 <= v <= 1.0, f"{where}.valence", "outside [-1, 1]")
            _expect(-1.0 <= a <= 1.0, f"{where}.arousal", "outside [-1, 1]")
            fields[name] = CmbField(rec["label"], vec, v, a)
        else:
            fields[name] = CmbField(rec["label"], vec)
    return Cmb(doc["key"], doc["agent_id"], doc["domain"], ts, parents, ancestors, fields)


def legacy_mood(cmb: Cmb) -> LegacyPoint:
    return to_legacy(cmb.mood)

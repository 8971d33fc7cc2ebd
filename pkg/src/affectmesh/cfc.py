"""Closed-form continuous-time (CfC) cells, the listener network and its heads.

The recurrent update for one cell is

    h' = h * exp(-dt / tau) + (1 - exp(-dt / tau)) * f([x, h])

with per-neuron ``tau`` stored as ``log_tau`` and ``f`` a tanh MLP. Layer
normalisation sits on the output path only (what the next cell and the heads
see); the recurrent state itself is never normalised, so ``dt = 0`` leaves it
bit-for-bit unchanged.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

STATE_VALIDITY_S = 86400.0
WEIGHTS_FORMAT = "affectmesh.cfc/1"

HEAD_SIZES = {"trajectory": 6, "pattern": 9, "prediction": 3, "intent": 6}
INTENTS = ("maintain", "energize", "calm", "focus", "explore", "social")
PATTERNS = ("focus", "wind_down", "ramp_up", "social", "morning_routine",
            "commute", "workout", "study", "sleep")
EVENT_TYPES = ("play", "skip", "pause", "resume", "mood_dial", "tick", "peer_update", "complete")
VELOCITY_MAX = 0.5  # legacy units per second


class ClockRegression(ValueError):
    """Raised when a cell is stepped with a negative elapsed time."""


@dataclass(frozen=True)
class CfcConfig:
    input_dim: int = 80
    encoder_out: int = 64
    n_cells: int = 2
    hidden: int = 64
    mlp_widths: tuple[int, ...] = (64, 128)
    tau_range: tuple[float, float] = (0.5, 300.0)
    ln_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        dims = (self.input_dim, self.encoder_out, self.n_cells, self.hidden, *self.mlp_widths)
        if any(d < 1 for d in dims):
            raise ValueError("all CfC dimensions must be >= 1")
        lo, hi = self.tau_range
        if not 0 < lo <= hi:
            raise ValueError("tau_range must satisfy 0 < lo <= hi")


def _uniform_layer(rng: np.random.Generator, n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
    bound = 1.0 / math.sqrt(n_in)
    return rng.uniform(-bound, bound, (n_out, n_in)), rng.uniform(-bound, bound, n_out)


class CfcCell:
    """One CfC cell: MLP ``f``, per-neuron log time constants, output layer norm."""

    def __init__(self, in_dim: int, hidden: int, mlp_widths: tuple[int, ...],
                 log_tau: np.ndarray, rng: np.random.Generator, ln_eps: float = 1e-5):
        self.in_dim = in_dim
        self.hidden = hidden
        self.ln_eps = ln_eps
        widths = (in_dim + hidden, *mlp_widths, hidden)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            w, b = _uniform_layer(rng, n_out, n_in)
            self.weights.append(w)
            self.biases.append(b)
        self.log_tau = np.asarray(log_tau, dtype=np.float64).copy()
        if self.log_tau.shape != (hidden,):
            raise ValueError(f"log_tau must have shape ({hidden},)")
        self.ln_gamma = np.ones(hidden)
        self.ln_beta = np.zeros(hidden)

    @property
    def tau(self) -> np.ndarray:
        return np.exp(self.log_tau)

    def named_parameters(self, prefix: str = ""):
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            yield f"{prefix}mlp.{i}.W", w
            yield f"{prefix}mlp.{i}.b", b
        yield f"{prefix}log_tau", self.log_tau
        yield f"{prefix}ln.gamma", self.ln_gamma
        yield f"{prefix}ln.beta", self.ln_beta

    def target(self, x: np.ndarray, h: np.ndarray, cache: list | None = None) -> np.ndarray:
        """Steady-state target f([x, h]); appends layer activations to ``cache``."""
        z = np.concatenate([x, h], axis=-1)
        if cache is not None:
            cache.append(z)
        for w, b in zip(self.weights, self.biases):
            z = np.tanh(z @ w.T + b)
            if cache is not None:
                cache.append(z)
        return z

    def gate(self, dt) -> np.ndarray:
        dt = np.asarray(dt, dtype=np.float64)
        return np.exp(-dt[..., None] * np.exp(-self.log_tau))

    def output(self, h: np.ndarray) -> np.ndarray:
        mu = h.mean(axis=-1, keepdims=True)
        var = ((h - mu) ** 2).mean(axis=-1, keepdims=True)
        return self.ln_gamma * (h - mu) / np.sqrt(var + self.ln_eps) + self.ln_beta


def cell_step(cell: CfcCell, h: np.ndarray, x: np.ndarray, dt) -> np.ndarray:
    """Exact closed-form update of the recurrent state over elapsed time ``dt``."""
    if np.any(np.asarray(dt) < 0):
        raise ClockRegression(f"negative elapsed time {dt}")
    h = np.asarray(h, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != cell.hidden or x.shape[-1] != cell.in_dim:
        raise ValueError(f"expected x[..., {cell.in_dim}] and h[..., {cell.hidden}], "
                         f"got {x.shape} and {h.shape}")
    g = cell.gate(dt)
    f = cell.target(x, h)
    return h * g + (1.0 - g) * f


@dataclass(frozen=True)
class TrajectoryOutput:
    emotion: float
    energy: float
    v_emotion: float
    v_energy: float
    stability: float
    confidence: float

    def __post_init__(self) -> None:
        clamp = lambda v, lo, hi: float(min(hi, max(lo, v)))  # noqa: E731
        object.__setattr__(self, "emotion", clamp(self.emotion, 0.0, 99.0))
        object.__setattr__(self, "energy", clamp(self.energy, 0.0, 99.0))
        object.__setattr__(self, "v_emotion", clamp(self.v_emotion, -VELOCITY_MAX, VELOCITY_MAX))
        object.__setattr__(self, "v_energy", clamp(self.v_energy, -VELOCITY_MAX, VELOCITY_MAX))
        object.__setattr__(self, "stability", clamp(self.stability, 0.0, 1.0))
        object.__setattr__(self, "confidence", clamp(self.confidence, 0.0, 1.0))


@dataclass(frozen=True)
class PatternOutput:
    scores: tuple[float, ...]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PATTERNS, self.scores))


@dataclass(frozen=True)
class PredictionOutput:
    emotion_next: float
    energy_next: float
    exploration: float


@dataclass(frozen=True)
class IntentOutput:
    logits: tuple[float, ...]

    @property
    def label(self) -> str:
        return INTENTS[int(np.argmax(self.logits))]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x)))


def trajectory_activation(raw: np.ndarray) -> np.ndarray:
    """Normalised trajectory: emotion/energy/stability/confidence in (0,1), velocities in (-1,1)."""
    out = sigmoid(raw)
    out[..., 2:4] = np.tanh(raw[..., 2:4])
    return out


class CfcModel:
    """Encoder -> stacked CfC cells -> four heads on the last cell's output."""

    def __init__(self, config: CfcConfig = CfcConfig()):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.enc_W, self.enc_b = _uniform_layer(rng, config.encoder_out, config.input_dim)
        lo, hi = config.tau_range
        self.cells: list[CfcCell] = []
        for i in range(config.n_cells):
            in_dim = config.encoder_out if i == 0 else config.hidden
            log_tau = rng.uniform(math.log(lo), math.log(hi), config.hidden)
            self.cells.append(CfcCell(in_dim, config.hidden, config.mlp_widths, log_tau, rng, config.ln_eps))
        self.heads: dict[str, tuple[np.ndarray, np.ndarray]] = {
            name: _uniform_layer(rng, size, config.hidden) for name, size in HEAD_SIZES.items()
        }

    def named_parameters(self):
        yield "encoder.W", self.enc_W
        yield "encoder.b", self.enc_b
        for i, cell in enumerate(self.cells):
            yield from cell.named_parameters(f"cells.{i}.")
        for name, (w, b) in self.heads.items():
            yield f"heads.{name}.W", w
            yield f"heads.{name}.b", b

    def parameters(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def parameter_count(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name, p in self.named_parameters():
            group = name.split(".")[0] if not name.startswith("cells.") else ".".join(name.split(".")[:2])
            counts[group] = counts.get(group, 0) + int(p.size)
        counts["total"] = sum(counts.values())
        return counts

    def zero_state(self, now: float = 0.0) -> CfcState:
        return CfcState([np.zeros(self.config.hidden) for _ in self.cells], now, now)

    def step_raw(self, hs: list[np.ndarray], x: np.ndarray, dt, cache: dict | None = None):
        """One event for a batch: returns (new hidden list, raw head outputs dict)."""
        a_e = x @ self.enc_W.T + self.enc_b
        u = np.tanh(a_e)
        if cache is not None:
            cache["x"] = x
            cache["enc"] = u
            cache["cells"] = []
        new_hs = []
        for cell, h in zip(self.cells, hs):
            c = {"h": h, "u": u} if cache is not None else None
            mlp_cache: list | None = [] if c is not None else None
            g = cell.gate(dt)
            f = cell.target(u, h, mlp_cache)
            h_new = h * g + (1.0 - g) * f
            mu = h_new.mean(axis=-1, keepdims=True)
            var = ((h_new - mu) ** 2).mean(axis=-1, keepdims=True)
            s = np.sqrt(var + cell.ln_eps)
            xhat = (h_new - mu) / s
            y = cell.ln_gamma * xhat + cell.ln_beta
            if c is not None:
                c.update(mlp=mlp_cache, g=g, f=f, h_new=h_new, xhat=xhat, s=s, y=y)
                cache["cells"].append(c)
            new_hs.append(h_new)
            u = y
        raw = {name: u @ w.T + b for name, (w, b) in self.heads.items()}
        if cache is not None:
            cache["top"] = u
        return new_hs, raw


@dataclass
class CfcState:
    hidden: list[np.ndarray]
    last_event_time: float
    saved_at: float = 0.0

    def copy(self) -> CfcState:
        return CfcState([h.copy() for h in self.hidden], self.last_event_time, self.saved_at)


@dataclass(frozen=True)
class HeadOutputs:
    trajectory: TrajectoryOutput
    pattern: PatternOutput
    prediction: PredictionOutput
    intent: IntentOutput


def decode_heads(raw: dict[str, np.ndarray]) -> HeadOutputs:
    t = trajectory_activation(np.asarray(raw["trajectory"], dtype=np.float64).reshape(-1))
    traj = TrajectoryOutput(99.0 * t[0], 99.0 * t[1], VELOCITY_MAX * t[2], VELOCITY_MAX * t[3], t[4], t[5])
    pat = PatternOutput(tuple(float(v) for v in sigmoid(raw["pattern"]).reshape(-1)))
    p = sigmoid(raw["prediction"]).reshape(-1)
    pred = PredictionOutput(99.0 * float(p[0]), 99.0 * float(p[1]), float(p[2]))
    intent = IntentOutput(tuple(float(v) for v in np.asarray(raw["intent"]).reshape(-1)))
    return HeadOutputs(traj, pat, pred, intent)


def forward(model: CfcModel, state: CfcState | None, x, dt: float):
    """Single-event inference; returns (trajectory, pattern, prediction, intent, new_state)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.config.input_dim,):
        raise ValueError(f"input must have shape ({model.config.input_dim},), got {x.shape}")
    if dt < 0:
        raise ClockRegression(f"negative elapsed time {dt}")
    if state is None:
        state = model.zero_state()
    hs = [h[None, :] for h in state.hidden]
    new_hs, raw = model.step_raw(hs, x[None, :], np.array([dt], dtype=np.float64))
    heads = decode_heads({k: v[0] for k, v in raw.items()})
    new_state = CfcState([h[0] for h in new_hs], state.last_event_time + dt, state.saved_at)
    return heads.trajectory, heads.pattern, heads.prediction, heads.intent, new_state


# -- persistence ----------------------------------------------------------------

def persist_state(state: CfcState, store: str | Path, now: float) -> None:
    doc = {"saved_at": now, "last_event_time": state.last_event_time,
           "hidden": [h.tolist() for h in state.hidden]}
    Path(store).write_text(json.dumps(doc), encoding="utf-8")


def load_state(store: str | Path, now: float, validity: float = STATE_VALIDITY_S) -> CfcState | None:
    path = Path(store)
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        saved_at = float(doc["saved_at"])
        hidden = [np.asarray(h, dtype=np.float64) for h in doc["hidden"]]
        if not all(np.all(np.isfinite(h)) for h in hidden):
            raise ValueError("non-finite hidden state")
        state = CfcState(hidden, float(doc["last_event_time"]), saved_at)
    except (ValueError, KeyError, TypeError) as exc:
        log.warning("discarding corrupted CfC state store %s: %s", path, exc)
        return None
    if now - saved_at > validity:
        return None
    return state


def save_weights(model: CfcModel, path: str | Path) -> None:
    header = json.dumps({"format": WEIGHTS_FORMAT, "config": {
        k: list(v) if isinstance(v, tuple) else v for k, v in model.config.__dict__.items()}})
    arrays = {name: p for name, p in model.named_parameters()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(header), **arrays)


def load_weights(path: str | Path) -> CfcModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format") != WEIGHTS_FORMAT:
            raise ValueError(f"unsupported weight format {header.get('format')!r}")
        cfg = {k: tuple(v) if isinstance(v, list) else v for k, v in header["config"].items()}
        model = CfcModel(CfcConfig(**cfg))
        for name, p in model.named_parameters():
            p[...] = data[name]
    return model


# -- mesh-runtime network -------------------------------------------------------

@dataclass(frozen=True)
class MeshCfcConfig:
    input_dim: int = 12
    hidden: int = 32
    mlp_widths: tuple[int, ...] = (32,)
    fast_tau: tuple[float, float] = (0.5, 5.0)
    slow_tau: tuple[float, float] = (30.0, 300.0)
    seed: int = 0


class MeshCfc:
    """The room-level CfC: half fast neurons (tau < 5 s), half slow (tau > 30 s)."""

    def __init__(self, config: MeshCfcConfig = MeshCfcConfig()):
        self.config = config
        rng = np.random.default_rng([config.seed, 6])
        n_fast = config.hidden // 2
        n_slow = config.hidden - n_fast
        lo, hi = config.fast_tau
        fast = rng.uniform(math.log(lo), math.log(hi), n_fast)
        lo, hi = config.slow_tau
        # 1 - U[0,1) lies in (0, 1], so slow taus land in (lo, hi]
        slow = math.log(lo) + (1.0 - rng.uniform(0.0, 1.0, n_slow)) * (math.log(hi) - math.log(lo))
        self.n_fast = n_fast
        self.cell = CfcCell(config.input_dim, config.hidden, config.mlp_widths,
                            np.concatenate([fast, slow]), rng)

    def named_parameters(self):
        yield from self.cell.named_parameters("mesh.")

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.config.hidden)

    def step(self, h: np.ndarray, x, dt: float) -> np.ndarray:
        return cell_step(self.cell, h, x, dt)

    def fast_mix(self, dt: float) -> float:
        """Mean fraction of the fast neurons' state replaced after ``dt`` seconds."""
        g = self.cell.gate(np.float64(dt))[: self.n_fast]
        return float(np.mean(1.0 - g))


def mesh_cfc_new(config: MeshCfcConfig = MeshCfcConfig()) -> MeshCfc:
    return MeshCfc(config)


# -- input layout ---------------------------------------------------------------

@dataclass(frozen=True)
class EventFeatures:
    kind: str
    track_mood: tuple[float, float] = (0.0, 0.0)
    track_features: tuple[float, ...] = field(default_factory=lambda: (0.0,) * 6)
    hour: float = 12.0
    dt: float = 0.0
    paf_arousal: float = 0.0
    dial: tuple[float, float] | None = None
    position: int = 0


INPUT_LAYOUT = {
    "track_mood": slice(0, 2),
    "track_features": slice(2, 8),
    "event_type": slice(8, 16),
    "time_of_day": slice(16, 18),
    "dt": slice(18, 20),
    "paf_arousal": slice(20, 21),
    "dial": slice(21, 23),
    "dial_present": slice(23, 24),
    "position": slice(24, 25),
}


def encode_event(ev: EventFeatures, input_dim: int = 80) -> np.ndarray:
    """Versioned 80-d input layout; the tail past index 24 is reserved zeros."""
    if input_dim < 25:
        raise ValueError("the event layout needs input_dim >= 25")
    x = np.zeros(input_dim)
    x[INPUT_LAYOUT["track_mood"]] = ev.track_mood
    x[INPUT_LAYOUT["track_features"]] = ev.track_features
    x[8 + EVENT_TYPES.index(ev.kind)] = 1.0
    ang = 2 * math.pi * (ev.hour % 24.0) / 24.0
    x[16], x[17] = math.sin(ang), math.cos(ang)
    x[18] = min(ev.dt, 3600.0) / 3600.0
    x[19] = math.log1p(max(ev.dt, 0.0)) / math.log1p(STATE_VALIDITY_S)
    x[20] = ev.paf_arousal
    if ev.dial is not None:
        x[21], x[22] = ev.dial
        x[23] = 1.0
    x[24] = min(ev.position, 100) / 100.0
    return x

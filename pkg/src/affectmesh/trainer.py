"""Toy-scale training of the listener CfC with the four-term composite loss.

Gradients are derived by hand (backpropagation through time over the
closed-form cell) and checked against central finite differences.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cfc import (
    INTENTS,
    PATTERNS,
    VELOCITY_MAX,
    CfcConfig,
    CfcModel,
    EventFeatures,
    encode_event,
    save_weights,
    sigmoid,
    trajectory_activation,
)

log = logging.getLogger(__name__)

TOY_CONFIG = CfcConfig(input_dim=8, encoder_out=8, n_cells=1, hidden=8, mlp_widths=(8,), seed=0)


@dataclass(frozen=True)
class LossWeights:
    traj: float = 1.0
    pattern: float = 0.5
    intent: float = 0.5
    forecast: float = 0.3

    def __post_init__(self) -> None:
        if min(self.traj, self.pattern, self.intent, self.forecast) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.01
    epochs: int = 50
    batches_per_epoch: int = 8
    batch_size: int = 16
    val_batches: int = 2
    seq_len: tuple[int, int] = (5, 100)
    clip_norm: float = 1.0
    patience: int = 10
    checkpoint_every: int = 10
    warp_bounds: tuple[float, float] = (0.8, 1.25)
    noise_sigma: float = 0.02
    mean_dt: float = 60.0
    model: CfcConfig = TOY_CONFIG

    def __post_init__(self) -> None:
        if self.lr < 0 or self.weight_decay < 0 or self.noise_sigma < 0:
            raise ValueError("lr, weight decay and noise must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch size and patience must be positive")
        lo, hi = self.seq_len
        if not 1 <= lo <= hi:
            raise ValueError("seq_len must satisfy 1 <= lo <= hi")
        wlo, whi = self.warp_bounds
        if not 0 < wlo <= 1 <= whi:
            raise ValueError("warp bounds must bracket 1")


# Desk-scale preset for the synthetic task: a larger step and shorter
# sequences so 50 epochs of 8 batches are enough to fit it.
TOY_TRAIN = TrainConfig(lr=1e-2, seq_len=(5, 40))


@dataclass
class ToyBatch:
    """Equal-length sequences; arrays are (batch, length, ...)."""

    x: np.ndarray
    dt: np.ndarray
    traj: np.ndarray  # normalised trajectory targets (6)
    pattern: np.ndarray  # {0,1} (9)
    intent: np.ndarray  # class index
    forecast: np.ndarray  # normalised next-step emotion/energy (2)

    def __post_init__(self) -> None:
        if np.any(self.dt < 0):
            raise ValueError("dt must be nonnegative")

    @property
    def size(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> ToyBatch:
        return ToyBatch(self.x[idx], self.dt[idx], self.traj[idx], self.pattern[idx],
                        self.intent[idx], self.forecast[idx])


# -- loss -------------------------------------------------------------------------

def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def composite_loss(outputs: dict[str, np.ndarray], targets: ToyBatch,
                   w: LossWeights = LossWeights()) -> tuple[float, dict[str, float]]:
    """Weighted MSE(traj) + BCE(pattern) + CE(intent) + MSE(forecast) on raw head outputs."""
    t = trajectory_activation(outputs["trajectory"])
    l_traj = float(np.mean((t - targets.traj) ** 2))
    zp = outputs["pattern"]
    l_pat = float(np.mean(_softplus(zp) - targets.pattern * zp))
    ls = _log_softmax(outputs["intent"])
    l_int = float(-np.mean(np.take_along_axis(ls, targets.intent[..., None], axis=-1)))
    p = sigmoid(outputs["prediction"][..., :2])
    l_fc = float(np.mean((p - targets.forecast) ** 2))
    terms = {"traj": l_traj, "pattern": l_pat, "intent": l_int, "forecast": l_fc}
    total = w.traj * l_traj + w.pattern * l_pat + w.intent * l_int + w.forecast * l_fc
    return total, terms


def _loss_grad(outputs: dict[str, np.ndarray], targets: ToyBatch, w: LossWeights) -> dict[str, np.ndarray]:
    t = trajectory_activation(outputs["trajectory"])
    dt_ = 2.0 * w.traj * (t - targets.traj) / t.size
    d_traj = dt_ * t * (1.0 - t)
    d_traj[..., 2:4] = dt_[..., 2:4] * (1.0 - t[..., 2:4] ** 2)
    zp = outputs["pattern"]
    d_pat = w.pattern * (sigmoid(zp) - targets.pattern) / zp.size
    zi = outputs["intent"]
    soft = np.exp(_log_softmax(zi))
    onehot = np.zeros_like(zi)
    np.put_along_axis(onehot, targets.intent[..., None], 1.0, axis=-1)
    d_int = w.intent * (soft - onehot) / (zi.size // zi.shape[-1])
    zf = outputs["prediction"]
    p = sigmoid(zf[..., :2])
    d_pred = np.zeros_like(zf)
    d_pred[..., :2] = 2.0 * w.forecast * (p - targets.forecast) / p.size * p * (1.0 - p)
    return {"trajectory": d_traj, "pattern": d_pat, "intent": d_int, "prediction": d_pred}


# -- forward / backward ------------------------------------------------------------

def run_sequence(model: CfcModel, batch: ToyBatch, keep_cache: bool = False):
    """Raw head outputs stacked over time, (B, L, size) per head, plus per-step caches."""
    b, length = batch.dt.shape
    hs = [np.zeros((b, model.config.hidden)) for _ in model.cells]
    outs: dict[str, list[np.ndarray]] = {k: [] for k in model.heads}
    caches = []
    for k in range(length):
        cache = {} if keep_cache else None
        hs, raw = model.step_raw(hs, batch.x[:, k], batch.dt[:, k], cache)
        for name, v in raw.items():
            outs[name].append(v)
        if keep_cache:
            caches.append(cache)
    return {k: np.stack(v, axis=1) for k, v in outs.items()}, caches


def backward(model: CfcModel, batch: ToyBatch, w: LossWeights = LossWeights()):
    """Exact gradients of ``composite_loss`` with respect to every model parameter.

    Returns ``(loss, terms, grads)`` where ``grads`` mirrors ``model.parameters()``.
    """
    outputs, caches = run_sequence(model, batch, keep_cache=True)
    loss, terms = composite_loss(outputs, batch, w)
    d_out = _loss_grad(outputs, batch, w)
    grads = {name: np.zeros_like(p) for name, p in model.named_parameters()}
    n_cells = len(model.cells)
    carry = [np.zeros((batch.size, model.config.hidden)) for _ in range(n_cells)]

    for k in range(batch.dt.shape[1] - 1, -1, -1):
        cache = caches[k]
        top = cache["top"]
        dy = np.zeros_like(top)
        for name, (hw, _) in model.heads.items():
            d = d_out[name][:, k]
            grads[f"heads.{name}.W"] += d.T @ top
            grads[f"heads.{name}.b"] += d.sum(axis=0)
            dy += d @ hw
        dt = batch.dt[:, k][:, None]
        for ci in range(n_cells - 1, -1, -1):
            cell = model.cells[ci]
            c = cache["cells"][ci]
            pre = f"cells.{ci}."
            xhat, s = c["xhat"], c["s"]
            grads[pre + "ln.gamma"] += (dy * xhat).sum(axis=0)
            grads[pre + "ln.beta"] += dy.sum(axis=0)
            dx = dy * cell.ln_gamma
            dh_new = (dx - dx.mean(axis=-1, keepdims=True)
                      - xhat * (dx * xhat).mean(axis=-1, keepdims=True)) / s
            dh_new = dh_new + carry[ci]
            g, f, h = c["g"], c["f"], c["h"]
            dg = dh_new * (h - f)
            grads[pre + "log_tau"] += (dg * g * dt * np.exp(-cell.log_tau)).sum(axis=0)
            dh_prev = dh_new * g
            dz = dh_new * (1.0 - g)
            acts = c["mlp"]
            for li in range(len(cell.weights) - 1, -1, -1):
                da = dz * (1.0 - acts[li + 1] ** 2)
                grads[f"{pre}mlp.{li}.W"] += da.T @ acts[li]
                grads[f"{pre}mlp.{li}.b"] += da.sum(axis=0)
                dz = da @ cell.weights[li]
            carry[ci] = dh_prev + dz[:, cell.in_dim:]
            dy = dz[:, : cell.in_dim]
        da_e = dy * (1.0 - cache["enc"] ** 2)
        grads["encoder.W"] += da_e.T @ cache["x"]
        grads["encoder.b"] += da_e.sum(axis=0)
    return loss, terms, grads


def loss_value(model: CfcModel, batch: ToyBatch, w: LossWeights = LossWeights()) -> float:
    outputs, _ = run_sequence(model, batch)
    return composite_loss(outputs, batch, w)[0]


def numerical_gradients(model: CfcModel, batch: ToyBatch, w: LossWeights = LossWeights(),
                        eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences, one coordinate at a time (the oracle)."""
    grads = {}
    for name, p in model.named_parameters():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + eps
            up = loss_value(model, batch, w)
            p[i] = orig - eps
            down = loss_value(model, batch, w)
            p[i] = orig
            g[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


@dataclass
class GradCheckReport:
    seed: int
    max_rel_error: float
    worst_parameter: str
    n_parameters: int


def gradient_check(seed: int, config: CfcConfig = TOY_CONFIG, eps: float = 1e-5,
                   batch_size: int = 3, length: int = 6, w: LossWeights = LossWeights()) -> GradCheckReport:
    """Compare ``backward`` with finite differences on a random toy model and batch."""
    model = CfcModel(CfcConfig(**{**config.__dict__, "seed": seed}))
    rng = np.random.default_rng(seed + 1000)
    # spread the time constants so gates are neither saturated nor trivial
    for cell in model.cells:
        cell.log_tau[:] = rng.uniform(math.log(5.0), math.log(200.0), cell.log_tau.shape)
        cell.ln_gamma[:] = rng.uniform(0.5, 1.5, cell.ln_gamma.shape)
        cell.ln_beta[:] = rng.normal(0.0, 0.1, cell.ln_beta.shape)
    batch = synthetic_batch(rng, batch_size, length, config.input_dim)
    _, _, analytic = backward(model, batch, w)
    numeric = numerical_gradients(model, batch, w, eps)
    worst, worst_name = 0.0, ""
    for name in analytic:
        err = float(np.max(relative_error(analytic[name], numeric[name])))
        if err > worst:
            worst, worst_name = err, name
    n = sum(p.size for p in analytic.values())
    return GradCheckReport(seed, worst, worst_name, n)


# -- synthetic task ----------------------------------------------------------------

def _compact_input(v: float, a: float, hour: float, dt: float, pos: int) -> np.ndarray:
    ang = 2 * math.pi * hour / 24.0
    return np.array([v, a, math.sin(ang), math.cos(ang), min(dt, 3600.0) / 3600.0,
                     math.log1p(dt) / math.log1p(86400.0), min(pos, 20) / 20.0, 1.0])


def synthetic_batch(rng: np.random.Generator, batch_size: int, length: int, input_dim: int,
                    mean_dt: float = 60.0) -> ToyBatch:
    """Two coupled sinusoidal mood trajectories sampled at Poisson event times.

    Targets are read straight off the generator: current state, velocities,
    a stability/confidence pair, nine pattern flags, an intent class and the
    state at the next event.
    """
    n_pat = len(PATTERNS)
    x = np.zeros((batch_size, length, input_dim))
    dts = rng.exponential(mean_dt, (batch_size, length + 1))
    dts[:, 0] = 0.0
    traj = np.zeros((batch_size, length, 6))
    pat = np.zeros((batch_size, length, n_pat))
    intent = np.zeros((batch_size, length), dtype=np.int64)
    fc = np.zeros((batch_size, length, 2))
    for b in range(batch_size):
        w1, w2 = rng.uniform(1 / 900, 1 / 200, 2)
        p1, p2 = rng.uniform(0, 2 * math.pi, 2)
        amp = rng.uniform(0.4, 0.8)
        hour0 = rng.uniform(0, 24)
        times = np.cumsum(dts[b])

        def state(t: float) -> tuple[float, float, float, float]:
            v = amp * math.sin(w1 * t + p1)
            a = 0.6 * amp * math.sin(w2 * t + p2) + 0.3 * v
            dv = amp * w1 * math.cos(w1 * t + p1)
            da = 0.6 * amp * w2 * math.cos(w2 * t + p2) + 0.3 * dv
            return v, a, dv, da

        for k in range(length):
            t = times[k]
            v, a, dv, da = state(t)
            hour = (hour0 + t / 3600.0) % 24.0
            # legacy units per second, normalised by the head's velocity range
            ve = np.clip(dv * 49.5 / VELOCITY_MAX, -1, 1)
            va = np.clip(da * 49.5 / VELOCITY_MAX, -1, 1)
            stability = 1.0 - min(1.0, math.hypot(ve, va))
            confidence = min(1.0, (k + 1) / 10.0)
            traj[b, k] = [(v + 1) / 2, (a + 1) / 2, ve, va, stability, confidence]
            pat[b, k] = [a < -0.1, dv < 0 and da < 0, da > 0, v > 0.2 and a > 0.2,
                         5 <= hour < 10, 7 <= hour < 9 or 17 <= hour < 19, a > 0.4,
                         a < 0 and v > -0.2, hour >= 22 or hour < 5][:n_pat]
            if da * 49.5 > 0.05:
                intent[b, k] = INTENTS.index("energize")
            elif da * 49.5 < -0.05:
                intent[b, k] = INTENTS.index("calm")
            elif a < -0.2 and v > 0:
                intent[b, k] = INTENTS.index("focus")
            else:
                intent[b, k] = INTENTS.index("maintain")
            nv, na, _, _ = state(times[k + 1])
            fc[b, k] = [(nv + 1) / 2, (na + 1) / 2]
            obs_v = v + rng.normal(0, 0.05)
            obs_a = a + rng.normal(0, 0.05)
            if input_dim >= 25:
                x[b, k] = encode_event(EventFeatures("play", (obs_v, obs_a), hour=hour,
                                                     dt=float(dts[b, k]), paf_arousal=obs_a,
                                                     position=k), input_dim)
            else:
                x[b, k] = _compact_input(obs_v, obs_a, hour, float(dts[b, k]), k)[:input_dim]
    return ToyBatch(x, dts[:, :length].copy(), traj, pat, intent, fc)


def augment_time_warp(batch: ToyBatch, ratio: float) -> ToyBatch:
    """Rescale every inter-event interval by ``ratio``; order and count are kept."""
    if ratio <= 0:
        raise ValueError("warp ratio must be positive")
    out = copy.copy(batch)
    out.dt = batch.dt * ratio
    return out


def augment_noise(batch: ToyBatch, sigma: float, rng: np.random.Generator) -> ToyBatch:
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    out = copy.copy(batch)
    out.x = batch.x + (rng.normal(0.0, sigma, batch.x.shape) if sigma > 0 else 0.0)
    return out


# -- optimisation -------------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3, weight_decay: float = 0.01,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p) for k, p in params.items()}
        self.v = {k: np.zeros_like(p) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            update = (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            p -= self.lr * (update + self.weight_decay * p)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: CfcModel
    history: list[dict[str, float]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0


def _evaluate(model: CfcModel, batches: list[ToyBatch], w: LossWeights) -> tuple[float, dict[str, float]]:
    tot, terms = 0.0, {"traj": 0.0, "pattern": 0.0, "intent": 0.0, "forecast": 0.0}
    for b in batches:
        loss, t = composite_loss(run_sequence(model, b)[0], b, w)
        tot += loss
        for k in terms:
            terms[k] += t[k]
    n = len(batches)
    return tot / n, {k: v / n for k, v in terms.items()}


def train(config: TrainConfig = TrainConfig(), seed: int = 0, w: LossWeights = LossWeights(),
          checkpoint_dir: str | Path | None = None, val_losses: list[float] | None = None) -> TrainResult:
    """Train on the synthetic task; deterministic given ``seed``.

    ``val_losses`` replaces the measured validation loss per epoch; it exists so
    early stopping can be exercised without engineering a plateau.
    """
    model = CfcModel(CfcConfig(**{**config.model.__dict__, "seed": seed}))
    rng = np.random.default_rng(seed)
    lo, hi = config.seq_len
    val_rng = np.random.default_rng([seed, 99])
    val = [synthetic_batch(val_rng, config.batch_size, int(val_rng.integers(lo, hi + 1)),
                           config.model.input_dim, config.mean_dt) for _ in range(config.val_batches)]
    params = model.parameters()
    opt = AdamW(params, config.lr, config.weight_decay)
    result = TrainResult(model)
    v0, t0 = _evaluate(model, val, w)
    result.history.append({"epoch": 0, "lr": config.lr, "train_loss": float("nan"),
                           "val_loss": v0, **{f"val_{k}": v for k, v in t0.items()}})
    best, best_params, since_best = v0, {k: p.copy() for k, p in params.items()}, 0
    for epoch in range(1, config.epochs + 1):
        opt.lr = config.lr * 0.5 * (1 + math.cos(math.pi * (epoch - 1) / config.epochs))
        train_loss = 0.0
        for _ in range(config.batches_per_epoch):
            batch = synthetic_batch(rng, config.batch_size, int(rng.integers(lo, hi + 1)),
                                    config.model.input_dim, config.mean_dt)
            batch = augment_time_warp(batch, float(rng.uniform(*config.warp_bounds)))
            batch = augment_noise(batch, config.noise_sigma, rng)
            loss, _, grads = backward(model, batch, w)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}: {loss}")
            clip_gradients(grads, config.clip_norm)
            opt.step(grads)
            train_loss += loss
        vl, vt = _evaluate(model, val, w)
        if not math.isfinite(vl):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        if val_losses is not None:
            vl = val_losses[epoch - 1]
        result.history.append({"epoch": epoch, "lr": opt.lr, "train_loss": train_loss / config.batches_per_epoch,
                               "val_loss": vl, **{f"val_{k}": v for k, v in vt.items()}})
        if checkpoint_dir is not None and epoch % config.checkpoint_every == 0:
            path = Path(checkpoint_dir) / f"epoch_{epoch:04d}.npz"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_weights(model, path)
            result.checkpoints.append(path)
        if vl < best:
            best, since_best, result.best_epoch = vl, 0, epoch
            best_params = {k: p.copy() for k, p in params.items()}
        else:
            since_best += 1
            if since_best >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                result.stopped_early = True
                break
    for k, p in params.items():
        p[...] = best_params[k]
    return result


def history_csv(history: list[dict[str, float]]) -> str:
    cols = ["epoch", "lr", "train_loss", "val_loss", "val_traj", "val_pattern", "val_intent", "val_forecast"]
    lines = [",".join(cols)]
    for row in history:
        lines.append(",".join(f"{row[c]:.6g}" if c != "epoch" else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"

"""Per-field drift evaluation and gated admission of incoming CMBs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .affect import CircumplexPoint
from .cmb import FIELD_ORDER, Cmb, CmbField, FieldName

FRESHNESS_S = 1800.0


class Band(str, Enum):
    REDUNDANT = "redundant"
    ALIGNED = "aligned"
    GUARDED = "guarded"
    REJECTED = "rejected"


@dataclass(frozen=True)
class BandConfig:
    redundant_below: float = 0.05
    aligned_max: float = 0.25
    guarded_max: float = 0.60
    mood_floor: float = 0.25
    # keeps the guarded gate strictly positive at the guarded_max boundary
    guarded_gate_min: float = 1e-3

    def __post_init__(self) -> None:
        if not 0.0 <= self.redundant_below <= self.aligned_max < self.guarded_max <= 2.0:
            raise ValueError("band bounds must satisfy 0 <= redundant < aligned < guarded <= 2")
        if not 0.0 < self.mood_floor <= 1.0:
            raise ValueError("mood_floor must lie in (0, 1]")


@dataclass(frozen=True)
class Anchor:
    embedding: np.ndarray
    stored_at: float
    gate: float = 1.0


class AnchorMemory:
    """Bounded FIFO of admitted embeddings per field. Single writer."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._store: dict[FieldName, deque[Anchor]] = {n: deque(maxlen=capacity) for n in FIELD_ORDER}

    def anchors(self, name: FieldName) -> list[Anchor]:
        return list(self._store[name])

    def __len__(self) -> int:
        return sum(len(d) for d in self._store.values())

    def add(self, name: FieldName, embedding, stored_at: float, gate: float = 1.0) -> None:
        vec = np.asarray(embedding, dtype=np.float64)
        n = np.linalg.norm(vec)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"anchor embedding must be unit norm (got {n})")
        dq = self._store[name]
        if dq and stored_at < dq[-1].stored_at:
            raise ValueError("anchor timestamps must be nondecreasing per field")
        dq.append(Anchor(vec, float(stored_at), float(gate)))

    def seed_from(self, cmb: Cmb, stored_at: float) -> None:
        """Preload every field of ``cmb`` as a full-strength anchor."""
        for name in FIELD_ORDER:
            self.add(name, cmb.fields[name].vector, stored_at)

    def copy(self) -> AnchorMemory:
        out = AnchorMemory(self.capacity)
        for name, dq in self._store.items():
            out._store[name] = deque(dq, maxlen=self.capacity)
        return out


@dataclass(frozen=True)
class FieldWeights:
    weights: dict[FieldName, float] = field(default_factory=lambda: {n: 1.0 for n in FIELD_ORDER})

    def __post_init__(self) -> None:
        w = {n: float(self.weights.get(n, 0.0)) for n in FIELD_ORDER}
        if any(not 0.0 <= x <= 1.0 for x in w.values()):
            raise ValueError("field weights must lie in [0, 1]")
        if not any(x > 0 for x in w.values()):
            raise ValueError("at least one field weight must be positive")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, name: FieldName) -> float:
        return self.weights[name]


@dataclass(frozen=True)
class FieldOutcome:
    drift: float
    band: Band
    gate: float


@dataclass(frozen=True)
class FusionResult:
    fields: dict[FieldName, FieldOutcome]
    drift_total: float
    mood_delivered: bool
    fresh: bool
    mood: CircumplexPoint

    @property
    def admitted(self) -> list[FieldName]:
        return [n for n, o in self.fields.items()
                if o.gate > 0 and o.band in (Band.ALIGNED, Band.GUARDED)]


def field_drift(cmb_field: CmbField, memory: AnchorMemory, name: FieldName) -> float:
    """1 - best cosine against the field's stored anchors; 1 for an empty memory."""
    anchors = memory.anchors(name)
    if not anchors:
        return 1.0
    mat = np.stack([a.embedding for a in anchors])
    cos = float(np.max(mat @ cmb_field.vector))
    return min(2.0, max(0.0, 1.0 - cos))


def classify(drift: float, bands: BandConfig = BandConfig()) -> Band:
    if drift < bands.redundant_below:
        return Band.REDUNDANT
    if drift <= bands.aligned_max:
        return Band.ALIGNED
    if drift <= bands.guarded_max:
        return Band.GUARDED
    return Band.REJECTED


def gate_for(drift: float, band: Band, bands: BandConfig = BandConfig()) -> float:
    if band is Band.ALIGNED:
        return 1.0
    if band is Band.GUARDED:
        ramp = (bands.guarded_max - drift) / (bands.guarded_max - bands.aligned_max)
        return min(1.0, max(bands.guarded_gate_min, ramp))
    return 0.0


def evaluate(cmb: Cmb, memory: AnchorMemory, weights: FieldWeights = FieldWeights(),
             now: float = 0.0, freshness: float = FRESHNESS_S,
             bands: BandConfig = BandConfig()) -> FusionResult:
    fresh = (now - cmb.timestamp) <= freshness
    outcomes = {}
    num = den = 0.0
    for name in FIELD_ORDER:
        d = field_drift(cmb.fields[name], memory, name)
        band = classify(d, bands)
        gate = gate_for(d, band, bands) if fresh else 0.0
        if fresh and name is FieldName.MOOD:
            gate = max(gate, bands.mood_floor)
        outcomes[name] = FieldOutcome(d, band, gate)
        num += weights[name] * d
        den += weights[name]
    return FusionResult(outcomes, num / den, True, fresh, cmb.mood)


def admit(result: FusionResult, cmb: Cmb, memory: AnchorMemory, now: float) -> AnchorMemory:
    """Store aligned and guarded fields (gate > 0) in ``memory``; returns it."""
    if not result.fresh:
        return memory
    for name in result.admitted:
        memory.add(name, cmb.fields[name].vector, now, result.fields[name].gate)
    return memory

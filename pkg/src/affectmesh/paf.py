"""Personal Arousal Function: population prior plus a learned per-listener adjustment.

Adjustments live in (genre, time-of-day band) buckets, each an EMA of signed
behavioral signals, applied in proportion to a sample-count confidence.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from pathlib import Path

ALPHA = 0.15
N_FULL = 20
DELTA_BOUND = 0.5
RECLASS_DEBOUNCE = 20
DRIFT_BAND = (0.1, 0.5)


class TimeBand(str, Enum):
    MORNING = "morning"
    AFTERNOON = "afternoon"
    EVENING = "evening"
    NIGHT = "night"

    @property
    def short(self) -> str:
        return _SHORT[self]

    @classmethod
    def parse(cls, text: str) -> TimeBand:
        t = text.strip().lower()
        for band in cls:
            if t in (band.value, band.short):
                return band
        raise ValueError(f"unknown time band {text!r}")

    @classmethod
    def from_hour(cls, hour: float) -> TimeBand:
        h = hour % 24.0
        if 5 <= h < 12:
            return cls.MORNING
        if 12 <= h < 18:
            return cls.AFTERNOON
        if h >= 18:
            return cls.EVENING
        return cls.NIGHT


_SHORT = {TimeBand.MORNING: "mor", TimeBand.AFTERNOON: "aft", TimeBand.EVENING: "eve", TimeBand.NIGHT: "ngt"}


class SignalKind(str, Enum):
    SKIP_EARLY = "skipEarly"
    SKIP_MID = "skipMid"
    COMPLETED = "completed"
    FAVORITE = "favorite"
    REPEAT = "repeat"
    VOLUME_UP = "volumeUp"
    VOLUME_DOWN = "volumeDown"


@dataclass(frozen=True)
class SignalMapping:
    """Magnitudes of the signed signal per behavior; the sign comes from the declared-vs-prior gap."""

    skip_early: float = 0.35
    skip_mid: float = 0.20
    completed: float = 0.05
    favorite: float = 0.15
    repeat: float = 0.15
    volume_up: float = 0.15
    volume_down: float = 0.15


@dataclass(frozen=True)
class BehavioralSignal:
    kind: SignalKind
    genre: str
    band: TimeBand
    position: int = 0
    mei_a: float = 0.0
    uea_a: float | None = None
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SignalKind(self.kind))
        object.__setattr__(self, "genre", self.genre.lower())
        if not -1.0 <= self.mei_a <= 1.0:
            raise ValueError(f"mei_a {self.mei_a} outside [-1, 1]")
        if self.uea_a is not None and not -1.0 <= self.uea_a <= 1.0:
            raise ValueError(f"uea_a {self.uea_a} outside [-1, 1]")


def skip_kind(seconds_played: float) -> SignalKind | None:
    """Classify a skip by how long the track played; later skips carry no signal."""
    if seconds_played < 15:
        return SignalKind.SKIP_EARLY
    if seconds_played <= 60:
        return SignalKind.SKIP_MID
    return None


def _sign(x: float) -> float:
    return (x > 0) - (x < 0)


def signed_signal(sig: BehavioralSignal, mapping: SignalMapping = SignalMapping()) -> float:
    """Signed arousal signal in [-0.5, 0.5].

    Skips and engagement signals point from the prior towards the declared
    arousal (declared above prior means the prior under-estimated); with no
    declared arousal they carry no direction and give 0. Volume changes are
    unconditional.
    """
    k = sig.kind
    if k is SignalKind.VOLUME_UP:
        return mapping.volume_up
    if k is SignalKind.VOLUME_DOWN:
        return -mapping.volume_down
    if sig.uea_a is None:
        return 0.0
    direction = _sign(round(sig.uea_a - sig.mei_a, 9))
    magnitude = {
        SignalKind.SKIP_EARLY: mapping.skip_early,
        SignalKind.SKIP_MID: mapping.skip_mid,
        SignalKind.COMPLETED: mapping.completed,
        SignalKind.FAVORITE: mapping.favorite,
        SignalKind.REPEAT: mapping.repeat,
    }[k]
    return max(-DELTA_BOUND, min(DELTA_BOUND, direction * magnitude))


@dataclass(frozen=True)
class PafBucket:
    delta: float = 0.0
    n: int = 0
    updated_at: float = 0.0


@dataclass(frozen=True)
class PafProfile:
    buckets: dict[tuple[str, TimeBand], PafBucket] = field(default_factory=dict)
    signals_since_reclass: int = 0

    def bucket(self, genre: str, band: TimeBand) -> PafBucket:
        return self.buckets.get((genre.lower(), band), PafBucket())


def update(profile: PafProfile, genre: str, band: TimeBand, s: float, now: float,
           alpha: float = ALPHA) -> PafProfile:
    if not -DELTA_BOUND <= s <= DELTA_BOUND:
        raise ValueError(f"signal {s} outside [-0.5, 0.5]")
    key = (genre.lower(), band)
    old = profile.buckets.get(key, PafBucket())
    delta = alpha * s + (1.0 - alpha) * old.delta
    delta = max(-DELTA_BOUND, min(DELTA_BOUND, delta))
    buckets = dict(profile.buckets)
    buckets[key] = PafBucket(delta, old.n + 1, now)
    return PafProfile(buckets, profile.signals_since_reclass + 1)


def confidence(n: int) -> float:
    if n < 0:
        raise ValueError("n must be >= 0")
    return min(1.0, n / N_FULL)


def apply(prior: float, genre: str, band: TimeBand, profile: PafProfile) -> float:
    """Personalised arousal: prior + delta * confidence, clamped to [-1, 1]."""
    if not -1.0 <= prior <= 1.0:
        raise ValueError(f"prior {prior} outside [-1, 1]")
    b = profile.buckets.get((genre.lower(), band))
    if b is None:
        return prior
    return max(-1.0, min(1.0, prior + b.delta * confidence(b.n)))


def observe(profile: PafProfile, sig: BehavioralSignal, mapping: SignalMapping = SignalMapping()) -> PafProfile:
    return update(profile, sig.genre, sig.band, signed_signal(sig, mapping), sig.timestamp)


def integrate_drift(profile: PafProfile, genre: str, band: TimeBand, mei_a: float, uea_a: float,
                    now: float) -> PafProfile:
    """Feed moderate declared-vs-prior drift into the EMA; tiny and extreme drift are ignored."""
    gap = uea_a - mei_a
    lo, hi = DRIFT_BAND
    if not lo <= abs(gap) <= hi:
        return profile
    return update(profile, genre, band, max(-DELTA_BOUND, min(DELTA_BOUND, gap)), now)


@dataclass(frozen=True)
class LibraryEntry:
    track_id: str
    genre: str
    prior: float


@dataclass(frozen=True)
class ReclassificationJob:
    created_at: float
    band: TimeBand
    arousal: dict[str, float]


def maybe_reclassify(profile: PafProfile, library: Iterable[LibraryEntry], now: float,
                     band: TimeBand | None = None) -> tuple[PafProfile, ReclassificationJob | None]:
    """Re-score the library once some bucket is at full confidence and 20 new signals arrived.

    Returns the (possibly counter-reset) profile and the job, if one fired.
    """
    saturated = any(confidence(b.n) >= 1.0 for b in profile.buckets.values())
    if not saturated or profile.signals_since_reclass < RECLASS_DEBOUNCE:
        return profile, None
    band = band or TimeBand.from_hour(now / 3600.0)
    scores = {e.track_id: apply(e.prior, e.genre, band, profile) for e in library}
    return replace(profile, signals_since_reclass=0), ReclassificationJob(now, band, scores)


# -- behavioral log replay -------------------------------------------------------

LOG_COLUMNS = ["idx", "genre", "band", "signal", "position", "mei_a", "uea_a"]

# Published profile after replaying the bundled log: (genre, band) -> (delta, conf, n).
REFERENCE_PROFILE: dict[tuple[str, str], tuple[float, float, int]] = {
    ("cantopop", "eve"): (0.0239, 0.05, 1),
    ("classic_rock", "aft"): (0.0481, 0.05, 1),
    ("classical", "aft"): (0.0499, 0.10, 2),
    ("dance", "aft"): (0.1451, 0.05, 1),
    ("dance", "eve"): (0.0075, 0.05, 1),
    ("electronic", "aft"): (-0.1420, 0.05, 1),
    ("electronic", "eve"): (0.0311, 0.30, 6),
    ("hard_rock", "aft"): (-0.1107, 0.10, 2),
    ("house", "aft"): (0.0484, 0.05, 1),
    ("jazz", "aft"): (0.0047, 0.20, 4),
    ("mandopop", "eve"): (0.0191, 0.15, 3),
    ("pop", "aft"): (-0.1788, 1.00, 22),
}


class LogFormatError(ValueError):
    def __init__(self, rows: list[int], message: str):
        super().__init__(f"{message} (rows {', '.join(map(str, rows))})")
        self.rows = rows


def bundled_log_path() -> Path:
    return Path(str(resources.files("affectmesh") / "data" / "behavioral_log.csv"))


def parse_log(text: str) -> list[BehavioralSignal]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    if [h.strip() for h in header] != LOG_COLUMNS:
        raise LogFormatError([1], f"header must be {','.join(LOG_COLUMNS)}")
    out, bad = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or not any(c.strip() for c in rec):
            continue
        try:
            if len(rec) != len(LOG_COLUMNS):
                raise ValueError("wrong column count")
            idx, genre, band, signal, pos, mei, uea = (c.strip() for c in rec)
            out.append(BehavioralSignal(SignalKind(signal), genre, TimeBand.parse(band), int(pos),
                                        float(mei), float(uea) if uea else None, float(idx)))
        except ValueError:
            bad.append(lineno)
    if bad:
        raise LogFormatError(bad, "malformed behavioral log rows")
    return out


@dataclass(frozen=True)
class ReplayRow:
    genre: str
    band: str
    delta: float
    conf: float
    n: int


@dataclass
class ReplayReport:
    rows: list[ReplayRow]
    profile: PafProfile
    flags: list[str]
    matched_keys: int
    missing_keys: list[tuple[str, str]]
    sign_agreement: dict[tuple[str, str], bool]

    def table(self) -> str:
        lines = [f"{'genre':<14}{'band':<6}{'delta_a':>9}{'conf':>7}{'n':>5}"]
        for r in self.rows:
            lines.append(f"{r.genre:<14}{r.band:<6}{r.delta:>+9.4f}{r.conf:>7.2f}{r.n:>5d}")
        return "\n".join(lines)

    def text(self) -> str:
        out = [self.table(), ""]
        out.append(f"buckets: {len(self.rows)}; reference keys matched: {self.matched_keys}/{len(REFERENCE_PROFILE)}")
        for key, ok in sorted(self.sign_agreement.items()):
            out.append(f"calibration sign {key[0]}/{key[1]}: {'agree' if ok else 'disagree'}")
        out.extend(f"flag: {f}" for f in self.flags)
        return "\n".join(out)


def replay(signals: Iterable[BehavioralSignal], mapping: SignalMapping = SignalMapping()) -> ReplayReport:
    profile = PafProfile()
    for sig in signals:
        profile = observe(profile, sig, mapping)
    rows = [ReplayRow(g, b.short, bk.delta, round(confidence(bk.n), 2), bk.n)
            for (g, b), bk in sorted(profile.buckets.items(), key=lambda kv: (kv[0][0], kv[0][1].short))]
    keys = {(r.genre, r.band) for r in rows}
    flags = [f"bucket {g}/{b} has no counterpart in the reference profile"
             for g, b in sorted(keys - set(REFERENCE_PROFILE))]
    missing = sorted(set(REFERENCE_PROFILE) - keys)
    flags += [f"reference bucket {g}/{b} not produced" for g, b in missing]
    by_key = {(r.genre, r.band): r for r in rows}
    sign = {}
    for key, (ref_delta, _, ref_n) in REFERENCE_PROFILE.items():
        if ref_n >= 4 and key in by_key:
            sign[key] = math.copysign(1, by_key[key].delta) == math.copysign(1, ref_delta)
    return ReplayReport(rows, profile, flags, len(keys & set(REFERENCE_PROFILE)), missing, sign)

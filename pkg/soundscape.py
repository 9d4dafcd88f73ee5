"""
Serialisable soundscape recipes.

A `SoundscapeSpec` pins every random decision taken for one clip (sources,
excerpts, onsets, gains, RIR assignments) so any suite can be re-rendered
from its specs alone. `GenerationProfile` holds the distributions specs are
sampled from. Both round-trip through JSON via pydantic.
"""
from __future__ import annotations

import hashlib
import math
from enum import Enum
from os import PathLike
from pathlib import Path

import numpy as np
from pydantic import (BaseModel, ConfigDict, Field, ValidationError,
                      field_validator, model_validator)

from errors import ProfileError

NON_TARGET = "NON_TARGET"
BACKGROUND_LEVEL_DB = -30.0
DISTRIBUTION_TOLERANCE = 1e-9
NO_COOCCURRENCE = "none"


class ReverbMode(str, Enum):
    NONE = "none"
    SHORT = "short"
    LONG = "long"

    @property
    def suite_label(self) -> str:
        return "no" if self is ReverbMode.NONE else self.value


class ConditionTag(BaseModel):
    """One cell of the TNTSNR x reverberation grid. `tntsnr_db=None` is infinite."""

    model_config = ConfigDict(frozen=True)

    tntsnr_db: float | None = None
    reverb: ReverbMode = ReverbMode.NONE

    @field_validator("tntsnr_db")
    @classmethod
    def _finite(cls, v: float | None) -> float | None:
        if v is not None and math.isinf(v):
            return None
        if v is not None and math.isnan(v):
            raise ValueError("tntsnr_db must not be NaN")
        return v

    @property
    def is_reference(self) -> bool:
        return self.tntsnr_db is None and self.reverb is ReverbMode.NONE

    @property
    def tntsnr_label(self) -> str:
        if self.tntsnr_db is None:
            return "inf"
        return f"{self.tntsnr_db:g}"

    @property
    def suite_name(self) -> str:
        """Suite name as used on the command line, e.g. TNTSNR_15_short_reverb."""
        return f"TNTSNR_{self.tntsnr_label}_{self.reverb.suite_label}_reverb"


class RirRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    room_id: str
    index: int = Field(ge=0)


class BackgroundPlacement(BaseModel):
    model_config = ConfigDict(frozen=True)

    source_id: str
    start: float = Field(ge=0.0)
    level_db: float = BACKGROUND_LEVEL_DB
    gain: float

    @field_validator("gain")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("gain must be positive and finite")
        return v


class PlacedEvent(BaseModel):
    """One event on the clip timeline: which excerpt, where, and how loud."""

    model_config = ConfigDict(frozen=True)

    source_id: str
    label: str
    onset: float = Field(ge=0.0)
    trim_start: float = Field(ge=0.0)
    trim_length: float = Field(gt=0.0)
    gain: float
    snr_db: float
    rir: RirRef | None = None

    @field_validator("gain")
    @classmethod
    def _positive(cls, v: float) -> float:
        if not (v > 0 and math.isfinite(v)):
            raise ValueError("gain must be positive and finite")
        return v

    @property
    def is_target(self) -> bool:
        return self.label != NON_TARGET


class SoundscapeSpec(BaseModel):
    """Fully resolved, seedable recipe for one clip."""

    model_config = ConfigDict(frozen=True)

    clip_id: str
    seed: int = Field(ge=0, lt=2 ** 64)
    duration: float = Field(gt=0.0)
    sample_rate: int = Field(gt=0)
    background: BackgroundPlacement
    events: tuple[PlacedEvent, ...] = ()
    condition: ConditionTag = ConditionTag()
    renormalize_wet: bool = True
    background_rir: RirRef | None = None

    @model_validator(mode="after")
    def _onsets_inside(self) -> "SoundscapeSpec":
        for event in self.events:
            if event.onset >= self.duration:
                raise ValueError(
                    f"event onset {event.onset} outside [0, {self.duration})")
        return self

    @property
    def target_events(self) -> tuple[PlacedEvent, ...]:
        return tuple(e for e in self.events if e.is_target)

    @property
    def non_target_events(self) -> tuple[PlacedEvent, ...]:
        return tuple(e for e in self.events if not e.is_target)


def _check_distribution(name: str, weights: dict) -> None:
    if any(w < 0 for w in weights.values()):
        raise ValueError(f"{name}: negative weight")
    total = sum(weights.values())
    if abs(total - 1.0) > DISTRIBUTION_TOLERANCE:
        raise ValueError(f"{name}: weights sum to {total!r}, expected 1")


class GenerationProfile(BaseModel):
    """Distributions a generic soundscape is sampled from.

    `class_weights` picks the anchor class of a clip, `events_per_clip[c]`
    the number of events of class `c`, and `cooccurrence[c]` which other
    class (or "none") joins the anchor class in the same clip.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    description: str = ""
    clip_duration: float = Field(default=10.0, gt=0.0)
    vocabulary: list[str]
    class_weights: dict[str, float]
    events_per_clip: dict[str, dict[int, float]]
    cooccurrence: dict[str, dict[str, float]]
    fbsnr_range: tuple[float, float] = (6.0, 30.0)
    max_event_duration: float | None = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _validate(self) -> "GenerationProfile":
        low, high = self.fbsnr_range
        if low > high:
            raise ValueError("fbsnr_range low must be <= high")
        vocab = set(self.vocabulary)
        if NON_TARGET in vocab or NO_COOCCURRENCE in vocab:
            raise ValueError("vocabulary uses a reserved label")

        unknown = set(self.class_weights) - vocab
        if unknown:
            raise ValueError(f"class_weights: labels outside vocabulary {sorted(unknown)}")
        _check_distribution("class_weights", self.class_weights)

        for label, weight in self.class_weights.items():
            if weight > 0 and label not in self.events_per_clip:
                raise ValueError(f"events_per_clip: missing class '{label}'")
        for label, dist in self.events_per_clip.items():
            if label not in vocab:
                raise ValueError(f"events_per_clip: label outside vocabulary '{label}'")
            if any(count < 1 for count in dist):
                raise ValueError(f"events_per_clip[{label}]: counts must be >= 1")
            _check_distribution(f"events_per_clip[{label}]", dist)

        for label, dist in self.cooccurrence.items():
            if label not in vocab:
                raise ValueError(f"cooccurrence: label outside vocabulary '{label}'")
            others = set(dist) - vocab - {NO_COOCCURRENCE}
            if others:
                raise ValueError(f"cooccurrence[{label}]: unknown labels {sorted(others)}")
            for other, weight in dist.items():
                if other != NO_COOCCURRENCE and weight > 0 and other not in self.events_per_clip:
                    raise ValueError(f"events_per_clip: missing class '{other}'")
            _check_distribution(f"cooccurrence[{label}]", dist)
        return self

    @property
    def profile_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()

    def expected_events_per_clip(self) -> float:
        """Closed-form expectation of the per-clip event count."""
        def mean_count(label: str) -> float:
            return sum(k * p for k, p in self.events_per_clip[label].items())

        total = 0.0
        for anchor, weight in self.class_weights.items():
            if weight == 0:
                continue
            extra = sum(p * mean_count(other)
                        for other, p in self.cooccurrence.get(anchor, {}).items()
                        if other != NO_COOCCURRENCE and p > 0)
            total += weight * (mean_count(anchor) + extra)
        return total


def load_profile(path: str | PathLike) -> GenerationProfile:
    path = Path(path)
    if not path.is_file():
        raise ProfileError(f"missing profile file: {path}")
    try:
        return GenerationProfile.model_validate_json(path.read_bytes())
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'profile'}: {err['msg']}"
            for err in e.errors())
        raise ProfileError(f"{path}: {details}") from e


def _key_part(part: int | str) -> int:
    if isinstance(part, int):
        return part
    return int.from_bytes(hashlib.sha256(part.encode("utf-8")).digest()[:8], "little")


def derive_seed(master_seed: int, *key: int | str) -> int:
    """Split a master seed into an independent 64-bit child seed.

    The child is `SeedSequence(master_seed, spawn_key=key)`'s first 64-bit
    word; string key parts are mapped through SHA-256 so the split is
    stable across platforms and Python versions.
    """
    sequence = np.random.SeedSequence(
        entropy=master_seed, spawn_key=tuple(_key_part(k) for k in key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator: portable, bit-exact across platforms."""
    return np.random.Generator(np.random.PCG64(seed))

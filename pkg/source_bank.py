"""
Source bank: the isolated events, backgrounds and room impulse responses
every suite is built from.

A bank is described by one JSON manifest listing each asset's role, class
and path relative to the manifest. Loading decodes every file at the bank's
single sample rate and validates it; the loaded `SourceBank` is immutable
and safe to share across render threads.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Literal, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from audio_utils import clip_duration, read_wav, validate_samples
from errors import BankError, SynthError

logger = logging.getLogger("scbench.bank")

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_VOCABULARY_PATH = Path(__file__).resolve().parent / "config" / "desed_vocabulary.json"
MIN_EVENT_SECONDS = 0.001
MIN_RIRS_PER_ROOM = 2

Role = Literal["target", "non_target", "background"]


class BankManifest(BaseModel):
    """On-disk bank description. Paths are relative to the manifest file."""

    model_config = ConfigDict(extra="forbid")

    sample_rate: int = Field(default=DEFAULT_SAMPLE_RATE, gt=0)
    vocabulary: list[str] | None = None
    vocabulary_file: str | None = None
    targets: dict[str, list[str]]
    non_targets: list[str] = Field(default_factory=list)
    backgrounds: list[str] = Field(default_factory=list)
    rooms: dict[str, list[str]] = Field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class SourceClip:
    id: str
    samples: np.ndarray
    duration: float
    role: Role
    label: str | None = None


@dataclass(frozen=True, eq=False)
class Rir:
    id: str
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.samples.size == 0:
            raise BankError("empty RIR", self.id)
        if not np.any(self.samples != 0):
            raise BankError("all-zero RIR", self.id)


@dataclass(frozen=True, eq=False)
class RoomSet:
    room_id: str
    rirs: tuple[Rir, ...]

    def __post_init__(self):
        if len(self.rirs) < MIN_RIRS_PER_ROOM:
            raise BankError(
                f"room needs at least {MIN_RIRS_PER_ROOM} RIRs, has {len(self.rirs)}",
                self.room_id)


@dataclass(frozen=True, eq=False)
class SourceBank:
    """Validated, read-only collection of audio assets at one sample rate."""

    vocabulary: tuple[str, ...]
    targets: Mapping[str, tuple[SourceClip, ...]]
    non_targets: tuple[SourceClip, ...]
    backgrounds: tuple[SourceClip, ...]
    rooms: tuple[RoomSet, ...]
    sample_rate: int
    manifest_hash: str = ""
    _index: dict[str, SourceClip] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        index = self._index
        for clips in (*self.targets.values(), self.non_targets, self.backgrounds):
            for clip in clips:
                index.setdefault(clip.id, clip)

    def clip(self, source_id: str) -> SourceClip:
        try:
            return self._index[source_id]
        except KeyError:
            raise SynthError(f"missing source id: {source_id}") from None

    def room(self, room_id: str) -> RoomSet:
        for room in self.rooms:
            if room.room_id == room_id:
                return room
        raise SynthError(f"missing room id: {room_id}")

    @property
    def target_count(self) -> int:
        return sum(len(clips) for clips in self.targets.values())


def load_vocabulary(path: str | PathLike = DEFAULT_VOCABULARY_PATH) -> list[str]:
    """Read a vocabulary file: a JSON list of labels or {"labels": [...]}."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise BankError("missing vocabulary file", path) from e
    except (OSError, UnicodeDecodeError) as e:
        raise BankError("unreadable vocabulary file", path) from e
    except json.JSONDecodeError as e:
        raise BankError(f"invalid vocabulary JSON ({e})", path) from e

    labels = data.get("labels") if isinstance(data, dict) else data
    if not labels or not all(isinstance(label, str) for label in labels):
        raise BankError("vocabulary must be a non-empty list of labels", path)
    if len(set(labels)) != len(labels):
        raise BankError("duplicate labels in vocabulary", path)
    return list(labels)


def _load_clip(base: Path, rel_path: str, role: Role, sample_rate: int,
               label: str | None = None) -> SourceClip:
    path = base / rel_path
    samples, sr = read_wav(path)
    if sr != sample_rate:
        raise BankError(
            f"sample-rate mismatch ({sr} Hz, bank is {sample_rate} Hz)", path)
    validate_samples(samples, path)
    duration = clip_duration(samples, sr)
    if role != "background" and duration < MIN_EVENT_SECONDS:
        raise BankError("clip shorter than 1 ms", path)
    samples.flags.writeable = False
    return SourceClip(id=rel_path, samples=samples, duration=duration,
                      role=role, label=label)


def _load_rir(base: Path, rel_path: str, sample_rate: int) -> Rir:
    path = base / rel_path
    samples, sr = read_wav(path)
    if sr != sample_rate:
        raise BankError(
            f"sample-rate mismatch ({sr} Hz, bank is {sample_rate} Hz)", path)
    validate_samples(samples, path, check_peak=False)
    samples.flags.writeable = False
    return Rir(id=rel_path, samples=samples, sample_rate=sr)


def load_bank(manifest_path: str | PathLike,
              vocabulary: list[str] | None = None) -> SourceBank:
    """Load and validate a source bank from its JSON manifest.

    The result is a pure function of the manifest and the referenced file
    bytes. Every failure is a BankError naming the offending path.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise BankError("missing file", manifest_path)

    raw = manifest_path.read_bytes()
    try:
        manifest = BankManifest.model_validate_json(raw)
    except ValidationError as e:
        fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
        raise BankError(f"invalid manifest field(s) {fields}", manifest_path) from e

    base = manifest_path.parent
    if vocabulary is None:
        if manifest.vocabulary is not None:
            vocabulary = manifest.vocabulary
        elif manifest.vocabulary_file is not None:
            vocabulary = load_vocabulary(base / manifest.vocabulary_file)
        else:
            vocabulary = load_vocabulary()

    for label in vocabulary:
        if not manifest.targets.get(label):
            raise BankError(f"empty class '{label}'", manifest_path)
    extra = sorted(set(manifest.targets) - set(vocabulary))
    if extra:
        raise BankError(f"labels outside vocabulary {extra}", manifest_path)
    if not manifest.backgrounds:
        raise BankError("backgrounds empty", manifest_path)

    seen: set[str] = set()
    all_paths = [p for paths in manifest.targets.values() for p in paths]
    all_paths += manifest.non_targets + manifest.backgrounds
    for paths in manifest.rooms.values():
        all_paths += paths
    for rel_path in all_paths:
        if rel_path in seen:
            raise BankError("duplicate source path", base / rel_path)
        seen.add(rel_path)

    sr = manifest.sample_rate
    targets = {
        label: tuple(_load_clip(base, p, "target", sr, label)
                     for p in manifest.targets[label])
        for label in vocabulary
    }
    non_targets = tuple(_load_clip(base, p, "non_target", sr)
                        for p in manifest.non_targets)
    backgrounds = tuple(_load_clip(base, p, "background", sr)
                        for p in manifest.backgrounds)
    rooms = tuple(
        RoomSet(room_id=room_id,
                rirs=tuple(_load_rir(base, p, sr) for p in paths))
        for room_id, paths in manifest.rooms.items()
    )

    bank = SourceBank(
        vocabulary=tuple(vocabulary),
        targets=targets,
        non_targets=non_targets,
        backgrounds=backgrounds,
        rooms=rooms,
        sample_rate=sr,
        manifest_hash=hashlib.sha256(raw).hexdigest(),
    )
    logger.info("Loaded bank %s: %d classes, %d targets, %d non-targets, "
                "%d backgrounds, %d rooms", manifest_path.name,
                len(bank.vocabulary), bank.target_count,
                len(non_targets), len(backgrounds), len(rooms))
    return bank

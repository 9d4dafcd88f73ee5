"""
Soundscape synthesis: sample recipes from a generation profile and render
them into a waveform plus strong reference annotations.

Levels are RMS over each source's active support. The background is levelled
to a fixed reference (-30 dBFS RMS) and every event gain is computed against
it, so an event's level is always `background level + snr_db`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from errors import ProfileError, SynthError
from metric import EventAnnotation
from reverb import convolve, truncate_rir
from soundscape import (BACKGROUND_LEVEL_DB, NO_COOCCURRENCE, NON_TARGET,
                        BackgroundPlacement, GenerationProfile, PlacedEvent,
                        ReverbMode, RirRef, SoundscapeSpec, derive_seed,
                        make_rng)
from source_bank import Rir, SourceBank, SourceClip

logger = logging.getLogger("scbench.synth")

SILENT_LEVEL_DB = -math.inf
NON_TARGET_COUNT_RANGE = (1, 3)

__all__ = [
    "SILENT_LEVEL_DB", "RenderedClip", "rms_level", "gain_for_snr", "derive_seed",
    "sample_background", "sample_event", "sample_spec", "spec_annotations", "render",
    "apply_tntsnr",
]


@dataclass(eq=False)
class RenderedClip:
    waveform: np.ndarray
    annotations: list[EventAnnotation]
    master_gain_db: float = 0.0
    stems: dict[str, np.ndarray] | None = None


def rms_level(samples: np.ndarray) -> float:
    """20*log10(RMS). All-zero input returns SILENT_LEVEL_DB (-inf), never NaN."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise ValueError("rms_level of empty signal")
    mean_square = float(np.mean(samples ** 2))
    if mean_square == 0.0:
        return SILENT_LEVEL_DB
    return 10.0 * math.log10(mean_square)


def gain_for_snr(event: np.ndarray, background: np.ndarray, target_snr: float) -> float:
    """Linear gain putting the event's RMS level `target_snr` dB above the background's."""
    event_level = rms_level(event)
    background_level = rms_level(background)
    if event_level == SILENT_LEVEL_DB or background_level == SILENT_LEVEL_DB:
        raise SynthError("silent source")
    return 10.0 ** ((target_snr - (event_level - background_level)) / 20.0)


def _n_samples(seconds: float, sample_rate: int) -> int:
    return int(round(seconds * sample_rate))


def excerpt(clip: SourceClip, start: float, length: float, sample_rate: int) -> np.ndarray:
    first = _n_samples(start, sample_rate)
    count = _n_samples(length, sample_rate)
    if count <= 0 or first + count > clip.samples.size:
        raise SynthError(f"excerpt [{start}, {start + length}] s outside source {clip.id}")
    return clip.samples[first:first + count]


def background_segment(clip: SourceClip, start: float, n_samples: int,
                       sample_rate: int) -> np.ndarray:
    """`n_samples` of the background from `start`, looping short backgrounds."""
    first = _n_samples(start, sample_rate)
    if first + n_samples <= clip.samples.size:
        return clip.samples[first:first + n_samples]
    index = (first + np.arange(n_samples)) % clip.samples.size
    return clip.samples[index]


def sample_background(rng: np.random.Generator, bank: SourceBank,
                      duration: float) -> BackgroundPlacement:
    clip = bank.backgrounds[int(rng.integers(len(bank.backgrounds)))]
    n_samples = _n_samples(duration, bank.sample_rate)
    slack = clip.samples.size - n_samples
    first = int(rng.integers(0, slack + 1)) if slack > 0 else 0
    start = first / bank.sample_rate
    segment = background_segment(clip, start, n_samples, bank.sample_rate)
    level = rms_level(segment)
    if level == SILENT_LEVEL_DB:
        raise SynthError(f"silent source: background {clip.id}")
    gain = 10.0 ** ((BACKGROUND_LEVEL_DB - level) / 20.0)
    return BackgroundPlacement(source_id=clip.id, start=start,
                               level_db=BACKGROUND_LEVEL_DB, gain=gain)


def _sample_excerpt(rng: np.random.Generator, clip: SourceClip, max_length: float,
                    sample_rate: int) -> tuple[float, float]:
    count = min(clip.samples.size, _n_samples(max_length, sample_rate))
    first = int(rng.integers(0, clip.samples.size - count + 1))
    return first / sample_rate, count / sample_rate


def sample_onset(rng: np.random.Generator, low: float, high: float) -> float:
    """Onset on the millisecond grid, uniform over [low, high)."""
    low_ms = int(round(low * 1000))
    high_ms = max(int(round(high * 1000)), low_ms + 1)
    return int(rng.integers(low_ms, high_ms)) / 1000.0


def sample_event(rng: np.random.Generator, bank: SourceBank, label: str, onset: float,
                 snr_db: float, background_level_db: float,
                 max_length: float) -> PlacedEvent:
    """Pick a source of `label`, an excerpt of it, and the gain for `snr_db`."""
    clips = bank.targets[label]
    clip = clips[int(rng.integers(len(clips)))]
    trim_start, trim_length = _sample_excerpt(rng, clip, max_length, bank.sample_rate)
    dry = excerpt(clip, trim_start, trim_length, bank.sample_rate)
    event_level = rms_level(dry)
    if event_level == SILENT_LEVEL_DB:
        raise SynthError(f"silent source: {clip.id}")
    gain = 10.0 ** ((background_level_db + snr_db - event_level) / 20.0)
    return PlacedEvent(source_id=clip.id, label=label, onset=onset,
                       trim_start=trim_start, trim_length=trim_length,
                       gain=gain, snr_db=snr_db)


def _draw(rng: np.random.Generator, weights: dict):
    keys = list(weights)
    p = np.array([weights[k] for k in keys], dtype=np.float64)
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


def sample_spec(profile: GenerationProfile, bank: SourceBank, seed: int,
                clip_id: str = "clip") -> SoundscapeSpec:
    """Draw one clip recipe. Deterministic in (profile, bank manifest, seed)."""
    missing = [label for label in profile.vocabulary if label not in bank.targets]
    if missing:
        raise ProfileError(f"profile classes absent from bank: {missing}")

    rng = make_rng(seed)
    duration = profile.clip_duration
    max_length = profile.max_event_duration or duration
    background = sample_background(rng, bank, duration)

    anchor = _draw(rng, profile.class_weights)
    labels = [anchor] * _draw(rng, profile.events_per_clip[anchor])
    other = _draw(rng, profile.cooccurrence.get(anchor, {NO_COOCCURRENCE: 1.0}))
    if other != NO_COOCCURRENCE:
        labels += [other] * _draw(rng, profile.events_per_clip[other])

    low, high = profile.fbsnr_range
    events = []
    for label in labels:
        onset = sample_onset(rng, 0.0, duration)
        snr_db = float(rng.uniform(low, high))
        events.append(sample_event(rng, bank, label, onset, snr_db,
                                   background.level_db, max_length))

    return SoundscapeSpec(clip_id=clip_id, seed=seed, duration=duration,
                          sample_rate=bank.sample_rate, background=background,
                          events=tuple(events))


def _rir_for(bank: SourceBank, spec: SoundscapeSpec, ref: RirRef) -> Rir:
    room = bank.room(ref.room_id)
    if ref.index >= len(room.rirs):
        raise SynthError(f"RIR index {ref.index} out of range for room {ref.room_id}")
    return truncate_rir(room.rirs[ref.index], spec.condition.reverb)


def spec_annotations(spec: SoundscapeSpec) -> list[EventAnnotation]:
    """Reference labels of a clip: target events only, dry timings, offsets clamped."""
    return sorted(
        (EventAnnotation.from_seconds(
            spec.clip_id, event.label, event.onset,
            min(event.onset + event.trim_length, spec.duration))
         for event in spec.target_events),
        key=EventAnnotation.sort_key)


def render(spec: SoundscapeSpec, bank: SourceBank, keep_stems: bool = False) -> RenderedClip:
    """Mix background and events into one waveform with reference annotations.

    If the mixture peaks above 1.0 a single common attenuation is applied,
    preserving every level difference, and recorded in `master_gain_db`.
    """
    if spec.sample_rate != bank.sample_rate:
        raise SynthError(
            f"{spec.clip_id}: spec is {spec.sample_rate} Hz, bank is {bank.sample_rate} Hz")
    sr = spec.sample_rate
    n_samples = _n_samples(spec.duration, sr)
    reverberant = spec.condition.reverb is not ReverbMode.NONE

    bg_clip = bank.clip(spec.background.source_id)
    background = background_segment(bg_clip, spec.background.start, n_samples, sr)
    background = background * spec.background.gain
    if reverberant and spec.background_rir is not None:
        rir = _rir_for(bank, spec, spec.background_rir)
        background = convolve(background, rir, sr, renormalize=spec.renormalize_wet)[:n_samples]

    mix = background.copy()
    stems = {"background": background} if keep_stems else None

    for k, event in enumerate(spec.events):
        if event.onset < 0 or event.onset >= spec.duration:
            raise SynthError(f"{spec.clip_id}: event {k} onset outside the clip")
        dry = excerpt(bank.clip(event.source_id), event.trim_start, event.trim_length, sr)
        if reverberant:
            if event.rir is None:
                raise SynthError(f"{spec.clip_id}: event {k} has no RIR assigned")
            source = convolve(dry, _rir_for(bank, spec, event.rir), sr,
                              renormalize=spec.renormalize_wet)
        else:
            source = dry
        source = source * event.gain

        first = _n_samples(event.onset, sr)
        last = min(n_samples, first + source.size)
        mix[first:last] += source[:last - first]
        if stems is not None:
            stem = np.zeros(n_samples)
            stem[first:last] = source[:last - first]
            stems[f"event_{k:03d}_{event.label}"] = stem

    master = 1.0
    peak = float(np.max(np.abs(mix))) if mix.size else 0.0
    if peak > 1.0:
        master = 1.0 / peak
        mix *= master
        np.clip(mix, -1.0, 1.0, out=mix)
        if stems is not None:
            stems = {name: stem * master for name, stem in stems.items()}
        logger.debug("%s: peak %.3f, master attenuation %.2f dB",
                     spec.clip_id, peak, 20.0 * math.log10(master))

    return RenderedClip(waveform=mix, annotations=spec_annotations(spec),
                        master_gain_db=20.0 * math.log10(master), stems=stems)


def apply_tntsnr(spec: SoundscapeSpec, non_target_pool: Sequence[SourceClip],
                 tntsnr: float | None, seed: int,
                 count_range: tuple[int, int] = NON_TARGET_COUNT_RANGE) -> SoundscapeSpec:
    """Add non-target events `tntsnr` dB below the clip's mean target level.

    Infinite (or None) returns the spec unchanged. Target levels come from
    the spec itself (background level + snr_db), so the pool is the only
    audio needed. Non-target events are never annotated.
    """
    if tntsnr is None or math.isinf(tntsnr):
        return spec

    targets = spec.target_events
    if not targets:
        raise SynthError(f"{spec.clip_id}: finite TNTSNR needs at least one target event")
    if not non_target_pool:
        raise SynthError("non-target pool empty")

    rng = make_rng(seed)
    target_mean = float(np.mean([spec.background.level_db + e.snr_db for e in targets]))
    level_db = target_mean - tntsnr
    low, high = count_range

    added = []
    for _ in range(int(rng.integers(low, high + 1))):
        clip = non_target_pool[int(rng.integers(len(non_target_pool)))]
        trim_start, trim_length = _sample_excerpt(rng, clip, spec.duration, spec.sample_rate)
        onset = sample_onset(rng, 0.0, spec.duration)
        event_level = rms_level(excerpt(clip, trim_start, trim_length, spec.sample_rate))
        if event_level == SILENT_LEVEL_DB:
            raise SynthError(f"silent source: {clip.id}")
        added.append(PlacedEvent(
            source_id=clip.id, label=NON_TARGET, onset=onset,
            trim_start=trim_start, trim_length=trim_length,
            gain=10.0 ** ((level_db - event_level) / 20.0),
            snr_db=level_db - spec.background.level_db))

    condition = spec.condition.model_copy(update={"tntsnr_db": float(tntsnr)})
    return spec.model_copy(update={"events": spec.events + tuple(added),
                                   "condition": condition})

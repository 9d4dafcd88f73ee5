"""
Evaluation suite protocols and their on-disk layout.

Builders return a `Suite`: the ordered clip recipes plus provenance. Specs
are cheap to sample; audio is only produced by `write_suite`, which renders
clips in parallel and commits results in clip-index order, so the worker
count never changes a byte of output.

Suite directory layout::

    <suite>/audio/<clip_id>.wav
    <suite>/specs/<clip_id>.json
    <suite>/metadata/<suite>.tsv
    <suite>/manifest.json        (written last)
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import io
import logging
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Callable, Sequence, TypeVar

from pydantic import BaseModel, ConfigDict, ValidationError

from audio_utils import FLOAT, PCM_16, WavSubtype, write_wav
from errors import ConfigError, SchemaError, SynthError
from metric import AnnotationSet, read_annotations, write_annotations
from response import SuiteSummary
from reverb import assign_rirs_batch
from soundscape import (ConditionTag, GenerationProfile, ReverbMode, SoundscapeSpec,
                        derive_seed, make_rng)
from source_bank import RoomSet, SourceBank, SourceClip
from synth import (apply_tntsnr, render, sample_background, sample_event,
                   sample_onset, sample_spec, spec_annotations)

logger = logging.getLogger("scbench.suites")

REF = "ref"
LONG_CLIPS = "60s"
SINGLE = "single"
ONSET_WINDOWS = {
    "500ms": (0.25, 0.75),
    "5500ms": (5.25, 5.75),
    "9500ms": (9.25, 9.75),
}
ONSET_WINDOW_WIDTH_MS = 500
TNTSNR_LEVELS: tuple[float | None, ...] = (None, 15.0, 0.0)
REVERB_MODES = (ReverbMode.NONE, ReverbMode.SHORT, ReverbMode.LONG)
GRID_SUITES = tuple(ConditionTag(tntsnr_db=t, reverb=r).suite_name
                    for t in TNTSNR_LEVELS for r in REVERB_MODES)
SUITE_NAMES = (REF, LONG_CLIPS, *ONSET_WINDOWS, SINGLE, *GRID_SUITES)

PROTOCOL_COUNTS = {REF: 828, LONG_CLIPS: 152, "onset": 1000, SINGLE: 1000}
LONG_CLIP_DURATION = 60.0
DEFAULT_CLIP_DURATION = 10.0
DEFAULT_FBSNR_RANGE = (6.0, 30.0)
MANIFEST_NAME = "manifest.json"

T = TypeVar("T")


@dataclass
class Suite:
    name: str
    specs: list[SoundscapeSpec]
    master_seed: int
    bank_hash: str
    profile_hash: str = ""
    condition: ConditionTag = field(default_factory=ConditionTag)

    @property
    def clip_count(self) -> int:
        return len(self.specs)

    @property
    def audio_seconds(self) -> float:
        return sum(spec.duration for spec in self.specs)

    def annotations(self) -> AnnotationSet:
        return AnnotationSet([a for spec in self.specs for a in spec_annotations(spec)],
                             [spec.clip_id for spec in self.specs])


class ClipEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    clip_id: str
    spec: str
    audio: str
    audio_sha256: str


class SuiteManifest(BaseModel):
    """Provenance of a written suite; enough to re-render it byte-exactly."""

    model_config = ConfigDict(frozen=True)

    suite: str
    clip_count: int
    master_seed: int
    profile_hash: str
    bank_manifest_hash: str
    condition: ConditionTag
    sample_rate: int
    audio_subtype: str
    vocabulary: list[str]
    annotations: str
    clips: list[ClipEntry]


def clip_name(index: int, count: int) -> str:
    return f"{index:0{max(4, len(str(count - 1)))}d}"


def parallel_map(func: Callable[[int], T], count: int, workers: int = 1) -> list[T]:
    """Evaluate func(0..count-1) on a thread pool; results keyed by index."""
    if workers <= 1 or count <= 1:
        return [func(i) for i in range(count)]

    results: list = [None] * count
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
        future_to_index = {ex.submit(func, i): i for i in range(count)}
        for fut in concurrent.futures.as_completed(future_to_index):
            results[future_to_index[fut]] = fut.result()
    return results


def build_ref(profile: GenerationProfile, bank: SourceBank, seed: int,
              n: int = PROTOCOL_COUNTS[REF], workers: int = 1,
              name: str = REF) -> Suite:
    """Reference suite: profile-driven clips, no reverb, no non-target events."""
    if n < 1:
        raise ConfigError(f"{name}: n must be >= 1")
    specs = parallel_map(
        lambda i: sample_spec(profile, bank, derive_seed(seed, name, i), clip_name(i, n)),
        n, workers)
    logger.info("Sampled %d specs for suite %s", n, name)
    return Suite(name=name, specs=specs, master_seed=seed,
                 bank_hash=bank.manifest_hash, profile_hash=profile.profile_hash)


def build_60s(profile: GenerationProfile, bank: SourceBank, seed: int,
              n: int = PROTOCOL_COUNTS[LONG_CLIPS], workers: int = 1) -> Suite:
    """60 s clips with ref's per-clip event-count and class distributions.

    Event excerpts keep ref's maximum length, so event density over time
    drops by the duration ratio.
    """
    long_profile = profile.model_copy(update={
        "clip_duration": LONG_CLIP_DURATION,
        "max_event_duration": profile.max_event_duration or profile.clip_duration,
    })
    suite = build_ref(long_profile, bank, seed, n=n, workers=workers, name=LONG_CLIPS)
    suite.profile_hash = profile.profile_hash
    return suite


def build_onset_variants(bank: SourceBank, seed: int,
                         n: int = PROTOCOL_COUNTS["onset"],
                         vocabulary: Sequence[str] | None = None,
                         clip_duration: float = DEFAULT_CLIP_DURATION,
                         fbsnr_range: tuple[float, float] = DEFAULT_FBSNR_RANGE,
                         workers: int = 1) -> dict[str, Suite]:
    """Three aligned single-event suites differing only in the event onset.

    Clip i draws one excerpt, gain and background, and one offset in
    [0, 0.5] s that is added to each variant's window start.
    """
    if n < 1:
        raise ConfigError("onset variants: n must be >= 1")
    vocabulary = list(vocabulary or bank.vocabulary)
    low, high = fbsnr_range

    def base_spec(i: int) -> tuple[SoundscapeSpec, int]:
        clip_seed = derive_seed(seed, "onset", i)
        rng = make_rng(clip_seed)
        background = sample_background(rng, bank, clip_duration)
        label = vocabulary[int(rng.integers(len(vocabulary)))]
        offset_ms = int(rng.integers(0, ONSET_WINDOW_WIDTH_MS + 1))
        snr_db = float(rng.uniform(low, high))
        event = sample_event(rng, bank, label, 0.0, snr_db, background.level_db,
                             clip_duration)
        spec = SoundscapeSpec(clip_id=clip_name(i, n), seed=clip_seed,
                              duration=clip_duration, sample_rate=bank.sample_rate,
                              background=background, events=(event,))
        return spec, offset_ms

    bases = parallel_map(base_spec, n, workers)
    suites = {}
    for name, (window_start, _) in ONSET_WINDOWS.items():
        start_ms = int(round(window_start * 1000))
        specs = [spec.model_copy(update={"events": (spec.events[0].model_copy(
                    update={"onset": (start_ms + offset_ms) / 1000.0}),)})
                 for spec, offset_ms in bases]
        suites[name] = Suite(name=name, specs=specs, master_seed=seed,
                             bank_hash=bank.manifest_hash)
    logger.info("Sampled %d aligned clips for onset variants %s", n, ", ".join(ONSET_WINDOWS))
    return suites


def build_single(bank: SourceBank, seed: int, n: int = PROTOCOL_COUNTS[SINGLE],
                 vocabulary: Sequence[str] | None = None,
                 clip_duration: float = DEFAULT_CLIP_DURATION,
                 fbsnr_range: tuple[float, float] = DEFAULT_FBSNR_RANGE,
                 workers: int = 1) -> Suite:
    """One target event per clip, exactly n / |vocabulary| clips per class."""
    vocabulary = list(vocabulary or bank.vocabulary)
    if n < 1 or n % len(vocabulary):
        raise ConfigError(
            f"single: n={n} must be a positive multiple of the vocabulary size {len(vocabulary)}")
    per_class = n // len(vocabulary)
    order = make_rng(derive_seed(seed, SINGLE, "classes")).permutation(n)
    labels = [vocabulary[int(k) // per_class] for k in order]
    low, high = fbsnr_range

    def spec_for(i: int) -> SoundscapeSpec:
        clip_seed = derive_seed(seed, SINGLE, i)
        rng = make_rng(clip_seed)
        background = sample_background(rng, bank, clip_duration)
        onset = sample_onset(rng, 0.0, clip_duration)
        snr_db = float(rng.uniform(low, high))
        event = sample_event(rng, bank, labels[i], onset, snr_db, background.level_db,
                             clip_duration)
        return SoundscapeSpec(clip_id=clip_name(i, n), seed=clip_seed, duration=clip_duration,
                              sample_rate=bank.sample_rate, background=background,
                              events=(event,))

    specs = parallel_map(spec_for, n, workers)
    logger.info("Sampled %d specs for suite %s (%d per class)", n, SINGLE, per_class)
    return Suite(name=SINGLE, specs=specs, master_seed=seed, bank_hash=bank.manifest_hash)


def build_condition_grid(ref_suite: Suite, bank: SourceBank,
                         non_target_pool: Sequence[SourceClip],
                         rooms: Sequence[RoomSet], seed: int,
                         reverb_background: bool = False,
                         renormalize_wet: bool = True) -> dict[str, Suite]:
    """The 3 x 3 TNTSNR x reverberation grid derived from a reference suite.

    Non-target draws depend only on (seed, clip index), so the 15 dB and 0 dB
    cells differ only in non-target gains; RIR assignment depends only on
    (seed, clip index), so short and long cells share rooms and RIRs.
    """
    if not non_target_pool:
        raise SynthError("non-target pool empty")
    if not rooms:
        raise SynthError("empty room list")

    rooms_seed = derive_seed(seed, "grid", "rooms")
    cells: dict[str, Suite] = {}
    for tntsnr in TNTSNR_LEVELS:
        base = [apply_tntsnr(spec, non_target_pool, tntsnr,
                             derive_seed(seed, "grid", "non_targets", i))
                for i, spec in enumerate(ref_suite.specs)]
        for mode in REVERB_MODES:
            if mode is ReverbMode.NONE:
                specs = base
            else:
                specs = [spec.model_copy(update={"renormalize_wet": renormalize_wet})
                         for spec in assign_rirs_batch(base, rooms, rooms_seed, reverb=mode,
                                                       reverb_background=reverb_background)]
            condition = ConditionTag(tntsnr_db=tntsnr, reverb=mode)
            cells[condition.suite_name] = Suite(
                name=condition.suite_name, specs=specs, master_seed=ref_suite.master_seed,
                bank_hash=ref_suite.bank_hash, profile_hash=ref_suite.profile_hash,
                condition=condition)
    logger.info("Derived %d condition cells from %s", len(cells), ref_suite.name)
    return cells


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def _wav_digest(samples, sample_rate: int, subtype: WavSubtype) -> tuple[bytes, str]:
    buffer = io.BytesIO()
    write_wav(buffer, samples, sample_rate, subtype=subtype)
    data = buffer.getvalue()
    return data, hashlib.sha256(data).hexdigest()


def write_suite(suite: Suite, bank: SourceBank, out_dir: str | PathLike, workers: int = 1,
                force: bool = False, subtype: WavSubtype = PCM_16,
                save_stems: bool = False) -> tuple[SuiteManifest, SuiteSummary]:
    """Render a suite into `out_dir/<suite.name>`.

    The tree is assembled in a temporary sibling directory, the manifest is
    written last, and the directory is renamed into place, so a suite
    directory never exists without its manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    final = out_dir / suite.name
    if final.exists() and not force:
        raise ConfigError(
            f"{final} already exists; refusing to overwrite without --force")

    tmp = Path(tempfile.mkdtemp(prefix=f".{suite.name}.", dir=out_dir))
    try:
        for sub in ("audio", "specs", "metadata"):
            (tmp / sub).mkdir()

        def write_clip(i: int) -> ClipEntry:
            spec = suite.specs[i]
            rendered = render(spec, bank, keep_stems=save_stems)
            data, digest = _wav_digest(rendered.waveform, spec.sample_rate, subtype)
            (tmp / "audio" / f"{spec.clip_id}.wav").write_bytes(data)
            (tmp / "specs" / f"{spec.clip_id}.json").write_text(
                spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
            if save_stems and rendered.stems:
                stem_dir = tmp / "stems" / spec.clip_id
                stem_dir.mkdir(parents=True)
                for stem_name, stem in rendered.stems.items():
                    write_wav(stem_dir / f"{stem_name}.wav", stem, spec.sample_rate,
                              subtype=FLOAT, check_peak=False)
            logger.debug("%s/%s rendered (master %.2f dB)", suite.name, spec.clip_id,
                         rendered.master_gain_db)
            return ClipEntry(clip_id=spec.clip_id, spec=f"specs/{spec.clip_id}.json",
                             audio=f"audio/{spec.clip_id}.wav", audio_sha256=digest)

        entries = parallel_map(write_clip, suite.clip_count, workers)
        annotations_path = f"metadata/{suite.name}.tsv"
        write_annotations(tmp / annotations_path, suite.annotations())

        manifest = SuiteManifest(
            suite=suite.name, clip_count=suite.clip_count, master_seed=suite.master_seed,
            profile_hash=suite.profile_hash, bank_manifest_hash=suite.bank_hash,
            condition=suite.condition, sample_rate=bank.sample_rate,
            audio_subtype=subtype, vocabulary=list(bank.vocabulary),
            annotations=annotations_path, clips=entries)
        partial = tmp / (MANIFEST_NAME + ".part")
        partial.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        os.replace(partial, tmp / MANIFEST_NAME)

        tmp.chmod(0o777 & ~_umask())  # mkdtemp leaves it 0700
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise

    logger.info("Committed suite %s: %d clips to %s", suite.name, suite.clip_count, final)
    summary = SuiteSummary(suite=suite.name, clips=suite.clip_count,
                           audio_seconds=suite.audio_seconds, path=str(final))
    return manifest, summary


def load_manifest(suite_dir: str | PathLike) -> SuiteManifest:
    path = Path(suite_dir) / MANIFEST_NAME
    if not path.is_file():
        raise SchemaError(f"no suite manifest at {path}")
    try:
        return SuiteManifest.model_validate_json(path.read_bytes())
    except ValidationError as e:
        raise SchemaError(f"invalid suite manifest {path}: {e.error_count()} error(s)") from e


def load_specs(suite_dir: str | PathLike,
               manifest: SuiteManifest | None = None) -> list[SoundscapeSpec]:
    suite_dir = Path(suite_dir)
    manifest = manifest or load_manifest(suite_dir)
    try:
        return [SoundscapeSpec.model_validate_json((suite_dir / clip.spec).read_bytes())
                for clip in manifest.clips]
    except (OSError, ValidationError) as e:
        raise SchemaError(f"unreadable spec in {suite_dir}: {e}") from e


def load_reference(suite_dir: str | PathLike) -> tuple[SuiteManifest, AnnotationSet]:
    """A suite's manifest and its reference annotations over the full roster."""
    suite_dir = Path(suite_dir)
    manifest = load_manifest(suite_dir)
    annotations = read_annotations(suite_dir / manifest.annotations,
                                   roster=[clip.clip_id for clip in manifest.clips])
    return manifest, annotations


def verify_suite(suite_dir: str | PathLike, bank: SourceBank, workers: int = 1) -> list[str]:
    """Re-render every clip from its spec; return ids whose audio digest differs."""
    suite_dir = Path(suite_dir)
    manifest = load_manifest(suite_dir)
    if manifest.bank_manifest_hash != bank.manifest_hash:
        logger.warning("Suite %s was built from a different bank manifest", manifest.suite)
    specs = load_specs(suite_dir, manifest)

    def check(i: int) -> str | None:
        rendered = render(specs[i], bank)
        _, digest = _wav_digest(rendered.waveform, specs[i].sample_rate,
                                manifest.audio_subtype)
        return None if digest == manifest.clips[i].audio_sha256 else manifest.clips[i].clip_id

    mismatches = [c for c in parallel_map(check, len(specs), workers) if c is not None]
    logger.info("Verified %s: %d/%d clips reproduce", manifest.suite,
                len(specs) - len(mismatches), len(specs))
    return mismatches

"""
Reverberation: RIR truncation, convolution and per-clip RIR assignment.

Only events are reverberated by default. Wet events are renormalised to
their dry RMS so the FBSNR/TNTSNR of a clip do not move when reverberation
is switched on, and annotations keep the dry timings.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import signal

from errors import SynthError
from soundscape import ReverbMode, RirRef, SoundscapeSpec, derive_seed, make_rng
from source_bank import Rir, RoomSet

SHORT_REVERB_SECONDS = 0.2


def find_direct_path(rir: Rir | np.ndarray) -> int:
    """Index of the maximum absolute amplitude, first occurrence on ties."""
    samples = rir.samples if isinstance(rir, Rir) else np.asarray(rir)
    magnitude = np.abs(samples)
    if magnitude.size == 0 or not np.any(magnitude > 0):
        raise SynthError("all-zero RIR")
    return int(np.argmax(magnitude))


def truncate_rir(rir: Rir, mode: ReverbMode) -> Rir:
    """Full RIR for `long`; for `short`, keep samples up to 200 ms past the direct path."""
    mode = ReverbMode(mode)
    if mode is ReverbMode.NONE:
        raise SynthError("truncate_rir needs reverb mode 'short' or 'long'")
    if mode is ReverbMode.LONG:
        return rir

    last = find_direct_path(rir) + int(round(SHORT_REVERB_SECONDS * rir.sample_rate))
    if rir.samples.size <= last + 1:
        return rir
    return Rir(id=rir.id, samples=rir.samples[:last + 1], sample_rate=rir.sample_rate)


def convolve(event: np.ndarray, rir: Rir, sample_rate: int,
             renormalize: bool = True) -> np.ndarray:
    """Full linear convolution of a dry event with a RIR.

    Output length is len(event) + len(rir) - 1. With `renormalize` the wet
    signal is rescaled so its RMS equals the dry event's RMS.
    """
    if rir.sample_rate != sample_rate:
        raise SynthError(
            f"rate mismatch: RIR {rir.id} is {rir.sample_rate} Hz, event is {sample_rate} Hz")

    event = np.asarray(event, dtype=np.float64)
    wet = signal.convolve(event, np.asarray(rir.samples, dtype=np.float64),
                          mode="full", method="auto")
    if not renormalize:
        return wet

    dry_rms = np.sqrt(np.mean(event ** 2))
    wet_rms = np.sqrt(np.mean(wet ** 2))
    if dry_rms == 0 or wet_rms == 0:
        return wet
    return wet * (dry_rms / wet_rms)


def assign_rirs(spec: SoundscapeSpec, rooms: Sequence[RoomSet], seed: int,
                clip_index: int = 0, reverb: ReverbMode | None = None,
                reverb_background: bool = False) -> SoundscapeSpec:
    """Give a clip one room and each of its events a RIR from that room.

    Rooms rotate round-robin over a seeded shuffle shared by the whole batch,
    so no two clips of a batch share a room until every room is used. Within
    the clip, events take RIRs from a seeded permutation of the room's RIRs:
    distinct while the room has enough, cycling otherwise.
    """
    if not rooms:
        raise SynthError("empty room list")

    room_order = make_rng(derive_seed(seed, "rooms")).permutation(len(rooms))
    room = rooms[int(room_order[clip_index % len(rooms)])]
    rir_order = make_rng(derive_seed(seed, "rirs", clip_index)).permutation(len(room.rirs))

    events = tuple(
        event.model_copy(update={"rir": RirRef(room_id=room.room_id,
                                               index=int(rir_order[k % len(rir_order)]))})
        for k, event in enumerate(spec.events)
    )
    update: dict = {"events": events}
    if reverb_background:
        update["background_rir"] = RirRef(room_id=room.room_id, index=int(rir_order[-1]))
    if reverb is not None:
        update["condition"] = spec.condition.model_copy(update={"reverb": ReverbMode(reverb)})
    return spec.model_copy(update=update)


def assign_rirs_batch(specs: Sequence[SoundscapeSpec], rooms: Sequence[RoomSet],
                      seed: int, reverb: ReverbMode | None = None,
                      reverb_background: bool = False) -> list[SoundscapeSpec]:
    if not rooms:
        raise SynthError("empty room list")
    return [assign_rirs(spec, rooms, seed, clip_index=i, reverb=reverb,
                        reverb_background=reverb_background)
            for i, spec in enumerate(specs)]

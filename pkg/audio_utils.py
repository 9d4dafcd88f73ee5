"""
Common audio utilities for sed-suite-bench.

Owns every waveform file access of the toolkit: mono WAV read/write in
16-bit integer or 32-bit float PCM, plus the sample checks applied to
anything entering the source bank. Centralised here so the bank loader,
the suite writer and the tests share one I/O path.
"""
from __future__ import annotations

import os
from os import PathLike
from typing import Literal, Tuple

import librosa
import numpy as np
import soundfile as sf

from errors import BankError

PCM_16 = "PCM_16"
FLOAT = "FLOAT"
SUPPORTED_SUBTYPES = {PCM_16, FLOAT}
WAV_FORMATS = {"WAV", "WAVEX"}

# int16 full scale; write and read use the same factor so round trips are
# symmetric.
_INT16_SCALE = 32768.0

WavSubtype = Literal["PCM_16", "FLOAT"]


def read_wav(path: str | PathLike) -> Tuple[np.ndarray, int]:
    """Read a mono WAV file as float64 samples in [-1, 1].

    Raises BankError for a missing file, an undecodable file, an encoding
    other than 16-bit int / 32-bit float PCM, or more than one channel.
    Plain and extensible (WAVEX) headers are both accepted.
    Multichannel input is rejected, never downmixed.
    """
    if not os.path.exists(path):
        raise BankError("missing file", path)

    try:
        info = sf.info(path)
    except (RuntimeError, sf.LibsndfileError) as e:
        raise BankError(f"undecodable audio ({e})", path) from e

    if info.format not in WAV_FORMATS or info.subtype not in SUPPORTED_SUBTYPES:
        raise BankError(
            f"unsupported encoding {info.format}/{info.subtype}", path)
    if info.channels != 1:
        raise BankError(
            f"multichannel input ({info.channels} channels)", path)

    if info.subtype == PCM_16:
        data, sampling_rate = sf.read(path, dtype="int16", always_2d=False)
        samples = data.astype(np.float64) / _INT16_SCALE
    else:
        data, sampling_rate = sf.read(path, dtype="float32", always_2d=False)
        samples = data.astype(np.float64)

    return samples, int(sampling_rate)


def write_wav(
        path: str | PathLike,
        samples: np.ndarray,
        sampling_rate: int,
        subtype: WavSubtype = PCM_16,
        check_peak: bool = True) -> None:
    """Write mono samples in [-1, 1] as a WAV file.

    16-bit output is quantised with the same full-scale factor `read_wav`
    divides by, so a round trip is within one quantisation step. FLOAT
    output is bit-exact for float32-representable input and may exceed full
    scale when `check_peak` is off.
    """
    samples = np.asarray(samples)
    if samples.ndim != 1:
        raise ValueError(f"expected mono samples, got shape {samples.shape}")
    if subtype not in SUPPORTED_SUBTYPES:
        raise ValueError(f"unsupported subtype {subtype}")
    if samples.size and not np.all(np.isfinite(samples)):
        raise ValueError("samples contain NaN or Inf")
    if check_peak and samples.size and np.max(np.abs(samples)) > 1.0:
        raise ValueError("samples exceed [-1, 1]")

    if subtype == PCM_16:
        if not check_peak:
            raise ValueError("16-bit output needs samples within [-1, 1]")
        quantized = np.clip(np.round(samples * _INT16_SCALE), -32768, 32767)
        sf.write(path, quantized.astype(np.int16), sampling_rate,
                 subtype=PCM_16, format="WAV")
    else:
        sf.write(path, samples.astype(np.float32), sampling_rate,
                 subtype=FLOAT, format="WAV")


def validate_samples(samples: np.ndarray, path: str | PathLike | None = None,
                     check_peak: bool = True) -> None:
    """Reject empty, non-finite or (optionally) over-full-scale waveforms."""
    if samples.size == 0:
        raise BankError("empty waveform", path)
    try:
        librosa.util.valid_audio(samples)
    except librosa.util.exceptions.ParameterError as e:
        raise BankError(f"NaN samples or invalid buffer ({e})", path) from e
    if check_peak and np.max(np.abs(samples)) > 1.0:
        raise BankError("peak above 1.0", path)


def clip_duration(samples: np.ndarray, sampling_rate: int) -> float:
    """Duration in seconds."""
    return float(librosa.get_duration(y=samples, sr=sampling_rate))

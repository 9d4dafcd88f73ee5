import numpy as np
import pytest
import soundfile as sf

from audio_utils import FLOAT, PCM_16, clip_duration, read_wav, validate_samples, write_wav
from errors import BankError


def test_pcm16_round_trip_within_one_step(tmp_path):
    samples = np.linspace(-0.9, 0.9, 1001)
    write_wav(tmp_path / "a.wav", samples, 16000, subtype=PCM_16)
    back, sr = read_wav(tmp_path / "a.wav")
    assert sr == 16000
    assert back.dtype == np.float64
    assert np.max(np.abs(back - samples)) <= 1.0 / 32768


def test_float_round_trip_is_exact_for_float32_values(tmp_path):
    samples = np.linspace(-1.0, 1.0, 257).astype(np.float32).astype(np.float64)
    write_wav(tmp_path / "f.wav", samples, 8000, subtype=FLOAT)
    back, sr = read_wav(tmp_path / "f.wav")
    assert sr == 8000
    assert np.array_equal(back, samples)


def test_multichannel_input_is_rejected(tmp_path):
    path = tmp_path / "stereo.wav"
    sf.write(path, np.zeros((100, 2), dtype=np.int16), 16000, subtype="PCM_16")
    with pytest.raises(BankError, match="multichannel"):
        read_wav(path)


def test_unsupported_encoding_is_rejected(tmp_path):
    path = tmp_path / "pcm24.wav"
    sf.write(path, np.zeros(100), 16000, subtype="PCM_24")
    with pytest.raises(BankError, match="unsupported encoding"):
        read_wav(path)


@pytest.mark.parametrize("subtype", [PCM_16, FLOAT])
def test_extensible_wav_header_is_accepted(tmp_path, subtype):
    path = tmp_path / "ext.wav"
    data = np.linspace(-0.5, 0.5, 321)
    sf.write(path, data, 16000, subtype=subtype, format="WAVEX")
    assert sf.info(path).format == "WAVEX"
    back, sr = read_wav(path)
    assert sr == 16000
    assert len(back) == 321
    assert np.max(np.abs(back - data)) <= 1.0 / 16384


def test_extensible_wav_with_unsupported_subtype_is_rejected(tmp_path):
    path = tmp_path / "ext24.wav"
    sf.write(path, np.zeros(100), 16000, subtype="PCM_24", format="WAVEX")
    with pytest.raises(BankError, match="unsupported encoding WAVEX/PCM_24"):
        read_wav(path)


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(BankError) as excinfo:
        read_wav(tmp_path / "nope.wav")
    assert "nope.wav" in str(excinfo.value)


def test_undecodable_file(tmp_path):
    path = tmp_path / "junk.wav"
    path.write_bytes(b"definitely not audio")
    with pytest.raises(BankError, match="undecodable"):
        read_wav(path)


@pytest.mark.parametrize("bad", [np.array([0.0, np.nan]), np.array([0.5, 1.5]), np.zeros((2, 2))])
def test_write_rejects_invalid_samples(tmp_path, bad):
    with pytest.raises(ValueError):
        write_wav(tmp_path / "bad.wav", bad, 16000)


def test_validate_samples():
    validate_samples(np.array([0.1, -0.2]))
    with pytest.raises(BankError):
        validate_samples(np.array([]))
    with pytest.raises(BankError):
        validate_samples(np.array([0.1, np.inf]))
    with pytest.raises(BankError, match="peak"):
        validate_samples(np.array([0.1, 1.2]))
    validate_samples(np.array([0.1, 1.2]), check_peak=False)


def test_clip_duration():
    assert clip_duration(np.zeros(16000), 16000) == pytest.approx(1.0)
    assert clip_duration(np.zeros(16), 16000) == pytest.approx(0.001)

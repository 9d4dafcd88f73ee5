import json
from pathlib import Path

import numpy as np
import pytest

from audio_utils import write_wav
from soundscape import GenerationProfile
from source_bank import load_bank

SAMPLE_RATE = 16000
VOCABULARY = [
    "Alarm_bell_ringing", "Blender", "Cat", "Dishes", "Dog",
    "Electric_shaver_toothbrush", "Frying", "Running_water", "Speech", "Vacuum_cleaner",
]
RIR_DIRECT_PATH = 480
FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def tone(seconds: float, freq: float, amplitude: float = 0.3,
         sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return amplitude * np.sin(2 * np.pi * freq * t)


def noise(seconds: float, seed: int, amplitude: float = 0.05,
          sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-amplitude, amplitude, int(round(seconds * sample_rate)))


def rir(seed: int, seconds: float = 0.5, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    decay = np.exp(-np.arange(n) / (0.05 * sample_rate))
    samples = rng.uniform(-0.3, 0.3, n) * decay
    samples[:RIR_DIRECT_PATH] = 0.0
    samples[RIR_DIRECT_PATH] = 0.9
    return samples


def write_bank(root: Path) -> Path:
    """A small bank: two tones per class (plus a long one for Speech),
    two non-targets, two backgrounds (one shorter than a clip), two rooms."""
    manifest = {"sample_rate": SAMPLE_RATE, "vocabulary": VOCABULARY, "targets": {},
                "non_targets": [], "backgrounds": [], "rooms": {}}
    for k, label in enumerate(VOCABULARY):
        paths = []
        durations = (0.8, 2.5, 7.0) if label == "Speech" else (0.8, 2.5)
        for j, seconds in enumerate(durations):
            rel = f"foreground/{label}/{j:02d}.wav"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            write_wav(root / rel, tone(seconds, 220.0 + 55.0 * k + 11.0 * j), SAMPLE_RATE)
            paths.append(rel)
        manifest["targets"][label] = paths

    (root / "non_target").mkdir(exist_ok=True)
    for j in range(2):
        rel = f"non_target/nt_{j:02d}.wav"
        write_wav(root / rel, noise(1.5, seed=100 + j, amplitude=0.2), SAMPLE_RATE)
        manifest["non_targets"].append(rel)

    (root / "background").mkdir(exist_ok=True)
    for j, seconds in enumerate((12.0, 4.0)):
        rel = f"background/bg_{j:02d}.wav"
        write_wav(root / rel, noise(seconds, seed=200 + j), SAMPLE_RATE)
        manifest["backgrounds"].append(rel)

    for room in range(2):
        paths = []
        for j in range(2):
            rel = f"rir/room_{room}/src_{j}.wav"
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            write_wav(root / rel, rir(seed=300 + 10 * room + j), SAMPLE_RATE)
            paths.append(rel)
        manifest["rooms"][f"room_{room}"] = paths

    path = root / "bank.json"
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def bank_manifest(tmp_path_factory) -> Path:
    return write_bank(tmp_path_factory.mktemp("bank"))


@pytest.fixture(scope="session")
def bank(bank_manifest):
    return load_bank(bank_manifest)


@pytest.fixture(scope="session")
def profile() -> GenerationProfile:
    return GenerationProfile(
        description="test profile",
        clip_duration=10.0,
        vocabulary=VOCABULARY,
        class_weights={label: 0.1 for label in VOCABULARY},
        events_per_clip={label: {1: 0.5, 2: 0.5} for label in VOCABULARY},
        cooccurrence={label: {"none": 0.5, "Speech" if label != "Speech" else "Dog": 0.5}
                      for label in VOCABULARY},
        fbsnr_range=(6.0, 30.0),
        max_event_duration=3.0,
    )


@pytest.fixture(scope="session")
def profile_path(tmp_path_factory, profile) -> Path:
    path = tmp_path_factory.mktemp("profile") / "profile.json"
    path.write_text(profile.model_dump_json(indent=2), encoding="utf-8")
    return path


@pytest.fixture
def manifest_data(bank_manifest) -> dict:
    return json.loads(bank_manifest.read_text(encoding="utf-8"))


@pytest.fixture
def write_manifest(bank_manifest):
    """Write a variant manifest next to the bank files (paths stay valid)."""
    counter = iter(range(10_000))

    def _write(data: dict) -> Path:
        path = bank_manifest.parent / f"variant_{next(counter)}_{id(data)}.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    return _write

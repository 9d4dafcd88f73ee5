import dataclasses

import numpy as np
import pytest

from errors import SynthError
from reverb import (SHORT_REVERB_SECONDS, assign_rirs, assign_rirs_batch, convolve,
                    find_direct_path, truncate_rir)
from soundscape import ReverbMode
from source_bank import Rir, RoomSet
from synth import render, rms_level, sample_spec

from conftest import RIR_DIRECT_PATH


def make_rir(samples, rir_id="r", sample_rate=16000) -> Rir:
    return Rir(id=rir_id, samples=np.asarray(samples, dtype=np.float64), sample_rate=sample_rate)


def test_find_direct_path():
    assert find_direct_path(np.array([0.0, 0.5, -1.0, 0.2])) == 2
    assert find_direct_path(np.array([0.3, -0.3, 0.1])) == 0
    with pytest.raises(SynthError, match="all-zero"):
        find_direct_path(np.zeros(4))


def test_short_truncation_keeps_200ms_after_direct_path():
    samples = np.zeros(16000)
    samples[480] = 1.0
    samples[481:] = 0.01
    short = truncate_rir(make_rir(samples), ReverbMode.SHORT)
    assert short.samples.size == 480 + int(round(SHORT_REVERB_SECONDS * 16000)) + 1 == 3681
    assert np.array_equal(short.samples, samples[:3681])


def test_short_truncation_of_a_short_rir_is_identity():
    rir = make_rir(np.r_[1.0, np.full(100, 0.1)])
    assert truncate_rir(rir, ReverbMode.SHORT) is rir


def test_long_keeps_full_rir_and_none_is_rejected():
    rir = make_rir(np.r_[1.0, np.full(10000, 0.1)])
    assert truncate_rir(rir, ReverbMode.LONG) is rir
    with pytest.raises(SynthError):
        truncate_rir(rir, ReverbMode.NONE)


def test_convolve_length_and_renormalisation():
    rng = np.random.default_rng(1)
    event = rng.uniform(-0.2, 0.2, 4000)
    rir = make_rir(np.r_[1.0, 0.6 * np.exp(-np.arange(999) / 200.0)])
    wet = convolve(event, rir, 16000)
    assert wet.size == 4000 + 1000 - 1
    assert rms_level(wet) == pytest.approx(rms_level(event), abs=1e-9)
    raw = convolve(event, rir, 16000, renormalize=False)
    assert rms_level(raw) > rms_level(event)


def test_unit_impulse_is_identity():
    event = np.linspace(-0.5, 0.5, 50)
    assert np.allclose(convolve(event, make_rir([1.0]), 16000), event)


def test_convolve_rejects_rate_mismatch():
    with pytest.raises(SynthError, match="rate mismatch"):
        convolve(np.ones(10), make_rir([1.0], sample_rate=8000), 16000)


def _direct_convolution(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return out


def test_convolve_matches_direct_sum():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = rng.uniform(-1.0, 1.0, rng.integers(1, 60))
        h = rng.uniform(-1.0, 1.0, rng.integers(1, 40))
        h[0] = 1.0
        wet = convolve(x, make_rir(h), 16000, renormalize=False)
        assert np.allclose(wet, _direct_convolution(x, h), atol=1e-9)


@pytest.mark.parametrize("delay", [1, 7, 480])
def test_delayed_impulse_delays_the_event(delay):
    event = np.linspace(-0.5, 0.5, 64)
    impulse = np.zeros(delay + 1)
    impulse[delay] = 1.0
    wet = convolve(event, make_rir(impulse), 16000, renormalize=False)
    assert np.allclose(wet[:delay], 0.0)
    assert np.allclose(wet[delay:], event)


def test_short_truncation_is_idempotent_and_never_adds_energy():
    for seed in range(5):
        rir = make_rir(np.random.default_rng(seed).uniform(-0.3, 0.3, 8000))
        once = truncate_rir(rir, ReverbMode.SHORT)
        twice = truncate_rir(once, ReverbMode.SHORT)
        assert np.array_equal(once.samples, twice.samples)
        assert np.sum(once.samples ** 2) <= np.sum(rir.samples ** 2)


def test_rir_validation():
    from errors import BankError
    with pytest.raises(BankError):
        make_rir([])
    with pytest.raises(BankError, match="all-zero"):
        make_rir([0.0, 0.0])


def _rooms(n_rooms: int, n_rirs: int) -> list[RoomSet]:
    return [RoomSet(room_id=f"room_{r}",
                    rirs=tuple(make_rir([1.0, 0.1 * k], rir_id=f"{r}/{k}") for k in range(n_rirs)))
            for r in range(n_rooms)]


def test_rooms_rotate_before_repeating(bank, profile):
    rooms = _rooms(4, 3)
    specs = [sample_spec(profile, bank, seed=s) for s in range(8)]
    assigned = assign_rirs_batch(specs, rooms, seed=99, reverb=ReverbMode.LONG)
    first_rooms = [spec.events[0].rir.room_id for spec in assigned]
    assert len(set(first_rooms[:4])) == 4
    assert first_rooms[:4] == first_rooms[4:]
    for spec in assigned:
        assert spec.condition.reverb is ReverbMode.LONG
        assert len({event.rir.room_id for event in spec.events}) == 1


def test_events_get_distinct_rirs_then_cycle(bank, profile):
    spec = next(s for s in (sample_spec(profile, bank, seed=k) for k in range(50))
                if len(s.events) >= 3)
    roomy = assign_rirs(spec, _rooms(1, 10), seed=5)
    indices = [event.rir.index for event in roomy.events]
    assert len(set(indices)) == len(indices)

    cramped = assign_rirs(spec, _rooms(1, 2), seed=5)
    indices = [event.rir.index for event in cramped.events]
    assert set(indices) == {0, 1}
    assert indices[2] == indices[0]


def test_assignment_is_deterministic_and_independent_of_mode(bank, profile):
    specs = [sample_spec(profile, bank, seed=s) for s in range(3)]
    rooms = _rooms(2, 4)
    short = assign_rirs_batch(specs, rooms, seed=7, reverb=ReverbMode.SHORT)
    long = assign_rirs_batch(specs, rooms, seed=7, reverb=ReverbMode.LONG)
    again = assign_rirs_batch(specs, rooms, seed=7, reverb=ReverbMode.SHORT)
    assert short == again
    for a, b in zip(short, long):
        assert [e.rir for e in a.events] == [e.rir for e in b.events]


def test_empty_room_list():
    with pytest.raises(SynthError, match="empty room list"):
        assign_rirs_batch([], [], seed=1)


def test_background_rir_only_when_requested(bank, profile):
    spec = sample_spec(profile, bank, seed=1)
    rooms = _rooms(2, 3)
    assert assign_rirs(spec, rooms, seed=1).background_rir is None
    assert assign_rirs(spec, rooms, seed=1, reverb_background=True).background_rir is not None


def test_reverberant_render_keeps_dry_annotations(bank, profile):
    spec = sample_spec(profile, bank, seed=21)
    for mode in (ReverbMode.SHORT, ReverbMode.LONG):
        wet = assign_rirs(spec, bank.rooms, seed=3, reverb=mode)
        clip = render(wet, bank)
        assert clip.waveform.size == 160000
        assert clip.annotations == render(spec, bank).annotations


def test_short_and_long_renders_agree_for_short_rirs(bank, profile):
    tail = np.exp(-np.arange(1, 1600) / 200.0) * 0.2
    rooms = tuple(
        RoomSet(room_id=f"short_{r}",
                rirs=tuple(make_rir(np.r_[np.zeros(RIR_DIRECT_PATH), 0.9, tail * (k + 1) / 2],
                                    rir_id=f"short_{r}/{k}") for k in range(2)))
        for r in range(2))
    short_bank = dataclasses.replace(bank, rooms=rooms)
    spec = sample_spec(profile, short_bank, seed=8)
    short = render(assign_rirs(spec, rooms, seed=2, reverb=ReverbMode.SHORT), short_bank)
    long = render(assign_rirs(spec, rooms, seed=2, reverb=ReverbMode.LONG), short_bank)
    assert short.waveform.tobytes() == long.waveform.tobytes()


def test_bank_rirs_direct_path(bank):
    for room in bank.rooms:
        for rir in room.rirs:
            assert find_direct_path(rir) == RIR_DIRECT_PATH

import math

import numpy as np
import pytest

from errors import ProfileError, SynthError
from soundscape import (BACKGROUND_LEVEL_DB, NON_TARGET, ConditionTag, SoundscapeSpec,
                        derive_seed, make_rng)
from synth import (apply_tntsnr, gain_for_snr, render, rms_level, sample_background,
                   sample_event, sample_spec, spec_annotations)


def test_rms_level_reference_values():
    t = np.arange(16000) / 16000
    assert rms_level(np.sin(2 * np.pi * 100 * t)) == pytest.approx(-3.0103, abs=1e-4)
    assert rms_level(np.full(100, 0.5)) == pytest.approx(-6.0206, abs=1e-4)
    assert rms_level(np.zeros(10)) == -math.inf


def test_gain_for_snr_hits_target():
    rng = np.random.default_rng(0)
    event = rng.uniform(-0.1, 0.1, 8000)
    background = rng.uniform(-0.05, 0.05, 8000)
    gain = gain_for_snr(event, background, 12.0)
    assert rms_level(event * gain) - rms_level(background) == pytest.approx(12.0, abs=1e-9)
    with pytest.raises(SynthError, match="silent source"):
        gain_for_snr(np.zeros(10), background, 0.0)


def test_sample_spec_is_deterministic(bank, profile):
    a = sample_spec(profile, bank, seed=7, clip_id="0000")
    b = sample_spec(profile, bank, seed=7, clip_id="0000")
    c = sample_spec(profile, bank, seed=8, clip_id="0000")
    assert a == b
    assert a.model_dump_json() == b.model_dump_json()
    assert a != c


def test_sample_spec_respects_profile(bank, profile):
    for seed in range(20):
        spec = sample_spec(profile, bank, seed=seed)
        assert 1 <= len(spec.events) <= 4
        assert spec.background.level_db == BACKGROUND_LEVEL_DB
        for event in spec.events:
            assert event.label in profile.vocabulary
            assert 0.0 <= event.onset < profile.clip_duration
            assert round(event.onset * 1000) == pytest.approx(event.onset * 1000)
            assert 6.0 <= event.snr_db <= 30.0
            assert event.trim_length <= profile.max_event_duration


def test_sample_spec_rejects_classes_missing_from_bank(bank, profile):
    other = profile.model_copy(update={"vocabulary": [*profile.vocabulary, "Piano"]})
    with pytest.raises(ProfileError, match="Piano"):
        sample_spec(other, bank, seed=1)


def test_spec_json_round_trip(bank, profile):
    spec = sample_spec(profile, bank, seed=3)
    assert SoundscapeSpec.model_validate_json(spec.model_dump_json()) == spec


def test_render_shape_and_annotations(bank, profile):
    spec = sample_spec(profile, bank, seed=11, clip_id="0011")
    clip = render(spec, bank)
    assert clip.waveform.shape == (160000,)
    assert np.max(np.abs(clip.waveform)) <= 1.0
    assert clip.annotations == spec_annotations(spec)
    for annotation, event in zip(clip.annotations, sorted(spec.events, key=lambda e: e.onset)):
        assert annotation.clip_id == "0011"
        assert float(annotation.onset) == pytest.approx(event.onset, abs=5e-4)
        assert float(annotation.offset) <= 10.0


def test_render_is_bit_exact(bank, profile):
    spec = sample_spec(profile, bank, seed=5)
    assert np.array_equal(render(spec, bank).waveform, render(spec, bank).waveform)


def _single_event_spec(bank, snr_db: float, onset: float = 1.0) -> SoundscapeSpec:
    rng = make_rng(derive_seed(42, "single-event"))
    background = sample_background(rng, bank, 10.0)
    event = sample_event(rng, bank, "Dog", onset, snr_db, background.level_db, max_length=0.5)
    return SoundscapeSpec(clip_id="x", seed=42, duration=10.0, sample_rate=bank.sample_rate,
                          background=background, events=(event,))


def test_rendered_snr_matches_spec(bank):
    spec = _single_event_spec(bank, snr_db=10.0)
    clip = render(spec, bank, keep_stems=True)
    assert clip.master_gain_db == 0.0
    background_stem = clip.stems["background"]
    assert rms_level(background_stem) == pytest.approx(BACKGROUND_LEVEL_DB, abs=1e-6)

    event = spec.events[0]
    first = int(round(event.onset * bank.sample_rate))
    count = int(round(event.trim_length * bank.sample_rate))
    event_stem = clip.stems["event_000_Dog"][first:first + count]
    assert rms_level(event_stem) - rms_level(background_stem) == pytest.approx(10.0, abs=1e-6)
    assert np.allclose(background_stem + clip.stems["event_000_Dog"], clip.waveform)


def test_fbsnr_draws_are_uniform_over_the_profile_range(bank, profile):
    draws = []
    seed = 0
    while len(draws) < 10_000:
        draws.extend(e.snr_db for e in sample_spec(profile, bank, seed=seed).events)
        seed += 1
    draws = np.array(draws[:10_000])
    assert draws.min() >= 6.0 and draws.max() <= 30.0
    assert draws.mean() == pytest.approx(18.0, abs=0.5)


def test_rendered_event_levels_follow_their_snr(bank, profile):
    checked = 0
    for seed in range(50):
        spec = sample_spec(profile, bank, seed=1000 + seed)
        clip = render(spec, bank, keep_stems=True)
        background_level = rms_level(clip.stems["background"])
        for k, event in enumerate(spec.events):
            if event.onset + event.trim_length > spec.duration:
                continue
            first = int(round(event.onset * bank.sample_rate))
            count = int(round(event.trim_length * bank.sample_rate))
            stem = clip.stems[f"event_{k:03d}_{event.label}"][first:first + count]
            assert rms_level(stem) - background_level == pytest.approx(event.snr_db, abs=1e-6)
            checked += 1
    assert checked >= 50


def test_loud_mixture_gets_one_master_attenuation(bank):
    spec = _single_event_spec(bank, snr_db=45.0)
    clip = render(spec, bank, keep_stems=True)
    assert clip.master_gain_db < 0.0
    assert np.max(np.abs(clip.waveform)) == pytest.approx(1.0)
    background = clip.stems["background"]
    assert rms_level(background) == pytest.approx(BACKGROUND_LEVEL_DB + clip.master_gain_db,
                                                  abs=1e-6)


def test_event_running_past_the_end_is_cut_and_clamped(bank):
    spec = _single_event_spec(bank, snr_db=10.0, onset=9.8)
    clip = render(spec, bank)
    assert clip.waveform.size == 160000
    assert [float(a.offset) for a in clip.annotations] == [10.0]


def test_render_requires_rir_for_reverberant_condition(bank):
    spec = _single_event_spec(bank, snr_db=10.0)
    spec = spec.model_copy(update={"condition": ConditionTag(reverb="short")})
    with pytest.raises(SynthError, match="no RIR"):
        render(spec, bank)


def test_apply_tntsnr_infinite_is_identity(bank, profile):
    spec = sample_spec(profile, bank, seed=2)
    assert apply_tntsnr(spec, bank.non_targets, math.inf, seed=1) is spec
    assert apply_tntsnr(spec, bank.non_targets, None, seed=1) is spec


def test_apply_tntsnr_levels_and_labels(bank, profile):
    spec = sample_spec(profile, bank, seed=2)
    mixed = apply_tntsnr(spec, bank.non_targets, 15.0, seed=9)
    added = mixed.non_target_events
    assert 1 <= len(added) <= 3
    assert mixed.target_events == spec.target_events
    assert mixed.condition.tntsnr_db == 15.0
    target_mean = np.mean([e.snr_db for e in spec.target_events])
    for event in added:
        assert event.label == NON_TARGET
        assert event.snr_db == pytest.approx(target_mean - 15.0)
    assert spec_annotations(mixed) == spec_annotations(spec)
    assert render(mixed, bank).annotations == render(spec, bank).annotations


def test_tntsnr_zero_puts_non_targets_at_target_level(bank):
    spec = _single_event_spec(bank, snr_db=12.0)
    mixed = apply_tntsnr(spec, bank.non_targets, 0.0, seed=4)
    clip = render(mixed, bank, keep_stems=True)
    n_samples = clip.waveform.size

    def span(event):
        first = int(round(event.onset * bank.sample_rate))
        return first, int(round(event.trim_length * bank.sample_rate))

    def level(k, event):
        first, count = span(event)
        return rms_level(clip.stems[f"event_{k:03d}_{event.label}"][first:first + count])

    target_level = level(0, mixed.events[0])
    for k, event in enumerate(mixed.events[1:], start=1):
        first, count = span(event)
        if first + count <= n_samples:
            assert level(k, event) == pytest.approx(target_level, abs=1e-6)


def test_apply_tntsnr_errors(bank):
    spec = _single_event_spec(bank, snr_db=10.0)
    with pytest.raises(SynthError, match="non-target pool empty"):
        apply_tntsnr(spec, [], 15.0, seed=1)
    empty = spec.model_copy(update={"events": ()})
    with pytest.raises(SynthError, match="at least one target"):
        apply_tntsnr(empty, bank.non_targets, 15.0, seed=1)

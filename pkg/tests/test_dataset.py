from __future__ import annotations

import json
import math
import shutil

import numpy as np
import pytest

from cabinmix import (
    AudioBuffer,
    DatasetError,
    SensitivityMap,
    equivalent_level,
    estimate_sensitivity,
    load_dataset,
    read_wav,
    validate,
    write_wav,
)
from cabinmix.dsp import a_weight, rms


@pytest.fixture()
def scratch_root(dataset_root, tmp_path):
    """Fresh copy of the fixture dataset for destructive manipulation."""
    dst = tmp_path / "scratch"
    shutil.copytree(dataset_root, dst)
    return dst


def pink_noise(seconds=2.0, rate=16000, seed=11, rms_target=0.01):
    rng = np.random.default_rng(seed)
    n = int(seconds * rate)
    freqs = np.fft.rfftfreq(n, 1 / rate)
    spec = rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
    spec[1:] /= np.sqrt(freqs[1:])
    spec[0] = 0
    x = np.fft.irfft(spec, n=n)
    return AudioBuffer(x * rms_target / np.sqrt(np.mean(x**2)), rate)


# ---- loading ----


def test_fixture_index_shape(index):
    assert sorted(index.cars) == ["fixture"]
    car = index.car("fixture")
    assert sorted(car.setups) == ["array", "distributed"]
    assert sum(len(s.speech_irs) for s in car.setups.values()) == 20
    for setup in car.setups.values():
        assert setup.channels == 8
        assert 0 <= setup.reference_channel < 8
        assert len(setup.sensitivity.offsets) == 8
    assert car.setups["array"].geometry is not None
    assert car.setups["distributed"].geometry is None


def test_missing_manifest(tmp_path):
    with pytest.raises(DatasetError, match="manifest not found"):
        load_dataset(tmp_path)


def test_malformed_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("{not json", encoding="utf-8")
    with pytest.raises(DatasetError, match="malformed manifest"):
        load_dataset(tmp_path)


def test_dangling_file_reference(scratch_root):
    victim = next((scratch_root / "fixture" / "array" / "ir").glob("driver_*.wav"))
    victim.unlink()
    with pytest.raises(DatasetError, match=str(victim)):
        load_dataset(scratch_root)


def test_duplicate_catalog_key(scratch_root):
    manifest = scratch_root / "manifest.json"
    doc = json.loads(manifest.read_text())
    irs = doc["cars"][0]["setups"]["array"]["impulse_responses"]
    irs.append(dict(irs[0]))
    manifest.write_text(json.dumps(doc))
    with pytest.raises(DatasetError, match="duplicate catalog key"):
        load_dataset(scratch_root)


def test_wrong_channel_count_rejected(scratch_root):
    manifest = scratch_root / "manifest.json"
    doc = json.loads(manifest.read_text())
    doc["cars"][0]["setups"]["array"]["channels"] = 4
    manifest.write_text(json.dumps(doc))
    with pytest.raises(DatasetError, match="expected 8"):
        load_dataset(scratch_root)


def test_audio_decodes_once(index):
    clip = index.setup("fixture", "array").driving[(50, 0)]
    assert clip.audio is clip.audio


def test_concurrent_first_access_decodes_once(dataset_root, monkeypatch):
    import threading

    import cabinmix.dataset as dataset_mod

    calls = []
    real = dataset_mod.read_wav

    def counting(path):
        calls.append(path)
        return real(path)

    monkeypatch.setattr(dataset_mod, "read_wav", counting)
    fresh = load_dataset(dataset_root)
    clip = fresh.setup("fixture", "array").driving[(70, 0)]
    results = []
    threads = [threading.Thread(target=lambda: results.append(clip.audio)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1
    assert all(r is results[0] for r in results)


def test_manifest_fields_round_trip(dataset_root, index):
    doc = json.loads((dataset_root / "manifest.json").read_text())
    car_doc = doc["cars"][0]
    car = index.car(car_doc["id"])
    assert (car.brand, car.model, car.year) == (
        car_doc["brand"], car_doc["model"], car_doc["year"],
    )
    assert car.audio_system == car_doc["audio_system"]
    for name, setup_doc in car_doc["setups"].items():
        setup = car.setup(name)
        assert setup.channels == setup_doc["channels"]
        assert setup.reference_channel == setup_doc["reference_channel"]
        assert setup.sample_rate == setup_doc["sample_rate"]
        assert list(setup.sensitivity.offsets) == setup_doc["sensitivity_offsets"]
        assert list(setup.window_states) == setup_doc["window_states"]
        assert list(setup.speed_grid) == setup_doc["speed_grid_kmh"]
        assert list(setup.ventilation_levels) == setup_doc["ventilation_levels"]
        assert len(setup.speech_irs) + len(setup.audio_irs) == len(
            setup_doc["impulse_responses"]
        )
        assert (
            len(setup.driving) + len(setup.ventilation) + len(setup.events)
            == len(setup_doc["noise"])
        )
        if "geometry" in setup_doc:
            assert np.allclose(setup.geometry.positions, setup_doc["geometry"]["positions_m"])
        else:
            assert setup.geometry is None


def test_48k_originals_accepted_and_resampled_at_use(scratch_root):
    from cabinmix import SceneSpec, resample, synthesize

    victim = scratch_root / "fixture" / "array" / "noise" / "driving_s50_w0.wav"
    original = read_wav(victim)
    upsampled = resample(original, 48000)
    write_wav(victim, upsampled, "pcm24")

    fresh = load_dataset(scratch_root)
    assert validate(fresh).ok  # 48 kHz originals are allowed
    speech = AudioBuffer(np.random.default_rng(0).standard_normal(16000) * 0.05, 16000)
    result = synthesize(
        fresh,
        SceneSpec(car="fixture", setup="array", x=speech, w=0, speed=50, seed=1),
    )
    assert result.y.sample_rate == 16000
    assert result.y.length == 16000


# ---- validation ----


def test_complete_fixture_validates_clean(index):
    report = validate(index)
    assert report.ok
    assert report.findings == ()


def test_validate_flags_missing_ir_combination(scratch_root):
    manifest = scratch_root / "manifest.json"
    doc = json.loads(manifest.read_text())
    irs = doc["cars"][0]["setups"]["array"]["impulse_responses"]
    removed = next(
        e for e in irs if e["position"] == "rear_left" and e["window_state"] == 1
    )
    irs.remove(removed)
    manifest.write_text(json.dumps(doc))
    report = validate(load_dataset(scratch_root))
    missing = report.by_kind("missing_ir")
    assert len(missing) == 1
    assert "rear_left/w1" in missing[0].message


def test_validate_flags_missing_noise_combination(scratch_root):
    manifest = scratch_root / "manifest.json"
    doc = json.loads(manifest.read_text())
    noise = doc["cars"][0]["setups"]["distributed"]["noise"]
    removed = next(
        e for e in noise if e["kind"] == "ventilation" and e["level"] == 2 and e["window_state"] == 0
    )
    noise.remove(removed)
    manifest.write_text(json.dumps(doc))
    report = validate(load_dataset(scratch_root))
    missing = report.by_kind("missing_noise")
    assert len(missing) == 1
    assert "l2/w0" in missing[0].message


def test_validate_detects_injected_clipping(scratch_root):
    victim = scratch_root / "fixture" / "array" / "noise" / "driving_s50_w0.wav"
    buf = read_wav(victim)
    samples = np.array(buf.samples)
    samples[2, 1000:1010] = 1.0  # ten consecutive full-scale samples
    write_wav(victim, AudioBuffer(samples, buf.sample_rate), "pcm24")
    report = validate(load_dataset(scratch_root))
    clipping = report.by_kind("clipping")
    assert len(clipping) == 1
    assert "driving s50/w0" in clipping[0].message
    assert "[2]" in clipping[0].message


def test_validate_reports_undecodable_audio(scratch_root):
    victim = scratch_root / "fixture" / "array" / "noise" / "vent_l1_w0.wav"
    victim.write_bytes(b"RIFFgarbage that is not wave data")
    report = validate(load_dataset(scratch_root))
    broken = report.by_kind("decode_error")
    assert len(broken) == 1
    assert "vent" in broken[0].message


def test_validate_is_pure(index):
    first = validate(index)
    second = validate(index)
    assert first == second


# ---- sensitivity calibration ----


def test_estimate_sensitivity_known_digital_level():
    clip = pink_noise()
    weighted_rms = rms(a_weight(clip).channel(0))
    digital_dbfs = 20 * math.log10(weighted_rms)
    offset = estimate_sensitivity(clip, 0, 65.0)
    assert offset == pytest.approx(65.0 - digital_dbfs, abs=1e-12)


def test_estimate_sensitivity_round_trip():
    clip = pink_noise(seed=12)
    offset = estimate_sensitivity(clip, 0, 73.2)
    level = equivalent_level(clip, SensitivityMap((offset,)), 0)
    assert level == pytest.approx(73.2, abs=1e-9)


def test_estimate_sensitivity_halves_with_double_amplitude():
    clip = pink_noise(seed=13)
    louder = AudioBuffer(clip.samples * 2.0, clip.sample_rate)
    delta = estimate_sensitivity(clip, 0, 65.0) - estimate_sensitivity(louder, 0, 65.0)
    assert delta == pytest.approx(20 * math.log10(2), abs=1e-9)


def test_estimate_sensitivity_rejects_silence():
    silent = AudioBuffer(np.zeros((1, 16000)), 16000)
    with pytest.raises(Exception, match="silent"):
        estimate_sensitivity(silent, 0, 65.0)

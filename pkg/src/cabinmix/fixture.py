"""Synthetic miniature dataset for desk-scale testing.

Generates one fictional car with both microphone setups, eight channels each:
impulse responses built from a geometric direct path plus an exponentially
decaying reflection tail, driving noise as low-pass shaped pink noise whose
level grows with synthetic speed, band-limited ventilation noise per level,
audio-system IRs, an event clip, and a manifest with sensitivity offsets.
Everything is a deterministic function of the seed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .array import ArrayGeometry
from .audio import AudioBuffer, write_wav
from .dataset import SPEECH_POSITIONS, dump_manifest
from .dsp import a_weight, rms

FIXTURE_CAR_ID = "fixture"
FIXTURE_RATE = 16000
SPEED_OF_SOUND = 343.0
IR_LENGTH = 1024
NOISE_SECONDS = 6.0
REVERB_T60 = 0.05

# Cabin coordinates in meters: x forward, y left, z up.
_SOURCE_POSITIONS = {
    "driver": (0.45, -0.37, 1.10),
    "front_passenger": (0.45, 0.37, 1.10),
    "rear_left": (-0.35, -0.35, 1.05),
    "rear_middle": (-0.35, 0.00, 1.05),
    "rear_right": (-0.35, 0.35, 1.05),
}
_DOOR_SPEAKERS = ((0.95, -0.55, 0.65), (0.95, 0.55, 0.65))

_ARRAY_CENTER = (0.75, 0.0, 0.90)
_DISTRIBUTED_MICS = (
    (0.95, -0.45, 1.25),
    (0.95, 0.45, 1.25),
    (0.85, -0.60, 1.05),
    (0.80, 0.00, 1.00),
    (0.85, 0.60, 1.05),
    (0.35, 0.00, 0.80),
    (-0.55, -0.40, 1.20),
    (-0.55, 0.40, 1.20),
)

_SETUPS = {
    "array": {
        "reference_channel": 5,
        "window_states": (0, 1),
        "speed_grid": (0, 50, 70, 90, 110),
        "ventilation_levels": (1, 2, 3),
    },
    "distributed": {
        "reference_channel": 3,
        "window_states": (0, 1),
        "speed_grid": (0, 50, 110),
        "ventilation_levels": (1, 2),
    },
}

_DIRECT_GAIN = 7e-4  # direct-path IR amplitude at 1 m
_TAIL_ENERGY_RATIO = 0.8  # reflection energy relative to the direct path
_BASE_OFFSET_DB = 115.0  # nominal sensitivity offset, keeps 24-bit headroom


def driving_noise_dba(speed: int, window_state: int) -> float:
    """Target equivalent level of fixture driving noise at the reference mic."""
    return 42.0 + 0.32 * speed + 2.2 * window_state


def ventilation_noise_dba(level: int, window_state: int) -> float:
    return 51.0 + 6.0 * level + 1.2 * window_state


def _mic_positions(setup: str) -> np.ndarray:
    if setup == "array":
        return ArrayGeometry.circular(8, radius=0.05, center=_ARRAY_CENTER).positions
    return np.asarray(_DISTRIBUTED_MICS, dtype=np.float64)


def _impulse_response(
    rng: np.random.Generator, mics: np.ndarray, source, window_state: int
) -> np.ndarray:
    out = np.zeros((len(mics), IR_LENGTH))
    tail_scale = 1.0 - 0.12 * window_state  # open windows bleed off reflections
    src = np.asarray(source, dtype=np.float64)
    for ch, mic in enumerate(mics):
        dist = float(np.linalg.norm(src - mic))
        delay = int(round(dist / SPEED_OF_SOUND * FIXTURE_RATE))
        direct = _DIRECT_GAIN / max(dist, 0.1)
        out[ch, delay] = direct
        tail_start = delay + max(1, int(round(0.002 * FIXTURE_RATE)))
        n_tail = IR_LENGTH - tail_start
        t = np.arange(n_tail) / FIXTURE_RATE
        envelope = np.exp(-6.9078 * t / REVERB_T60)  # -60 dB at T60
        tail = rng.standard_normal(n_tail) * envelope
        energy = float(np.sqrt(np.sum(np.square(tail))))
        tail *= _TAIL_ENERGY_RATIO * tail_scale * direct / max(energy, 1e-30)
        out[ch, tail_start:] += tail
    return out


def _audio_system_ir(rng: np.random.Generator, mics: np.ndarray, window_state: int) -> np.ndarray:
    acc = np.zeros((len(mics), IR_LENGTH))
    for speaker in _DOOR_SPEAKERS:
        acc += _impulse_response(rng, mics, speaker, window_state)
    return acc / len(_DOOR_SPEAKERS)


def _shaped_noise(
    rng: np.random.Generator, channels: int, n: int, weight_fn
) -> np.ndarray:
    """Gaussian noise spectrally shaped per channel by weight_fn(freqs_hz)."""
    freqs = np.fft.rfftfreq(n, d=1.0 / FIXTURE_RATE)
    weights = weight_fn(freqs)
    spectrum = rng.standard_normal((channels, len(freqs))) + 1j * rng.standard_normal(
        (channels, len(freqs))
    )
    spectrum *= weights
    spectrum[:, 0] = 0.0
    return np.fft.irfft(spectrum, n=n, axis=1)


def _pink_lowpass_weight(freqs: np.ndarray, corner_hz: float) -> np.ndarray:
    w = np.zeros_like(freqs)
    nz = freqs > 0
    w[nz] = 1.0 / np.sqrt(freqs[nz])  # pink
    w[nz] /= np.sqrt(1.0 + (freqs[nz] / corner_hz) ** 2)  # gentle low-pass
    return w


def _band_weight(freqs: np.ndarray, center_hz: float, log_width: float = 0.6) -> np.ndarray:
    w = np.zeros_like(freqs)
    nz = freqs > 0
    w[nz] = np.exp(-0.5 * (np.log(freqs[nz] / center_hz) / log_width) ** 2)
    return w


def _scale_to_level(
    samples: np.ndarray, reference_channel: int, target_dba: float, offset_db: float
) -> np.ndarray:
    """Scale all channels so the reference channel meters exactly target_dba."""
    buf = AudioBuffer(samples, FIXTURE_RATE)
    measured = rms(a_weight(buf).channel(reference_channel))
    want = 10.0 ** ((target_dba - offset_db) / 20.0)
    return samples * (want / measured)


def _noise_clip(
    rng: np.random.Generator,
    channels: int,
    reference_channel: int,
    offsets,
    target_dba: float,
    weight_fn,
) -> np.ndarray:
    n = int(NOISE_SECONDS * FIXTURE_RATE)
    samples = _shaped_noise(rng, channels, n, weight_fn)
    # small fixed per-channel spread, reference channel kept exact
    jitter = 10.0 ** (rng.uniform(-0.5, 0.5, size=channels) / 20.0)
    jitter[reference_channel] = 1.0
    samples *= jitter[:, None]
    return _scale_to_level(samples, reference_channel, target_dba, offsets[reference_channel])


def _event_clip(rng: np.random.Generator, channels: int) -> np.ndarray:
    n = int(2.0 * FIXTURE_RATE)
    t = np.arange(n) / FIXTURE_RATE
    envelope = np.exp(-t / 0.15)
    burst = rng.standard_normal((channels, n)) * envelope[None, :]
    return 0.05 * burst / max(np.max(np.abs(burst)), 1e-30)


def generate_fixture(root_path: str | Path, seed: int) -> Path:
    """Write a complete miniature dataset under root_path; returns the root."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    offsets = np.round(_BASE_OFFSET_DB + rng.uniform(-0.8, 0.8, size=8), 3)

    setups_doc: dict = {}
    for setup_name, cfg in _SETUPS.items():
        mics = _mic_positions(setup_name)
        ref = cfg["reference_channel"]
        setup_dir = root / FIXTURE_CAR_ID / setup_name
        (setup_dir / "ir").mkdir(parents=True, exist_ok=True)
        (setup_dir / "noise").mkdir(parents=True, exist_ok=True)

        ir_entries = []
        for pos in SPEECH_POSITIONS:
            for w in cfg["window_states"]:
                samples = _impulse_response(rng, mics, _SOURCE_POSITIONS[pos], w)
                rel = f"{FIXTURE_CAR_ID}/{setup_name}/ir/{pos}_w{w}.wav"
                write_wav(root / rel, AudioBuffer(samples, FIXTURE_RATE), "float32")
                ir_entries.append(
                    {"position": pos, "window_state": w, "calibration_dba": 60.0, "path": rel}
                )
        for w in cfg["window_states"]:
            samples = _audio_system_ir(rng, mics, w)
            rel = f"{FIXTURE_CAR_ID}/{setup_name}/ir/audio_system_w{w}.wav"
            write_wav(root / rel, AudioBuffer(samples, FIXTURE_RATE), "float32")
            ir_entries.append(
                {
                    "position": "audio_system",
                    "window_state": w,
                    "calibration_dba": 60.0,
                    "path": rel,
                }
            )

        noise_entries = []
        for speed in cfg["speed_grid"]:
            for w in cfg["window_states"]:
                corner = 450.0 + 2.5 * speed
                samples = _noise_clip(
                    rng,
                    8,
                    ref,
                    offsets,
                    driving_noise_dba(speed, w),
                    lambda f, c=corner: _pink_lowpass_weight(f, c),
                )
                rel = f"{FIXTURE_CAR_ID}/{setup_name}/noise/driving_s{speed}_w{w}.wav"
                write_wav(root / rel, AudioBuffer(samples, FIXTURE_RATE), "pcm24")
                noise_entries.append(
                    {"kind": "driving", "speed_kmh": speed, "window_state": w, "path": rel}
                )
        for level in cfg["ventilation_levels"]:
            for w in cfg["window_states"]:
                center = 250.0 + 150.0 * level
                samples = _noise_clip(
                    rng,
                    8,
                    ref,
                    offsets,
                    ventilation_noise_dba(level, w),
                    lambda f, c=center: _band_weight(f, c),
                )
                rel = f"{FIXTURE_CAR_ID}/{setup_name}/noise/vent_l{level}_w{w}.wav"
                write_wav(root / rel, AudioBuffer(samples, FIXTURE_RATE), "pcm24")
                noise_entries.append(
                    {"kind": "ventilation", "level": level, "window_state": w, "path": rel}
                )

        rel = f"{FIXTURE_CAR_ID}/{setup_name}/noise/event_door_w0.wav"
        write_wav(root / rel, AudioBuffer(_event_clip(rng, 8), FIXTURE_RATE), "pcm24")
        noise_entries.append(
            {"kind": "event", "window_state": 0, "annotation": "door slam", "path": rel}
        )

        setup_doc = {
            "channels": 8,
            "reference_channel": ref,
            "sample_rate": FIXTURE_RATE,
            "sensitivity_offsets": [float(o) for o in offsets],
            "window_states": list(cfg["window_states"]),
            "speed_grid_kmh": list(cfg["speed_grid"]),
            "ventilation_levels": list(cfg["ventilation_levels"]),
            "impulse_responses": ir_entries,
            "noise": noise_entries,
        }
        if setup_name == "array":
            setup_doc["geometry"] = {
                "speed_of_sound": SPEED_OF_SOUND,
                "positions_m": [[float(v) for v in row] for row in mics],
            }
        setups_doc[setup_name] = setup_doc

    manifest = {
        "format_version": 1,
        "cars": [
            {
                "id": FIXTURE_CAR_ID,
                "brand": "Fixture",
                "model": "Cabin",
                "year": 2024,
                "audio_system": True,
                "setups": setups_doc,
            }
        ],
    }
    dump_manifest(manifest, root / "manifest.json")
    return root

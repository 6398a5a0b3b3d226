"""Scene synthesis: speech, audio-program, driving and ventilation components
superposed into the multichannel microphone signal.

The output Y is the samplewise sum S + A + N + V (fixed order).  Speech is
calibrated through the impulse response's source level: the dry signal is
normalized to unit A-weighted active-speech level, convolved with the
(position, window) IR, and scaled by 10^((Ls - calibration)/20).  The audio
program is scaled so its equivalent level at the reference microphone equals
La.  Driving and ventilation noise are used at recorded amplitude — their
absolute level is fixed by the recording chain — and recycled to the length
of the resampled dry speech, with seeded start offsets.

All randomness derives from the spec's seed: component k uses
``default_rng([k, seed])`` so each component's samples depend only on the
seed, never on which other components are enabled.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, read_wav
from .dataset import (
    SPEECH_POSITIONS,
    DatasetIndex,
    ImpulseResponseSet,
    SetupEntry,
    VENTILATION_LEVELS,
    WINDOW_STATES,
)
from .dsp import a_weight, convolve, downmix, equivalent_level, resample, rms
from .errors import ClippingWarning, ParameterError

DEFAULT_SEED = 1234
DEFAULT_TARGET_RATE = 16000
CROSSFADE_SECONDS = 0.1

_SEED_TAG_NOISE = 1
_SEED_TAG_VENT = 2
_SEED_TAG_AUDIO = 3

# Active-speech level estimation: frame length / overlap and how far below the
# loudest frame a frame may sit and still count as speech.
_FRAME_SECONDS = 0.025
_ACTIVE_RANGE_DB = 35.0


@dataclass(frozen=True)
class SceneSpec:
    """Full parameter set for one synthesized scene.

    x is the dry speech (buffer or WAV path) and always defines the output
    length.  p/ls enable the speech component, la/z the audio program, speed
    the driving noise and vent the ventilation noise; omitted components are
    exactly zero in the output.
    """

    car: str
    setup: str
    x: AudioBuffer | str | Path
    w: int
    p: str | None = None
    ls: float | None = None
    la: float | None = None
    z: AudioBuffer | str | Path | None = None
    speed: int | None = None
    vent: int | None = None
    channels: tuple[int, ...] | None = None
    target_rate: int = DEFAULT_TARGET_RATE
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.w not in WINDOW_STATES:
            raise ParameterError(f"w must be one of {list(WINDOW_STATES)}, got {self.w}")
        if self.vent is not None and self.vent not in VENTILATION_LEVELS:
            raise ParameterError(
                f"l must be one of {list(VENTILATION_LEVELS)}, got {self.vent}"
            )
        if (self.p is None) != (self.ls is None):
            raise ParameterError("p and Ls must be given together")
        if self.p is not None and self.p not in SPEECH_POSITIONS:
            raise ParameterError(
                f"p must be one of {list(SPEECH_POSITIONS)}, got {self.p!r}"
            )
        if self.ls is not None and self.ls < 0:
            raise ParameterError(f"Ls must be >= 0, got {self.ls}")
        if self.la is not None and self.la < 0:
            raise ParameterError(f"La must be >= 0, got {self.la}")
        if (self.la is None) != (self.z is None):
            raise ParameterError("La and z must be given together")
        if self.target_rate <= 0:
            raise ParameterError(f"target_rate must be positive, got {self.target_rate}")
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))


@dataclass(frozen=True)
class SceneResult:
    """Synthesized microphone signal plus its four addends and bookkeeping."""

    y: AudioBuffer
    speech: AudioBuffer
    audio: AudioBuffer
    noise: AudioBuffer
    ventilation: AudioBuffer
    info: dict = field(compare=False)


def spec_from_json(doc: dict, base_dir: str | Path = ".") -> SceneSpec:
    """Build a SceneSpec from its JSON document form; audio fields are paths
    resolved against base_dir."""
    base = Path(base_dir)

    def resolve(value):
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    known = {
        "car", "setup", "x", "w", "p", "ls", "la", "z",
        "speed", "vent", "channels", "target_rate", "seed",
    }
    unknown = set(doc) - known
    if unknown:
        raise ParameterError(f"unknown scene spec fields: {sorted(unknown)}")
    kwargs = dict(doc)
    kwargs["x"] = resolve(kwargs.get("x"))
    if kwargs["x"] is None:
        raise ParameterError("scene spec needs a dry speech file: x")
    if kwargs.get("z") is not None:
        kwargs["z"] = resolve(kwargs["z"])
    if kwargs.get("channels") is not None:
        kwargs["channels"] = tuple(kwargs["channels"])
    return SceneSpec(**kwargs)


def spec_to_json(spec: SceneSpec) -> dict:
    def audio_repr(value):
        if value is None:
            return None
        if isinstance(value, AudioBuffer):
            return f"<buffer {value.channel_count}x{value.length}@{value.sample_rate}>"
        return str(value)

    return {
        "car": spec.car,
        "setup": spec.setup,
        "x": audio_repr(spec.x),
        "w": spec.w,
        "p": spec.p,
        "ls": spec.ls,
        "la": spec.la,
        "z": audio_repr(spec.z),
        "speed": spec.speed,
        "vent": spec.vent,
        "channels": list(spec.channels) if spec.channels is not None else None,
        "target_rate": spec.target_rate,
        "seed": spec.seed,
    }


def _as_buffer(value, what: str) -> AudioBuffer:
    if isinstance(value, AudioBuffer):
        return value
    try:
        return read_wav(value)
    except OSError as exc:
        raise ParameterError(f"cannot read {what}: {value}: {exc}") from exc


def active_speech_level_db(buf: AudioBuffer) -> float:
    """A-weighted active-speech level (dBFS) of a mono signal.

    Frames of 25 ms at 50% overlap; frames within 35 dB of the loudest frame
    count as active, which keeps leading/trailing silence from biasing the
    level.  Returns 20*log10 of the active RMS.
    """
    mono = downmix(buf)
    weighted = a_weight(mono).channel(0)
    frame = max(1, int(round(_FRAME_SECONDS * buf.sample_rate)))
    hop = max(1, frame // 2)
    if len(weighted) <= frame:
        energies = np.array([np.mean(np.square(weighted))])
    else:
        starts = np.arange(0, len(weighted) - frame + 1, hop)
        sq = np.square(weighted)
        csum = np.concatenate([[0.0], np.cumsum(sq)])
        energies = (csum[starts + frame] - csum[starts]) / frame
    peak = float(np.max(energies))
    if peak <= 0.0:
        raise ParameterError("silent dry speech")
    active = energies[energies >= peak * 10.0 ** (-_ACTIVE_RANGE_DB / 10.0)]
    return 10.0 * math.log10(float(np.mean(active)))


def recycle(clip: AudioBuffer, target_len: int, seed) -> AudioBuffer:
    """Loop or excerpt a clip to exactly target_len samples.

    A clip at least as long as the target yields a contiguous excerpt from a
    seeded start offset.  Shorter clips are looped with a 100 ms linear
    crossfade at each seam (linear, not equal-power, so looping a constant
    signal stays constant); clips shorter than two crossfades fall back to
    hard concatenation.
    """
    n = clip.length
    if n == 0:
        raise ParameterError("empty clip")
    if target_len <= 0:
        raise ParameterError(f"target_len must be positive, got {target_len}")
    rng = np.random.default_rng(seed)
    if n >= target_len:
        start = int(rng.integers(0, n - target_len + 1))
        return AudioBuffer(clip.samples[:, start : start + target_len], clip.sample_rate)

    xf = int(round(CROSSFADE_SECONDS * clip.sample_rate))
    if n < 2 * xf:
        start = int(rng.integers(0, n))
        reps = -(-(target_len + start) // n)  # ceil
        tiled = np.tile(clip.samples, (1, reps))
        return AudioBuffer(tiled[:, start : start + target_len], clip.sample_rate)

    start = int(rng.integers(0, n - 2 * xf + 1))
    out = np.empty((clip.channel_count, target_len))
    first = clip.samples[:, start:]
    end = first.shape[1]
    out[:, : min(end, target_len)] = first[:, : min(end, target_len)]
    ramp = (np.arange(xf) + 1.0) / (xf + 1.0)
    while end < target_len:
        seam = end - xf
        region = min(end, target_len) - seam
        prev_tail = out[:, seam : seam + region]
        next_head = clip.samples[:, :region]
        out[:, seam : seam + region] = prev_tail + ramp[:region] * (next_head - prev_tail)
        copy_end = min(seam + n, target_len)
        if copy_end > end:
            out[:, end:copy_end] = clip.samples[:, xf : xf + (copy_end - end)]
        end = seam + n
    return AudioBuffer(out, clip.sample_rate)


def _prepared_dry_speech(spec: SceneSpec) -> AudioBuffer:
    x = downmix(_as_buffer(spec.x, "dry speech x"))
    return resample(x, spec.target_rate)


def _channel_list(spec: SceneSpec, setup: SetupEntry) -> list[int]:
    channels = spec.channels if spec.channels is not None else tuple(range(setup.channels))
    if not channels:
        raise ParameterError("channel selection is empty")
    for c in channels:
        if not 0 <= c < setup.channels:
            raise ParameterError(
                f"channel {c} out of range for {setup.channels}-channel setup"
            )
    return list(channels)


def _zeros(channels: int, length: int, rate: int) -> AudioBuffer:
    return AudioBuffer(np.zeros((channels, length)), rate)


def _ir_at_rate(ir_set: ImpulseResponseSet, channels, rate: int) -> AudioBuffer:
    ir = ir_set.ir.select_channels(channels)
    return resample(ir, rate) if ir.sample_rate != rate else ir


def _build_speech(spec, setup, channels, x_rs) -> tuple[AudioBuffer, dict]:
    ir_set = setup.ir_for(spec.p, spec.w)
    level = active_speech_level_db(x_rs)
    norm_gain = 10.0 ** (-level / 20.0)
    effort_gain = 10.0 ** ((spec.ls - ir_set.calibration_level) / 20.0)
    ir = _ir_at_rate(ir_set, channels, spec.target_rate)
    wet = convolve(
        AudioBuffer(x_rs.samples * norm_gain, spec.target_rate), ir
    )
    out = AudioBuffer(wet.samples * effort_gain, spec.target_rate)
    return out, {"normalization_gain": norm_gain, "effort_gain": effort_gain}


def _build_audio_program(spec, car, setup, channels, target_len, ref_pos) -> tuple[AudioBuffer, dict]:
    if not car.audio_system:
        raise ParameterError(f"no audio system in car {car.car_id!r}")
    ir_set = setup.audio_ir_for(spec.w)
    z = downmix(_as_buffer(spec.z, "audio program z"))
    z = resample(z, spec.target_rate)
    ir = _ir_at_rate(ir_set, channels, spec.target_rate)
    wet = convolve(z, ir)
    recycled = recycle(wet, target_len, [_SEED_TAG_AUDIO, spec.seed])
    r = rms(a_weight(recycled).channel(ref_pos))
    if r <= 0.0:
        return _zeros(len(channels), target_len, spec.target_rate), {"audio_gain": None}
    level0 = 20.0 * math.log10(r) + setup.sensitivity.offsets[setup.reference_channel]
    gain = 10.0 ** ((spec.la - level0) / 20.0)
    return (
        AudioBuffer(recycled.samples * gain, spec.target_rate),
        {"audio_gain": gain},
    )


def _build_noise_component(
    spec, setup, channels, target_len, clip, seed_tag
) -> AudioBuffer:
    audio = clip.audio.select_channels(channels)
    if audio.sample_rate != spec.target_rate:
        audio = resample(audio, spec.target_rate)
    return recycle(audio, target_len, [seed_tag, spec.seed])


def build_speech(index: DatasetIndex, spec: SceneSpec) -> AudioBuffer:
    """Speech component S on the spec's selected channels."""
    setup = index.setup(spec.car, spec.setup)
    channels = _channel_list(spec, setup)
    x_rs = _prepared_dry_speech(spec)
    if spec.p is None:
        return _zeros(len(channels), x_rs.length, spec.target_rate)
    out, _ = _build_speech(spec, setup, channels, x_rs)
    return out


def build_audio_program(index: DatasetIndex, spec: SceneSpec) -> AudioBuffer:
    """Audio-program component A, scaled to hit La at the reference mic."""
    car = index.car(spec.car)
    setup = car.setup(spec.setup)
    channels = _channel_list(spec, setup)
    x_rs = _prepared_dry_speech(spec)
    if spec.la is None:
        return _zeros(len(channels), x_rs.length, spec.target_rate)
    ref = setup.reference_channel
    internal = channels if ref in channels else channels + [ref]
    out, _ = _build_audio_program(
        spec, car, setup, internal, x_rs.length, internal.index(ref)
    )
    picked = [internal.index(c) for c in channels]
    return AudioBuffer(out.samples[picked], spec.target_rate)


def build_noise(index: DatasetIndex, spec: SceneSpec) -> AudioBuffer:
    """Driving-noise component N at recorded amplitude."""
    setup = index.setup(spec.car, spec.setup)
    channels = _channel_list(spec, setup)
    x_rs = _prepared_dry_speech(spec)
    if spec.speed is None:
        return _zeros(len(channels), x_rs.length, spec.target_rate)
    clip = setup.driving_clip(spec.speed, spec.w)
    return _build_noise_component(spec, setup, channels, x_rs.length, clip, _SEED_TAG_NOISE)


def build_ventilation(index: DatasetIndex, spec: SceneSpec) -> AudioBuffer:
    """Ventilation-noise component V at recorded amplitude."""
    setup = index.setup(spec.car, spec.setup)
    channels = _channel_list(spec, setup)
    x_rs = _prepared_dry_speech(spec)
    if spec.vent is None:
        return _zeros(len(channels), x_rs.length, spec.target_rate)
    clip = setup.ventilation_clip(spec.vent, spec.w)
    return _build_noise_component(spec, setup, channels, x_rs.length, clip, _SEED_TAG_VENT)


def scenario_irs(index: DatasetIndex, spec: SceneSpec) -> list[ImpulseResponseSet]:
    """Impulse responses a scenario involves, restricted to selected channels."""
    setup = index.setup(spec.car, spec.setup)
    channels = _channel_list(spec, setup)
    out = []
    if spec.p is not None:
        out.append(setup.ir_for(spec.p, spec.w).select_channels(channels))
    if spec.la is not None:
        car = index.car(spec.car)
        if not car.audio_system:
            raise ParameterError(f"no audio system in car {car.car_id!r}")
        out.append(setup.audio_ir_for(spec.w).select_channels(channels))
    return out


def synthesize(index: DatasetIndex, spec: SceneSpec) -> SceneResult:
    """Build all components and superpose them; deterministic under (spec, seed)."""
    car = index.car(spec.car)
    setup = car.setup(spec.setup)
    selected = _channel_list(spec, setup)
    ref = setup.reference_channel
    internal = selected if ref in selected else selected + [ref]
    ref_pos = internal.index(ref)

    x_rs = _prepared_dry_speech(spec)
    length = x_rs.length
    rate = spec.target_rate
    gains: dict = {}

    if spec.p is not None:
        speech, speech_gains = _build_speech(spec, setup, internal, x_rs)
        gains.update(speech_gains)
    else:
        speech = _zeros(len(internal), length, rate)

    if spec.la is not None:
        audio, audio_gains = _build_audio_program(
            spec, car, setup, internal, length, ref_pos
        )
        gains.update(audio_gains)
    else:
        audio = _zeros(len(internal), length, rate)

    if spec.speed is not None:
        clip = setup.driving_clip(spec.speed, spec.w)
        noise = _build_noise_component(spec, setup, internal, length, clip, _SEED_TAG_NOISE)
    else:
        noise = _zeros(len(internal), length, rate)

    if spec.vent is not None:
        clip = setup.ventilation_clip(spec.vent, spec.w)
        vent = _build_noise_component(spec, setup, internal, length, clip, _SEED_TAG_VENT)
    else:
        vent = _zeros(len(internal), length, rate)

    # Fixed summation order: S, A, N, V.
    y = ((speech.samples + audio.samples) + noise.samples) + vent.samples

    peak = float(np.max(np.abs(y))) if y.size else 0.0
    if peak > 1.0:
        warnings.warn(
            ClippingWarning(
                f"output peaks at {20.0 * math.log10(peak):+.2f} dBFS above full scale",
                peak=peak,
            ),
            stacklevel=2,
        )

    def level_at_ref(buf: AudioBuffer) -> float | None:
        r = rms(a_weight(buf).channel(ref_pos))
        if r <= 0.0:
            return None
        return 20.0 * math.log10(r) + setup.sensitivity.offsets[ref]

    levels = {
        "speech": level_at_ref(speech),
        "audio": level_at_ref(audio),
        "noise": level_at_ref(noise),
        "ventilation": level_at_ref(vent),
    }

    picked = [internal.index(c) for c in selected]

    def sliced(samples: np.ndarray) -> AudioBuffer:
        return AudioBuffer(samples[picked], rate)

    info = {
        "gains": gains,
        "component_levels_dba": levels,
        "reference_channel": ref,
        "channels": list(selected),
        "sample_rate": rate,
        "length": length,
        "peak": peak,
        "peak_dbfs": 20.0 * math.log10(peak) if peak > 0 else None,
        "clipped": peak > 1.0,
        "seed": spec.seed,
    }
    return SceneResult(
        y=sliced(y),
        speech=sliced(speech.samples),
        audio=sliced(audio.samples),
        noise=sliced(noise.samples),
        ventilation=sliced(vent.samples),
        info=info,
    )


def write_sidecar(path: str | Path, spec: SceneSpec, result: SceneResult) -> None:
    """Write the JSON sidecar with the spec, applied gains and measured levels."""
    doc = {"spec": spec_to_json(spec), **result.info}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

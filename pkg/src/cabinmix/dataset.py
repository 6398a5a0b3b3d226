"""Dataset layout, manifest parsing, validation and sensitivity calibration.

A dataset is a directory with a ``manifest.json`` at its root plus WAV files
referenced by relative paths.  The manifest lists cars; each car lists one or
both microphone setups (``array`` / ``distributed``); each setup declares its
channel count, reference channel, per-channel sensitivity offsets, condition
grids, and catalogs of impulse responses and noise clips keyed by condition.

Audio payloads are decoded lazily on first access and cached; decoding is
synchronized so each file is read at most once.  The index is immutable after
loading, so concurrent readers are safe.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array import ArrayGeometry
from .audio import AudioBuffer, read_wav
from .dsp import a_weight, rms
from .errors import CabinmixError, DatasetError, ParameterError

MANIFEST_NAME = "manifest.json"

SPEECH_POSITIONS = ("driver", "front_passenger", "rear_left", "rear_middle", "rear_right")
AUDIO_SYSTEM_POSITION = "audio_system"
WINDOW_STATES = (0, 1, 2, 3)
VENTILATION_LEVELS = (1, 2, 3)

# Full scale for 24-bit PCM payloads; fewer consecutive samples at or above
# this are treated as legitimate peaks.
CLIP_THRESHOLD = 1.0 - 2.0**-23
CLIP_RUN = 3

MIN_NOISE_SECONDS = 5.0


class _LazyWav:
    """Decode-once WAV loader, safe under concurrent access."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._buf: AudioBuffer | None = None

    def get(self) -> AudioBuffer:
        if self._buf is None:
            with self._lock:
                if self._buf is None:
                    self._buf = read_wav(self.path)
        return self._buf


class _Preloaded:
    def __init__(self, buf: AudioBuffer):
        self.path = None
        self._buf = buf

    def get(self) -> AudioBuffer:
        return self._buf


@dataclass(frozen=True)
class SensitivityMap:
    """Per-channel offsets turning A-weighted digital RMS (dBFS) into dBA SPL."""

    offsets: tuple[float, ...]

    def __post_init__(self):
        if not self.offsets:
            raise DatasetError("sensitivity map needs at least one channel")
        if not all(math.isfinite(o) for o in self.offsets):
            raise DatasetError("sensitivity offsets must be finite")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))


@dataclass(frozen=True)
class ImpulseResponseSet:
    """Multichannel impulse response for one (source position, window state)."""

    source_position: str
    window_state: int
    calibration_level: float  # dBA of the measurement source at 1 m
    _source: object

    @property
    def ir(self) -> AudioBuffer:
        return self._source.get()

    @property
    def path(self) -> Path | None:
        return self._source.path

    def select_channels(self, channels) -> "ImpulseResponseSet":
        return ImpulseResponseSet(
            self.source_position,
            self.window_state,
            self.calibration_level,
            _Preloaded(self.ir.select_channels(channels)),
        )


@dataclass(frozen=True)
class NoiseClip:
    """Condition-tagged noise recording (driving, ventilation or event)."""

    kind: str
    window_state: int
    speed: int | None = None
    vent_level: int | None = None
    annotation: str = ""
    _source: object = None

    @property
    def audio(self) -> AudioBuffer:
        return self._source.get()

    @property
    def path(self) -> Path | None:
        return self._source.path


@dataclass(frozen=True)
class SetupEntry:
    name: str
    channels: int
    reference_channel: int
    sample_rate: int
    sensitivity: SensitivityMap
    window_states: tuple[int, ...]
    speed_grid: tuple[int, ...]
    ventilation_levels: tuple[int, ...]
    geometry: ArrayGeometry | None
    speech_irs: dict
    audio_irs: dict
    driving: dict
    ventilation: dict
    events: tuple

    def ir_for(self, position: str, window_state: int) -> ImpulseResponseSet:
        key = (position, window_state)
        if key not in self.speech_irs:
            have = sorted({p for p, _ in self.speech_irs})
            raise ParameterError(
                f"no impulse response for position={position!r}, window_state={window_state}; "
                f"available positions {have}, window states {list(self.window_states)}"
            )
        return self.speech_irs[key]

    def audio_ir_for(self, window_state: int) -> ImpulseResponseSet:
        if window_state not in self.audio_irs:
            raise ParameterError(
                f"no audio-system impulse response for window_state={window_state}; "
                f"available {sorted(self.audio_irs)}"
            )
        return self.audio_irs[window_state]

    def driving_clip(self, speed: int, window_state: int) -> NoiseClip:
        key = (speed, window_state)
        if key not in self.driving:
            raise ParameterError(
                f"no driving noise for speed={speed}, window_state={window_state}; "
                f"declared speeds {list(self.speed_grid)}, window states {list(self.window_states)}"
            )
        return self.driving[key]

    def ventilation_clip(self, level: int, window_state: int) -> NoiseClip:
        key = (level, window_state)
        if key not in self.ventilation:
            raise ParameterError(
                f"no ventilation noise for level={level}, window_state={window_state}; "
                f"declared levels {list(self.ventilation_levels)}, "
                f"window states {list(self.window_states)}"
            )
        return self.ventilation[key]


@dataclass(frozen=True)
class CarEntry:
    car_id: str
    brand: str
    model: str
    year: int
    audio_system: bool
    setups: dict

    def setup(self, name: str) -> SetupEntry:
        if name not in self.setups:
            raise ParameterError(
                f"car {self.car_id!r} has no setup {name!r}; available {sorted(self.setups)}"
            )
        return self.setups[name]


@dataclass(frozen=True)
class DatasetIndex:
    root: Path
    cars: dict

    def car(self, car_id: str) -> CarEntry:
        if car_id not in self.cars:
            raise ParameterError(f"no car {car_id!r} in dataset; available {sorted(self.cars)}")
        return self.cars[car_id]

    def setup(self, car_id: str, setup_name: str) -> SetupEntry:
        return self.car(car_id).setup(setup_name)


@dataclass(frozen=True)
class Finding:
    kind: str
    message: str
    path: str | None = None

    def __str__(self):
        loc = f" [{self.path}]" if self.path else ""
        return f"{self.kind}: {self.message}{loc}"


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple

    @property
    def ok(self) -> bool:
        return not self.findings

    def by_kind(self, kind: str):
        return [f for f in self.findings if f.kind == kind]


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise DatasetError(f"malformed manifest: missing {key!r} in {context}")
    return doc[key]


def _resolve_wav(root: Path, rel: str, context: str) -> Path:
    path = root / rel
    if not path.is_file():
        raise DatasetError(f"dangling file reference: {path} ({context})")
    return path


def _parse_setup(root: Path, car_id: str, name: str, doc: dict) -> SetupEntry:
    ctx = f"car {car_id!r} setup {name!r}"
    channels = int(_require(doc, "channels", ctx))
    if channels != 8:
        raise DatasetError(f"malformed manifest: {ctx} declares {channels} channels, expected 8")
    reference = int(_require(doc, "reference_channel", ctx))
    if not 0 <= reference < channels:
        raise DatasetError(f"malformed manifest: {ctx} reference_channel {reference} out of range")
    sample_rate = int(_require(doc, "sample_rate", ctx))
    offsets = _require(doc, "sensitivity_offsets", ctx)
    if len(offsets) != channels:
        raise DatasetError(
            f"malformed manifest: {ctx} has {len(offsets)} sensitivity offsets for "
            f"{channels} channels"
        )
    sensitivity = SensitivityMap(tuple(float(o) for o in offsets))

    window_states = tuple(int(w) for w in _require(doc, "window_states", ctx))
    if any(w not in WINDOW_STATES for w in window_states):
        raise DatasetError(f"malformed manifest: {ctx} window states must be within 0..3")
    speed_grid = tuple(int(s) for s in doc.get("speed_grid_kmh", ()))
    vent_levels = tuple(int(v) for v in doc.get("ventilation_levels", ()))
    if any(v not in VENTILATION_LEVELS for v in vent_levels):
        raise DatasetError(f"malformed manifest: {ctx} ventilation levels must be within 1..3")

    geometry = None
    if "geometry" in doc:
        geom_doc = doc["geometry"]
        geometry = ArrayGeometry(
            np.asarray(_require(geom_doc, "positions_m", f"{ctx} geometry"), dtype=np.float64),
            float(geom_doc.get("speed_of_sound", 343.0)),
        )
        if geometry.mic_count != channels:
            raise DatasetError(f"malformed manifest: {ctx} geometry has {geometry.mic_count} mics")

    speech_irs: dict = {}
    audio_irs: dict = {}
    for entry in _require(doc, "impulse_responses", ctx):
        pos = _require(entry, "position", f"{ctx} impulse response")
        w = int(_require(entry, "window_state", f"{ctx} impulse response"))
        cal = float(_require(entry, "calibration_dba", f"{ctx} impulse response"))
        if cal <= 0:
            raise DatasetError(f"malformed manifest: {ctx} IR {pos}/w{w} calibration must be > 0")
        path = _resolve_wav(root, _require(entry, "path", f"{ctx} impulse response"), ctx)
        ir_set = ImpulseResponseSet(pos, w, cal, _LazyWav(path))
        if pos == AUDIO_SYSTEM_POSITION:
            if w in audio_irs:
                raise DatasetError(f"duplicate catalog key: {pos}/w{w} in {ctx}")
            audio_irs[w] = ir_set
        else:
            if pos not in SPEECH_POSITIONS:
                raise DatasetError(f"malformed manifest: {ctx} unknown position {pos!r}")
            if (pos, w) in speech_irs:
                raise DatasetError(f"duplicate catalog key: {pos}/w{w} in {ctx}")
            speech_irs[(pos, w)] = ir_set

    driving: dict = {}
    ventilation: dict = {}
    events: list = []
    for entry in doc.get("noise", ()):
        kind = _require(entry, "kind", f"{ctx} noise")
        w = int(_require(entry, "window_state", f"{ctx} noise"))
        path = _resolve_wav(root, _require(entry, "path", f"{ctx} noise"), ctx)
        if kind == "driving":
            speed = int(_require(entry, "speed_kmh", f"{ctx} driving noise"))
            if (speed, w) in driving:
                raise DatasetError(f"duplicate catalog key: driving s{speed}/w{w} in {ctx}")
            driving[(speed, w)] = NoiseClip("driving", w, speed=speed, _source=_LazyWav(path))
        elif kind == "ventilation":
            level = int(_require(entry, "level", f"{ctx} ventilation noise"))
            if (level, w) in ventilation:
                raise DatasetError(f"duplicate catalog key: ventilation l{level}/w{w} in {ctx}")
            ventilation[(level, w)] = NoiseClip(
                "ventilation", w, vent_level=level, _source=_LazyWav(path)
            )
        elif kind == "event":
            events.append(
                NoiseClip(
                    "event", w, annotation=entry.get("annotation", ""), _source=_LazyWav(path)
                )
            )
        else:
            raise DatasetError(f"malformed manifest: {ctx} unknown noise kind {kind!r}")

    return SetupEntry(
        name=name,
        channels=channels,
        reference_channel=reference,
        sample_rate=sample_rate,
        sensitivity=sensitivity,
        window_states=window_states,
        speed_grid=speed_grid,
        ventilation_levels=vent_levels,
        geometry=geometry,
        speech_irs=speech_irs,
        audio_irs=audio_irs,
        driving=driving,
        ventilation=ventilation,
        events=tuple(events),
    )


def load_dataset(root_path: str | Path) -> DatasetIndex:
    """Load and index a dataset directory; audio decodes lazily on first use."""
    root = Path(root_path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetError(f"manifest not found: {manifest_path}")
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DatasetError(f"malformed manifest: {manifest_path}: {exc}") from exc

    cars: dict = {}
    for car_doc in _require(doc, "cars", "manifest"):
        car_id = _require(car_doc, "id", "car entry")
        if car_id in cars:
            raise DatasetError(f"duplicate catalog key: car {car_id!r}")
        setups = {}
        for setup_name, setup_doc in _require(car_doc, "setups", f"car {car_id!r}").items():
            if setup_name not in ("array", "distributed"):
                raise DatasetError(f"malformed manifest: unknown setup {setup_name!r}")
            setups[setup_name] = _parse_setup(root, car_id, setup_name, setup_doc)
        cars[car_id] = CarEntry(
            car_id=car_id,
            brand=car_doc.get("brand", ""),
            model=car_doc.get("model", ""),
            year=int(car_doc.get("year", 0)),
            audio_system=bool(car_doc.get("audio_system", False)),
            setups=setups,
        )
    return DatasetIndex(root=root, cars=cars)


def _find_clipping(buf: AudioBuffer, threshold: float, run: int):
    """Channels holding >= run consecutive samples at or above the threshold."""
    hits = []
    mask = np.abs(buf.samples) >= threshold
    for ch in range(buf.channel_count):
        m = mask[ch].astype(np.int32)
        if m.sum() < run:
            continue
        streak = np.convolve(m, np.ones(run, dtype=np.int32), mode="valid")
        if np.any(streak >= run):
            hits.append(ch)
    return hits


def validate(
    index: DatasetIndex, clip_threshold: float = CLIP_THRESHOLD, clip_run: int = CLIP_RUN
) -> ValidationReport:
    """Check coverage and audio health; findings are reported, never raised."""
    findings: list[Finding] = []

    def decoded(get_audio, what: str, path) -> AudioBuffer | None:
        try:
            return get_audio()
        except (CabinmixError, OSError) as exc:
            findings.append(Finding("decode_error", f"{what}: {exc}", str(path) if path else None))
            return None

    def audit_audio(buf: AudioBuffer, setup: SetupEntry, what: str, path):
        rel = str(path) if path else None
        if buf.channel_count != setup.channels:
            findings.append(
                Finding(
                    "channel_mismatch",
                    f"{what} has {buf.channel_count} channels, setup declares {setup.channels}",
                    rel,
                )
            )
        if buf.sample_rate not in (setup.sample_rate, 48000):
            findings.append(
                Finding(
                    "rate_mismatch",
                    f"{what} is {buf.sample_rate} Hz, setup declares {setup.sample_rate} Hz "
                    f"(48000 Hz originals allowed)",
                    rel,
                )
            )
        clipped = _find_clipping(buf, clip_threshold, clip_run)
        if clipped:
            findings.append(
                Finding(
                    "clipping",
                    f"{what} clips (>= {clip_run} consecutive full-scale samples) "
                    f"on channels {clipped}",
                    rel,
                )
            )

    for car in index.cars.values():
        for setup in car.setups.values():
            where = f"{car.car_id}/{setup.name}"
            for pos in SPEECH_POSITIONS:
                for w in setup.window_states:
                    if (pos, w) not in setup.speech_irs:
                        findings.append(
                            Finding(
                                "missing_ir",
                                f"{where}: no impulse response for {pos}/w{w}",
                            )
                        )
            if car.audio_system:
                for w in setup.window_states:
                    if w not in setup.audio_irs:
                        findings.append(
                            Finding(
                                "missing_ir",
                                f"{where}: no audio-system impulse response for w{w}",
                            )
                        )
            for speed in setup.speed_grid:
                for w in setup.window_states:
                    if (speed, w) not in setup.driving:
                        findings.append(
                            Finding(
                                "missing_noise",
                                f"{where}: no driving noise for s{speed}/w{w}",
                            )
                        )
            for level in setup.ventilation_levels:
                for w in setup.window_states:
                    if (level, w) not in setup.ventilation:
                        findings.append(
                            Finding(
                                "missing_noise",
                                f"{where}: no ventilation noise for l{level}/w{w}",
                            )
                        )

            for (pos, w), ir_set in setup.speech_irs.items():
                what = f"{where} IR {pos}/w{w}"
                buf = decoded(lambda s=ir_set: s.ir, what, ir_set.path)
                if buf is None:
                    continue
                audit_audio(buf, setup, what, ir_set.path)
                if np.any(~np.any(buf.samples, axis=1)):
                    findings.append(
                        Finding(
                            "silent_channel",
                            f"{what} has an all-zero channel",
                            str(ir_set.path) if ir_set.path else None,
                        )
                    )
            for w, ir_set in setup.audio_irs.items():
                what = f"{where} audio-system IR w{w}"
                buf = decoded(lambda s=ir_set: s.ir, what, ir_set.path)
                if buf is not None:
                    audit_audio(buf, setup, what, ir_set.path)
            for (speed, w), clip in setup.driving.items():
                what = f"{where} driving s{speed}/w{w}"
                buf = decoded(lambda c=clip: c.audio, what, clip.path)
                if buf is None:
                    continue
                audit_audio(buf, setup, what, clip.path)
                if buf.duration < MIN_NOISE_SECONDS:
                    findings.append(
                        Finding(
                            "short_clip",
                            f"{what} is {buf.duration:.2f} s, "
                            f"need >= {MIN_NOISE_SECONDS:.0f} s",
                            str(clip.path) if clip.path else None,
                        )
                    )
            for (level, w), clip in setup.ventilation.items():
                what = f"{where} ventilation l{level}/w{w}"
                buf = decoded(lambda c=clip: c.audio, what, clip.path)
                if buf is None:
                    continue
                audit_audio(buf, setup, what, clip.path)
                if buf.duration < MIN_NOISE_SECONDS:
                    findings.append(
                        Finding(
                            "short_clip",
                            f"{what} is {buf.duration:.2f} s, "
                            f"need >= {MIN_NOISE_SECONDS:.0f} s",
                            str(clip.path) if clip.path else None,
                        )
                    )
            for clip in setup.events:
                what = f"{where} event {clip.annotation!r}"
                buf = decoded(lambda c=clip: c.audio, what, clip.path)
                if buf is not None:
                    audit_audio(buf, setup, what, clip.path)

    return ValidationReport(tuple(findings))


def estimate_sensitivity(
    calib_recording: AudioBuffer, channel: int, reference_dba: float
) -> float:
    """Offset such that the meter reproduces the reference level on this clip.

    offset = reference_dba - 20*log10(A-weighted RMS of the channel).
    """
    if not 0 <= channel < calib_recording.channel_count:
        raise ParameterError(f"channel {channel} out of range")
    weighted = a_weight(calib_recording)
    r = rms(weighted.channel(channel))
    if r <= 0.0:
        raise ParameterError("silent recording")
    return float(reference_dba) - 20.0 * math.log10(r)


def dump_manifest(doc: dict, path: str | Path) -> None:
    """Write a manifest with the canonical formatting used across the package.

    Using one formatter everywhere lets calibration rewrite sensitivity
    entries while leaving every other byte of the file unchanged.
    """
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

"""Noise level, speech level and SNR per driving condition, at a reference mic.

Noise levels are A-weighted equivalent levels of the condition's recording at
its native sample rate.  Speech levels are measured through the calibrated
impulse-response path: a fixed wideband probe is normalized to unit active
speech level, convolved with the (position, window) IR, scaled for the
requested effort, and metered on the same channel.  SNR is their difference,
so snr + noise_level = speech_level holds identically for every row.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer
from .dataset import DatasetIndex, SetupEntry
from .dsp import a_weight, convolve, equivalent_level, rms
from .errors import ParameterError
from .scene import active_speech_level_db

# Deterministic speech probe driven through the IR path.
_PROBE_SECONDS = 5.0
_PROBE_SEED = 97


@dataclass(frozen=True)
class Condition:
    """One acoustic condition: driving at a speed, or ventilation at a level."""

    window_state: int
    speed: int | None = None
    vent_level: int | None = None

    def __post_init__(self):
        if (self.speed is None) == (self.vent_level is None):
            raise ParameterError("condition needs exactly one of speed or vent level")

    @property
    def key(self) -> tuple:
        # Table form: (speed or 0, w, ventilation level or off)
        return (self.speed or 0, self.window_state, self.vent_level)


@dataclass(frozen=True)
class ConditionMetrics:
    speed: int
    window_state: int
    vent_level: int | None
    noise_dba: float | None
    snr_db: float | None
    speech_dba: float | None
    channel: int

    @property
    def available(self) -> bool:
        return self.noise_dba is not None and self.speech_dba is not None


def _condition_clip(setup: SetupEntry, condition: Condition):
    if condition.vent_level is not None:
        return setup.ventilation_clip(condition.vent_level, condition.window_state)
    return setup.driving_clip(condition.speed, condition.window_state)


def noise_level(
    index: DatasetIndex,
    car: str,
    setup_name: str,
    condition: Condition,
    channel: int | None = None,
) -> float:
    """Equivalent level (dBA) of the condition's noise clip at its native rate."""
    setup = index.setup(car, setup_name)
    ch = setup.reference_channel if channel is None else channel
    clip = _condition_clip(setup, condition)
    return equivalent_level(clip.audio, setup.sensitivity, ch)


def _probe(sample_rate: int) -> AudioBuffer:
    rng = np.random.default_rng(_PROBE_SEED)
    n = int(_PROBE_SECONDS * sample_rate)
    return AudioBuffer(rng.standard_normal((1, n)), sample_rate)


def speech_level(
    index: DatasetIndex,
    car: str,
    setup_name: str,
    p: str,
    ls: float,
    window_state: int,
    channel: int | None = None,
) -> float:
    """Level (dBA) a talker at position p with effort Ls produces at the channel,
    measured through the stored impulse response."""
    setup = index.setup(car, setup_name)
    ch = setup.reference_channel if channel is None else channel
    ir_set = setup.ir_for(p, window_state)
    rate = ir_set.ir.sample_rate
    probe = _probe(rate)
    norm = 10.0 ** (-active_speech_level_db(probe) / 20.0)
    wet = convolve(AudioBuffer(probe.samples * norm, rate), ir_set.ir)
    r = rms(a_weight(wet).channel(ch))
    if r <= 0.0:
        raise ParameterError(f"impulse response for {p}/w{window_state} is silent on channel {ch}")
    return (
        (ls - ir_set.calibration_level)
        + 20.0 * math.log10(r)
        + setup.sensitivity.offsets[ch]
    )


def snr(
    index: DatasetIndex,
    car: str,
    setup_name: str,
    condition: Condition,
    p: str,
    ls: float,
    channel: int | None = None,
) -> float:
    """speech_level - noise_level for the condition, in dB."""
    return speech_level(
        index, car, setup_name, p, ls, condition.window_state, channel
    ) - noise_level(index, car, setup_name, condition, channel)


def condition_table(
    index: DatasetIndex,
    car: str,
    setup_name: str,
    p: str,
    ls: float,
    channel: int | None = None,
) -> list[ConditionMetrics]:
    """One row per declared (speed/vent, window) combination.

    Combinations declared in the manifest but missing on disk come back with
    None metrics so reports can show them as N/A.
    """
    setup = index.setup(car, setup_name)
    ch = setup.reference_channel if channel is None else channel

    speech_by_w: dict[int, float | None] = {}
    for w in setup.window_states:
        if (p, w) in setup.speech_irs:
            speech_by_w[w] = speech_level(index, car, setup_name, p, ls, w, ch)
        else:
            speech_by_w[w] = None

    def row(condition: Condition) -> ConditionMetrics:
        speech = speech_by_w[condition.window_state]
        try:
            noise = noise_level(index, car, setup_name, condition, ch)
        except ParameterError:
            noise = None
        value_snr = speech - noise if speech is not None and noise is not None else None
        return ConditionMetrics(
            speed=condition.speed or 0,
            window_state=condition.window_state,
            vent_level=condition.vent_level,
            noise_dba=noise,
            snr_db=value_snr,
            speech_dba=speech,
            channel=ch,
        )

    rows = []
    for speed in setup.speed_grid:
        for w in setup.window_states:
            rows.append(row(Condition(window_state=w, speed=speed)))
    for level in setup.ventilation_levels:
        for w in setup.window_states:
            rows.append(row(Condition(window_state=w, vent_level=level)))
    return rows


def table_to_csv(rows: list[ConditionMetrics]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["speed", "w", "ventilation", "noise_dba", "snr_db", "speech_dba", "channel"]
    )

    def fmt(value):
        return "N/A" if value is None else f"{value:.6f}"

    for r in rows:
        writer.writerow(
            [
                r.speed,
                r.window_state,
                "off" if r.vent_level is None else r.vent_level,
                fmt(r.noise_dba),
                fmt(r.snr_db),
                fmt(r.speech_dba),
                r.channel,
            ]
        )
    return out.getvalue()


def table_to_json(rows: list[ConditionMetrics]) -> str:
    docs = [
        {
            "speed": r.speed,
            "w": r.window_state,
            "ventilation": r.vent_level,
            "noise_dba": r.noise_dba,
            "snr_db": r.snr_db,
            "speech_dba": r.speech_dba,
            "channel": r.channel,
        }
        for r in rows
    ]
    return json.dumps(docs, indent=2) + "\n"


def write_table(rows: list[ConditionMetrics], path: str | Path, fmt: str = "csv") -> None:
    text = table_to_csv(rows) if fmt == "csv" else table_to_json(rows)
    Path(path).write_text(text, encoding="utf-8")

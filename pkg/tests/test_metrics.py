from __future__ import annotations

import csv
import dataclasses
import io
import json
import math

import numpy as np
import pytest

from cabinmix import (
    AudioBuffer,
    Condition,
    DatasetIndex,
    ParameterError,
    condition_table,
    noise_level,
    snr,
    speech_level,
)
from cabinmix.dataset import NoiseClip
from cabinmix.metrics import table_to_csv, table_to_json


def test_condition_requires_exactly_one_layer():
    with pytest.raises(ParameterError):
        Condition(window_state=0)
    with pytest.raises(ParameterError):
        Condition(window_state=0, speed=50, vent_level=1)


def test_snr_identity_is_exact(index):
    cond = Condition(window_state=0, speed=70)
    value = snr(index, "fixture", "array", cond, "driver", 60.0)
    speech = speech_level(index, "fixture", "array", "driver", 60.0, 0)
    noise = noise_level(index, "fixture", "array", cond)
    assert value == speech - noise
    assert value + noise - speech == 0.0


def test_noise_gain_shifts_level_by_20db(index):
    setup = index.setup("fixture", "array")
    clip = setup.driving[(50, 0)]
    louder = AudioBuffer(clip.audio.samples * 10.0, clip.audio.sample_rate)
    base = noise_level(index, "fixture", "array", Condition(window_state=0, speed=50))
    from cabinmix import equivalent_level

    boosted = equivalent_level(louder, setup.sensitivity, setup.reference_channel)
    assert boosted - base == pytest.approx(20.0, abs=1e-9)


def test_doubling_noise_amplitude_lowers_snr_6db(index):
    setup = index.setup("fixture", "array")
    cond = Condition(window_state=0, speed=50)
    speech = speech_level(index, "fixture", "array", "driver", 60.0, 0)
    clip = setup.driving[(50, 0)]
    doubled = AudioBuffer(clip.audio.samples * 2.0, clip.audio.sample_rate)
    from cabinmix import equivalent_level

    snr_base = speech - noise_level(index, "fixture", "array", cond)
    snr_doubled = speech - equivalent_level(doubled, setup.sensitivity, setup.reference_channel)
    assert snr_base - snr_doubled == pytest.approx(20 * math.log10(2), abs=1e-9)


def test_raising_ls_raises_every_snr_exactly(index):
    cond = Condition(window_state=1, speed=90)
    lo = snr(index, "fixture", "array", cond, "driver", 60.0)
    hi = snr(index, "fixture", "array", cond, "driver", 67.5)
    assert hi - lo == pytest.approx(7.5, abs=1e-9)


def test_speech_level_linear_in_ls(index):
    lo = speech_level(index, "fixture", "array", "driver", 60.0, 0)
    hi = speech_level(index, "fixture", "array", "driver", 72.0, 0)
    assert hi - lo == pytest.approx(12.0, abs=1e-12)


def test_table_covers_declared_grid(index):
    setup = index.setup("fixture", "array")
    rows = condition_table(index, "fixture", "array", "driver", 60.0)
    expected = len(setup.speed_grid) * len(setup.window_states) + len(
        setup.ventilation_levels
    ) * len(setup.window_states)
    assert len(rows) == expected
    assert all(r.available for r in rows)
    keys = {(r.speed, r.window_state, r.vent_level) for r in rows}
    assert len(keys) == expected


def test_table_rows_satisfy_identity(index):
    for row in condition_table(index, "fixture", "array", "driver", 60.0):
        assert row.snr_db + row.noise_dba == row.speech_dba
        assert row.snr_db == row.speech_dba - row.noise_dba


def test_speech_level_constant_across_speeds(index):
    rows = condition_table(index, "fixture", "array", "driver", 60.0)
    for w in (0, 1):
        speeds = {r.speech_dba for r in rows if r.window_state == w and r.vent_level is None}
        assert len(speeds) == 1


def test_missing_combination_marked_absent(index):
    setup = index.setup("fixture", "array")
    gappy = dict(setup.driving)
    del gappy[(70, 1)]
    patched_setup = dataclasses.replace(setup, driving=gappy)
    car = index.car("fixture")
    patched_car = dataclasses.replace(
        car, setups={**car.setups, "array": patched_setup}
    )
    patched = DatasetIndex(index.root, {"fixture": patched_car})
    rows = condition_table(patched, "fixture", "array", "driver", 60.0)
    absent = [r for r in rows if not r.available]
    assert len(absent) == 1
    assert (absent[0].speed, absent[0].window_state) == (70, 1)
    assert absent[0].noise_dba is None and absent[0].snr_db is None


def test_csv_emission_shape_and_na(index):
    setup = index.setup("fixture", "array")
    gappy = dict(setup.driving)
    del gappy[(50, 0)]
    patched_setup = dataclasses.replace(setup, driving=gappy)
    car = index.car("fixture")
    patched = DatasetIndex(
        index.root,
        {"fixture": dataclasses.replace(car, setups={**car.setups, "array": patched_setup})},
    )
    rows = condition_table(patched, "fixture", "array", "driver", 60.0)
    text = table_to_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["speed", "w", "ventilation", "noise_dba", "snr_db", "speech_dba", "channel"]
    assert len(parsed) == len(rows) + 1
    na_rows = [r for r in parsed[1:] if "N/A" in r]
    assert len(na_rows) == 1
    assert na_rows[0][0] == "50"


def test_json_emission_round_trips(index):
    rows = condition_table(index, "fixture", "array", "driver", 60.0)
    docs = json.loads(table_to_json(rows))
    assert len(docs) == len(rows)
    for doc, row in zip(docs, rows):
        assert doc["noise_dba"] == row.noise_dba
        assert doc["snr_db"] == row.snr_db
        assert doc["ventilation"] == row.vent_level


def test_reference_channel_default_matches_manifest(index):
    rows = condition_table(index, "fixture", "array", "driver", 60.0)
    assert {r.channel for r in rows} == {index.setup("fixture", "array").reference_channel}
    rows_d = condition_table(index, "fixture", "distributed", "driver", 60.0)
    assert {r.channel for r in rows_d} == {index.setup("fixture", "distributed").reference_channel}


def test_missing_condition_raises_with_grid(index):
    with pytest.raises(ParameterError, match="declared speeds"):
        noise_level(index, "fixture", "array", Condition(window_state=0, speed=65))

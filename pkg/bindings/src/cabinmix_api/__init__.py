"""Thin research-facing wrapper around the cabinmix engine.

Scene parameters use the conventional single-letter names from the acoustic
literature (p, Ls, w, x, La, z, s, l); everything is marshalled straight into
the engine, nothing is recomputed here.  Arrays come back as plain numpy
arrays in (channels, samples) layout, steering matrices as
(frequency, azimuth, mic).

    >>> ds = load("/data/cabin-recordings")
    >>> y, info = synthesize(ds, car="fixture", setup="array",
    ...                      x="speech.wav", p="driver", Ls=60, w=1, s=70)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

import cabinmix
from cabinmix import AudioBuffer, DatasetIndex
from cabinmix.scene import DEFAULT_TARGET_RATE

__version__ = cabinmix.__version__

__all__ = [
    "load",
    "synthesize",
    "condition_table",
    "steering_vectors",
    "scenario_irs",
]


def load(root: str | Path) -> DatasetIndex:
    """Load a dataset directory; the returned handle is immutable."""
    return cabinmix.load_dataset(root)


def _as_audio(value, rate: int | None = None):
    """Accept WAV paths, AudioBuffers, or numpy arrays (with a rate)."""
    if value is None or isinstance(value, (str, Path, AudioBuffer)):
        return value
    arr = np.asarray(value)
    if rate is None:
        raise cabinmix.ParameterError(
            "raw arrays need a sample rate (pass x_rate / z_rate)"
        )
    return AudioBuffer(arr, rate)


def _scene_spec(
    *,
    car,
    setup,
    x,
    w,
    p=None,
    Ls=None,
    La=None,
    z=None,
    s=None,
    l=None,  # noqa: E741 - conventional symbol for the ventilation level
    channels=None,
    target_rate=DEFAULT_TARGET_RATE,
    seed=cabinmix.DEFAULT_SEED,
    x_rate=None,
    z_rate=None,
) -> cabinmix.SceneSpec:
    return cabinmix.SceneSpec(
        car=car,
        setup=setup,
        x=_as_audio(x, x_rate),
        w=w,
        p=p,
        ls=Ls,
        la=La,
        z=_as_audio(z, z_rate),
        speed=s,
        vent=l,
        channels=channels,
        target_rate=target_rate,
        seed=seed,
    )


def synthesize(dataset: DatasetIndex, **kwargs) -> tuple[np.ndarray, dict]:
    """Synthesize a scene; returns (channels x samples array, info mapping).

    The info mapping carries the engine's applied gains and measured component
    levels plus the four addends under ``components`` (S, A, N, V).
    """
    result = cabinmix.synthesize(dataset, _scene_spec(**kwargs))
    info = dict(result.info)
    info["components"] = {
        "S": np.array(result.speech.samples),
        "A": np.array(result.audio.samples),
        "N": np.array(result.noise.samples),
        "V": np.array(result.ventilation.samples),
    }
    return np.array(result.y.samples), info


def condition_table(
    dataset: DatasetIndex, car: str, setup: str, p: str = "driver",
    Ls: float = 60.0, channel: int | None = None,
) -> list[dict]:
    """Noise level / SNR / speech level per declared condition, as dicts."""
    rows = cabinmix.condition_table(dataset, car, setup, p, Ls, channel)
    return [
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


def steering_vectors(
    dataset: DatasetIndex, car: str, setup: str, frequencies, azimuths
) -> np.ndarray:
    """Steering matrix (frequency, azimuth, mic) for the setup's geometry."""
    geometry = dataset.setup(car, setup).geometry
    if geometry is None:
        raise cabinmix.ParameterError(f"setup {setup!r} declares no microphone geometry")
    matrix = cabinmix.steering_vectors(geometry, frequencies, azimuths)
    return np.array(matrix.entries)


def scenario_irs(dataset: DatasetIndex, **kwargs) -> list[np.ndarray]:
    """Impulse responses involved in a scenario, as (channels, samples) arrays."""
    irs = cabinmix.scenario_irs(dataset, _scene_spec(**kwargs))
    return [np.array(ir.ir.samples) for ir in irs]

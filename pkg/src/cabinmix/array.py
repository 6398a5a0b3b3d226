"""Microphone geometry and far-field steering vectors for the circular array.

The steering model is a plane wave travelling in the array's horizontal
plane.  Phases are referenced to the array centroid, with positive phase for
microphones closer to the source.  For a mic at azimuth phi and radius r:

    entry(f, theta, m) = exp(+j * 2*pi*f * r*cos(theta - phi_m) / c)

which equals exp(-j * 2*pi*f * delay_m) with delay_m = -r*cos(theta-phi_m)/c.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in meters (3-D, car frame) plus speed of sound."""

    positions: np.ndarray  # (mics, 3)
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ParameterError(f"positions must be (mics, 3), got {pos.shape}")
        if self.speed_of_sound <= 0:
            raise ParameterError("speed_of_sound must be positive")
        pos = np.ascontiguousarray(pos)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)

    @classmethod
    def circular(
        cls,
        mic_count: int = 8,
        radius: float = 0.05,
        center: Sequence[float] = (0.0, 0.0, 0.0),
        first_mic_azimuth: float = 0.0,
        speed_of_sound: float = SPEED_OF_SOUND,
    ) -> "ArrayGeometry":
        """Uniform circular array in a horizontal plane, mic 0 at the given azimuth."""
        angles = first_mic_azimuth + 2.0 * np.pi * np.arange(mic_count) / mic_count
        cx, cy, cz = center
        pos = np.stack(
            [cx + radius * np.cos(angles), cy + radius * np.sin(angles), np.full(mic_count, cz)],
            axis=1,
        )
        return cls(pos, speed_of_sound)

    @property
    def mic_count(self) -> int:
        return self.positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    def radial_offsets(self) -> np.ndarray:
        """In-plane (x, y) offsets from the centroid, shape (mics, 2)."""
        return self.positions[:, :2] - self.centroid[:2]

    def is_uniform_circle(self, radius: float | None = None, tol: float = 1e-9) -> bool:
        """True when all mics sit on one horizontal circle at uniform spacing."""
        off = self.radial_offsets()
        r = np.hypot(off[:, 0], off[:, 1])
        if radius is not None and np.any(np.abs(r - radius) > tol):
            return False
        if np.ptp(r) > tol or np.ptp(self.positions[:, 2]) > tol:
            return False
        ang = np.unwrap(np.sort(np.arctan2(off[:, 1], off[:, 0])))
        gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
        return bool(np.ptp(gaps) <= max(tol, 1e-9) * 2 * np.pi)


@dataclass(frozen=True)
class SteeringMatrix:
    """Unit-modulus steering entries indexed (frequency, azimuth, mic)."""

    frequencies: np.ndarray
    azimuths: np.ndarray
    entries: np.ndarray  # complex128, shape (F, D, M)

    def __post_init__(self):
        for name in ("frequencies", "azimuths", "entries"):
            arr = np.asarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.entries.shape[:2] != (len(self.frequencies), len(self.azimuths)):
            raise ParameterError("entries shape does not match axes")


def pairwise_delays(geom: ArrayGeometry, azimuth: float) -> np.ndarray:
    """Per-mic propagation delay (s) relative to the centroid for a plane wave
    arriving from the given azimuth; negative for mics closer to the source."""
    off = geom.radial_offsets()
    proj = off[:, 0] * np.cos(azimuth) + off[:, 1] * np.sin(azimuth)
    return -proj / geom.speed_of_sound


def steering_vectors(geom: ArrayGeometry, frequencies, azimuths) -> SteeringMatrix:
    freqs = np.atleast_1d(np.asarray(frequencies, dtype=np.float64))
    azis = np.atleast_1d(np.asarray(azimuths, dtype=np.float64))
    if np.any(freqs <= 0):
        raise ParameterError("frequencies must be > 0 Hz")
    delays = np.stack([pairwise_delays(geom, a) for a in azis])  # (D, M)
    phase = -2.0 * np.pi * freqs[:, None, None] * delays[None, :, :]
    return SteeringMatrix(freqs, azis, np.exp(1j * phase))


def write_steering(path: str | Path, matrix: SteeringMatrix) -> None:
    """Write a steering matrix as a one-line JSON header + raw complex128 body.

    Header fields: shape, axes (frequencies_hz, azimuths_rad), dtype ("<c16"),
    layout ("C"), byte length of the body.
    """
    body = np.ascontiguousarray(matrix.entries.astype(np.complex128)).tobytes()
    header = {
        "shape": list(matrix.entries.shape),
        "frequencies_hz": [float(f) for f in matrix.frequencies],
        "azimuths_rad": [float(a) for a in matrix.azimuths],
        "dtype": "<c16",
        "layout": "C",
        "body_bytes": len(body),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(body)


def read_steering(path: str | Path) -> SteeringMatrix:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        body = fh.read(header["body_bytes"])
    entries = np.frombuffer(body, dtype=header["dtype"]).reshape(header["shape"])
    return SteeringMatrix(
        np.asarray(header["frequencies_hz"], dtype=np.float64),
        np.asarray(header["azimuths_rad"], dtype=np.float64),
        entries,
    )

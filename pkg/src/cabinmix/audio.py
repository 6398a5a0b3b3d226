"""Multichannel audio buffers and RIFF/WAVE file I/O.

The :class:`AudioBuffer` is the signal carrier used everywhere in the
package: samples are float64, full-scale normalized to [-1, 1], laid out as
(channels, samples), and frozen after construction so buffers can be shared
freely between threads.

WAV support covers the formats the datasets use: PCM 16-bit, PCM 24-bit
(little-endian packed) and IEEE float32.  Unknown RIFF chunks are skipped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParameterError

_PCM24_SCALE = float(2**23)
_PCM16_SCALE = float(2**15)

_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    """Immutable multichannel signal with a sample rate.

    samples: array of shape (channels, n), float64, finite.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 1:
            data = data[np.newaxis, :]
        if data.ndim != 2:
            raise ParameterError(f"samples must be 1-D or 2-D, got shape {data.shape}")
        if data.shape[0] < 1:
            raise ParameterError("buffer needs at least one channel")
        if int(self.sample_rate) <= 0:
            raise ParameterError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(data)):
            raise ParameterError("samples contain NaN or Inf")
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.length / self.sample_rate

    def channel(self, index: int) -> np.ndarray:
        return self.samples[index]

    def select_channels(self, channels: Sequence[int]) -> "AudioBuffer":
        """New buffer holding the given channels, in the given order."""
        idx = list(channels)
        for c in idx:
            if not 0 <= c < self.channel_count:
                raise ParameterError(
                    f"channel {c} out of range for {self.channel_count}-channel buffer"
                )
        return AudioBuffer(self.samples[idx, :], self.sample_rate)

    def peak(self) -> float:
        if self.length == 0:
            return 0.0
        return float(np.max(np.abs(self.samples)))


def _decode_pcm24(raw: bytes) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
    vals = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
    vals = (vals ^ 0x800000) - 0x800000  # sign-extend 24 -> 32 bit
    return vals.astype(np.float64) / _PCM24_SCALE


def _encode_pcm24(x: np.ndarray) -> bytes:
    ints = np.clip(np.rint(x * _PCM24_SCALE), -(2**23), 2**23 - 1).astype(np.int32)
    u = ints.astype(np.uint32) & 0xFFFFFF
    out = np.empty((u.size, 3), dtype=np.uint8)
    out[:, 0] = u & 0xFF
    out[:, 1] = (u >> 8) & 0xFF
    out[:, 2] = (u >> 16) & 0xFF
    return out.tobytes()


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a RIFF/WAVE file (PCM 16/24-bit or float32) into an AudioBuffer."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
            raise ParameterError(f"not a RIFF/WAVE file: {path}")
        fmt = None
        data = None
        while True:
            chunk_header = fh.read(8)
            if len(chunk_header) < 8:
                break
            cid, size = struct.unpack("<4sI", chunk_header)
            payload = fh.read(size)
            if size % 2:  # RIFF chunks are word-aligned
                fh.read(1)
            if cid == b"fmt ":
                fmt = payload
            elif cid == b"data":
                data = payload
            if fmt is not None and data is not None:
                break
    if fmt is None or data is None:
        raise ParameterError(f"missing fmt/data chunk: {path}")

    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _FMT_EXTENSIBLE:
        if len(fmt) < 40:
            raise ParameterError(f"truncated extensible fmt chunk: {path}")
        tag = struct.unpack("<H", fmt[24:26])[0]
    if channels < 1 or rate <= 0 or block_align != channels * (bits // 8):
        raise ParameterError(f"inconsistent fmt chunk: {path}")

    frames = len(data) // block_align
    data = data[: frames * block_align]
    if tag == _FMT_PCM and bits == 16:
        flat = np.frombuffer(data, dtype="<i2").astype(np.float64) / _PCM16_SCALE
    elif tag == _FMT_PCM and bits == 24:
        flat = _decode_pcm24(data)
    elif tag == _FMT_FLOAT and bits == 32:
        flat = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise ParameterError(f"unsupported WAV format (tag={tag}, bits={bits}): {path}")

    samples = flat.reshape(frames, channels).T
    return AudioBuffer(samples, rate)


def write_wav(path: str | Path, buf: AudioBuffer, sample_format: str = "pcm24") -> None:
    """Write an AudioBuffer as a WAV file.

    sample_format: "pcm24" (default, the dataset format), "pcm16" or "float32".
    Values outside [-1, 1] are clamped for the integer formats.
    """
    interleaved = np.ascontiguousarray(buf.samples.T)
    if sample_format == "pcm24":
        tag, bits = _FMT_PCM, 24
        payload = _encode_pcm24(interleaved.reshape(-1))
    elif sample_format == "pcm16":
        tag, bits = _FMT_PCM, 16
        ints = np.clip(np.rint(interleaved * _PCM16_SCALE), -(2**15), 2**15 - 1)
        payload = ints.astype("<i2").tobytes()
    elif sample_format == "float32":
        tag, bits = _FMT_FLOAT, 32
        payload = interleaved.astype("<f4").tobytes()
    else:
        raise ParameterError(f"unknown sample format: {sample_format}")

    channels = buf.channel_count
    block_align = channels * (bits // 8)
    byte_rate = buf.sample_rate * block_align
    fmt = struct.pack("<HHIIHH", tag, channels, buf.sample_rate, byte_rate, block_align, bits)
    pad = b"\x00" if len(payload) % 2 else b""
    riff_size = 4 + (8 + len(fmt)) + (8 + len(payload) + len(pad))
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI4s", b"RIFF", riff_size, b"WAVE"))
        fh.write(struct.pack("<4sI", b"fmt ", len(fmt)))
        fh.write(fmt)
        fh.write(struct.pack("<4sI", b"data", len(payload)))
        fh.write(payload)
        fh.write(pad)

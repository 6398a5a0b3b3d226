from __future__ import annotations

import numpy as np
import pytest

from cabinmix import AudioBuffer, ParameterError, read_wav, write_wav


def test_buffer_normalizes_1d_to_one_channel():
    buf = AudioBuffer(np.zeros(10), 8000)
    assert buf.channel_count == 1
    assert buf.length == 10


def test_buffer_rejects_nan():
    with pytest.raises(ParameterError):
        AudioBuffer(np.array([0.0, np.nan]), 8000)


def test_buffer_rejects_bad_rate():
    with pytest.raises(ParameterError):
        AudioBuffer(np.zeros(4), 0)


def test_buffer_is_immutable():
    buf = AudioBuffer(np.zeros((2, 4)), 8000)
    with pytest.raises(ValueError):
        buf.samples[0, 0] = 1.0


def test_select_channels_orders_and_validates():
    buf = AudioBuffer(np.arange(8.0).reshape(4, 2), 8000)
    picked = buf.select_channels([3, 0])
    assert np.array_equal(picked.samples, buf.samples[[3, 0]])
    with pytest.raises(ParameterError):
        buf.select_channels([4])


@pytest.mark.parametrize("fmt,tol", [("pcm16", 2**-15), ("pcm24", 2**-23), ("float32", 1e-7)])
def test_wav_round_trip(tmp_path, fmt, tol):
    rng = np.random.default_rng(3)
    buf = AudioBuffer(rng.uniform(-0.9, 0.9, size=(8, 500)), 16000)
    path = tmp_path / f"{fmt}.wav"
    write_wav(path, buf, fmt)
    back = read_wav(path)
    assert back.sample_rate == 16000
    assert back.channel_count == 8
    assert back.length == 500
    assert np.max(np.abs(back.samples - buf.samples)) <= tol


def test_pcm24_is_exact_on_grid(tmp_path):
    # values already on the 24-bit grid survive a round trip bit-exactly
    vals = np.array([[0.0, 0.5, -0.5, 1.0 - 2**-23, -1.0, 2**-23]])
    buf = AudioBuffer(vals, 48000)
    path = tmp_path / "grid.wav"
    write_wav(path, buf, "pcm24")
    assert np.array_equal(read_wav(path).samples, vals)


def test_writer_clamps_out_of_range(tmp_path):
    buf = AudioBuffer(np.array([[2.0, -2.0]]), 8000)
    path = tmp_path / "hot.wav"
    write_wav(path, buf, "pcm24")
    back = read_wav(path)
    assert back.samples[0, 0] == pytest.approx(1.0, abs=2**-22)
    assert back.samples[0, 1] == -1.0


def test_reader_skips_unknown_chunks(tmp_path):
    buf = AudioBuffer(np.array([[0.25, -0.25]]), 8000)
    path = tmp_path / "chunky.wav"
    write_wav(path, buf, "pcm16")
    raw = path.read_bytes()
    # splice a LIST chunk between fmt and data
    insert_at = raw.index(b"data")
    extra = b"LIST" + (8).to_bytes(4, "little") + b"INFOjunk"
    patched = raw[:insert_at] + extra + raw[insert_at:]
    patched = patched[:4] + (len(patched) - 8).to_bytes(4, "little") + patched[8:]
    path.write_bytes(patched)
    back = read_wav(path)
    assert back.length == 2


def test_reader_rejects_non_wav(tmp_path):
    path = tmp_path / "nope.wav"
    path.write_bytes(b"not a riff file at all")
    with pytest.raises(ParameterError):
        read_wav(path)

"""WAV input and the binary feature file format.

Feature files: magic "FEAT1", u32 frame count, u32 channel count, f32
frame_step_ms, then row-major little-endian f32 values.  An optional
trailing block tagged "IVEC1" (u32 rank, then f32 values) carries a
per-utterance speaker embedding.
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from .types import FeatureMatrix

FEAT_MAGIC = b"FEAT1"
IVEC_MAGIC = b"IVEC1"
SUPPORTED_RATES = (8000, 16000)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a mono PCM-16 WAV file; returns (samples in [-1, 1), rate)."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise DataFormatError(f"{path}: not a readable WAV file ({exc})") from exc
    if n_channels != 1:
        raise DataFormatError(f"{path}: expected mono audio, got {n_channels} channels")
    if width != 2:
        raise DataFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate not in SUPPORTED_RATES:
        raise DataFormatError(f"{path}: unsupported sample rate {rate} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    """Write a mono PCM-16 WAV file from samples in [-1, 1)."""
    pcm = np.clip(np.asarray(samples) * 32768.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())


def write_features(path, features: FeatureMatrix, ivector: np.ndarray | None = None) -> None:
    """Write a feature file, optionally with a trailing i-vector block."""
    data = np.ascontiguousarray(features.data, dtype="<f4")
    payload = [
        FEAT_MAGIC,
        struct.pack("<IIf", features.n_frames, features.n_channels, features.frame_step_ms),
        data.tobytes(),
    ]
    if ivector is not None:
        vec = np.ascontiguousarray(ivector, dtype="<f4").reshape(-1)
        payload += [IVEC_MAGIC, struct.pack("<I", vec.size), vec.tobytes()]
    Path(path).write_bytes(b"".join(payload))


def read_features(path) -> tuple[FeatureMatrix, np.ndarray | None]:
    """Read a feature file; returns (features, ivector-or-None)."""
    blob = Path(path).read_bytes()
    if blob[:5] != FEAT_MAGIC:
        raise DataFormatError(f"{path}: bad magic, not a feature file")
    if len(blob) < 5 + 12:
        raise DataFormatError(f"{path}: truncated header")
    n_frames, n_channels, step_ms = struct.unpack_from("<IIf", blob, 5)
    offset = 5 + 12
    n_bytes = 4 * n_frames * n_channels
    if len(blob) < offset + n_bytes:
        raise DataFormatError(f"{path}: truncated feature payload")
    data = np.frombuffer(blob, dtype="<f4", count=n_frames * n_channels, offset=offset)
    feats = FeatureMatrix(data.reshape(n_frames, n_channels).astype(np.float64),
                          float(step_ms), "stacked")
    offset += n_bytes
    if offset == len(blob):
        return feats, None
    if blob[offset:offset + 5] != IVEC_MAGIC:
        raise DataFormatError(f"{path}: unexpected trailing bytes")
    rank, = struct.unpack_from("<I", blob, offset + 5)
    offset += 9
    if len(blob) != offset + 4 * rank:
        raise DataFormatError(f"{path}: malformed i-vector block")
    vec = np.frombuffer(blob, dtype="<f4", count=rank, offset=offset).astype(np.float64)
    return feats, vec


def append_ivector(path, ivector: np.ndarray) -> None:
    """Attach (or replace) the i-vector block of an existing feature file."""
    features, _ = read_features(path)
    write_features(path, features, ivector)

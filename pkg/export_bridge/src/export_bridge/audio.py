"""WAV loading and the fixed-window random crop applied before encoding."""

from __future__ import annotations

import hashlib
import wave
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AudioClip:
    """Raw PCM payload plus enough metadata to crop and decode it."""

    frames: bytes
    n_frames: int
    frame_rate: int
    sample_width: int
    channels: int

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.frame_rate

    @property
    def frame_size(self) -> int:
        return self.sample_width * self.channels

    def slice_frames(self, start: int, count: int) -> "AudioClip":
        lo = start * self.frame_size
        hi = (start + count) * self.frame_size
        return AudioClip(self.frames[lo:hi], count, self.frame_rate,
                         self.sample_width, self.channels)

    def samples(self) -> np.ndarray:
        """Mono float32 samples in [-1, 1]; only 16-bit PCM is supported."""
        if self.sample_width != 2:
            raise ValueError(f"only 16-bit PCM supported, got width {self.sample_width}")
        data = np.frombuffer(self.frames, dtype=np.int16).astype(np.float32) / 32768.0
        if self.channels > 1:
            data = data.reshape(-1, self.channels).mean(axis=1)
        return data


def read_wav(path) -> AudioClip:
    with wave.open(str(path), "rb") as wav:
        return AudioClip(
            frames=wav.readframes(wav.getnframes()),
            n_frames=wav.getnframes(),
            frame_rate=wav.getframerate(),
            sample_width=wav.getsampwidth(),
            channels=wav.getnchannels(),
        )


def crop_offset(clip_id: str, crop_seed: int, span: int) -> int:
    """Deterministic crop start, independent of clip iteration order."""
    digest = hashlib.blake2b(f"{crop_seed}|crop|{clip_id}".encode(), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    return int(rng.integers(0, span + 1))


def crop_clip(clip: AudioClip, clip_id: str, crop_seconds: float, crop_seed: int) -> AudioClip:
    """Random fixed-length window on long clips; short clips pass through whole."""
    limit = int(round(crop_seconds * clip.frame_rate))
    if clip.n_frames <= limit:
        return clip
    start = crop_offset(clip_id, crop_seed, clip.n_frames - limit)
    return clip.slice_frames(start, limit)

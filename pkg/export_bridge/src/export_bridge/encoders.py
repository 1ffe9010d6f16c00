"""Encoder backends: the deterministic dry-run stub plus optional real
checkpoints loaded through transformers.

Stub text embeddings follow the engine-side fixture convention exactly
(blake2b of "{seed}|text|{canonical text}" seeding a unit-normal draw), so a
fixture file's fallback_seed reproduces the same vectors the stub exported.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .audio import AudioClip


def _unit_vector_from_digest(payload: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2b(payload.encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    while True:
        vec = rng.standard_normal(dim)
        norm = np.linalg.norm(vec)
        if norm > 0.0:
            return vec / norm


def canonical_text(text: str) -> str:
    return " ".join(text.lower().split())


class StubEncoder:
    """Checkpoint-free encoder for dry runs and CI fixtures.

    Audio embeddings hash the (cropped) PCM payload, so identical windows map
    to identical vectors; text embeddings hash the canonical string with the
    fallback seed.
    """

    def __init__(self, dim: int = 64, fallback_seed: int = 0):
        if dim < 2:
            raise ValueError("stub dim must be >= 2")
        self.dim = dim
        self.fallback_seed = fallback_seed

    def embed_audio(self, clip: AudioClip) -> np.ndarray:
        content = hashlib.blake2b(clip.frames, digest_size=16).hexdigest()
        return _unit_vector_from_digest(f"audio|{clip.frame_rate}|{content}", self.dim)

    def embed_text(self, text: str) -> np.ndarray:
        return _unit_vector_from_digest(
            f"{self.fallback_seed}|text|{canonical_text(text)}", self.dim
        )


class ClapEncoder:
    """Audio-text dual encoder served by a transformers CLAP checkpoint."""

    def __init__(self, model_id: str):
        try:
            import torch  # noqa: F401
            from transformers import ClapModel, ClapProcessor
        except ImportError as exc:
            raise RuntimeError(
                "real checkpoints need the optional [models] extra "
                "(pip install export-bridge[models])"
            ) from exc
        self.processor = ClapProcessor.from_pretrained(model_id)
        self.model = ClapModel.from_pretrained(model_id)
        self.model.eval()
        self.dim = int(self.model.config.projection_dim)
        self.target_rate = int(
            self.processor.feature_extractor.sampling_rate
        )

    def embed_audio(self, clip: AudioClip) -> np.ndarray:
        import torch

        samples = clip.samples()
        if clip.frame_rate != self.target_rate:
            # linear resample; CLAP checkpoints expect their training rate
            n_out = int(round(len(samples) * self.target_rate / clip.frame_rate))
            samples = np.interp(
                np.linspace(0.0, len(samples) - 1, n_out),
                np.arange(len(samples)),
                samples,
            ).astype(np.float32)
        inputs = self.processor(audios=[samples], sampling_rate=self.target_rate,
                                return_tensors="pt")
        with torch.no_grad():
            emb = self.model.get_audio_features(**inputs)
        vec = emb[0].numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)

    def embed_text(self, text: str) -> np.ndarray:
        import torch

        inputs = self.processor(text=[text], return_tensors="pt", padding=True)
        with torch.no_grad():
            emb = self.model.get_text_features(**inputs)
        vec = emb[0].numpy().astype(np.float64)
        return vec / np.linalg.norm(vec)


def load_encoder(model_id: str, fallback_seed: int = 0):
    """"stub" or "stub:<dim>" builds the dry-run encoder; anything else is
    treated as a transformers CLAP checkpoint identifier."""
    if model_id == "stub" or model_id.startswith("stub:"):
        dim = int(model_id.split(":", 1)[1]) if ":" in model_id else 64
        return StubEncoder(dim=dim, fallback_seed=fallback_seed)
    return ClapEncoder(model_id)

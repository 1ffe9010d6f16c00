"""Offline fixture exporter: encode audio clips and text with pretrained
checkpoints (or a deterministic dry-run stub) and emit the emb/1 and lm/1
files the captioning engine replays."""

from .audio import AudioClip, crop_clip, read_wav
from .encoders import StubEncoder, load_encoder
from .exporter import (
    ExportJob,
    ExportResult,
    build_ngram_table,
    export_audio_embeddings,
    export_lm_table,
    export_text_embeddings,
    read_bridge_manifest,
    read_text_list,
)
from .formats import SchemaError, check_embeddings_file, check_lm_file, write_embeddings, write_lm

__version__ = "0.1.0"

"""Learnable motion codebook and instruction-text resolution.

The codebook is a plain trainable embedding table, one row per vocabulary
entry; rows receive sparse gradient updates from the policy loss. Free-form
instruction text resolves to the nearest canonical text by cosine
similarity under a deterministic hashed character-trigram embedder.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import _binio
from .annotate import Vocabulary

__all__ = [
    "MotionCodebook",
    "TextEmbedder",
    "TrigramEmbedder",
    "IndexOutOfRange",
    "ZeroVector",
    "init_codebook",
    "init_frozen_codebook",
    "lookup",
    "apply_row_grad",
    "resolve",
    "similarity_matrix",
    "mean_offdiagonal",
    "save_codebook",
    "load_codebook",
]


class IndexOutOfRange(Exception):
    pass


class ZeroVector(Exception):
    pass


class TextEmbedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class TrigramEmbedder:
    """Hashed character-trigram bag embedding, L2-normalized.

    Stable across runs and platforms: buckets come from md5, not the
    salted builtin hash.
    """

    def __init__(self, dim: int = 256):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        padded = f" {text.lower()} "
        vec = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3]
            bucket = int.from_bytes(hashlib.md5(tri.encode("utf-8")).digest()[:8], "big")
            vec[bucket % self.dim] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise ValueError("text produced no trigrams")
        return vec / norm


@dataclass
class MotionCodebook:
    vocab_id: str
    dim: int
    entries: np.ndarray  # N x dim, float64
    rng_seed: int
    trainable: bool = True  # False: frozen text-embedding features

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def init_codebook(vocab: Vocabulary, dim: int = 32, seed: int = 0) -> MotionCodebook:
    """Seeded uniform(-1/sqrt(dim), +1/sqrt(dim)) initialization."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    entries = rng.uniform(-bound, bound, size=(len(vocab), dim))
    return MotionCodebook(vocab_id=vocab.id, dim=dim, entries=entries, rng_seed=seed)


def init_frozen_codebook(vocab: Vocabulary, embedder: TextEmbedder) -> MotionCodebook:
    """Non-trainable motion features: the embedder applied to canonical texts.

    This is the codebook-off ablation arm; rows never receive gradients.
    """
    entries = np.stack([embedder.embed(e.text) for e in vocab.entries])
    return MotionCodebook(
        vocab_id=vocab.id, dim=embedder.dim, entries=entries, rng_seed=0, trainable=False
    )


def lookup(cb: MotionCodebook, instr_id: int) -> np.ndarray:
    """Return a copy of row ``instr_id``; updates go through apply_row_grad."""
    if not (0 <= instr_id < cb.n):
        raise IndexOutOfRange(f"instruction id {instr_id} outside 0..{cb.n - 1}")
    return cb.entries[instr_id].copy()


def apply_row_grad(cb: MotionCodebook, instr_id: int, grad: np.ndarray, lr: float) -> None:
    """Sparse SGD update: only the conditioned row moves. No-op when frozen."""
    if not (0 <= instr_id < cb.n):
        raise IndexOutOfRange(f"instruction id {instr_id} outside 0..{cb.n - 1}")
    if cb.trainable:
        cb.entries[instr_id] -= lr * grad


def resolve(
    cb: MotionCodebook, vocab: Vocabulary, text: str, embedder: TextEmbedder
) -> int:
    """Map free text to an instruction id.

    Exact canonical text short-circuits to its own id; otherwise the id of
    the canonical text with highest cosine similarity wins, lowest id on
    ties. Total for any non-empty text.
    """
    if not text:
        raise ValueError("text must be non-empty")
    exact = vocab.id_of_text(text)
    if exact is not None:
        return exact
    query = embedder.embed(text)
    canon = np.stack([embedder.embed(e.text) for e in vocab.entries])
    sims = canon @ query  # embeddings are unit norm
    return int(np.argmax(sims))  # argmax returns the first (lowest) id on ties


def similarity_matrix(vectors: np.ndarray) -> np.ndarray:
    """Pairwise cosine matrix: symmetric, unit diagonal, entries in [-1,1]."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("cosine similarity undefined for zero vectors")
    unit = v / norms[:, None]
    sim = unit @ unit.T
    sim = (sim + sim.T) / 2.0
    np.clip(sim, -1.0, 1.0, out=sim)
    np.fill_diagonal(sim, 1.0)
    return sim


def mean_offdiagonal(sim: np.ndarray) -> float:
    n = sim.shape[0]
    if n < 2:
        return 0.0
    mask = ~np.eye(n, dtype=bool)
    return float(sim[mask].mean())


def save_codebook(cb: MotionCodebook, path: str) -> None:
    meta = {
        "kind": "codebook",
        "vocab_id": cb.vocab_id,
        "dim": cb.dim,
        "seed": cb.rng_seed,
        "trainable": cb.trainable,
    }
    _binio.save_arrays(path, meta, {"entries": cb.entries})


def load_codebook(path: str) -> MotionCodebook:
    meta, arrays = _binio.load_arrays(path)
    if meta.get("kind") != "codebook":
        raise _binio.BadContainer(f"{path!r} is not a codebook file")
    return MotionCodebook(
        vocab_id=meta["vocab_id"],
        dim=int(meta["dim"]),
        entries=arrays["entries"],
        rng_seed=int(meta["seed"]),
        trainable=bool(meta.get("trainable", True)),
    )

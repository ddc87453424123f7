"""Attention-pooled profile encoder over a frozen word-embedding table.

Profiles are tokenized, padded to a fixed length, embedded through a frozen
table, and pooled with a single learned context vector: each word gets a
score (dot product with the context vector), scores are softmaxed over the
real tokens, and the user representation is the resulting weighted average
of the word vectors.  Only the context vector trains.
"""

from __future__ import annotations

import re
import zlib

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import ProfileCorpus

PAD = "<pad>"
_TOKEN_RE = re.compile(r"[a-z0-9']+")

MASK_NEG = 1e9


def tokenize(text: str, stop_words: frozenset[str] | None = None) -> list[str]:
    """Lowercase, strip punctuation, split on non-word characters."""
    tokens = _TOKEN_RE.findall(text.lower())
    if stop_words:
        tokens = [t for t in tokens if t not in stop_words]
    return tokens


def tokenize_and_pad(text: str, max_len: int = 25, stop_words: frozenset[str] | None = None):
    """Fixed-length token list plus a 0/1 mask of real positions.

    Texts longer than `max_len` are truncated at the end; shorter ones are
    padded. Empty text gives an all-pad sequence with an all-zero mask.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tokens = tokenize(text, stop_words)[:max_len]
    mask = np.zeros(max_len)
    mask[: len(tokens)] = 1.0
    return tokens + [PAD] * (max_len - len(tokens)), mask


class EmbeddingTable:
    """Frozen token -> vector map with a deterministic hashing fallback.

    Known tokens use their own unit-norm row; unknown ones hash into a
    fixed pool of fallback rows so they still get a stable embedding.  The
    pad token maps to the zero vector.
    """

    def __init__(self, vocabulary: dict[str, int], vectors: np.ndarray, oov_buckets: int = 32):
        self.vocabulary = dict(vocabulary)
        self.vectors = np.asarray(vectors, dtype=float)
        self.oov_buckets = oov_buckets
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("non-finite embedding vectors")
        if np.any(self.vectors[0] != 0.0):
            raise ValueError("row 0 is the pad row and must be zero")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def random(cls, words, dim: int = 32, seed: int = 0, oov_buckets: int = 32) -> "EmbeddingTable":
        """Seeded random unit-norm vectors for `words` plus OOV buckets."""
        words = sorted(set(words) - {PAD})
        rng = np.random.default_rng(seed)
        rows = rng.standard_normal((1 + len(words) + oov_buckets, dim))
        rows /= np.maximum(np.linalg.norm(rows, axis=1, keepdims=True), 1e-12)
        rows[0] = 0.0
        vocab = {w: i + 1 for i, w in enumerate(words)}
        return cls(vocab, rows, oov_buckets)

    @classmethod
    def from_corpus(cls, corpus: ProfileCorpus, dim: int = 32, seed: int = 0,
                    stop_words: frozenset[str] | None = None) -> "EmbeddingTable":
        words = set()
        for text in corpus.descriptions.values():
            words.update(tokenize(text, stop_words))
        return cls.random(words, dim=dim, seed=seed)

    @classmethod
    def load_text(cls, path, oov_buckets: int = 32) -> "EmbeddingTable":
        """Read `word v1 ... vb` lines; vectors are used as-is."""
        vocab = {}
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                vocab[parts[0]] = len(rows) + 1
                rows.append([float(v) for v in parts[1:]])
        vectors = np.asarray(rows)
        dim = vectors.shape[1]
        rng = np.random.default_rng(zlib.crc32(b"oov"))
        oov = rng.standard_normal((oov_buckets, dim))
        oov /= np.maximum(np.linalg.norm(oov, axis=1, keepdims=True), 1e-12)
        table = np.vstack([np.zeros((1, dim)), vectors, oov])
        return cls(vocab, table, oov_buckets)

    def token_id(self, token: str) -> int:
        if token == PAD:
            return 0
        idx = self.vocabulary.get(token)
        if idx is not None:
            return idx
        bucket = zlib.crc32(token.encode("utf-8")) % self.oov_buckets
        return len(self.vocabulary) + 1 + bucket

    def embed(self, tokens: list[str]) -> np.ndarray:
        return self.vectors[[self.token_id(t) for t in tokens]]


class AttentionParams:
    """The trainable context vector scoring each word."""

    def __init__(self, context: Tensor | np.ndarray):
        self.context = context if isinstance(context, Tensor) else Tensor(context, requires_grad=True)

    @classmethod
    def init(cls, dim: int, seed: int = 0) -> "AttentionParams":
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal(dim) * 0.1)

    def parameters(self) -> list[Tensor]:
        return [self.context]


def attention_weights(word_vectors, mask, context, masked: bool = True):
    """Softmax attention weights over token positions.

    `word_vectors` is (..., N, b) and `mask` (..., N); pads are pushed out
    of the softmax unless `masked` is False.  Works on ndarrays and on a
    Tensor context vector.
    """
    scores = (word_vectors * context).sum(axis=-1)
    if masked:
        scores = scores + (np.asarray(mask) - 1.0) * MASK_NEG
    return ad.softmax(scores, axis=-1)


def attention_pool(word_vectors, mask, context, masked: bool = True):
    """Weighted average of word vectors under attention; (..., b) output.

    All-masked input yields the zero vector (the pad rows are zero, so any
    weighting of them vanishes).
    """
    weights = attention_weights(word_vectors, mask, context, masked)
    if isinstance(weights, Tensor):
        return (weights.reshape(*weights.shape, 1) * word_vectors).sum(axis=-2)
    return (weights[..., None] * word_vectors).sum(axis=-2)


def encode_user(corpus: ProfileCorpus, user_id: int, table: EmbeddingTable,
                params: AttentionParams, max_len: int = 25,
                stop_words: frozenset[str] | None = None):
    """Hidden representation of one user; zero vector if no profile text."""
    tokens, mask = tokenize_and_pad(corpus.get(user_id), max_len, stop_words)
    return attention_pool(table.embed(tokens), mask, params.context)


class CorpusEncoding:
    """Pre-embedded corpus: constant (U, N, b) stack reused every step."""

    def __init__(self, corpus: ProfileCorpus, num_users: int, table: EmbeddingTable,
                 max_len: int = 25, stop_words: frozenset[str] | None = None):
        self.table = table
        self.tokens = []
        vecs = np.zeros((num_users, max_len, table.dim))
        masks = np.zeros((num_users, max_len))
        for u in range(num_users):
            tokens, mask = tokenize_and_pad(corpus.get(u), max_len, stop_words)
            self.tokens.append(tokens)
            vecs[u] = table.embed(tokens)
            masks[u] = mask
        self.word_vectors = vecs
        self.masks = masks

    def encode_all(self, params: AttentionParams):
        """(U, b) user representations, differentiable in the context vector."""
        return attention_pool(self.word_vectors, self.masks, params.context)


def top_attention_words(corpus: ProfileCorpus, user_ids, table: EmbeddingTable,
                        params: AttentionParams, k: int, max_len: int = 25,
                        stop_words: frozenset[str] | None = None):
    """Words ranked by mean attention weight across the profiles using them."""
    context = params.context.data if isinstance(params.context, Tensor) else params.context
    totals: dict[str, float] = {}
    counts: dict[str, int] = {}
    for u in user_ids:
        tokens, mask = tokenize_and_pad(corpus.get(u), max_len, stop_words)
        if mask.sum() == 0:
            continue
        weights = attention_weights(table.embed(tokens), mask, context)
        for token, m, w in zip(tokens, mask, weights):
            if m > 0:
                totals[token] = totals.get(token, 0.0) + float(w)
                counts[token] = counts.get(token, 0) + 1
    ranked = sorted(((totals[t] / counts[t], t) for t in totals), key=lambda p: (-p[0], p[1]))
    return [(t, score) for score, t in ranked[:k]]

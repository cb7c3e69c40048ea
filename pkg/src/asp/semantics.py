"""Feature space for open-vocabulary retrieval.

Embedding providers and relevance classifiers are small duck-typed
interfaces; the mocks here are deterministic stand-ins for CLIP and a VLM,
and the remote variants speak a JSON protocol over HTTP.
"""

from __future__ import annotations

import hashlib
import re
from typing import Protocol, Sequence

import numpy as np

from .errors import BackendError, InvalidParameter, StaleMap
from .remote import JsonHttpClient, RemoteConfig

DEFAULT_DIM = 4096
DEFAULT_K = 3
DEFAULT_N_VIEWS = 3
UNKNOWN_BUCKET = 0

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    # bucket 0 is reserved for the empty-text vector
    return 1 + int.from_bytes(digest, "little") % (dim - 1)


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not n > 0:
        raise InvalidParameter("cannot normalize a zero vector")
    return v / n


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidParameter(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def mock_embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Bag-of-tokens hashing embedding, L2 normalized."""
    v = np.zeros(dim)
    tokens = tokenize(text)
    if not tokens:
        v[UNKNOWN_BUCKET] = 1.0
        return v
    for tok in tokens:
        v[_bucket(tok, dim)] += 1.0
    return v / np.linalg.norm(v)


def token_jaccard(a: str, b: str) -> float:
    ta, tb = set(tokenize(a)), set(tokenize(b))
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


class EmbeddingProvider(Protocol):
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...

    def embed_crop(self, crop) -> np.ndarray: ...


class RelevanceClassifier(Protocol):
    def is_relevant(self, object_views: Sequence, query: str) -> bool: ...


class MockEmbeddingProvider:
    """Embeds crops through their simulated view label."""

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 2:
            raise InvalidParameter("embedding dimension must be at least 2")
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        return mock_embed(text, self.dim)

    def embed_crop(self, crop) -> np.ndarray:
        return mock_embed(crop.view_label or "", self.dim)


class MockRelevanceClassifier:
    """Relevant iff any view's label shares enough tokens with the query."""

    def __init__(self, threshold: float = 0.3):
        self.threshold = threshold

    def is_relevant(self, object_views: Sequence, query: str) -> bool:
        return any(token_jaccard(query, v.view_label or "") >= self.threshold
                   for v in object_views)


def _crop_payload(crop) -> dict:
    return {"area": int(crop.segment_area), "border": bool(crop.touches_border),
            "frame": int(crop.source_frame_id), "label": crop.view_label}


class RemoteEmbeddingProvider:
    def __init__(self, config: RemoteConfig, dim: int = DEFAULT_DIM):
        self.client = JsonHttpClient(config)
        self.dim = dim

    def _vector(self, reply: dict) -> np.ndarray:
        vec = reply.get("vector")
        if not isinstance(vec, list) or len(vec) != self.dim:
            raise BackendError("embedding reply lacks a vector of the configured dimension")
        try:
            return normalize(np.asarray(vec, dtype=np.float64))
        except (InvalidParameter, ValueError) as err:
            raise BackendError(f"bad embedding vector: {err}") from err

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(self.client.post({"op": "embed_text", "text": text}))

    def embed_crop(self, crop) -> np.ndarray:
        return self._vector(self.client.post({"op": "embed_crop", "crop": _crop_payload(crop)}))


class RemoteRelevanceClassifier:
    def __init__(self, config: RemoteConfig):
        self.client = JsonHttpClient(config)

    def is_relevant(self, object_views: Sequence, query: str) -> bool:
        reply = self.client.post({"op": "classify", "query": query,
                                  "views": [_crop_payload(v) for v in object_views]})
        relevant = reply.get("relevant")
        if not isinstance(relevant, bool):
            raise BackendError("classifier reply lacks a boolean 'relevant' field")
        return relevant


def top_k(object_map, query_vec, k: int = DEFAULT_K) -> list[tuple[int, float]]:
    """The ``k`` objects most similar to ``query_vec``, best first.

    Ties on score go to the lower object id.
    """
    if object_map.stale:
        raise StaleMap("object map is stale; rebuild before querying")
    if k < 1:
        raise InvalidParameter(f"k must be >= 1, got {k}")
    scored = [(obj.id, cosine(obj.features, query_vec)) for obj in object_map.objects]
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:k]

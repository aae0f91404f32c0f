"""Embedding-set files and the synthetic two-encoder world.

EMB1 layout (little-endian throughout)::

    b"EMB1" | version:u8 | n:u32 | d:u32 | flags:u8 (bit0 = normalized)
    | n*d float32, row-major | JSON trailer {"ids": [...], "meta": {...}}
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .numerics import make_rng, silu
from .translator import _atomic_write

EMB_MAGIC = b"EMB1"
EMB_VERSION = 1
_HEADER = struct.Struct("<4sBIIB")


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    ids: list[str] = None  # type: ignore[assignment]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.vectors))]
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != len(self.vectors):
            raise ValueError(f"{len(self.ids)} ids for {len(self.vectors)} vectors")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ids must be unique")
        self.meta.setdefault("dimension", self.dim)
        self.meta.setdefault("normalized", False)
        if self.meta["normalized"]:
            norms = np.linalg.norm(self.vectors, axis=1)
            zero = np.asarray(self.meta.get("zero_rows", []), dtype=int)
            ok = np.abs(norms - 1.0) <= 1e-5
            ok[zero] = True
            if not ok.all():
                raise ValueError("set flagged normalized but has rows with non-unit norm")

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def subset(self, index) -> "EmbeddingSet":
        index = np.asarray(index, dtype=int)
        meta = {k: v for k, v in self.meta.items() if k != "zero_rows"}
        if "zero_rows" in self.meta:
            pos = {int(r) for r in self.meta["zero_rows"]}
            meta["zero_rows"] = [k for k, i in enumerate(index) if int(i) in pos]
        return EmbeddingSet(self.vectors[index].copy(), [self.ids[i] for i in index], meta)


def normalize_rows(s: EmbeddingSet) -> EmbeddingSet:
    """Scale each row to unit L2 norm; zero rows stay zero and are listed in ``meta['zero_rows']``."""
    norms = np.linalg.norm(s.vectors, axis=1, keepdims=True)
    zero = norms[:, 0] < 1e-12
    out = np.where(zero[:, None], 0.0, s.vectors / np.where(zero[:, None], 1.0, norms))
    meta = dict(s.meta, normalized=True)
    meta["zero_rows"] = [int(i) for i in np.flatnonzero(zero)]
    if not meta["zero_rows"]:
        del meta["zero_rows"]
    return EmbeddingSet(out, list(s.ids), meta)


def encode_embedding_set(s: EmbeddingSet) -> bytes:
    n, d = s.vectors.shape
    flags = 1 if s.meta.get("normalized") else 0
    trailer = json.dumps({"ids": s.ids, "meta": s.meta}, sort_keys=True).encode()
    return _HEADER.pack(EMB_MAGIC, EMB_VERSION, n, d, flags) + s.vectors.astype("<f4").tobytes() + trailer


def decode_embedding_set(buf: bytes) -> EmbeddingSet:
    if len(buf) < _HEADER.size:
        raise EmbeddingFormatError("truncated header", len(buf))
    magic, version, n, d, flags = _HEADER.unpack_from(buf, 0)
    if magic != EMB_MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r}", 0)
    if version != EMB_VERSION:
        raise EmbeddingFormatError(f"unsupported version {version}", 4)
    start = _HEADER.size
    end = start + 4 * n * d
    if len(buf) < end:
        raise EmbeddingFormatError(f"truncated payload: expected {4 * n * d} bytes of vectors", len(buf))
    vectors = np.frombuffer(buf, dtype="<f4", count=n * d, offset=start).reshape(n, d)
    try:
        trailer = json.loads(buf[end:].decode())
        ids, meta = trailer["ids"], trailer["meta"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise EmbeddingFormatError(f"malformed metadata trailer: {exc}", end) from None
    if len(ids) != n:
        raise EmbeddingFormatError(f"trailer lists {len(ids)} ids for {n} rows", end)
    meta["normalized"] = bool(flags & 1)
    s = EmbeddingSet.__new__(EmbeddingSet)
    # bypass the unit-norm re-check: float32 storage is authoritative
    s.vectors = vectors.astype(np.float64)
    s.ids = [str(i) for i in ids]
    s.meta = meta
    return s


def save(s: EmbeddingSet, path) -> None:
    _atomic_write(path, encode_embedding_set(s))


def load(path) -> EmbeddingSet:
    return decode_embedding_set(Path(path).read_bytes())


# --------------------------------------------------------------------------
# synthetic world


@dataclass(frozen=True)
class WorldConfig:
    """Two "encoders" that share a latent space.

    Each encoder is ``x -> O_out silu(gain * Q_in diag(spectrum) z)`` followed
    by row normalization, with ``z`` standard normal. ``Q_in`` has orthonormal
    columns; both encoders start from one shared ``Q_in`` and each perturbs it
    by ``inner_jitter`` before re-orthonormalizing. ``O_out`` is drawn
    independently per encoder, which is what defeats the identity baseline.

    ``mode``: ``"nonlinear"`` (default), ``"orthogonal"`` (no SiLU, pure
    rotation) or ``"same"`` (both encoders identical).
    """

    latent_dim: int = 32
    d1: int = 64
    d2: int = 64
    n_train_1: int = 5000
    n_train_2: int = 5000
    n_eval: int = 500
    mode: str = "nonlinear"
    gain: float = 1.0
    inner_jitter: float = 0.1
    spectrum_decay: float = 0.0
    n_clusters: int = 0
    cluster_spread: float = 0.5

    def __post_init__(self):
        if min(self.latent_dim, self.d1, self.d2) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.latent_dim > min(self.d1, self.d2):
            raise ValueError("latent_dim must not exceed min(d1, d2)")
        if min(self.n_train_1, self.n_train_2, self.n_eval) < 1:
            raise ValueError("set sizes must be >= 1")
        if self.mode not in ("nonlinear", "orthogonal", "same"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n_clusters < 0 or self.cluster_spread <= 0:
            raise ValueError("n_clusters must be >= 0 and cluster_spread > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown world config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Encoder:
    inner: np.ndarray  # d x latent, orthonormal columns
    outer: np.ndarray  # d x d orthogonal
    spectrum: np.ndarray
    gain: float
    nonlinear: bool

    def __call__(self, z: np.ndarray) -> np.ndarray:
        h = (z * self.spectrum) @ self.inner.T * self.gain
        if self.nonlinear:
            h = silu(h)
        x = h @ self.outer.T
        return x / np.maximum(np.linalg.norm(x, axis=1, keepdims=True), 1e-12)


@dataclass
class SyntheticWorld:
    config: WorldConfig
    seed: int
    map1: Encoder
    map2: Encoder
    train_u: EmbeddingSet
    train_v: EmbeddingSet
    eval_u: EmbeddingSet
    eval_v: EmbeddingSet
    latent_index: dict = field(default_factory=dict)
    eval_labels: np.ndarray | None = None
    attr_u: EmbeddingSet | None = None
    attr_v: EmbeddingSet | None = None

    def files(self) -> dict[str, EmbeddingSet]:
        out = {"train_u": self.train_u, "train_v": self.train_v, "eval_u": self.eval_u, "eval_v": self.eval_v}
        if self.attr_u is not None:
            out["attr_u"] = self.attr_u
            out["attr_v"] = self.attr_v
        return out


def _orthonormal_like(m):
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diag(r))


def _orthonormal(rng, rows, cols):
    return _orthonormal_like(rng.standard_normal((rows, cols)))


def generate_synthetic_world(config: WorldConfig, seed: int) -> SyntheticWorld:
    c = config
    rng = make_rng(seed)
    k = c.latent_dim
    base = _orthonormal(rng, max(c.d1, c.d2), k)

    def encoder(d):
        inner = base[:d]
        if c.inner_jitter > 0 and c.mode != "same":
            inner = inner + c.inner_jitter * rng.standard_normal(inner.shape) / np.sqrt(d)
        inner = _orthonormal_like(inner)
        outer = _orthonormal(rng, d, d)
        return inner, outer

    spectrum = np.exp(-c.spectrum_decay * np.arange(k) / max(k - 1, 1))
    inner1, outer1 = encoder(c.d1)
    if c.mode == "same":
        inner2, outer2 = inner1, outer1
    else:
        inner2, outer2 = encoder(c.d2)
    nonlinear = c.mode != "orthogonal"
    map1 = Encoder(inner1, outer1, spectrum, c.gain, nonlinear)
    map2 = Encoder(inner2, outer2, spectrum, c.gain, nonlinear)

    # one latent pool; disjoint index ranges give unpaired training sets
    total = c.n_train_1 + c.n_train_2 + c.n_eval
    centers = None
    if c.n_clusters > 0:
        centers = rng.standard_normal((c.n_clusters, k))
        labels_all = rng.integers(0, c.n_clusters, size=total)
        latents = centers[labels_all] + c.cluster_spread * rng.standard_normal((total, k))
    else:
        labels_all = None
        latents = rng.standard_normal((total, k))
    idx_a = np.arange(0, c.n_train_1)
    idx_b = np.arange(c.n_train_1, c.n_train_1 + c.n_train_2)
    idx_e = np.arange(c.n_train_1 + c.n_train_2, total)

    def make(vectors, prefix, index, source):
        meta = {"source": source, "normalized": True, "creation_seed": int(seed)}
        return EmbeddingSet(vectors, [f"{prefix}{i}" for i in index], meta)

    world = SyntheticWorld(
        config=c, seed=seed, map1=map1, map2=map2,
        train_u=make(map1(latents[idx_a]), "a", idx_a, "space1"),
        train_v=make(map2(latents[idx_b]), "b", idx_b, "space2"),
        eval_u=make(map1(latents[idx_e]), "e", idx_e, "space1"),
        eval_v=make(map2(latents[idx_e]), "e", idx_e, "space2"),
        latent_index={"train_u": idx_a, "train_v": idx_b, "eval": idx_e},
    )
    if centers is not None:
        world.eval_labels = labels_all[idx_e]
        names = [f"cluster{j}" for j in range(c.n_clusters)]
        world.attr_u = EmbeddingSet(map1(centers), names, {"source": "space1", "normalized": True})
        world.attr_v = EmbeddingSet(map2(centers), names, {"source": "space2", "normalized": True})
    return world


def world_to_json(config: WorldConfig) -> str:
    return json.dumps(asdict(config), indent=2, sort_keys=True)

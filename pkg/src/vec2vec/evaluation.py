"""Translation metrics (mean cosine, top-1, mean rank) and zero-shot attribute inference."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

REPORT_FIELDS = ["pair", "method", "dataset", "chunk", "mean_cos", "stderr_cos", "top1", "mean_rank",
                 "stderr_rank", "n", "note"]


@dataclass
class EvalReport:
    mean_cos: float
    top1: float
    mean_rank: float
    n: int
    stderr_cos: float = 0.0
    stderr_rank: float = 0.0
    stderr_top1: float = 0.0
    batch_chunks: int = 1
    per_chunk: list["EvalReport"] = field(default_factory=list, repr=False)

    def row(self, pair="", method="", dataset="", chunk="all", note="") -> dict:
        return {"pair": pair, "method": method, "dataset": dataset, "chunk": chunk, "note": note,
                "mean_cos": f"{self.mean_cos:.6f}", "stderr_cos": f"{self.stderr_cos:.6f}",
                "top1": f"{self.top1:.6f}", "mean_rank": f"{self.mean_rank:.6f}",
                "stderr_rank": f"{self.stderr_rank:.6f}", "n": self.n}


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch {a.shape[0]} vs {b.shape[0]}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.where(norms < 1e-12, 0.0, x / np.where(norms < 1e-12, 1.0, norms))


def cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return unit_rows(a) @ unit_rows(b).T


def ranks_from_scores(scores: np.ndarray) -> np.ndarray:
    """1-based rank of column ``i`` in row ``i`` under a descending sort, ties by ascending index."""
    n = scores.shape[0]
    diag = scores[np.arange(n), np.arange(n)][:, None]
    above = (scores > diag).sum(axis=1)
    cols = np.arange(scores.shape[1])[None, :]
    tied_before = ((scores == diag) & (cols < np.arange(n)[:, None])).sum(axis=1)
    return 1 + above + tied_before


def chunk_bounds(n: int, chunk_size: int) -> list[tuple[int, int]]:
    bounds = [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]
    # a trailing singleton cannot be ranked; fold it into the previous chunk
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        s, _ = bounds.pop()
        bounds[-1] = (bounds[-1][0], n)
    return bounds


def _summarize(cos: np.ndarray, ranks: np.ndarray, chunks: int) -> EvalReport:
    n = len(cos)
    top1 = float(np.mean(ranks == 1))
    sd = (lambda a: float(np.std(a, ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
    return EvalReport(mean_cos=float(np.mean(cos)), top1=top1, mean_rank=float(np.mean(ranks)), n=n,
                      stderr_cos=sd(cos), stderr_rank=sd(ranks.astype(np.float64)),
                      stderr_top1=float(np.sqrt(top1 * (1 - top1) / n)), batch_chunks=chunks)


def eval_translation(pred: np.ndarray, truth: np.ndarray, chunk_size: int = 8192) -> EvalReport:
    """Score translations ``pred`` against row-aligned ground truth.

    Rows are split into consecutive chunks; within a chunk each translation
    is ranked against every target of that chunk by cosine similarity.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if chunk_size < 2:
        raise ValueError("chunk_size must be >= 2")
    n = pred.shape[0]
    if n < 2:
        raise ValueError("need at least 2 rows to rank")
    all_cos, all_ranks, per_chunk = [], [], []
    bounds = chunk_bounds(n, chunk_size)
    for s, e in bounds:
        sims = cosine_matrix(pred[s:e], truth[s:e])
        cos = np.diag(sims).copy()
        ranks = ranks_from_scores(sims)
        per_chunk.append(_summarize(cos, ranks, 1))
        all_cos.append(cos)
        all_ranks.append(ranks)
    report = _summarize(np.concatenate(all_cos), np.concatenate(all_ranks), len(bounds))
    report.per_chunk = per_chunk
    return report


# --------------------------------------------------------------------------
# attribute inference


@dataclass
class AttributeTask:
    doc_embeddings: np.ndarray
    attribute_embeddings: np.ndarray
    true_labels: list
    k: int = 1

    def __post_init__(self):
        self.true_labels = [set(int(c) for c in np.atleast_1d(labels)) for labels in self.true_labels]
        n_attr = len(self.attribute_embeddings)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.k > n_attr:
            raise ValueError(f"k={self.k} exceeds the {n_attr} attributes")
        if len(self.true_labels) != len(self.doc_embeddings):
            raise ValueError("one label set per document required")
        for labels in self.true_labels:
            if any(c < 0 or c >= n_attr for c in labels):
                raise ValueError(f"label index out of range in {sorted(labels)}")


def topk_attributes(doc_embeddings, attribute_embeddings, k: int) -> np.ndarray:
    sims = cosine_matrix(doc_embeddings, attribute_embeddings)
    # stable sort on negated scores: ties go to the lower attribute index
    return np.argsort(-sims, axis=1, kind="stable")[:, :k]


def attribute_topk(task: AttributeTask) -> float:
    """Fraction of documents whose top-k attributes hit at least one true label."""
    top = topk_attributes(task.doc_embeddings, task.attribute_embeddings, task.k)
    hits = 0
    empty = 0
    for row, labels in zip(top, task.true_labels):
        if not labels:
            empty += 1
            continue
        hits += bool(labels.intersection(int(c) for c in row))
    if empty:
        log.warning("%d documents have no true labels and count as misses", empty)
    return hits / len(task.true_labels) if task.true_labels else 0.0


def append_report_csv(path, rows: list[dict]) -> None:
    """Append rows to a report CSV, writing the header when the file is new."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n", extrasaction="ignore")
        if new:
            w.writeheader()
        w.writerows(rows)

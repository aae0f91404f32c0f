"""Identity baseline and oracle-aided optimal-transport matching.

The OT baseline is given both embedding sets of the *same* documents and
solves a matching or transport problem between them. Plans are scored with
:func:`ot_top1`, :func:`ot_rank` and barycentric projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .evaluation import EvalReport, chunk_bounds, cosine_matrix, ranks_from_scores, unit_rows
from .numerics import DimensionError

SOLVERS = ("naive", "hungarian", "emd", "sinkhorn", "gw")


@dataclass
class TransportPlan:
    P: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    converged: bool = True
    violation: float = 0.0
    iterations: int = 0

    @property
    def mass(self) -> float:
        return float(self.P.sum())


def marginal_violation(P, a, b) -> float:
    return float(max(np.max(np.abs(P.sum(axis=1) - a)), np.max(np.abs(P.sum(axis=0) - b))))


def naive_translate(u: np.ndarray, target_dim: int | None = None) -> np.ndarray:
    """``F(x) = x``. Only defined when both spaces share a dimension."""
    u = np.asarray(u, dtype=np.float64)
    if target_dim is not None and u.shape[1] != target_dim:
        raise DimensionError(f"naive baseline needs equal dimensions, got {u.shape[1]} vs {target_dim}")
    return u.copy()


# --------------------------------------------------------------------------
# assignment


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Exact minimum-cost perfect matching on a square matrix.

    Shortest-augmenting-path form of the Hungarian method with row/column
    potentials, O(n^3). Returns ``perm`` with row ``i`` matched to column
    ``perm[i]``.
    """
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"hungarian needs a square matrix, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("costs must be finite")
    n = C.shape[0]
    if n == 0:
        return np.zeros(0, dtype=int)
    # 1-based bookkeeping with a virtual column 0
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match_col = np.zeros(n + 1, dtype=int)  # match_col[j] = row matched to column j
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match_col[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    perm = np.empty(n, dtype=int)
    perm[match_col[1:] - 1] = np.arange(n)
    return perm


def assignment_cost(cost: np.ndarray, perm: np.ndarray) -> float:
    return float(np.asarray(cost)[np.arange(len(perm)), perm].sum())


def emd(cost: np.ndarray) -> TransportPlan:
    """Exact OT with uniform equal marginals, via the optimal assignment."""
    C = np.asarray(cost, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"emd needs a square matrix, got shape {C.shape}")
    n = C.shape[0]
    perm = hungarian(C)
    P = np.zeros_like(C)
    P[np.arange(n), perm] = 1.0 / n
    a = np.full(n, 1.0 / n)
    return TransportPlan(P, a, a.copy(), True, marginal_violation(P, a, a), 1)


# --------------------------------------------------------------------------
# entropic solvers


def sinkhorn(cost: np.ndarray, epsilon: float, max_iters: int = 10000, tol: float = 1e-9,
             a: np.ndarray | None = None, b: np.ndarray | None = None) -> TransportPlan:
    """Entropic OT by log-domain Sinkhorn iterations (uniform marginals by default).

    Stops once the row-marginal violation (columns are exact after each
    sweep) drops below ``tol``; otherwise returns after ``max_iters`` with
    ``converged=False``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    C = np.asarray(cost, dtype=np.float64)
    n, m = C.shape
    a = np.full(n, 1.0 / n) if a is None else np.asarray(a, dtype=np.float64)
    b = np.full(m, 1.0 / m) if b is None else np.asarray(b, dtype=np.float64)
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(n)
    g = np.zeros(m)
    K = -C / epsilon
    it = 0
    violation = np.inf
    for it in range(1, max_iters + 1):
        f = epsilon * (log_a - logsumexp(K + g[None, :] / epsilon, axis=1))
        g = epsilon * (log_b - logsumexp(K + f[:, None] / epsilon, axis=0))
        if it % 10 == 0 or it == max_iters:
            logP = K + f[:, None] / epsilon + g[None, :] / epsilon
            violation = float(np.max(np.abs(np.exp(logsumexp(logP, axis=1)) - a)))
            if violation < tol:
                break
    P = np.exp(K + f[:, None] / epsilon + g[None, :] / epsilon)
    violation = marginal_violation(P, a, b)
    return TransportPlan(P, a, b, violation < tol, violation, it)


def plan_entropy(P: np.ndarray) -> float:
    p = P[P > 0]
    return float(-np.sum(p * np.log(p)))


def gw_objective(D_src: np.ndarray, D_tgt: np.ndarray, P: np.ndarray) -> float:
    """``sum_ijkl (D_src[i,k] - D_tgt[j,l])^2 P[i,j] P[k,l]``."""
    p = P.sum(axis=1)
    q = P.sum(axis=0)
    const = (D_src ** 2 @ p)[:, None] + (D_tgt ** 2 @ q)[None, :]
    return float(np.sum((const - 2.0 * D_src @ P @ D_tgt.T) * P))


def _check_metric(D, name):
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(D, D.T, atol=1e-10) or np.min(D) < -1e-12:
        raise ValueError(f"{name} must be symmetric and nonnegative")
    return D


def gromov_wasserstein(D_src: np.ndarray, D_tgt: np.ndarray, epsilon: float = 0.05, max_iters: int = 200,
                       tol: float = 1e-7, inner_tol: float = 1e-6, rescale: bool = True) -> TransportPlan:
    """Entropic Gromov-Wasserstein with squared loss and uniform marginals.

    Alternates the linearized cost ``const - 2 D_src P D_tgt^T`` with a
    Sinkhorn projection until successive plans differ by less than ``tol``
    (max absolute entry). Distances are scaled to max 1 unless ``rescale`` is off.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    C1 = _check_metric(D_src, "D_src")
    C2 = _check_metric(D_tgt, "D_tgt")
    if rescale:
        C1 = C1 / C1.max() if C1.max() > 0 else C1
        C2 = C2 / C2.max() if C2.max() > 0 else C2
    n, m = C1.shape[0], C2.shape[0]
    p = np.full(n, 1.0 / n)
    q = np.full(m, 1.0 / m)
    const = (C1 ** 2 @ p)[:, None] + (C2 ** 2 @ q)[None, :]
    P = np.outer(p, q)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        lin = const - 2.0 * C1 @ P @ C2.T
        P_new = sinkhorn(lin, epsilon, tol=inner_tol * min(1.0 / n, 1.0 / m)).P
        change = float(np.max(np.abs(P_new - P)))
        P = P_new
        if change < tol:
            converged = True
            break
    return TransportPlan(P, p, q, converged, marginal_violation(P, p, q), it)


# --------------------------------------------------------------------------
# plan metrics


def barycentric_project(P, targets: np.ndarray) -> np.ndarray:
    """``v'_i = sum_j P_ij v_j / sum_j P_ij``."""
    P = P.P if isinstance(P, TransportPlan) else np.asarray(P, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if P.shape[1] != targets.shape[0]:
        raise DimensionError(f"plan has {P.shape[1]} columns but {targets.shape[0]} targets")
    mass = P.sum(axis=1, keepdims=True)
    if np.any(mass <= 0):
        raise ValueError("plan has rows with zero mass")
    return (P @ targets) / mass


def ot_top1(P) -> float:
    """Best of arg-max-mass accuracy and Hungarian-on-the-plan accuracy (truth = identity)."""
    P = P.P if isinstance(P, TransportPlan) else np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    idx = np.arange(n)
    argmax_acc = float(np.mean(np.argmax(P, axis=1) == idx))
    hung_acc = float(np.mean(hungarian(-P) == idx))
    return max(argmax_acc, hung_acc)


def ot_rank(P) -> float:
    """Mean 1-based position of the true partner under descending mass (ties by index)."""
    P = P.P if isinstance(P, TransportPlan) else np.asarray(P, dtype=np.float64)
    return float(np.mean(ranks_from_scores(P)))


def cosine_cost(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``1 - cos(u_i, v_j)``: minimizing it maximizes similarity."""
    return 1.0 - cosine_matrix(u, v)


# --------------------------------------------------------------------------
# oracle-aided baseline over paired sets


def _score_plan(P: np.ndarray, v: np.ndarray, discrete: bool) -> EvalReport:
    n = P.shape[0]
    top1 = ot_top1(P)
    if discrete:
        return EvalReport(mean_cos=float("nan"), top1=top1, mean_rank=float("nan"), n=n,
                          stderr_cos=float("nan"), stderr_rank=float("nan"),
                          stderr_top1=float(np.sqrt(top1 * (1 - top1) / n)))
    ranks = ranks_from_scores(P).astype(np.float64)
    cos = np.sum(unit_rows(barycentric_project(P, v)) * unit_rows(v), axis=1)
    sd = lambda a: float(np.std(a, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return EvalReport(mean_cos=float(cos.mean()), top1=top1, mean_rank=float(ranks.mean()), n=n,
                      stderr_cos=sd(cos), stderr_rank=sd(ranks),
                      stderr_top1=float(np.sqrt(top1 * (1 - top1) / n)))


def solve_pair(solver: str, u: np.ndarray, v: np.ndarray, epsilon: float = 0.05,
               gw_epsilon: float = 0.05) -> EvalReport | None:
    """Run one solver on one chunk of paired embeddings; ``None`` when not applicable."""
    same_dim = u.shape[1] == v.shape[1]
    if solver == "naive":
        if not same_dim:
            return None
        from .evaluation import eval_translation
        return eval_translation(naive_translate(u, v.shape[1]), v, chunk_size=len(u))
    if solver in ("hungarian", "emd", "sinkhorn") and not same_dim:
        return None
    if solver == "hungarian":
        perm = hungarian(cosine_cost(u, v))
        P = np.zeros((len(u), len(v)))
        P[np.arange(len(u)), perm] = 1.0 / len(u)
        return _score_plan(P, v, discrete=True)
    if solver == "emd":
        return _score_plan(emd(cosine_cost(u, v)).P, v, discrete=False)
    if solver == "sinkhorn":
        return _score_plan(sinkhorn(cosine_cost(u, v), epsilon).P, v, discrete=False)
    if solver == "gw":
        D1 = np.clip(cosine_cost(u, u), 0.0, None)
        D2 = np.clip(cosine_cost(v, v), 0.0, None)
        D1 = (D1 + D1.T) / 2
        D2 = (D2 + D2.T) / 2
        np.fill_diagonal(D1, 0.0)
        np.fill_diagonal(D2, 0.0)
        return _score_plan(gromov_wasserstein(D1, D2, gw_epsilon).P, v, discrete=False)
    raise ValueError(f"unknown solver {solver!r}")


def merge_reports(reports: list[EvalReport]) -> EvalReport:
    """Size-weighted merge of per-chunk reports (standard errors pooled by variance)."""
    n = sum(r.n for r in reports)
    w = [r.n / n for r in reports]
    mean = lambda attr: float(sum(wi * getattr(r, attr) for wi, r in zip(w, reports)))
    pooled = lambda attr: float(np.sqrt(sum((wi ** 2) * getattr(r, attr) ** 2 for wi, r in zip(w, reports))))
    top1 = mean("top1")
    return EvalReport(mean_cos=mean("mean_cos"), top1=top1, mean_rank=mean("mean_rank"), n=n,
                      stderr_cos=pooled("stderr_cos"), stderr_rank=pooled("stderr_rank"),
                      stderr_top1=float(np.sqrt(top1 * (1 - top1) / n)), batch_chunks=len(reports),
                      per_chunk=list(reports))


def oracle_baselines(u: np.ndarray, v: np.ndarray, solvers=SOLVERS, chunk_size: int = 1024,
                     epsilon: float = 0.05) -> dict[str, EvalReport | None]:
    """Score each solver on row-paired sets, chunk by chunk."""
    if len(u) != len(v):
        raise ValueError("oracle baselines need row-paired sets of equal size")
    out = {}
    for solver in solvers:
        chunks = []
        for s, e in chunk_bounds(len(u), chunk_size):
            r = solve_pair(solver, u[s:e], v[s:e], epsilon=epsilon)
            if r is None:
                chunks = None
                break
            chunks.append(r)
        out[solver] = None if chunks is None else merge_reports(chunks)
    return out


def lowest_rank_solver(reports: dict[str, EvalReport | None]) -> str | None:
    ranked = [(r.mean_rank, s) for s, r in reports.items()
              if r is not None and s != "naive" and np.isfinite(r.mean_rank)]
    return min(ranked)[1] if ranked else None

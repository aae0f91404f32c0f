"""Scaled-down synthetic experiments: reproduction, ablations, data scaling, attributes.

Each ``run_*`` function writes its numbers to CSV files under an output
directory and returns a :class:`CriterionResult`. Nothing time-dependent is
written, so two runs with the same configuration give byte-identical files.
Training runs are memoized inside a :class:`Suite` so the ablation and
data-scaling comparisons reuse the full-loss runs.
"""

from __future__ import annotations

import csv
import itertools
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import hungarian, gromov_wasserstein, ot_top1, assignment_cost, sinkhorn
from .data_io import WorldConfig, generate_synthetic_world
from .evaluation import AttributeTask, attribute_topk, eval_translation
from .gradcheck import run_gradcheck
from .losses import LossWeights
from .numerics import make_rng
from .trainer import TrainConfig, subsample, train_state, write_history_csv

TRAIN_DEFAULTS = TrainConfig(
    weights=LossWeights(lambda_vsp=5.0),
    lr_gen=1e-3, lr_disc=2e-4, batch_size=128, steps=12000,
    latent_dim=64, adapter_width=128, backbone_blocks=2, disc_depth=2, disc_width=128,
)


@dataclass(frozen=True)
class SuiteConfig:
    world: WorldConfig = WorldConfig(spectrum_decay=1.5)
    world_seed: int = 0
    train: TrainConfig = TRAIN_DEFAULTS
    seeds: tuple[int, ...] = (0, 1, 2)
    small_n: int = 500
    attr_world: WorldConfig = WorldConfig(spectrum_decay=1.5, n_clusters=8, cluster_spread=0.5)
    attr_train: TrainConfig = TRAIN_DEFAULTS
    attr_seeds: tuple[int, ...] = (0,)
    gradcheck_configs: int = 100
    chunk: int = 8192


@dataclass
class CriterionResult:
    name: str
    passed: bool
    summary: str
    files: list[Path] = field(default_factory=list)
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.summary} ({self.seconds:.1f}s)"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _f(x) -> str:
    return repr(float(x))


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# --------------------------------------------------------------------------
# oracle and property criteria


@_timed
def run_gradcheck_criterion(out: Path, n_configs: int = 100, tol: float = 1e-4) -> CriterionResult:
    report = run_gradcheck(n_configs=n_configs, seed=0)
    rows = [[k, _f(v)] for k, v in sorted(report.errors.items())]
    path = _write_csv(out / "c1_gradcheck.csv", ["check", "max_rel_error"], rows)
    bad = report.failures(tol)
    ok = report.n_configs >= 100 and not bad
    return CriterionResult("1 gradient correctness", ok,
                           f"{report.n_configs} configs, worst rel error {report.worst:.2e}"
                           + (f", failing {bad}" if bad else ""), [path])


def brute_force_assignment(cost: np.ndarray) -> float:
    n = len(cost)
    perms = np.array(list(itertools.permutations(range(n))))
    return float(cost[np.arange(n), perms].sum(axis=1).min())


@_timed
def run_assignment_criterion(out: Path, trials: int = 100, n: int = 7) -> CriterionResult:
    rng = make_rng(1)
    rows, mismatches = [], 0
    for t in range(trials):
        cost = rng.standard_normal((n, n))
        perm = hungarian(cost)
        h, b = assignment_cost(cost, perm), brute_force_assignment(cost)
        mismatches += h != b
        rows.append([t, _f(h), _f(b)])
    path = _write_csv(out / "c2_assignment.csv", ["trial", "hungarian", "brute_force"], rows)
    return CriterionResult("2 assignment oracle", mismatches == 0,
                           f"{trials - mismatches}/{trials} exact matches", [path])


@_timed
def run_sinkhorn_criterion(out: Path, trials: int = 50, n: int = 64, tol: float = 1e-6) -> CriterionResult:
    rng = make_rng(2)
    rows, worst, unconverged = [], 0.0, 0
    for eps in (1.0, 0.1):
        for t in range(trials):
            plan = sinkhorn(rng.random((n, n)), eps)
            worst = max(worst, plan.violation)
            unconverged += not plan.converged
            rows.append([eps, t, _f(plan.violation), plan.iterations, int(plan.converged)])
    path = _write_csv(out / "c3_sinkhorn.csv", ["epsilon", "trial", "violation", "iterations", "converged"], rows)
    return CriterionResult("3 sinkhorn marginals", worst < tol and unconverged == 0,
                           f"max violation {worst:.2e} over {2 * trials} plans", [path])


@_timed
def run_gw_criterion(out: Path, n: int = 50, dim: int = 8) -> CriterionResult:
    rng = make_rng(3)
    src = rng.standard_normal((n, dim))
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    perm = rng.permutation(n)
    tgt = (src @ (q * np.sign(np.diag(r))))[perm]
    d_src = np.linalg.norm(src[:, None] - src[None], axis=-1)
    d_tgt = np.linalg.norm(tgt[:, None] - tgt[None], axis=-1)
    plan = gromov_wasserstein(d_src, d_tgt)
    # source i sits at target position inv[i]
    inv = np.argsort(perm)
    top1 = ot_top1(plan.P[:, inv])
    path = _write_csv(out / "c4_gw.csv", ["n", "top1", "iterations", "converged"],
                      [[n, _f(top1), plan.iterations, int(plan.converged)]])
    return CriterionResult("4 GW isometry recovery", top1 >= 0.95, f"plan top-1 {top1:.3f}", [path])


@_timed
def run_metric_criterion(out: Path, n: int = 512) -> CriterionResult:
    rng = make_rng(4)
    truth = rng.standard_normal((n, 16))
    perfect = eval_translation(truth, truth)
    rows = [["perfect", -1, _f(perfect.mean_cos), _f(perfect.top1), _f(perfect.mean_rank)]]
    fixed = (abs(perfect.mean_cos - 1.0) < 1e-9 and perfect.top1 == 1.0 and perfect.mean_rank == 1.0)
    ranks = []
    for seed in range(5):
        r = eval_translation(make_rng(100 + seed).standard_normal((n, 16)), truth)
        ranks.append(r.mean_rank)
        rows.append(["random", seed, _f(r.mean_cos), _f(r.top1), _f(r.mean_rank)])
    in_band = all(0.4 * n <= x <= 0.6 * n for x in ranks)
    path = _write_csv(out / "c5_metrics.csv", ["translator", "seed", "mean_cos", "top1", "mean_rank"], rows)
    return CriterionResult("5 metric fixed points", fixed and in_band,
                           f"perfect={perfect.mean_cos:.3f}/{perfect.top1:.3f}/{perfect.mean_rank:.3f}, "
                           f"random ranks {min(ranks):.1f}..{max(ranks):.1f} (n={n})", [path])


# --------------------------------------------------------------------------
# training criteria


@dataclass
class RunRecord:
    label: str
    seed: int
    top1: float
    mean_rank: float
    mean_cos: float
    val_proxy: float


class Suite:
    """Holds the synthetic worlds and memoized training runs for one output directory."""

    def __init__(self, config: SuiteConfig, out: Path, log=None):
        self.config = config
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.log = log or (lambda msg: None)
        self._runs: dict[tuple[str, int], RunRecord] = {}
        self._world = None
        self._attr_world = None

    @property
    def world(self):
        if self._world is None:
            self._world = generate_synthetic_world(self.config.world, self.config.world_seed)
        return self._world

    @property
    def attr_world(self):
        if self._attr_world is None:
            self._attr_world = generate_synthetic_world(self.config.attr_world, self.config.world_seed)
        return self._attr_world

    def train_config(self, label: str) -> TrainConfig:
        base = self.config.train
        return {"full": base, "no_cc": replace(base, no_cc=True), "no_vsp": replace(base, no_vsp=True),
                "small": base}[label]

    def run(self, label: str, seed: int) -> RunRecord:
        key = (label, seed)
        if key in self._runs:
            return self._runs[key]
        w = self.world
        train_v = subsample(w.train_v, self.config.small_n, seed) if label == "small" else w.train_v
        t0 = time.perf_counter()
        st = train_state(self.train_config(label), w.train_u, train_v, seed)
        rep = eval_translation(st.net.translate_1to2(w.eval_u.vectors), w.eval_v.vectors, self.config.chunk)
        write_history_csv(st.history, self.out / f"history_{label}_seed{seed}.csv")
        rec = RunRecord(label, seed, rep.top1, rep.mean_rank, rep.mean_cos, st.val_proxy)
        self.log(f"{label} seed {seed}: top1 {rep.top1:.3f} rank {rep.mean_rank:.2f} cos {rep.mean_cos:.3f} "
                 f"proxy {st.val_proxy:.4f} ({time.perf_counter() - t0:.0f}s)")
        self._runs[key] = rec
        return rec

    def _run_rows(self, recs: list[RunRecord]) -> list[list]:
        return [[r.label, r.seed, _f(r.top1), _f(r.mean_rank), _f(r.mean_cos), _f(r.val_proxy)] for r in recs]

    RUN_HEADER = ["variant", "seed", "top1", "mean_rank", "mean_cos", "val_proxy"]

    @_timed
    def reproduction(self) -> CriterionResult:
        w = self.world
        n = len(w.eval_u)
        naive = eval_translation(w.eval_u.vectors, w.eval_v.vectors, self.config.chunk)
        recs = [self.run("full", s) for s in self.config.seeds]
        best = min(recs, key=lambda r: (r.mean_rank, -r.top1))
        by_proxy = min(recs, key=lambda r: r.val_proxy)
        rows = self._run_rows(recs) + [["naive", -1, _f(naive.top1), _f(naive.mean_rank), _f(naive.mean_cos), ""]]
        path = _write_csv(self.out / "c6_reproduction.csv", self.RUN_HEADER, rows)
        ok = (best.top1 >= 0.5 and best.mean_rank <= 10
              and naive.top1 <= 0.05 and naive.mean_rank >= 0.3 * n)
        return CriterionResult(
            "6 synthetic reproduction", ok,
            f"best seed {best.seed}: top1 {best.top1:.3f} rank {best.mean_rank:.2f}; "
            f"proxy pick seed {by_proxy.seed}: top1 {by_proxy.top1:.3f}; "
            f"naive top1 {naive.top1:.3f} rank {naive.mean_rank:.1f} (n={n})", [path])

    def _median_rank(self, label: str) -> float:
        return float(np.median([self.run(label, s).mean_rank for s in self.config.seeds]))

    @_timed
    def ablation(self) -> CriterionResult:
        med = {lab: self._median_rank(lab) for lab in ("full", "no_cc", "no_vsp")}
        recs = [self.run(lab, s) for lab in ("no_cc", "no_vsp") for s in self.config.seeds]
        rows = self._run_rows(recs) + [[f"median_{k}", -1, "", _f(v), "", ""] for k, v in med.items()]
        path = _write_csv(self.out / "c7_ablation.csv", self.RUN_HEADER, rows)
        ok = med["no_cc"] >= med["full"] and med["no_vsp"] >= med["full"]
        return CriterionResult("7 ablation direction", ok,
                               "median rank " + ", ".join(f"{k} {v:.2f}" for k, v in med.items()), [path])

    @_timed
    def data_scaling(self) -> CriterionResult:
        full, small = self._median_rank("full"), self._median_rank("small")
        recs = [self.run("small", s) for s in self.config.seeds]
        rows = self._run_rows(recs) + [["median_full", -1, "", _f(full), "", ""],
                                       ["median_small", -1, "", _f(small), "", ""]]
        path = _write_csv(self.out / "c8_scaling.csv", self.RUN_HEADER, rows)
        return CriterionResult("8 data-scaling direction", small >= full,
                               f"median rank with {self.config.small_n} space-2 vectors {small:.2f} "
                               f"vs {self.config.world.n_train_2}: {full:.2f}", [path])

    @_timed
    def attributes(self) -> CriterionResult:
        w = self.attr_world
        k = self.config.attr_world.n_clusters
        labels = [[int(c)] for c in w.eval_labels]
        naive = attribute_topk(AttributeTask(w.eval_u.vectors, w.attr_v.vectors, labels, 1))
        rows = [["naive", -1, _f(naive)]]
        accs = []
        for seed in self.config.attr_seeds:
            st = train_state(self.config.attr_train, w.train_u, w.train_v, seed)
            write_history_csv(st.history, self.out / f"history_attr_seed{seed}.csv")
            acc = attribute_topk(AttributeTask(st.net.translate_1to2(w.eval_u.vectors), w.attr_v.vectors, labels, 1))
            self.log(f"attr seed {seed}: accuracy {acc:.3f}")
            accs.append(acc)
            rows.append(["vec2vec", seed, _f(acc)])
        best = max(accs)
        path = _write_csv(self.out / "c9_attributes.csv", ["method", "seed", "top1_accuracy"], rows)
        ok = best >= 3.0 / k and best >= naive
        return CriterionResult("9 attribute inference", ok,
                               f"vec2vec {best:.3f} vs naive {naive:.3f}, chance {1 / k:.3f}", [path])


def run_all(out: Path, config: SuiteConfig = SuiteConfig(), log=None) -> list[CriterionResult]:
    """Criteria 1-9 in order; every CSV lands in ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    suite = Suite(config, out, log)
    results = [
        run_gradcheck_criterion(out, config.gradcheck_configs),
        run_assignment_criterion(out),
        run_sinkhorn_criterion(out),
        run_gw_criterion(out),
        run_metric_criterion(out),
        suite.reproduction(),
        suite.ablation(),
        suite.data_scaling(),
        suite.attributes(),
    ]
    for r in results:
        (log or (lambda m: None))(r.line())
    return results


def compare_outputs(dir_a: Path, dir_b: Path) -> tuple[list[str], list[str]]:
    """Return ``(identical, differing)`` CSV names across two output directories."""
    names = sorted({p.name for p in Path(dir_a).glob("*.csv")} | {p.name for p in Path(dir_b).glob("*.csv")})
    same, diff = [], []
    for name in names:
        a, b = Path(dir_a) / name, Path(dir_b) / name
        (same if a.exists() and b.exists() and a.read_bytes() == b.read_bytes() else diff).append(name)
    return same, diff

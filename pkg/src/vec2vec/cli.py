"""``vec2vec`` command line: synth, train, translate, eval, baseline, attr, gradcheck.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
Every command writes one JSON manifest next to its main output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import baselines, data_io, evaluation
from .gradcheck import run_gradcheck
from .numerics import NumericalError
from .trainer import TrainConfig, multi_seed_select, subsample, write_history_csv
from .translator import CheckpointError, load_checkpoint, save_checkpoint

log = logging.getLogger("vec2vec")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
ATTR_FIELDS = ["pair", "method", "dataset", "k", "accuracy", "n"]
GRADCHECK_FIELDS = ["check", "max_rel_error", "tol", "passed"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command: str, seed, inputs: dict, outputs: dict, config=None, config_path=None,
                   started: float | None = None):
    manifest = {
        "command": command,
        "config_path": None if config_path is None else str(config_path),
        "config": config,
        "seed": seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "checksums": {str(v): sha256(v) for v in list(inputs.values()) + list(outputs.values())
                      if v is not None and os.path.isfile(v)},
        "started": started,
        "finished": time.time(),
    }
    data_io._atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())
    return manifest


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read JSON config {path}: {exc}") from None


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("V2V_THREADS", "1")))
    except ValueError:
        raise UsageError("V2V_THREADS must be an integer") from None


def _write_rows(path, fields, rows, append=True):
    new = not append or not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        if new:
            w.writeheader()
        w.writerows(rows)


# --------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    started = time.time()
    cfg_dict = _read_json(args.config) if args.config else {}
    try:
        config = data_io.WorldConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad world config: {exc}") from None
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} exists and is not empty (use --force)")
    world = data_io.generate_synthetic_world(config, args.seed)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {}
    for name, s in world.files().items():
        path = out / f"{name}.emb"
        data_io.save(s, path)
        outputs[name] = path
    if world.eval_labels is not None:
        path = out / "eval_labels.json"
        data_io._atomic_write(path, json.dumps([int(x) for x in world.eval_labels]).encode())
        outputs["eval_labels"] = path
    wpath = out / "world.json"
    data_io._atomic_write(wpath, (data_io.world_to_json(config) + "\n").encode())
    outputs["world"] = wpath
    write_manifest(out / "manifest.json", "synth", args.seed, {}, outputs, asdict(config), args.config, started)
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


_TRAIN_FLAGS = {"steps": "steps", "batch_size": "batch_size", "lr_gen": "lr_gen", "lr_disc": "lr_disc",
                "disc_steps": "disc_steps_per_gen_step", "latent_dim": "latent_dim"}


def build_train_config(args) -> TrainConfig:
    d = _read_json(args.config) if args.config else {}
    for flag, key in _TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            d[key] = value
    for flag in ("no_cc", "no_vsp", "no_rec", "no_latent_gan"):
        if getattr(args, flag):
            d[flag] = True
    d["seeds"] = [args.seed + k for k in range(args.n_seeds)]
    d["split_seed"] = args.seed
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from None


def cmd_train(args) -> int:
    started = time.time()
    config = build_train_config(args)
    set_u, set_v = data_io.load(args.u), data_io.load(args.v)
    if args.n_u is not None:
        set_u = subsample(set_u, args.n_u, args.seed)
    if args.n_v is not None:
        set_v = subsample(set_v, args.n_v, args.seed + 1)
    best, states = multi_seed_select(config, set_u, set_v, return_states=True)
    out = Path(args.out)
    extra = {"train_config": config.to_dict(), "selected_seed": best.seed,
             "val_proxy": {str(s.seed): s.val_proxy for s in states}}
    save_checkpoint(out, best.net, best.discs, extra)
    history = Path(args.history) if args.history else out.with_suffix(".history.csv")
    write_history_csv(best.history, history)
    write_manifest(str(out) + ".manifest.json", "train", args.seed, {"u": args.u, "v": args.v},
                   {"checkpoint": out, "history": history}, config.to_dict(), args.config, started)
    print(f"selected seed {best.seed} (val proxy {best.val_proxy:.6f}); checkpoint {out}")
    return EXIT_OK


def cmd_translate(args) -> int:
    started = time.time()
    net, _, _ = load_checkpoint(args.ckpt)
    src = data_io.load(args.input)
    y = net.translate(src.vectors, args.direction)
    meta = {"source": f"translate:{args.direction}", "normalized": bool(net.config.normalize_output)}
    out = data_io.EmbeddingSet(y, list(src.ids), meta)
    data_io.save(out, args.out)
    write_manifest(str(args.out) + ".manifest.json", "translate", None,
                   {"checkpoint": args.ckpt, "input": args.input}, {"output": args.out}, started=started)
    print(f"translated {len(out)} rows to dimension {out.dim}")
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.time()
    pred, truth = data_io.load(args.pred), data_io.load(args.truth)
    if pred.vectors.shape != truth.vectors.shape:
        raise UsageError(f"shape mismatch {pred.vectors.shape} vs {truth.vectors.shape}")
    report = evaluation.eval_translation(pred.vectors, truth.vectors, args.chunk)
    label = dict(pair=args.pair, method=args.method, dataset=args.dataset)
    rows = [r.row(**label, chunk=str(k)) for k, r in enumerate(report.per_chunk)]
    rows.append(report.row(**label, chunk="all"))
    print(f"mean_cos={report.mean_cos:.4f} top1={report.top1:.4f} mean_rank={report.mean_rank:.2f} n={report.n}")
    if args.report:
        evaluation.append_report_csv(args.report, rows)
        write_manifest(str(args.report) + ".manifest.json", "eval", None,
                       {"pred": args.pred, "truth": args.truth}, {"report": args.report}, started=started)
    return EXIT_OK


def baseline_rows(reports: dict, pair="", dataset="") -> list[dict]:
    best = baselines.lowest_rank_solver(reports)
    rows = []
    for solver, r in reports.items():
        if r is None:
            row = {k: "" for k in evaluation.REPORT_FIELDS}
            row.update(pair=pair, method=solver, dataset=dataset, chunk="all", note="not applicable")
        else:
            row = r.row(pair=pair, method=solver, dataset=dataset, note="lowest_rank" if solver == best else "")
        rows.append(row)
    return rows


def cmd_baseline(args) -> int:
    started = time.time()
    u, v = data_io.load(args.u), data_io.load(args.v)
    solvers = baselines.SOLVERS if args.solver == "all" else (args.solver,)
    if args.solver == "naive" and u.dim != v.dim:
        print("naive baseline: not applicable across dimensions")
    run = lambda s: baselines.oracle_baselines(u.vectors, v.vectors, (s,), args.chunk, args.epsilon)[s]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(run, solvers))
    reports = dict(zip(solvers, results))
    rows = baseline_rows(reports, args.pair, args.dataset)
    for row in rows:
        print(f"{row['method']:>9}: top1={row['top1'] or '-'} mean_rank={row['mean_rank'] or '-'} {row['note']}")
    if args.report:
        evaluation.append_report_csv(args.report, rows)
        write_manifest(str(args.report) + ".manifest.json", "baseline", None, {"u": args.u, "v": args.v},
                       {"report": args.report}, {"solver": args.solver, "chunk": args.chunk,
                                                 "epsilon": args.epsilon}, started=started)
    return EXIT_OK


def load_labels(path) -> list:
    labels = _read_json(path)
    if isinstance(labels, dict):
        labels = labels.get("labels")
    if not isinstance(labels, list):
        raise UsageError("labels file must hold a JSON list (or {\"labels\": [...]})")
    return labels


def cmd_attr(args) -> int:
    started = time.time()
    docs, attrs = data_io.load(args.docs), data_io.load(args.attrs)
    if docs.dim != attrs.dim:
        raise UsageError(f"document dim {docs.dim} differs from attribute dim {attrs.dim}")
    task = evaluation.AttributeTask(docs.vectors, attrs.vectors, load_labels(args.labels), args.k)
    acc = evaluation.attribute_topk(task)
    print(f"top-{args.k} attribute accuracy {acc:.4f} over {len(docs)} documents")
    if args.report:
        _write_rows(args.report, ATTR_FIELDS, [{"pair": args.pair, "method": args.method, "dataset": args.dataset,
                                                "k": args.k, "accuracy": f"{acc:.6f}", "n": len(docs)}])
        write_manifest(str(args.report) + ".manifest.json", "attr", None,
                       {"docs": args.docs, "attrs": args.attrs, "labels": args.labels},
                       {"report": args.report}, {"k": args.k}, started=started)
    return EXIT_OK


def parse_widths(text: str) -> list[int]:
    try:
        if "-" in text:
            lo, hi = (int(t) for t in text.split("-"))
            widths = list(range(lo, hi + 1))
        else:
            widths = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise UsageError(f"bad --widths {text!r}; use e.g. 3-8 or 3,4,8") from None
    if not widths or min(widths) < 1:
        raise UsageError("widths must be positive")
    return widths


def cmd_gradcheck(args) -> int:
    started = time.time()
    report = run_gradcheck(args.configs, args.seed, parse_widths(args.widths), args.max_batch)
    rows = []
    for name, err in sorted(report.errors.items()):
        ok = err < args.tol
        rows.append({"check": name, "max_rel_error": f"{err:.3e}", "tol": args.tol, "passed": ok})
        print(f"{'ok  ' if ok else 'FAIL'} {name:<24} {err:.3e}")
    failed = report.failures(args.tol)
    print(f"{report.n_configs} configurations, worst {report.worst:.3e}, {len(failed)} failing checks")
    if args.report:
        _write_rows(args.report, GRADCHECK_FIELDS, rows, append=False)
        write_manifest(str(args.report) + ".manifest.json", "gradcheck", args.seed, {}, {"report": args.report},
                       {"widths": args.widths, "tol": args.tol, "configs": args.configs}, started=started)
    return EXIT_NUMERIC if failed else EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vec2vec", description="Unsupervised translation between embedding spaces.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic two-encoder world")
    s.add_argument("--config", help="WorldConfig JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a translator on two unpaired sets")
    s.add_argument("u")
    s.add_argument("v")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--config", help="TrainConfig JSON")
    s.add_argument("--history", help="loss history CSV (default: <out>.history.csv)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-seeds", type=int, default=1)
    s.add_argument("--steps", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr-gen", type=float)
    s.add_argument("--lr-disc", type=float)
    s.add_argument("--disc-steps", type=int)
    s.add_argument("--latent-dim", type=int)
    s.add_argument("--n-u", type=int, help="subsample space-1 training rows")
    s.add_argument("--n-v", type=int, help="subsample space-2 training rows")
    for flag in ("cc", "vsp", "rec", "latent-gan"):
        s.add_argument(f"--no-{flag}", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("translate", help="apply a trained translator")
    s.add_argument("ckpt")
    s.add_argument("input")
    s.add_argument("--direction", choices=["1to2", "2to1"], default="1to2")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_translate)

    def labels(sp):
        sp.add_argument("--pair", default="")
        sp.add_argument("--method", default="vec2vec")
        sp.add_argument("--dataset", default="")
        sp.add_argument("--report", help="CSV to append to")

    s = sub.add_parser("eval", help="score translations against paired ground truth")
    s.add_argument("pred")
    s.add_argument("truth")
    s.add_argument("--chunk", type=int, default=8192)
    labels(s)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("baseline", help="naive and oracle-aided OT baselines on paired sets")
    s.add_argument("u")
    s.add_argument("v")
    s.add_argument("--solver", choices=list(baselines.SOLVERS) + ["all"], default="all")
    s.add_argument("--chunk", type=int, default=1024)
    s.add_argument("--epsilon", type=float, default=0.05, help="Sinkhorn regularization")
    labels(s)
    s.set_defaults(func=cmd_baseline, method="")

    s = sub.add_parser("attr", help="zero-shot top-k attribute inference")
    s.add_argument("docs")
    s.add_argument("attrs")
    s.add_argument("labels", help="JSON list of label indices (or lists of indices) per document")
    s.add_argument("--k", type=int, default=1)
    labels(s)
    s.set_defaults(func=cmd_attr)

    s = sub.add_parser("gradcheck", help="finite-difference check of every layer and loss term")
    s.add_argument("--widths", default="3-8")
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--configs", type=int, default=100)
    s.add_argument("--max-batch", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", help="CSV of per-check maximum relative error")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, ValueError, KeyError, OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Alternating min-max training on two unpaired embedding sets."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data_io import EmbeddingSet, normalize_rows
from .losses import (
    LossBreakdown,
    LossOptions,
    LossWeights,
    cycle_loss,
    discriminator_objective,
    generator_objective,
    reconstruction_loss,
)
from .numerics import NumericalError, Parameter, make_rng, zero_grads
from .translator import DiscriminatorSet, NetConfig, TranslatorNet

log = logging.getLogger(__name__)

LR_DECAYS = ("none", "linear", "cosine")
HISTORY_FIELDS = ["step"] + [f.name for f in fields(LossBreakdown)] + ["disc_loss"]


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    lr_gen: float = 1e-4
    lr_disc: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 128
    steps: int = 1000
    disc_steps_per_gen_step: int = 1
    seeds: tuple[int, ...] = (0,)
    no_vsp: bool = False
    no_cc: bool = False
    no_rec: bool = False
    no_latent_gan: bool = False
    val_fraction: float = 0.1
    split_seed: int = 0
    normalize_inputs: bool = True
    gan_flavor: str = "logistic"
    vsp_norm: str = "B"
    vsp_diagonal: bool = True
    lr_decay: str = "none"  # "none", "linear" or "cosine", to zero at the last step
    # architecture; d1/d2 come from the data
    latent_dim: int = 256
    adapter_depth: int = 1
    adapter_width: int = 512
    backbone_blocks: int = 3
    disc_depth: int = 3
    disc_width: int = 512
    normalize_output: bool = True

    def __post_init__(self):
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ValueError("learning rates must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.disc_steps_per_gen_step < 0:
            raise ValueError("disc_steps_per_gen_step must be >= 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.lr_decay not in LR_DECAYS:
            raise ValueError(f"lr_decay must be one of {LR_DECAYS}")
        LossOptions(self.gan_flavor, self.vsp_norm)  # validates the switches

    @property
    def effective_weights(self) -> LossWeights:
        w = self.weights
        return LossWeights(
            lambda_gen=w.lambda_gen,
            lambda_rec=0.0 if self.no_rec else w.lambda_rec,
            lambda_cc=0.0 if self.no_cc else w.lambda_cc,
            lambda_vsp=0.0 if self.no_vsp else w.lambda_vsp,
        )

    @property
    def loss_options(self) -> LossOptions:
        return LossOptions(self.gan_flavor, self.vsp_norm, self.vsp_diagonal, not self.no_latent_gan)

    def net_config(self, d1: int, d2: int) -> NetConfig:
        return NetConfig(d1=d1, d2=d2, latent_dim=self.latent_dim, adapter_depth=self.adapter_depth,
                         adapter_width=self.adapter_width, backbone_blocks=self.backbone_blocks,
                         disc_depth=self.disc_depth, disc_width=self.disc_width,
                         normalize_output=self.normalize_output)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        # record what the ablation switches actually did
        d["effective_weights"] = asdict(self.effective_weights)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d.pop("effective_weights", None)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        return cls.from_dict(json.loads(text))

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


class Adam:
    """Bias-corrected adaptive-moment optimizer over a fixed parameter list."""

    def __init__(self, params: list[Parameter], lr: float, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            adam_step(p.value, p.grad, m, v, self.t, self.lr, self.betas, self.eps)


def adam_step(value, grad, m, v, t, lr, betas=(0.9, 0.999), eps=1e-8):
    """One in-place Adam update of ``value`` and moments ``m``, ``v`` at step ``t`` (1-based)."""
    b1, b2 = betas
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad * grad
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    value -= lr * mhat / (np.sqrt(vhat) + eps)


def lr_factor(schedule: str, step: int, steps: int) -> float:
    """Multiplier on the base learning rate for 0-based ``step`` of ``steps``."""
    if schedule == "none" or steps <= 0:
        return 1.0
    frac = step / steps
    if schedule == "linear":
        return 1.0 - frac
    if schedule == "cosine":
        return 0.5 * (1.0 + np.cos(np.pi * frac))
    raise ValueError(f"unknown lr schedule {schedule!r}")


@dataclass
class TrainState:
    net: TranslatorNet
    discs: DiscriminatorSet
    gen_opt: Adam
    disc_opt: Adam
    step: int = 0
    history: list[dict] = field(default_factory=list)
    seed: int = 0
    val_proxy: float = float("nan")


def split_validation(s: EmbeddingSet, fraction: float, seed: int) -> tuple[EmbeddingSet, EmbeddingSet]:
    n = len(s)
    n_val = max(1, int(round(fraction * n))) if n > 1 else 0
    perm = make_rng(seed).permutation(n)
    return s.subset(np.sort(perm[n_val:])), s.subset(np.sort(perm[:n_val]))


def subsample(s: EmbeddingSet, n: int, seed: int) -> EmbeddingSet:
    """Uniform sample of ``n`` rows without replacement."""
    if n < 0 or n > len(s):
        raise ValueError(f"cannot draw {n} rows from a set of {len(s)}")
    idx = make_rng(seed).permutation(len(s))[:n]
    meta = dict(s.meta, subsample_seed=int(seed), subsample_n=int(n))
    out = s.subset(idx)
    out.meta.update(meta)
    return out


def _prepare(config: TrainConfig, s: EmbeddingSet) -> EmbeddingSet:
    if len(s) == 0:
        raise ValueError("embedding sets must be nonempty")
    return normalize_rows(s) if config.normalize_inputs else s


def _seed_streams(seed: int):
    # independent streams for init, discriminator init and batch sampling
    ss = np.random.SeedSequence(int(seed))
    a, b, c = ss.spawn(3)
    return (int(a.generate_state(1, np.uint64)[0]), int(b.generate_state(1, np.uint64)[0]),
            np.random.Generator(np.random.PCG64(c)))


def init_state(config: TrainConfig, d1: int, d2: int, seed: int) -> TrainState:
    net_seed, disc_seed, _ = _seed_streams(seed)
    cfg = config.net_config(d1, d2)
    net = TranslatorNet(cfg, net_seed)
    discs = DiscriminatorSet(cfg, disc_seed)
    betas = (config.adam_beta1, config.adam_beta2)
    return TrainState(net, discs,
                      Adam(net.parameters(), config.lr_gen, betas, config.adam_eps),
                      Adam(discs.parameters(), config.lr_disc, betas, config.adam_eps),
                      seed=seed)


def validation_proxy(net: TranslatorNet, val_u: np.ndarray, val_v: np.ndarray) -> float:
    """Unsupervised model-selection score: held-out cycle + reconstruction error."""
    n = min(len(val_u), len(val_v))
    return cycle_loss(net, val_u[:n], val_v[:n]) + reconstruction_loss(net, val_u[:n], val_v[:n])


def train_state(config: TrainConfig, set_u: EmbeddingSet, set_v: EmbeddingSet, seed: int | None = None,
                callback=None) -> TrainState:
    """Run ``config.steps`` iterations and return the full training state."""
    seed = config.seeds[0] if seed is None else int(seed)
    su, sv = _prepare(config, set_u), _prepare(config, set_v)
    tr_u, va_u = split_validation(su, config.val_fraction, config.split_seed)
    tr_v, va_v = split_validation(sv, config.val_fraction, config.split_seed + 1)
    U, V = tr_u.vectors, tr_v.vectors
    state = init_state(config, su.dim, sv.dim, seed)
    _, _, batch_rng = _seed_streams(seed)
    weights, options = config.effective_weights, config.loss_options
    net, discs = state.net, state.discs
    B = config.batch_size
    gen_params, disc_params = net.parameters(), discs.parameters()

    for step in range(config.steps):
        factor = lr_factor(config.lr_decay, step, config.steps)
        state.gen_opt.lr = config.lr_gen * factor
        state.disc_opt.lr = config.lr_disc * factor
        disc_loss = float("nan")
        for _ in range(config.disc_steps_per_gen_step):
            bu = U[batch_rng.integers(0, len(U), B)]
            bv = V[batch_rng.integers(0, len(V), B)]
            zero_grads(disc_params)
            disc_loss = discriminator_objective(net, discs, bu, bv, options)
            if not np.isfinite(disc_loss):
                raise NumericalError(f"loss term disc_loss is {disc_loss} at step {step}")
            state.disc_opt.step()
        bu = U[batch_rng.integers(0, len(U), B)]
        bv = V[batch_rng.integers(0, len(V), B)]
        zero_grads(gen_params)
        br = generator_objective(net, discs, bu, bv, weights, options)
        br.check_finite(step)
        state.gen_opt.step()
        state.step = step + 1
        state.history.append({"step": step, **br.as_dict(), "disc_loss": disc_loss})
        if callback is not None:
            callback(state)
    zero_grads(disc_params)
    state.val_proxy = validation_proxy(net, va_u.vectors, va_v.vectors)
    if not np.isfinite(state.val_proxy):
        raise NumericalError(f"validation proxy is {state.val_proxy} after step {state.step}")
    return state


def train(config: TrainConfig, set_u: EmbeddingSet, set_v: EmbeddingSet, seed: int | None = None):
    """Train one translator; returns ``(net, history)``."""
    state = train_state(config, set_u, set_v, seed)
    return state.net, state.history


def multi_seed_select(config: TrainConfig, set_u: EmbeddingSet, set_v: EmbeddingSet,
                      return_states: bool = False):
    """Train one net per seed and keep the lowest validation cycle+reconstruction error."""
    if not config.seeds:
        raise ValueError("config.seeds must be nonempty")
    states = []
    for seed in config.seeds:
        st = train_state(config, set_u, set_v, seed)
        log.info("seed %d: val proxy %.6f", seed, st.val_proxy)
        states.append(st)
    best = min(states, key=lambda s: s.val_proxy)
    if return_states:
        return best, states
    return best.net


def write_history_csv(history: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(row[k])) if k != "step" else row[k]) for k in HISTORY_FIELDS})

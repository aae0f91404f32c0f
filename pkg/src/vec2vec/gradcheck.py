"""Randomized finite-difference sweep over every layer and loss term.

Used by ``vec2vec gradcheck`` and the acceptance suite. Layers are checked on
every coordinate with plain central differences; loss terms on a random
sample of parameter coordinates with a fourth-order central stencil, which
keeps a 100-configuration sweep under a minute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import ALL_TERMS, LossOptions, LossWeights, discriminator_objective, generator_objective
from .numerics import (
    LayerNorm,
    Linear,
    ResidualBlock,
    SiLU,
    check_layer,
    finite_difference_check,
    make_rng,
    mlp,
    relative_error,
    unit_norm,
    unit_norm_backward,
    zero_grads,
)
from .translator import DiscriminatorSet, NetConfig, TranslatorNet

EPS = 1e-6
FD_STEP = 1e-4
FD_STEPS = (1e-4, 1e-3, 1e-5)


@dataclass
class GradcheckConfig:
    width_in: int
    width_out: int
    latent: int
    hidden: int
    batch: int
    depth: int
    blocks: int
    normalize_output: bool
    gan_flavor: str
    vsp_norm: str
    vsp_diagonal: bool
    seed: int


@dataclass
class GradcheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    n_configs: int = 0

    def record(self, name: str, err: float):
        self.errors[name] = max(err, self.errors.get(name, 0.0))

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def failures(self, tol: float) -> list[str]:
        return [k for k, v in self.errors.items() if not v < tol]


def sample_config(rng: np.random.Generator, widths=range(3, 9), max_batch: int = 4) -> GradcheckConfig:
    widths = list(widths)
    pick = lambda: int(rng.choice(widths))
    return GradcheckConfig(
        width_in=pick(), width_out=pick(), latent=pick(), hidden=pick(),
        batch=int(rng.integers(2, max_batch + 1)), depth=int(rng.integers(0, 3)),
        blocks=int(rng.integers(1, 3)), normalize_output=bool(rng.integers(0, 2)),
        gan_flavor=str(rng.choice(["logistic", "lsgan"])), vsp_norm=str(rng.choice(["B", "B2"])),
        vsp_diagonal=bool(rng.integers(0, 2)), seed=int(rng.integers(0, 2**31)),
    )


def five_point(f, arr, index, h=FD_STEP) -> float:
    """Fourth-order central difference of ``f()`` w.r.t. ``arr.flat[index]``."""
    flat = arr.reshape(-1)
    orig = flat[index]
    vals = []
    for step in (2 * h, h, -h, -2 * h):
        flat[index] = orig + step
        vals.append(f())
        flat[index] = orig
    return (8.0 * (vals[1] - vals[2]) - (vals[0] - vals[3])) / (12.0 * h)


def _sampled_error(f, params, rng, k) -> float:
    """Relative error of accumulated ``.grad`` on ``k`` random (parameter, coordinate) picks.

    Each coordinate is differenced at every step in ``FD_STEPS`` and scored by
    the closest estimate, so strongly curved points do not need a tiny step
    everywhere else.
    """
    worst = 0.0
    for _ in range(k):
        p = params[rng.integers(len(params))]
        i = int(rng.integers(p.value.size))
        a = p.grad.reshape(-1)[i]
        err = np.inf
        for h in FD_STEPS:
            err = min(err, relative_error(a, five_point(f, p.value, i, h)))
            if err < 1e-6:
                break
        worst = max(worst, err)
    return worst


def check_layers(cfg: GradcheckConfig, report: GradcheckReport):
    rng = make_rng(cfg.seed)
    x = rng.standard_normal((cfg.batch, cfg.width_in))
    layers = {
        "linear": Linear("lin", cfg.width_in, cfg.width_out, rng),
        "layer_norm": LayerNorm("ln", cfg.width_in),
        "silu": SiLU(),
        "residual_block": ResidualBlock("res", cfg.width_in, rng),
        "mlp": mlp("mlp", cfg.width_in, cfg.width_out, cfg.hidden, cfg.depth, rng),
    }
    # move LN affine params off their trivial init
    ln = layers["layer_norm"]
    ln.gamma.value[...] = 1.0 + 0.3 * rng.standard_normal(ln.gamma.value.shape)
    ln.beta.value[...] = 0.3 * rng.standard_normal(ln.beta.value.shape)
    for name, layer in layers.items():
        for key, err in check_layer(layer, x, rng, EPS).items():
            report.record(f"{name}:{'input' if key == 'input' else 'params'}", err)

    probe = rng.standard_normal(x.shape)

    def unit_op(z):
        y, norms = unit_norm(z)
        return float(np.sum(y * probe)), unit_norm_backward(y, norms, probe)

    report.record("unit_norm:input", finite_difference_check(unit_op, x, EPS))


def check_losses(cfg: GradcheckConfig, report: GradcheckReport, coords: int = 12):
    rng = make_rng(cfg.seed + 1)
    net_cfg = NetConfig(d1=cfg.width_in, d2=cfg.width_out, latent_dim=cfg.latent, adapter_depth=cfg.depth,
                        adapter_width=cfg.hidden, backbone_blocks=cfg.blocks, disc_depth=max(cfg.depth, 1),
                        disc_width=cfg.hidden, normalize_output=cfg.normalize_output)
    net = TranslatorNet(net_cfg, cfg.seed)
    discs = DiscriminatorSet(net_cfg, cfg.seed + 2)
    for p in net.parameters() + discs.parameters():
        if p.name.endswith((".gamma", ".beta")):
            p.value += 0.2 * rng.standard_normal(p.value.shape)
    u = rng.standard_normal((cfg.batch, cfg.width_in))
    v = rng.standard_normal((cfg.batch, cfg.width_out))
    weights = LossWeights(1.0 + rng.random(), 1.0 + rng.random(), 1.0 + rng.random(), 1.0 + rng.random())
    options = LossOptions(cfg.gan_flavor, cfg.vsp_norm, cfg.vsp_diagonal)
    scale = {"rec": weights.lambda_rec, "cc": weights.lambda_cc, "vsp": weights.lambda_vsp}
    params = net.parameters()
    for term in ALL_TERMS:
        zero_grads(params)
        generator_objective(net, discs, u, v, weights, options, terms=[term])
        c = weights.lambda_gen * scale[term] if term in scale else 1.0

        def f():
            return c * getattr(generator_objective(net, discs, u, v, weights, options, backward=False), term)

        err = _sampled_error(f, params, rng, coords)
        report.record(f"loss:{term}", err)
    dparams = discs.parameters()
    zero_grads(dparams)
    discriminator_objective(net, discs, u, v, options)
    f = lambda: discriminator_objective(net, discs, u, v, options, backward=False)
    report.record("loss:discriminator", _sampled_error(f, dparams, rng, coords))


def run_gradcheck(n_configs: int = 100, seed: int = 0, widths=range(3, 9), max_batch: int = 4,
                  coords: int = 12) -> GradcheckReport:
    rng = make_rng(seed)
    report = GradcheckReport()
    for _ in range(n_configs):
        cfg = sample_config(rng, widths, max_batch)
        check_layers(cfg, report)
        check_losses(cfg, report, coords)
        report.n_configs += 1
    return report


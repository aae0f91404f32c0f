"""Adversarial, reconstruction, cycle-consistency and vector-space-preservation losses.

Each loss comes in two forms: a plain value function used for reporting and
tests, and the gradient-carrying objectives :func:`generator_objective` and
:func:`discriminator_objective` used by the trainer, which run one forward
pass through every path and backpropagate into the parameter groups.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .numerics import DimensionError, NumericalError, Sequential, sigmoid, unit_norm, unit_norm_backward
from .translator import DiscriminatorSet, TranslatorNet, discriminate

GAN_TERMS = ("gan_emb_1", "gan_emb_2", "gan_lat_1", "gan_lat_2")
ALL_TERMS = GAN_TERMS + ("rec", "cc", "vsp")


@dataclass(frozen=True)
class LossWeights:
    lambda_gen: float = 1.0
    lambda_rec: float = 10.0
    lambda_cc: float = 10.0
    lambda_vsp: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and np.isfinite(v)):
                raise ValueError(f"{f.name} must be a finite non-negative real, got {v}")

    def scaled(self, c: float) -> "LossWeights":
        return LossWeights(*(c * getattr(self, f.name) for f in fields(self)))


@dataclass
class LossBreakdown:
    adv_total: float = 0.0
    gan_emb_1: float = 0.0
    gan_emb_2: float = 0.0
    gan_lat_1: float = 0.0
    gan_lat_2: float = 0.0
    rec: float = 0.0
    cc: float = 0.0
    vsp: float = 0.0
    gen_total: float = 0.0
    objective: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def check_finite(self, step: int | None = None):
        for name, value in self.as_dict().items():
            if not np.isfinite(value):
                where = f" at step {step}" if step is not None else ""
                raise NumericalError(f"loss term {name} is {value}{where}")


@dataclass(frozen=True)
class LossOptions:
    """Switches that are not weights: GAN flavor and VSP normalization."""

    gan_flavor: str = "logistic"  # or "lsgan"
    vsp_norm: str = "B"  # "B" divides the Gram residual sum by B, "B2" by B**2
    vsp_diagonal: bool = True
    latent_gan: bool = True

    def __post_init__(self):
        if self.gan_flavor not in ("logistic", "lsgan"):
            raise ValueError(f"unknown gan_flavor {self.gan_flavor!r}")
        if self.vsp_norm not in ("B", "B2"):
            raise ValueError(f"unknown vsp_norm {self.vsp_norm!r}")


# --------------------------------------------------------------------------
# scalar building blocks


def softplus(x):
    return np.logaddexp(0.0, x)


def _bce_terms(logits, target_one: bool, flavor: str):
    """Mean loss and d(loss)/d(logits) for pushing every logit toward label 1 or 0."""
    n = logits.shape[0]
    if flavor == "logistic":
        if target_one:
            value = softplus(-logits).mean()
            grad = -(1.0 - sigmoid(logits)) / n
        else:
            value = softplus(logits).mean()
            grad = sigmoid(logits) / n
    else:
        t = 1.0 if target_one else 0.0
        value = 0.5 * np.mean((logits - t) ** 2)
        grad = (logits - t) / n
    return float(value), grad


def _check_batch(*arrays):
    for a in arrays:
        if a.shape[0] == 0:
            raise ValueError("empty batch")


def mean_sq_residual(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over rows of squared L2 distance."""
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    _check_batch(pred)
    return float(np.sum((pred - target) ** 2) / pred.shape[0])


def gram_residual(x: np.ndarray, y: np.ndarray, norm: str = "B", diagonal: bool = True) -> float:
    """``(1/B) sum_ij (x_i.x_j - y_i.y_j)^2`` for one space."""
    return _gram_residual_and_grad(x, y, norm, diagonal)[0]


def _gram_residual_and_grad(x, y, norm="B", diagonal=True):
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"row count mismatch {x.shape[0]} vs {y.shape[0]}")
    _check_batch(x)
    B = x.shape[0]
    diff = x @ x.T - y @ y.T
    if not diagonal:
        np.fill_diagonal(diff, 0.0)
    scale = 1.0 / B if norm == "B" else 1.0 / (B * B)
    value = scale * float(np.sum(diff * diff))
    dy = -4.0 * scale * (diff @ y)
    return value, dy


# --------------------------------------------------------------------------
# public value functions


def gan_loss(D: Sequential, real: np.ndarray, fake: np.ndarray, side: str = "discriminator",
             flavor: str = "logistic") -> float:
    """Standard GAN loss on one discriminator.

    ``side="discriminator"``: BCE pushing real logits to 1 and fake logits to 0.
    ``side="generator"``: non-saturating BCE pushing fake logits to 1.
    """
    _check_batch(real, fake)
    if side == "discriminator":
        return (_bce_terms(discriminate(D, real), True, flavor)[0]
                + _bce_terms(discriminate(D, fake), False, flavor)[0])
    if side == "generator":
        return _bce_terms(discriminate(D, fake), True, flavor)[0]
    raise ValueError(f"side must be 'generator' or 'discriminator', got {side!r}")


def gan_pairs(net: TranslatorNet, u: np.ndarray, v: np.ndarray) -> dict[str, tuple[str, np.ndarray, np.ndarray]]:
    """(discriminator name, real, fake) per adversarial term.

    D1 separates native space-1 embeddings from translations F2(v); D1l treats
    space-1 latents as real and space-2 latents as fake, and D2/D2l mirror this.
    """
    y12, z1, _ = net.raw_path(u, 1, 2)
    y21, z2, _ = net.raw_path(v, 2, 1)
    return {
        "gan_emb_1": ("D1", u, _maybe_unit(net, y21)[0]),
        "gan_emb_2": ("D2", v, _maybe_unit(net, y12)[0]),
        "gan_lat_1": ("D1l", z1, z2),
        "gan_lat_2": ("D2l", z2, z1),
    }


def adversarial_total(net: TranslatorNet, discs: DiscriminatorSet, batch_u, batch_v,
                      side: str = "discriminator", flavor: str = "logistic", latent_gan: bool = True) -> float:
    pairs = gan_pairs(net, batch_u, batch_v)
    total = 0.0
    for term, (dname, real, fake) in pairs.items():
        if term.startswith("gan_lat") and not latent_gan:
            continue
        total += gan_loss(discs[dname], real, fake, side, flavor)
    return total


def reconstruction_loss(net: TranslatorNet, batch_u, batch_v) -> float:
    r1 = net.reconstruct_1(batch_u)
    r2 = net.reconstruct_2(batch_v)
    return mean_sq_residual(r1, batch_u) + mean_sq_residual(r2, batch_v)


def cycle_loss(net: TranslatorNet, batch_u, batch_v) -> float:
    c1 = net.translate_2to1(net.translate_1to2(batch_u))
    c2 = net.translate_1to2(net.translate_2to1(batch_v))
    return mean_sq_residual(c1, batch_u) + mean_sq_residual(c2, batch_v)


def vsp_loss(net: TranslatorNet, batch_u, batch_v, norm: str = "B", diagonal: bool = True) -> float:
    if batch_u.shape[0] != batch_v.shape[0]:
        raise ValueError("vsp_loss needs equally sized batches")
    y12 = net.raw_path(batch_u, 1, 2)[0]
    y21 = net.raw_path(batch_v, 2, 1)[0]
    return gram_residual(batch_u, y12, norm, diagonal) + gram_residual(batch_v, y21, norm, diagonal)


def generator_total(weights: LossWeights, adv: dict[str, float], rec: float, cc: float, vsp: float) -> LossBreakdown:
    """Fill a breakdown: ``gen_total = l_rec*rec + l_cc*cc + l_vsp*vsp``,
    ``objective = adv_total + l_gen*gen_total``."""
    parts = {t: float(adv.get(t, 0.0)) for t in GAN_TERMS}
    adv_total = sum(parts.values())
    gen_total = weights.lambda_rec * rec + weights.lambda_cc * cc + weights.lambda_vsp * vsp
    return LossBreakdown(adv_total=adv_total, **parts, rec=rec, cc=cc, vsp=vsp,
                         gen_total=gen_total, objective=adv_total + weights.lambda_gen * gen_total)


# --------------------------------------------------------------------------
# gradient-carrying objectives


def _logits(D: Sequential, x):
    out, cache = D.forward(x)
    return out[:, 0], cache


def _maybe_unit(net: TranslatorNet, y):
    """Loss-side view of a raw output: unit rows when the net normalizes outputs."""
    if net.config.normalize_output:
        return unit_norm(y)
    return y, None


def _maybe_unit_backward(y_out, norms, dy):
    return dy if norms is None else unit_norm_backward(y_out, norms, dy)


def generator_objective(net: TranslatorNet, discs: DiscriminatorSet, u, v, weights: LossWeights,
                        options: LossOptions = LossOptions(), backward: bool = True,
                        terms=ALL_TERMS) -> LossBreakdown:
    """Generator-side objective; accumulates gradients into ``net`` parameters.

    Discriminator parameter gradients are left untouched. ``terms`` restricts
    which pieces contribute gradient (the breakdown always reports all of them).
    When the net normalizes outputs, the adversarial, reconstruction and cycle
    terms see unit rows; the VSP term always sees raw outputs.
    """
    _check_batch(u, v)
    if u.shape[0] != v.shape[0]:
        raise ValueError("generator objective needs equally sized batches for the VSP term")
    flavor = options.gan_flavor
    terms = set(terms)
    if not options.latent_gan:
        terms -= {"gan_lat_1", "gan_lat_2"}

    y12, z1, c12 = net.raw_path(u, 1, 2)
    y21, z2, c21 = net.raw_path(v, 2, 1)
    o12, n12 = _maybe_unit(net, y12)
    o21, n21 = _maybe_unit(net, y21)
    r1, cr1 = net.decode(z1, 1)
    r2, cr2 = net.decode(z2, 2)
    or1, nr1 = _maybe_unit(net, r1)
    or2, nr2 = _maybe_unit(net, r2)
    cyc1, _, cc1 = net.raw_path(o12, 2, 1)
    cyc2, _, cc2 = net.raw_path(o21, 1, 2)
    oc1, nc1 = _maybe_unit(net, cyc1)
    oc2, nc2 = _maybe_unit(net, cyc2)

    adv, adv_caches = {}, {}
    for term, (dname, fake) in {"gan_emb_1": ("D1", o21), "gan_emb_2": ("D2", o12),
                                "gan_lat_1": ("D1l", z2), "gan_lat_2": ("D2l", z1)}.items():
        if term.startswith("gan_lat") and not options.latent_gan:
            continue
        logits, cache = _logits(discs[dname], fake)
        val, dlog = _bce_terms(logits, True, flavor)
        adv[term] = val
        adv_caches[term] = (dname, cache, dlog)

    rec = mean_sq_residual(or1, u) + mean_sq_residual(or2, v)
    cc = mean_sq_residual(oc1, u) + mean_sq_residual(oc2, v)
    vsp1, dvsp1 = _gram_residual_and_grad(u, y12, options.vsp_norm, options.vsp_diagonal)
    vsp2, dvsp2 = _gram_residual_and_grad(v, y21, options.vsp_norm, options.vsp_diagonal)
    br = generator_total(weights, adv, rec, cc, vsp1 + vsp2)
    if not backward:
        return br

    g = weights.lambda_gen
    g_o12 = np.zeros_like(y12)
    g_o21 = np.zeros_like(y21)
    g_y12 = np.zeros_like(y12)
    g_y21 = np.zeros_like(y21)
    g_z1 = np.zeros_like(z1)
    g_z2 = np.zeros_like(z2)

    def adv_input_grad(term):
        # D is frozen here: restore its gradient buffers after backprop
        dname, cache, dlog = adv_caches[term]
        D = discs[dname]
        saved = [p.grad.copy() for p in D.parameters()]
        dx = D.backward(cache, dlog[:, None])
        for p, s in zip(D.parameters(), saved):
            p.grad[...] = s
        return dx

    if "gan_emb_1" in terms:
        g_o21 += adv_input_grad("gan_emb_1")
    if "gan_emb_2" in terms:
        g_o12 += adv_input_grad("gan_emb_2")
    if "gan_lat_1" in terms:
        g_z2 += adv_input_grad("gan_lat_1")
    if "gan_lat_2" in terms:
        g_z1 += adv_input_grad("gan_lat_2")

    if "vsp" in terms and weights.lambda_vsp > 0:
        s = g * weights.lambda_vsp
        g_y12 += s * dvsp1
        g_y21 += s * dvsp2
    if "cc" in terms and weights.lambda_cc > 0:
        s = g * weights.lambda_cc
        d1 = _maybe_unit_backward(oc1, nc1, s * 2.0 * (oc1 - u) / u.shape[0])
        d2 = _maybe_unit_backward(oc2, nc2, s * 2.0 * (oc2 - v) / v.shape[0])
        g_o12 += net.raw_path_backward(cc1, 2, 1, d1)
        g_o21 += net.raw_path_backward(cc2, 1, 2, d2)
    if "rec" in terms and weights.lambda_rec > 0:
        s = g * weights.lambda_rec
        d1 = _maybe_unit_backward(or1, nr1, s * 2.0 * (or1 - u) / u.shape[0])
        d2 = _maybe_unit_backward(or2, nr2, s * 2.0 * (or2 - v) / v.shape[0])
        g_z1 += net.decode_backward(cr1, 1, d1)
        g_z2 += net.decode_backward(cr2, 2, d2)

    g_y12 += _maybe_unit_backward(o12, n12, g_o12)
    g_y21 += _maybe_unit_backward(o21, n21, g_o21)
    net.raw_path_backward(c12, 1, 2, g_y12, dz_extra=g_z1)
    net.raw_path_backward(c21, 2, 1, g_y21, dz_extra=g_z2)
    return br


def discriminator_objective(net: TranslatorNet, discs: DiscriminatorSet, u, v,
                            options: LossOptions = LossOptions(), backward: bool = True) -> float:
    """Discriminator-side loss summed over the active discriminators.

    Fakes are computed from the current generator and treated as constants;
    gradients accumulate into discriminator parameters only.
    """
    _check_batch(u, v)
    total = 0.0
    for term, (dname, real, fake) in gan_pairs(net, u, v).items():
        if term.startswith("gan_lat") and not options.latent_gan:
            continue
        D = discs[dname]
        logit_r, cache_r = _logits(D, real)
        logit_f, cache_f = _logits(D, fake)
        lr, dr = _bce_terms(logit_r, True, options.gan_flavor)
        lf, df = _bce_terms(logit_f, False, options.gan_flavor)
        total += lr + lf
        if backward:
            D.backward(cache_r, dr[:, None])
            D.backward(cache_f, df[:, None])
    return total

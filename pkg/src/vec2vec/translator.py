"""Adapters, shared backbone, output adapters and the four discriminators.

Space 1 and space 2 each get an input adapter into a shared latent space and
an output adapter back out of it; a residual backbone sits in the middle::

    F1 = B2 . T . A1     F2 = B1 . T . A2
    R1 = B1 . T . A1     R2 = B2 . T . A2
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict, dataclass, fields

import numpy as np

from .numerics import (
    DimensionError,
    Parameter,
    ResidualBlock,
    Sequential,
    make_rng,
    mlp,
    unit_norm,
)

CKPT_MAGIC = b"V2VC"
CKPT_VERSION = 1


@dataclass(frozen=True)
class NetConfig:
    d1: int
    d2: int
    latent_dim: int = 256
    adapter_depth: int = 1
    adapter_width: int = 512
    backbone_blocks: int = 3
    disc_depth: int = 3
    disc_width: int = 512
    normalize_output: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "normalize_output":
                continue
            if f.name in ("adapter_depth", "backbone_blocks"):
                if v < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {v}")
            elif v < 1:
                raise ValueError(f"{f.name} must be >= 1, got {v}")

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return unit_norm(x)[0]


class _ParamGroup:
    def parameters(self) -> list[Parameter]:
        raise NotImplementedError

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_(self):
        """Set every parameter (including layer-norm gains) to zero."""
        for p in self.parameters():
            p.value[...] = 0.0

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for name, p in self.named_parameters().items():
            if name not in state:
                raise KeyError(f"missing parameter {name}")
            value = np.asarray(state[name], dtype=np.float64).reshape(p.value.shape)
            p.value[...] = value


class TranslatorNet(_ParamGroup):
    def __init__(self, config: NetConfig, seed: int | None = 0):
        self.config = config
        rng = make_rng(seed) if seed is not None else None
        c = config
        self.A1 = mlp("A1", c.d1, c.latent_dim, c.adapter_width, c.adapter_depth, rng)
        self.A2 = mlp("A2", c.d2, c.latent_dim, c.adapter_width, c.adapter_depth, rng)
        self.T = Sequential([ResidualBlock(f"T.block{k}", c.latent_dim, rng) for k in range(c.backbone_blocks)])
        self.B1 = mlp("B1", c.latent_dim, c.d1, c.adapter_width, c.adapter_depth, rng)
        self.B2 = mlp("B2", c.latent_dim, c.d2, c.adapter_width, c.adapter_depth, rng)
        # inputs are unit rows; keep initial outputs at O(1) norm as well
        for B, d in ((self.B1, c.d1), (self.B2, c.d2)):
            B.layers[-1].W.value /= np.sqrt(d)

    def parameters(self):
        return [p for m in (self.A1, self.A2, self.T, self.B1, self.B2) for p in m.parameters()]

    def dim(self, side: int) -> int:
        return self.config.d1 if side == 1 else self.config.d2

    def adapter_in(self, side: int) -> Sequential:
        return self.A1 if side == 1 else self.A2

    def adapter_out(self, side: int) -> Sequential:
        return self.B1 if side == 1 else self.B2

    def _check(self, x: np.ndarray, side: int) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim(side):
            raise DimensionError(f"space {side} expects width {self.dim(side)}, got shape {x.shape}")
        return x

    # -- differentiable paths -------------------------------------------------

    def encode(self, x, side):
        """``T(A_side(x))`` with the caches needed by :meth:`encode_backward`."""
        x = self._check(x, side)
        a, ca = self.adapter_in(side).forward(x)
        z, ct = self.T.forward(a)
        return z, (ca, ct)

    def encode_backward(self, cache, side, dz):
        ca, ct = cache
        da = self.T.backward(ct, dz)
        return self.adapter_in(side).backward(ca, da)

    def decode(self, z, side):
        return self.adapter_out(side).forward(z)

    def decode_backward(self, cache, side, dy):
        return self.adapter_out(side).backward(cache, dy)

    def raw_path(self, x, src: int, dst: int):
        """Un-normalized ``B_dst(T(A_src(x)))``; returns ``(y, latent, cache)``."""
        z, cz = self.encode(x, src)
        y, cy = self.decode(z, dst)
        return y, z, (cz, cy)

    def raw_path_backward(self, cache, src, dst, dy, dz_extra=None):
        cz, cy = cache
        dz = self.decode_backward(cy, dst, dy)
        if dz_extra is not None:
            dz = dz + dz_extra
        return self.encode_backward(cz, src, dz)

    # -- public maps ---------------------------------------------------------

    def _out(self, y):
        return _unit_rows(y) if self.config.normalize_output else y

    def latent_1(self, u):
        return self.encode(u, 1)[0]

    def latent_2(self, v):
        return self.encode(v, 2)[0]

    def translate_1to2(self, u):
        return self._out(self.raw_path(u, 1, 2)[0])

    def translate_2to1(self, v):
        return self._out(self.raw_path(v, 2, 1)[0])

    def translate(self, x, direction: str):
        if direction in ("1to2", "12"):
            return self.translate_1to2(x)
        if direction in ("2to1", "21"):
            return self.translate_2to1(x)
        raise ValueError(f"unknown direction {direction!r}")

    def reconstruct_1(self, u):
        return self._out(self.raw_path(u, 1, 1)[0])

    def reconstruct_2(self, v):
        return self._out(self.raw_path(v, 2, 2)[0])


class DiscriminatorSet(_ParamGroup):
    """D1, D2 judge output embeddings; D1l, D2l judge latents. Plain MLPs, no skips."""

    names = ("D1", "D2", "D1l", "D2l")

    def __init__(self, config: NetConfig, seed: int | None = 0):
        c = config
        rng = make_rng(seed) if seed is not None else None
        widths = {"D1": c.d1, "D2": c.d2, "D1l": c.latent_dim, "D2l": c.latent_dim}
        self.input_widths = widths
        self.nets = {n: mlp(n, widths[n], 1, c.disc_width, c.disc_depth, rng) for n in self.names}

    def __getitem__(self, name: str) -> Sequential:
        return self.nets[name]

    def parameters(self):
        return [p for n in self.names for p in self.nets[n].parameters()]


def discriminate(D: Sequential, x: np.ndarray) -> np.ndarray:
    """One pre-sigmoid logit per row."""
    width = D.layers[0].fan_in
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"discriminator expects width {width}, got shape {x.shape}")
    return D(x)[:, 0]


# --------------------------------------------------------------------------
# checkpoint file


def _atomic_write(path, payload: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, net: TranslatorNet, discs: DiscriminatorSet | None = None, extra: dict | None = None):
    header = {"net_config": asdict(net.config), "has_discriminators": discs is not None}
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode()
    params = net.parameters() + (discs.parameters() if discs is not None else [])
    chunks = [CKPT_MAGIC, struct.pack("<I", CKPT_VERSION), struct.pack("<I", len(hbytes)), hbytes,
              struct.pack("<I", len(params))]
    for p in params:
        name = p.name.encode()
        rows, cols = p.value.shape
        chunks += [struct.pack("<I", len(name)), name, struct.pack("<II", rows, cols),
                   p.value.astype("<f4").tobytes()]
    _atomic_write(path, b"".join(chunks))


class CheckpointError(ValueError):
    pass


def load_checkpoint(path) -> tuple[TranslatorNet, DiscriminatorSet | None, dict]:
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != CKPT_MAGIC:
        raise CheckpointError("bad magic at byte 0")
    (version,) = struct.unpack("<I", take(4))
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at byte 4")
    (hlen,) = struct.unpack("<I", take(4))
    header = json.loads(take(hlen).decode())
    (count,) = struct.unpack("<I", take(4))
    state = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode()
        rows, cols = struct.unpack("<II", take(8))
        state[name] = np.frombuffer(take(4 * rows * cols), dtype="<f4").reshape(rows, cols).astype(np.float64)
    config = NetConfig.from_dict(header["net_config"])
    net = TranslatorNet(config, seed=None)
    net.load_state_dict(state)
    discs = None
    if header.get("has_discriminators"):
        discs = DiscriminatorSet(config, seed=None)
        discs.load_state_dict(state)
    return net, discs, header.get("extra", {})

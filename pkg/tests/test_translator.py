import numpy as np
import pytest

from vec2vec.numerics import DimensionError, make_rng
from vec2vec.translator import (
    CheckpointError,
    DiscriminatorSet,
    NetConfig,
    TranslatorNet,
    discriminate,
    load_checkpoint,
    save_checkpoint,
)

CFG = NetConfig(d1=6, d2=5, latent_dim=4, adapter_width=7, backbone_blocks=2, disc_depth=2, disc_width=3)


def test_output_shapes_and_unit_rows():
    net = TranslatorNet(CFG, seed=0)
    u = make_rng(1).standard_normal((9, 6))
    v = make_rng(2).standard_normal((9, 5))
    assert net.translate_1to2(u).shape == (9, 5)
    assert net.translate_2to1(v).shape == (9, 6)
    assert net.latent_1(u).shape == (9, 4)
    np.testing.assert_allclose(np.linalg.norm(net.reconstruct_1(u), axis=1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(net.translate(u, "1to2"), axis=1), 1.0)


def test_raw_outputs_when_not_normalized():
    cfg = NetConfig(**{**CFG.__dict__, "normalize_output": False})
    net = TranslatorNet(cfg, seed=0)
    u = make_rng(1).standard_normal((4, 6))
    np.testing.assert_array_equal(net.translate_1to2(u), net.raw_path(u, 1, 2)[0])


def test_composition_matches_parts():
    net = TranslatorNet(CFG, seed=3)
    u = make_rng(4).standard_normal((3, 6))
    z = net.T(net.A1(u))
    np.testing.assert_allclose(net.latent_1(u), z)
    raw = net.B2(z)
    np.testing.assert_allclose(net.translate_1to2(u), raw / np.linalg.norm(raw, axis=1, keepdims=True))


def test_dimension_errors():
    net = TranslatorNet(CFG, seed=0)
    with pytest.raises(DimensionError):
        net.translate_1to2(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        net.translate(np.zeros((2, 6)), "sideways")
    discs = DiscriminatorSet(CFG, seed=0)
    with pytest.raises(DimensionError):
        discriminate(discs["D1"], np.zeros((2, 5)))


def test_zero_parameters_give_zero_outputs():
    net = TranslatorNet(CFG, seed=0)
    net.zero_()
    out = net.translate_1to2(make_rng(0).standard_normal((3, 6)))
    assert np.all(out == 0.0)


def test_discriminators_one_logit_per_row():
    discs = DiscriminatorSet(CFG, seed=0)
    assert set(discs.nets) == {"D1", "D2", "D1l", "D2l"}
    assert discriminate(discs["D1l"], np.zeros((7, 4))).shape == (7,)
    assert discriminate(discs["D2"], np.zeros((7, 5))).shape == (7,)


def test_same_seed_same_weights():
    a, b = TranslatorNet(CFG, seed=11), TranslatorNet(CFG, seed=11)
    for (na, pa), (nb, pb) in zip(a.named_parameters().items(), b.named_parameters().items()):
        assert na == nb
        np.testing.assert_array_equal(pa.value, pb.value)


def test_checkpoint_roundtrip(tmp_path):
    net, discs = TranslatorNet(CFG, seed=1), DiscriminatorSet(CFG, seed=2)
    path = tmp_path / "m.v2vc"
    save_checkpoint(path, net, discs, extra={"note": "x"})
    net2, discs2, extra = load_checkpoint(path)
    assert extra == {"note": "x"}
    assert net2.config == CFG
    u = make_rng(0).standard_normal((4, 6))
    # parameters are stored as float32
    np.testing.assert_allclose(net2.translate_1to2(u), net.translate_1to2(u), atol=1e-5)
    for p in net.parameters() + discs.parameters():
        q = {**net2.named_parameters(), **discs2.named_parameters()}[p.name]
        np.testing.assert_array_equal(q.value, p.value.astype(np.float32).astype(np.float64))


def test_checkpoint_errors(tmp_path):
    net = TranslatorNet(CFG, seed=1)
    path = tmp_path / "m.v2vc"
    save_checkpoint(path, net)
    data = path.read_bytes()
    _, discs, _ = load_checkpoint(path)
    assert discs is None
    (tmp_path / "bad").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "bad")
    (tmp_path / "short").write_bytes(data[:-10])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "short")
    assert not [f for f in tmp_path.iterdir() if f.name.startswith(".tmp-")]


def test_config_validation():
    with pytest.raises(ValueError):
        NetConfig(d1=0, d2=3)
    assert NetConfig.from_dict({"d1": 3, "d2": 4, "junk": 1}) == NetConfig(d1=3, d2=4)

import numpy as np
import pytest

from vec2vec.data_io import EmbeddingSet, WorldConfig, generate_synthetic_world
from vec2vec.losses import LossOptions, LossWeights, discriminator_objective
from vec2vec.numerics import NumericalError, Parameter, make_rng, zero_grads
from vec2vec.trainer import (
    HISTORY_FIELDS,
    Adam,
    TrainConfig,
    adam_step,
    init_state,
    multi_seed_select,
    subsample,
    train,
    train_state,
    write_history_csv,
)
from vec2vec.translator import DiscriminatorSet, NetConfig, TranslatorNet

TINY = TrainConfig(latent_dim=4, adapter_width=6, backbone_blocks=1, disc_depth=1, disc_width=5,
                   batch_size=8, steps=5)
WORLD = generate_synthetic_world(WorldConfig(latent_dim=3, d1=6, d2=5, n_train_1=40, n_train_2=30, n_eval=8), 0)


def _params(net):
    return {k: p.value.copy() for k, p in net.named_parameters().items()}


def test_zero_steps_returns_initialization():
    net, history = train(TINY.with_(steps=0), WORLD.train_u, WORLD.train_v)
    fresh = init_state(TINY, 6, 5, 0).net
    assert history == []
    for k, v in _params(fresh).items():
        np.testing.assert_array_equal(net.named_parameters()[k].value, v)


def test_same_seed_bit_identical_and_history():
    a, ha = train(TINY, WORLD.train_u, WORLD.train_v, seed=3)
    b, hb = train(TINY, WORLD.train_u, WORLD.train_v, seed=3)
    for k, v in _params(a).items():
        np.testing.assert_array_equal(b.named_parameters()[k].value, v)
    assert ha == hb and len(ha) == TINY.steps
    assert set(ha[0]) == set(HISTORY_FIELDS)
    c, _ = train(TINY, WORLD.train_u, WORLD.train_v, seed=4)
    assert any(not np.array_equal(c.named_parameters()[k].value, v) for k, v in _params(a).items())


def test_history_satisfies_breakdown_invariants():
    cfg = TINY.with_(weights=LossWeights(0.5, 2.0, 3.0, 4.0))
    _, history = train(cfg, WORLD.train_u, WORLD.train_v)
    for row in history:
        assert row["gen_total"] == pytest.approx(2.0 * row["rec"] + 3.0 * row["cc"] + 4.0 * row["vsp"])
        assert row["objective"] == pytest.approx(row["adv_total"] + 0.5 * row["gen_total"])


def test_training_does_not_mutate_inputs():
    u, v = WORLD.train_u, WORLD.train_v
    before = (u.vectors.copy(), list(u.ids), dict(u.meta), v.vectors.copy())
    train(TINY, u, v)
    np.testing.assert_array_equal(u.vectors, before[0])
    assert u.ids == before[1] and u.meta == before[2]
    np.testing.assert_array_equal(v.vectors, before[3])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_aborts_with_term_name():
    bad = EmbeddingSet(np.full((20, 6), np.nan))
    with pytest.raises(NumericalError, match=r"loss term \w+ is nan at step 0|disc_loss"):
        train(TINY.with_(normalize_inputs=False), bad, WORLD.train_v)


def test_ablation_flags_zero_weights():
    cfg = TINY.with_(no_cc=True, no_vsp=True)
    w = cfg.effective_weights
    assert w.lambda_cc == 0 and w.lambda_vsp == 0 and w.lambda_rec == TINY.weights.lambda_rec
    assert cfg.to_dict()["effective_weights"]["lambda_cc"] == 0
    assert not TINY.with_(no_latent_gan=True).loss_options.latent_gan


def test_config_json_roundtrip_and_validation():
    cfg = TINY.with_(seeds=(1, 2), no_rec=True)
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(lr_gen=0)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 1})
    with pytest.raises(ValueError):
        TrainConfig(gan_flavor="hinge")


def test_adam_step_examples():
    value, m, v = np.array([1.0]), np.zeros(1), np.zeros(1)
    adam_step(value, np.zeros(1), m, v, 1, 0.1)
    assert value[0] == 1.0
    adam_step(value, np.ones(1), m, v, 1, 0.1, eps=1e-12)
    assert value[0] == pytest.approx(0.9, abs=1e-9)
    trace = []
    for t in range(2, 50):
        adam_step(value, np.zeros(1), m, v, t, 0.1)
        trace.append((m[0], v[0]))
    assert all(b[0] < a[0] and b[1] < a[1] for a, b in zip(trace, trace[1:]))
    assert m[0] == pytest.approx(0.1 * 0.9 ** 48)


def test_adam_optimizer_shapes():
    p = Parameter("w", np.ones((2, 3)))
    opt = Adam([p], lr=0.01, betas=(0.5, 0.999))
    p.grad[...] = 1.0
    opt.step()
    assert opt.m[0].shape == p.value.shape and opt.t == 1
    np.testing.assert_allclose(p.value, 1 - 0.01, atol=1e-6)


def test_discriminator_learns_separable_data():
    cfg = NetConfig(d1=4, d2=4, latent_dim=3, adapter_width=5, backbone_blocks=1, disc_depth=1, disc_width=8)
    net, discs = TranslatorNet(cfg, 0), DiscriminatorSet(cfg, 1)
    rng = make_rng(2)
    u = rng.standard_normal((16, 4)) + 3.0
    v = rng.standard_normal((16, 4)) - 3.0
    opt = Adam(discs.parameters(), 1e-2, (0.5, 0.999))
    losses = []
    for _ in range(50):
        zero_grads(discs.parameters())
        losses.append(discriminator_objective(net, discs, u, v, LossOptions()))
        opt.step()
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_subsample():
    s = WORLD.train_u
    full = subsample(s, len(s), 0)
    assert sorted(full.ids) == sorted(s.ids)
    assert len(subsample(s, 0, 0)) == 0
    assert subsample(s, 7, 9).ids == subsample(s, 7, 9).ids
    assert subsample(s, 7, 9).ids != subsample(s, 7, 10).ids
    with pytest.raises(ValueError):
        subsample(s, len(s) + 1, 0)


def test_multi_seed_select():
    cfg = TINY.with_(seeds=(0, 1, 2))
    best, states = multi_seed_select(cfg, WORLD.train_u, WORLD.train_v, return_states=True)
    assert best.val_proxy == min(s.val_proxy for s in states)
    single = multi_seed_select(TINY.with_(seeds=(5,)), WORLD.train_u, WORLD.train_v)
    alone, _ = train(TINY, WORLD.train_u, WORLD.train_v, seed=5)
    for k, v in _params(alone).items():
        np.testing.assert_array_equal(single.named_parameters()[k].value, v)


def test_callback_and_history_csv(tmp_path):
    seen = []
    state = train_state(TINY, WORLD.train_u, WORLD.train_v, callback=lambda st: seen.append(st.step))
    assert seen == list(range(1, TINY.steps + 1)) and state.step == TINY.steps
    path = tmp_path / "h.csv"
    write_history_csv(state.history, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == HISTORY_FIELDS and len(lines) == TINY.steps + 1


def test_lr_factor_schedules():
    from vec2vec.trainer import lr_factor

    assert lr_factor("none", 5, 10) == 1.0
    assert lr_factor("linear", 0, 10) == 1.0 and lr_factor("linear", 5, 10) == 0.5
    assert lr_factor("cosine", 0, 10) == 1.0
    assert abs(lr_factor("cosine", 5, 10) - 0.5) < 1e-12
    assert lr_factor("cosine", 9, 10) > 0.0
    with pytest.raises(ValueError):
        TrainConfig(lr_decay="step")

import numpy as np
import pytest

from regionwalk.dataio import synth_dataset
from regionwalk.embed import LossConfig, similarity_matrix, triplet_loss_hard
from regionwalk.errors import ConfigError, FormatError, ShapeError
from regionwalk.train import (
    AdamState,
    Checkpoint,
    Model,
    TrainConfig,
    adam_state_like,
    adam_step,
    batch_loss,
    config_from_mapping,
    dump_config,
    gradcheck_all,
    lr_schedule,
    parse_config_text,
    train,
)

SMALL = dict(n=3, d=6, vocab_size=16, noise_scale=0.1, frames_per_video=2,
             num_topics=4, caption_len=3)


def small_sets(seed=1, pairs=8):
    return (
        synth_dataset(seed, pairs, split="train", **SMALL),
        synth_dataset(seed, 4, split="val", **SMALL),
    )


def small_config(**kw):
    base = dict(batch_size=4, max_epochs=2, common_dim=8, word_dim=6, seed=0)
    base.update(kw)
    return TrainConfig(**base)


# -- config --------------------------------------------------------------------


def test_config_defaults_match_training_recipe():
    cfg = TrainConfig()
    assert cfg.batch_size == 64
    assert cfg.max_epochs == 50
    assert cfg.lr == pytest.approx(1e-4)
    assert cfg.margin == pytest.approx(0.2)
    assert cfg.lr_decay_factor == pytest.approx(0.5)
    assert cfg.normalization == "rw"


def test_config_rejects_bad_values():
    for kw in (
        {"batch_size": 0},
        {"lr": -1.0},
        {"normalization": "banana"},
        {"adjacency": "banana"},
        {"reduction": "banana"},
        {"margin": -0.1},
        {"max_epochs": -1},
        {"plateau_patience": 0},
        {"lr_decay_factor": 1.5},
    ):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)


def test_parse_config_text():
    text = "# comment\nlr = 0.001\nbatch_size=8\n\nnormalization = sym\n"
    assert parse_config_text(text) == {
        "lr": "0.001", "batch_size": "8", "normalization": "sym"
    }


def test_parse_config_rejects_duplicates():
    with pytest.raises(ConfigError):
        parse_config_text("lr=1\nlr=2\n")


def test_parse_config_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_config_text("just words\n")


def test_config_from_mapping_coerces_types():
    cfg = config_from_mapping({"lr": "0.01", "batch_size": "16", "normalization": "row"})
    assert cfg.lr == pytest.approx(0.01)
    assert cfg.batch_size == 16
    assert cfg.normalization == "row"


def test_config_from_mapping_rejects_unknown_key():
    with pytest.raises(ConfigError, match="unknown"):
        config_from_mapping({"learning_rate": "0.01"})


def test_config_from_mapping_rejects_bad_value():
    with pytest.raises(ConfigError):
        config_from_mapping({"batch_size": "four"})


def test_config_text_round_trip():
    cfg = TrainConfig(lr=3e-5, batch_size=7, normalization="sym", margin=0.25)
    back = config_from_mapping(parse_config_text(dump_config(cfg)))
    assert back == cfg


# -- model ---------------------------------------------------------------------


def test_model_init_shapes_and_determinism():
    cfg = small_config()
    m1 = Model.init(6, 16, cfg)
    m2 = Model.init(6, 16, cfg)
    assert set(m1.params) == set(Model.PARAM_NAMES)
    assert m1.params["graph.w_query"].shape == (6, 6)
    assert m1.params["gcn.w_residual"].shape == (6, 6)
    assert m1.params["video.w_proj"].shape == (6, 8)
    assert m1.params["text.embedding"].shape == (16, 6)
    assert m1.params["text.w_proj"].shape == (6, 8)
    for name in m1.params:
        assert np.array_equal(m1.params[name], m2.params[name]), name
    # every parameter is 2-D so checkpoints stay uniform
    assert all(p.ndim == 2 for p in m1.params.values())


def test_model_biases_start_at_zero():
    m = Model.init(5, 10, small_config())
    for name, p in m.params.items():
        if ".b_" in name:
            assert np.array_equal(p, np.zeros_like(p)), name


def test_batch_loss_matches_direct_evaluation():
    train_set, _ = small_sets()
    cfg = small_config()
    model = Model.init(6, 16, cfg)
    pairs = [(train_set.videos[i], train_set.captions[i]) for i in range(4)]
    loss, _ = batch_loss(model, pairs)

    o = [model.video_embedding(v) for v, _ in pairs]
    t = [model.text_embedding(c) for _, c in pairs]
    s = similarity_matrix(o, t)
    want, _ = triplet_loss_hard(s, LossConfig(cfg.margin, cfg.reduction))
    assert loss == pytest.approx(want, abs=1e-12)


def test_batch_loss_rejects_empty():
    model = Model.init(6, 16, small_config())
    with pytest.raises(ConfigError):
        batch_loss(model, [])


# -- adam ----------------------------------------------------------------------


def test_adam_first_step_hand_case():
    p = {"w": np.array([[1.0]])}
    g = {"w": np.array([[0.5]])}
    state = adam_state_like(p)
    adam_step(p, g, state, lr=1e-4)
    # step 1 bias correction recovers m_hat = g, v_hat = g^2
    want = 1.0 - 1e-4 * 0.5 / (np.sqrt(0.25) + 1e-8)
    assert p["w"][0, 0] == pytest.approx(want, abs=1e-16)
    assert state.step == 1


def test_adam_moves_toward_minimum():
    p = {"w": np.array([[4.0]])}
    state = adam_state_like(p)
    for _ in range(2000):
        g = {"w": 2.0 * p["w"]}  # d/dw of w^2
        adam_step(p, g, state, lr=0.01)
    assert abs(p["w"][0, 0]) < 0.1


def test_adam_rejects_shape_mismatch():
    p = {"w": np.ones((2, 2))}
    state = adam_state_like(p)
    with pytest.raises(ShapeError):
        adam_step(p, {"w": np.ones((2, 3))}, state, lr=0.1)


def test_adam_rejects_name_mismatch():
    p = {"w": np.ones((2, 2))}
    state = adam_state_like(p)
    with pytest.raises(ShapeError):
        adam_step(p, {"q": np.ones((2, 2))}, state, lr=0.1)


def test_adam_updates_in_place():
    p = {"w": np.ones((2, 2))}
    ref = p["w"]
    state = adam_state_like(p)
    adam_step(p, {"w": np.ones((2, 2))}, state, lr=0.1)
    assert p["w"] is ref


# -- lr schedule ----------------------------------------------------------------


def test_lr_schedule_halves_after_patience_stale_epochs():
    assert lr_schedule([1.0, 1.1, 1.2, 1.3], 1e-4, 0.5, 3) == pytest.approx(5e-5)


def test_lr_schedule_keeps_improving_runs():
    assert lr_schedule([1.0, 0.9, 0.8], 1e-4, 0.5, 3) == pytest.approx(1e-4)


def test_lr_schedule_improvement_resets_counter():
    assert lr_schedule([1.0, 1.1, 0.9, 1.2], 1e-4, 0.5, 3) == pytest.approx(1e-4)


def test_lr_schedule_halves_again_at_double_patience():
    # counter semantics: stale length 6 with patience 3 halves on epochs 3 and 6
    losses = [1.0] + [1.1] * 6
    assert lr_schedule(losses, 1e-4, 0.5, 3) == pytest.approx(5e-5)
    assert lr_schedule(losses[:-2], 1e-4, 0.5, 3) == pytest.approx(1e-4)


def test_lr_schedule_empty_history_no_change():
    assert lr_schedule([], 1e-4, 0.5, 3) == pytest.approx(1e-4)


def test_lr_schedule_equal_loss_counts_as_stale():
    assert lr_schedule([1.0, 1.0, 1.0, 1.0], 1e-4, 0.5, 3) == pytest.approx(5e-5)


# -- training loop ---------------------------------------------------------------


def test_train_epoch_zero_is_untrained_baseline():
    train_set, val_set = small_sets()
    _, history = train(train_set, val_set, small_config(max_epochs=1))
    assert history[0].epoch == 0
    assert len(history) == 2


def test_train_is_deterministic():
    train_set, val_set = small_sets()
    cfg = small_config(max_epochs=3)
    ck1, h1 = train(train_set, val_set, cfg)
    ck2, h2 = train(train_set, val_set, cfg)
    assert h1 == h2
    for name in ck1.params:
        assert np.array_equal(ck1.params[name], ck2.params[name]), name
        assert np.array_equal(ck1.adam_m[name], ck2.adam_m[name]), name


def test_train_reduces_loss_on_learnable_data():
    train_set, val_set = small_sets(pairs=16)
    cfg = small_config(max_epochs=25, batch_size=8)
    _, history = train(train_set, val_set, cfg)
    assert history[-1].train_loss < history[0].train_loss


def test_train_checkpoint_tracks_best_val_epoch():
    train_set, val_set = small_sets()
    ckpt, history = train(train_set, val_set, small_config(max_epochs=5))
    best = min(history, key=lambda h: h.val_loss)
    assert ckpt.epoch == best.epoch
    assert ckpt.best_val_loss == pytest.approx(best.val_loss)


def test_train_stops_when_lr_underflows():
    train_set, val_set = small_sets()
    cfg = small_config(max_epochs=50, lr=1e-9, lr_floor=1e-8)
    _, history = train(train_set, val_set, cfg)
    # only the untrained baseline gets recorded before the stop
    assert len(history) == 1


# -- checkpoints ------------------------------------------------------------------


def test_checkpoint_round_trip_bitwise(tmp_path):
    train_set, val_set = small_sets()
    ckpt, _ = train(train_set, val_set, small_config())
    path = tmp_path / "c.vsck"
    ckpt.save(path)
    back = Checkpoint.load(path)
    assert back.config == ckpt.config
    assert back.epoch == ckpt.epoch
    assert back.adam_step == ckpt.adam_step
    assert back.lr == ckpt.lr
    assert back.best_val_loss == ckpt.best_val_loss
    for name in ckpt.params:
        assert np.array_equal(back.params[name], ckpt.params[name]), name
        assert np.array_equal(back.adam_m[name], ckpt.adam_m[name]), name
        assert np.array_equal(back.adam_v[name], ckpt.adam_v[name]), name


def test_checkpoint_file_magic(tmp_path):
    train_set, val_set = small_sets()
    ckpt, _ = train(train_set, val_set, small_config(max_epochs=1))
    path = tmp_path / "c.vsck"
    ckpt.save(path)
    assert path.read_bytes()[:4] == b"VSCK"


def test_checkpoint_corrupt_magic_rejected(tmp_path):
    train_set, val_set = small_sets()
    ckpt, _ = train(train_set, val_set, small_config(max_epochs=1))
    path = tmp_path / "c.vsck"
    ckpt.save(path)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"JUNK"
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        Checkpoint.load(path)


def test_checkpoint_truncated_rejected(tmp_path):
    train_set, val_set = small_sets()
    ckpt, _ = train(train_set, val_set, small_config(max_epochs=1))
    path = tmp_path / "c.vsck"
    ckpt.save(path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(FormatError):
        Checkpoint.load(path)


def test_checkpoint_model_reproduces_training_model(tmp_path):
    train_set, val_set = small_sets()
    ckpt, _ = train(train_set, val_set, small_config())
    path = tmp_path / "c.vsck"
    ckpt.save(path)
    model = Checkpoint.load(path).model()
    o1 = model.video_embedding(train_set.videos[0])
    o2 = ckpt.model().video_embedding(train_set.videos[0])
    assert np.array_equal(o1, o2)


# -- gradient checking -------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradcheck_passes(seed):
    rep = gradcheck_all(seed=seed)
    assert rep.passed, rep.max_rel_error


def test_gradcheck_covers_every_parameter_once():
    rep = gradcheck_all(seed=0)
    names = [n for n, _ in rep.per_parameter]
    assert sorted(names) == sorted(Model.PARAM_NAMES)
    assert len(names) == len(set(names))


def test_gradcheck_detects_corruption():
    rep = gradcheck_all(seed=0, _corrupt="gcn.w_graph")
    assert not rep.passed


def test_gradcheck_softplus_sym_route():
    rep = gradcheck_all(seed=1, kind="sym", adjacency="softplus")
    assert rep.passed, rep.max_rel_error

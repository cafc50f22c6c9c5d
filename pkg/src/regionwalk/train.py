"""Training: configuration, model assembly, Adam, and the epoch loop.

The model is a flat dict of named float64 matrices so the optimizer, the
checkpoint writer and the gradient checker all see one uniform structure.
Determinism: every random draw comes from a stream keyed by the config seed,
and gradients are accumulated in a fixed order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .dataio import Caption, Dataset, VideoSample
from .embed import (
    LossConfig,
    TextEncoderParams,
    VideoEncoderParams,
    encode_text,
    similarity_backward,
    similarity_matrix,
    triplet_loss_hard,
)
from .errors import ConfigError, FormatError, ShapeError
from .graph import NORMALIZATIONS, EmbedParams
from .linalg import GradReport, finite_diff_grad
from .reason import GcnParams, pool_frames, rw_gcn_backward, rw_gcn_forward
from .rng import stream_rng, uniform_init

log = logging.getLogger("regionwalk.train")

ADJACENCY_MODES = ("softplus", "raw")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    max_epochs: int = 50
    lr: float = 1e-4
    lr_decay_factor: float = 0.5
    plateau_patience: int = 3
    margin: float = 0.2
    seed: int = 0
    normalization: str = "rw"
    adjacency: str = "softplus"
    reduction: str = "sum"
    common_dim: int = 2048
    word_dim: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_floor: float = 1e-8

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if not 0 < self.lr:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 < self.lr_decay_factor < 1:
            raise ConfigError(
                f"lr_decay_factor must lie in (0, 1), got {self.lr_decay_factor}"
            )
        if self.plateau_patience < 1:
            raise ConfigError(f"plateau_patience must be >= 1, got {self.plateau_patience}")
        if self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(
                f"normalization must be one of {NORMALIZATIONS}, got "
                f"{self.normalization!r}"
            )
        if self.adjacency not in ADJACENCY_MODES:
            raise ConfigError(
                f"adjacency must be one of {ADJACENCY_MODES}, got {self.adjacency!r}"
            )
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"reduction must be sum or mean, got {self.reduction!r}")
        if min(self.common_dim, self.word_dim) < 1:
            raise ConfigError("common_dim and word_dim must be >= 1")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0 <= b < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {b}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.lr_floor < 0:
            raise ConfigError(f"lr_floor must be >= 0, got {self.lr_floor}")


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {ln}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"config line {ln}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def config_from_mapping(mapping: dict) -> TrainConfig:
    """Build a config from string (or already typed) values; unknown keys fail."""
    kwargs = {}
    for key, value in mapping.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = _FIELD_TYPES[key]
        try:
            if ftype in ("int", int):
                kwargs[key] = int(value)
            elif ftype in ("float", float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key!r}: bad value {value!r}") from exc
    return TrainConfig(**kwargs)


def dump_config(cfg: TrainConfig) -> str:
    """Textual form that :func:`config_from_mapping` parses back exactly."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name}={value!r}" if isinstance(value, float) else f"{f.name}={value}")
    return "\n".join(lines) + "\n"


class Model:
    """Named parameter matrices plus the forward passes that use them."""

    PARAM_NAMES = (
        "graph.w_query",
        "graph.b_query",
        "graph.w_key",
        "graph.b_key",
        "gcn.w_graph",
        "gcn.w_residual",
        "video.w_proj",
        "video.b_proj",
        "text.embedding",
        "text.w_proj",
        "text.b_proj",
    )

    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        missing = [n for n in self.PARAM_NAMES if n not in params]
        if missing:
            raise ConfigError(f"Model: missing parameters {missing}")
        self.params = {n: params[n] for n in self.PARAM_NAMES}
        self.config = config

    @classmethod
    def init(cls, d: int, vocab_size: int, config: TrainConfig) -> "Model":
        seed = config.seed
        dd, wd = config.common_dim, config.word_dim
        params = {
            "graph.w_query": uniform_init(seed, "init/graph.w_query", (d, d), d),
            "graph.b_query": np.zeros((1, d)),
            "graph.w_key": uniform_init(seed, "init/graph.w_key", (d, d), d),
            "graph.b_key": np.zeros((1, d)),
            "gcn.w_graph": uniform_init(seed, "init/gcn.w_graph", (d, d), d),
            "gcn.w_residual": uniform_init(seed, "init/gcn.w_residual", (d, d), d),
            "video.w_proj": uniform_init(seed, "init/video.w_proj", (d, dd), d),
            "video.b_proj": np.zeros((1, dd)),
            "text.embedding": uniform_init(
                seed, "init/text.embedding", (vocab_size, wd), vocab_size
            ),
            "text.w_proj": uniform_init(seed, "init/text.w_proj", (wd, dd), wd),
            "text.b_proj": np.zeros((1, dd)),
        }
        return cls(params, config)

    @property
    def region_dim(self) -> int:
        return self.params["graph.w_query"].shape[0]

    def embed_params(self) -> EmbedParams:
        p = self.params
        return EmbedParams(
            w_query=p["graph.w_query"],
            b_query=p["graph.b_query"],
            w_key=p["graph.w_key"],
            b_key=p["graph.b_key"],
        )

    def gcn_params(self) -> GcnParams:
        return GcnParams(
            w_graph=self.params["gcn.w_graph"],
            w_residual=self.params["gcn.w_residual"],
        )

    def video_encoder(self) -> VideoEncoderParams:
        return VideoEncoderParams(
            w_proj=self.params["video.w_proj"], b_proj=self.params["video.b_proj"]
        )

    def text_encoder(self) -> TextEncoderParams:
        return TextEncoderParams(
            embedding=self.params["text.embedding"],
            w_proj=self.params["text.w_proj"],
            b_proj=self.params["text.b_proj"],
        )

    def reason_frames(self, video: VideoSample, keep_caches: bool = False):
        """Run the reasoning layer over every frame of one video."""
        embed, gcn = self.embed_params(), self.gcn_params()
        nonneg = self.config.adjacency == "softplus"
        outs, caches = [], []
        for frame in video.frames:
            res = rw_gcn_forward(
                frame.features,
                embed,
                gcn,
                kind=self.config.normalization,
                nonneg=nonneg,
                keep_cache=keep_caches,
            )
            if keep_caches:
                res, cache = res
                caches.append(cache)
            outs.append(res)
        return (outs, caches) if keep_caches else outs

    def video_embedding(self, video: VideoSample, keep_caches: bool = False):
        res = self.reason_frames(video, keep_caches)
        outs, caches = res if keep_caches else (res, None)
        feat = pool_frames([r.frame_feature for r in outs])
        o = feat @ self.params["video.w_proj"] + self.params["video.b_proj"][0]
        if keep_caches:
            return o, feat, caches
        return o

    def text_embedding(self, caption: Caption, with_mean: bool = False):
        t = encode_text(caption, self.text_encoder())
        if not with_mean:
            return t
        rows = self.params["text.embedding"][list(caption.token_ids)]
        return t, rows.mean(axis=0)


def batch_loss(
    model: Model,
    pairs: list[tuple[VideoSample, Caption]],
    want_grads: bool = False,
):
    """Loss of one batch; optionally its gradients for every model parameter."""
    if not pairs:
        raise ConfigError("batch_loss: empty batch")
    cfg = model.config
    feats, o_rows, caches_per_video = [], [], []
    for video, _ in pairs:
        if want_grads:
            o, feat, caches = model.video_embedding(video, keep_caches=True)
            caches_per_video.append(caches)
        else:
            o = model.video_embedding(video)
            feat = None
        o_rows.append(o)
        feats.append(feat)
    t_rows, t_means = [], []
    for _, caption in pairs:
        t, tmean = model.text_embedding(caption, with_mean=True)
        t_rows.append(t)
        t_means.append(tmean)
    s = similarity_matrix(o_rows, t_rows)
    loss, d_s = triplet_loss_hard(s, LossConfig(cfg.margin, cfg.reduction))
    if not want_grads:
        return loss, None

    o_mat = np.stack(o_rows)
    t_mat = np.stack(t_rows)
    d_o, d_t = similarity_backward(o_mat, t_mat, s, d_s)
    grads = {name: np.zeros_like(arr) for name, arr in model.params.items()}
    w_vp = model.params["video.w_proj"]
    w_tp = model.params["text.w_proj"]
    for i, (video, caption) in enumerate(pairs):
        d_feat = d_o[i] @ w_vp.T
        grads["video.w_proj"] += np.outer(feats[i], d_o[i])
        grads["video.b_proj"] += d_o[i][None, :]
        d_zbar = d_feat / len(video.frames)
        for cache in caches_per_video[i]:
            g = rw_gcn_backward(cache, d_frame_feature=d_zbar)
            grads["graph.w_query"] += g["w_query"]
            grads["graph.b_query"] += g["b_query"]
            grads["graph.w_key"] += g["w_key"]
            grads["graph.b_key"] += g["b_key"]
            grads["gcn.w_graph"] += g["w_graph"]
            grads["gcn.w_residual"] += g["w_residual"]
        d_tmean = d_t[i] @ w_tp.T
        grads["text.w_proj"] += np.outer(t_means[i], d_t[i])
        grads["text.b_proj"] += d_t[i][None, :]
        tokens = list(caption.token_ids)
        np.add.at(grads["text.embedding"], tokens, d_tmean[None, :] / len(tokens))
    return loss, grads


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def adam_state_like(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
        step=0,
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if set(params) != set(grads):
        raise ShapeError("adam_step: parameter and gradient names differ")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(
                f"adam_step: gradient for {name} has shape {g.shape}, "
                f"parameter has {p.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def lr_schedule(
    val_losses: list[float],
    lr: float,
    factor: float = 0.5,
    patience: int = 3,
) -> float:
    """Plateau halving: multiply by ``factor`` after every ``patience``
    consecutive epochs that fail to improve on the best loss seen so far."""
    best = np.inf
    stale = 0
    for loss in val_losses:
        if loss < best:
            best = loss
            stale = 0
        else:
            stale += 1
    if stale > 0 and stale % patience == 0:
        return lr * factor
    return lr


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def write_history_csv(path, history: list[EpochRecord]) -> None:
    lines = ["epoch,train_loss,val_loss,lr"]
    lines += [f"{h.epoch},{h.train_loss!r},{h.val_loss!r},{h.lr!r}" for h in history]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class Checkpoint:
    """Best-validation snapshot of parameters and optimizer state."""

    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_step: int
    epoch: int
    best_val_loss: float
    lr: float
    config: TrainConfig

    def save(self, path) -> None:
        records: dict[str, np.ndarray] = {}
        for k, p in self.params.items():
            records[f"param.{k}"] = p
        for k, m in self.adam_m.items():
            records[f"adam.m.{k}"] = m
        for k, v in self.adam_v.items():
            records[f"adam.v.{k}"] = v
        records["meta.adam_step"] = np.array([[float(self.adam_step)]])
        records["meta.epoch"] = np.array([[float(self.epoch)]])
        records["meta.best_val_loss"] = np.array([[self.best_val_loss]])
        records["meta.lr"] = np.array([[self.lr]])
        ckpt_io.write_vsck(path, dump_config(self.config), records)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        config_text, records = ckpt_io.read_vsck(path)
        config = config_from_mapping(parse_config_text(config_text))
        params, adam_m, adam_v = {}, {}, {}
        for name, arr in records.items():
            if name.startswith("param."):
                params[name[len("param.") :]] = arr
            elif name.startswith("adam.m."):
                adam_m[name[len("adam.m.") :]] = arr
            elif name.startswith("adam.v."):
                adam_v[name[len("adam.v.") :]] = arr
        try:
            return cls(
                params=params,
                adam_m=adam_m,
                adam_v=adam_v,
                adam_step=int(records["meta.adam_step"][0, 0]),
                epoch=int(records["meta.epoch"][0, 0]),
                best_val_loss=float(records["meta.best_val_loss"][0, 0]),
                lr=float(records["meta.lr"][0, 0]),
                config=config,
            )
        except KeyError as exc:
            raise FormatError(f"{path}: missing checkpoint record {exc}") from exc

    def model(self) -> Model:
        return Model(self.params, self.config)


def _dataset_pairs(ds: Dataset) -> list[tuple[VideoSample, Caption]]:
    index = ds.video_index()
    return [(ds.videos[index[c.video_id]], c) for c in ds.captions]


def _epoch_loss(model: Model, pairs, batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(pairs), batch_size):
        loss, _ = batch_loss(model, pairs[start : start + batch_size])
        total += loss
    return total / len(pairs)


def _snapshot(model: Model, state: AdamState, epoch: int, val: float, lr: float) -> Checkpoint:
    return Checkpoint(
        params={k: p.copy() for k, p in model.params.items()},
        adam_m={k: m.copy() for k, m in state.m.items()},
        adam_v={k: v.copy() for k, v in state.v.items()},
        adam_step=state.step,
        epoch=epoch,
        best_val_loss=val,
        lr=lr,
        config=model.config,
    )


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
) -> tuple[Checkpoint, list[EpochRecord]]:
    """Train to the epoch budget, tracking the best validation loss.

    Epoch 0 in the returned history is the untrained evaluation. Training
    stops early only when the learning rate underflows ``config.lr_floor``.
    The checkpoint holds the parameters and optimizer state of the best
    validation epoch.
    """
    if not train_set.videos or not val_set.videos:
        raise ConfigError("train: empty split")
    d = train_set.videos[0].shape[1]
    if val_set.videos[0].shape[1] != d:
        raise ShapeError("train: train and val region dims differ")
    if val_set.vocab_size != train_set.vocab_size:
        raise ConfigError("train: train and val vocabularies differ")

    model = Model.init(d, train_set.vocab_size, config)
    state = adam_state_like(model.params)
    train_pairs = _dataset_pairs(train_set)
    val_pairs = _dataset_pairs(val_set)
    lr = config.lr

    train0 = _epoch_loss(model, train_pairs, config.batch_size)
    val0 = _epoch_loss(model, val_pairs, config.batch_size)
    history = [EpochRecord(0, train0, val0, lr)]
    best = _snapshot(model, state, 0, val0, lr)
    log.info("epoch 0 train=%.6f val=%.6f lr=%.2e", train0, val0, lr)

    for epoch in range(1, config.max_epochs + 1):
        if lr < config.lr_floor:
            log.info("stopping: lr %.3e under floor %.3e", lr, config.lr_floor)
            break
        order = stream_rng(config.seed, f"train/shuffle/{epoch}").permutation(
            len(train_pairs)
        )
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_pairs[i] for i in order[start : start + config.batch_size]]
            loss, grads = batch_loss(model, batch, want_grads=True)
            adam_step(
                model.params,
                grads,
                state,
                lr,
                beta1=config.beta1,
                beta2=config.beta2,
                eps=config.eps,
            )
            total += loss
        train_loss = total / len(train_pairs)
        val_loss = _epoch_loss(model, val_pairs, config.batch_size)
        if history and train_loss > 3.0 * max(history[-1].train_loss, 1e-12):
            log.warning(
                "loss spike at epoch %d: %.6f from %.6f",
                epoch,
                train_loss,
                history[-1].train_loss,
            )
        history.append(EpochRecord(epoch, train_loss, val_loss, lr))
        if val_loss < best.best_val_loss:
            best = _snapshot(model, state, epoch, val_loss, lr)
        lr = lr_schedule(
            [h.val_loss for h in history],
            lr,
            factor=config.lr_decay_factor,
            patience=config.plateau_patience,
        )
        log.info(
            "epoch %d train=%.6f val=%.6f lr=%.2e", epoch, train_loss, val_loss, lr
        )
    return best, history


def _gradcheck_instance(seed: int, config: TrainConfig, n=4, d=6, vocab=10, frames=2, batch=3):
    """Small random instance exercising every parameter."""
    from .dataio import RegionSet  # local import keeps module load light

    g = stream_rng(seed, "gradcheck/data")
    pairs = []
    for i in range(batch):
        frames_list = tuple(
            RegionSet(features=g.standard_normal((n, d)), frame_index=j)
            for j in range(frames)
        )
        video = VideoSample(video_id=f"gc:{i}", frames=frames_list)
        tokens = tuple(int(t) for t in g.integers(0, vocab, size=4))
        pairs.append((video, Caption(video_id=video.video_id, token_ids=tokens)))
    return pairs


def gradcheck_all(
    seed: int = 0,
    kind: str = "rw",
    adjacency: str = "raw",
    h: float = 1e-5,
    tolerance: float = 1e-5,
    _corrupt: str | None = None,
) -> GradReport:
    """Finite-difference check of the whole pipeline's analytic gradients.

    Builds a small random batch, computes the batch loss and its analytic
    gradients, then compares every parameter entry against central
    differences. ``_corrupt`` perturbs one named analytic gradient, for
    testing the checker itself.
    """
    config = TrainConfig(
        batch_size=3,
        common_dim=8,
        word_dim=5,
        normalization=kind,
        adjacency=adjacency,
        seed=seed,
    )
    pairs = _gradcheck_instance(seed, config)
    model = Model.init(6, 10, config)
    _, grads = batch_loss(model, pairs, want_grads=True)
    if _corrupt is not None:
        grads = dict(grads)
        grads[_corrupt] = grads[_corrupt] + 0.5
    names = list(model.params)
    param_list = [(name, model.params[name]) for name in names]

    def f(arrays) -> float:
        trial = Model(dict(zip(names, arrays)), config)
        loss, _ = batch_loss(trial, pairs)
        return loss

    return finite_diff_grad(f, param_list, grads, h=h, tolerance=tolerance)

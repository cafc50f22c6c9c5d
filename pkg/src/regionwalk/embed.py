"""Joint embedding space and the hard-negative ranking loss.

Both encoders are mean-pool-then-affine maps into a common D-dimensional
space; similarity is cosine. The loss is a per-pair hinge against the single
hardest negative in the batch, in both retrieval directions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import Caption
from .errors import (
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    ShapeError,
    VocabError,
)
from .linalg import as_matrix, check_finite
from .reason import pool_frames


@dataclass(frozen=True)
class VideoEncoderParams:
    w_proj: np.ndarray  # d x D
    b_proj: np.ndarray  # 1 x D

    def __post_init__(self) -> None:
        if self.b_proj.shape != (1, self.w_proj.shape[1]):
            raise ShapeError(
                f"VideoEncoderParams: bias {self.b_proj.shape} does not match "
                f"projection {self.w_proj.shape}"
            )


@dataclass(frozen=True)
class TextEncoderParams:
    embedding: np.ndarray  # vocab x word_dim
    w_proj: np.ndarray  # word_dim x D
    b_proj: np.ndarray  # 1 x D

    def __post_init__(self) -> None:
        if self.embedding.shape[1] != self.w_proj.shape[0]:
            raise ShapeError(
                f"TextEncoderParams: embedding width {self.embedding.shape[1]} "
                f"does not match projection {self.w_proj.shape}"
            )
        if self.b_proj.shape != (1, self.w_proj.shape[1]):
            raise ShapeError(f"TextEncoderParams: bias shape {self.b_proj.shape}")

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]


def encode_video(frame_features, params: VideoEncoderParams) -> np.ndarray:
    """Affine projection of the mean frame feature; returns a D vector."""
    mean = pool_frames(frame_features)
    if mean.shape[0] != params.w_proj.shape[0]:
        raise ShapeError(
            f"encode_video: feature dim {mean.shape[0]}, projection expects "
            f"{params.w_proj.shape[0]}"
        )
    out = mean @ params.w_proj + params.b_proj[0]
    return check_finite(out, "encode_video")


def encode_text(caption: Caption, params: TextEncoderParams) -> np.ndarray:
    """Mean word embedding of the caption tokens, projected to D."""
    if len(caption.token_ids) == 0:
        raise EmptyInputError("encode_text: caption has no tokens")
    for t in caption.token_ids:
        if not 0 <= t < params.vocab_size:
            raise VocabError(
                f"encode_text: token id {t} outside vocabulary of "
                f"{params.vocab_size}"
            )
    rows = params.embedding[list(caption.token_ids)]
    mean = rows.mean(axis=0)
    out = mean @ params.w_proj + params.b_proj[0]
    return check_finite(out, "encode_text")


def similarity_matrix(video_embs, text_embs) -> np.ndarray:
    """Cosine similarities, ``s[i, j] = cos(video_i, text_j)``."""
    o = as_matrix(np.stack([np.asarray(e, dtype=np.float64) for e in video_embs]), "videos")
    t = as_matrix(np.stack([np.asarray(e, dtype=np.float64) for e in text_embs]), "texts")
    if o.shape[1] != t.shape[1]:
        raise ShapeError(
            f"similarity_matrix: embedding dims differ, {o.shape[1]} vs {t.shape[1]}"
        )
    no = np.linalg.norm(o, axis=1)
    nt = np.linalg.norm(t, axis=1)
    if (no == 0).any():
        raise DegenerateInputError(
            f"similarity_matrix: zero-norm video embedding {int(np.argmax(no == 0))}"
        )
    if (nt == 0).any():
        raise DegenerateInputError(
            f"similarity_matrix: zero-norm text embedding {int(np.argmax(nt == 0))}"
        )
    return (o @ t.T) / (no[:, None] * nt[None, :])


def similarity_backward(o, t, s, d_s):
    """Gradients of a cosine matrix w.r.t. both embedding stacks."""
    no = np.linalg.norm(o, axis=1)
    nt = np.linalg.norm(t, axis=1)
    w = d_s / (no[:, None] * nt[None, :])
    d_o = w @ t - ((d_s * s).sum(axis=1) / no**2)[:, None] * o
    d_t = w.T @ o - ((d_s * s).sum(axis=0) / nt**2)[:, None] * t
    return d_o, d_t


@dataclass(frozen=True)
class LossConfig:
    margin: float = 0.2
    reduction: str = "sum"

    def __post_init__(self) -> None:
        if self.margin < 0:
            raise ConfigError(f"LossConfig: negative margin {self.margin}")
        if self.reduction not in ("sum", "mean"):
            raise ConfigError(f"LossConfig: unknown reduction {self.reduction!r}")


def triplet_loss_hard(s, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Hard-negative hinge loss over a square similarity matrix.

    Per pair ``i`` the hardest distractor is taken along each direction:
    ``[margin - s_ii + max_{k!=i} s_ki]_+ + [margin - s_ii + max_{k!=i} s_ik]_+``.
    Ties go to the lowest index. Returns the reduced loss and its
    subgradient w.r.t. ``s`` (hinges exactly at zero contribute nothing).
    """
    sm = as_matrix(s, "similarities")
    b = sm.shape[0]
    if sm.shape != (b, b):
        raise ShapeError(f"triplet_loss_hard: matrix is {sm.shape}, not square")
    d_s = np.zeros_like(sm)
    if b == 1:
        return 0.0, d_s
    diag = sm.diagonal()
    masked = sm.copy()
    np.fill_diagonal(masked, -np.inf)
    hard_video = masked.argmax(axis=0)  # per text column: strongest wrong video
    hard_text = masked.argmax(axis=1)  # per video row: strongest wrong text
    col_term = cfg.margin - diag + masked[hard_video, np.arange(b)]
    row_term = cfg.margin - diag + masked[np.arange(b), hard_text]
    scale = 1.0 / b if cfg.reduction == "mean" else 1.0
    loss = (np.maximum(col_term, 0.0).sum() + np.maximum(row_term, 0.0).sum()) * scale
    for i in range(b):
        if col_term[i] > 0:
            d_s[i, i] -= scale
            d_s[hard_video[i], i] += scale
        if row_term[i] > 0:
            d_s[i, i] -= scale
            d_s[i, hard_text[i]] += scale
    return float(loss), d_s

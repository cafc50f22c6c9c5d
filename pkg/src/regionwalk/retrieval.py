"""Retrieval metrics, region attention, and end-to-end evaluation.

Ranking convention: gallery items are ordered by descending similarity,
ties broken toward the lower gallery index; a query's rank is the 1-based
position of its best-ranked ground-truth item.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import Dataset
from .errors import ConfigError, DegenerateInputError, ShapeError
from .linalg import as_matrix
from .reason import ReasonedRegions

THREADS_ENV = "VISERN_THREADS"


def worker_count() -> int:
    """Worker cap from the environment; 0 or unset means automatic."""
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0, got {n}")
    if n == 0:
        return min(4, os.cpu_count() or 1)
    return n


def rank_queries(similarities, positives) -> np.ndarray:
    """1-based rank of the best ground-truth item for every query row."""
    s = as_matrix(similarities, "similarities")
    n_q, n_g = s.shape
    if len(positives) != n_q:
        raise ShapeError(
            f"rank_queries: {len(positives)} ground-truth sets for {n_q} queries"
        )
    ranks = np.empty(n_q, dtype=np.int64)
    for i, pos in enumerate(positives):
        pos = sorted(set(int(p) for p in pos))
        if not pos:
            raise ConfigError(f"rank_queries: query {i} has no ground-truth items")
        if pos[0] < 0 or pos[-1] >= n_g:
            raise ConfigError(
                f"rank_queries: query {i} references gallery items outside range"
            )
        order = np.argsort(-s[i], kind="stable")
        inverse = np.empty(n_g, dtype=np.int64)
        inverse[order] = np.arange(n_g)
        ranks[i] = int(inverse[pos].min()) + 1
    return ranks


@dataclass(frozen=True)
class RetrievalReport:
    direction: str
    r_at: dict[int, float]  # percentages at K = 1, 5, 10
    med_r: float
    mean_r: float
    sum_of_recalls: float

    def csv_row(self) -> str:
        return (
            f"{self.direction},{self.r_at[1]!r},{self.r_at[5]!r},{self.r_at[10]!r},"
            f"{self.med_r!r},{self.mean_r!r},{self.sum_of_recalls!r}"
        )


REPORT_HEADER = "direction,r1,r5,r10,medr,meanr,sumr"


def report(ranks, direction: str = "text-to-video") -> RetrievalReport:
    """Summarize ranks into R@{1,5,10}, median, mean and their sum."""
    r = np.asarray(ranks)
    if r.ndim != 1 or r.size == 0:
        raise ShapeError(f"report: expected a non-empty rank vector, got {r.shape}")
    if (r < 1).any():
        raise ConfigError("report: ranks are 1-based")
    r_at = {k: float(100.0 * np.mean(r <= k)) for k in (1, 5, 10)}
    return RetrievalReport(
        direction=direction,
        r_at=r_at,
        med_r=float(np.median(r)),
        mean_r=float(np.mean(r)),
        sum_of_recalls=float(r_at[1] + r_at[5] + r_at[10]),
    )


@dataclass(frozen=True)
class AttentionMap:
    """Per-region attention from agreement with the frame feature."""

    scores: np.ndarray  # normalized to sum 1
    ranks: np.ndarray  # 0 = most aligned region


def attention_map(reasoned: ReasonedRegions) -> AttentionMap:
    """Square-rank attention: region ``i`` with descending-cosine rank ``r_i``
    gets score ``(n - r_i)^2``, normalized over the frame."""
    z = reasoned.regions
    zbar = reasoned.frame_feature
    nb = float(np.linalg.norm(zbar))
    if nb == 0.0:
        raise DegenerateInputError("attention_map: zero frame feature")
    nz = np.linalg.norm(z, axis=1)
    if (nz == 0.0).any():
        raise DegenerateInputError(
            f"attention_map: zero region vector {int(np.argmax(nz == 0.0))}"
        )
    cos = (z @ zbar) / (nz * nb)
    n = z.shape[0]
    order = np.argsort(-cos, kind="stable")
    ranks = np.empty(n, dtype=np.int64)
    ranks[order] = np.arange(n)
    scores = (n - ranks).astype(np.float64) ** 2
    return AttentionMap(scores=scores / scores.sum(), ranks=ranks)


ATTENTION_HEADER = "video_id,frame_index,region_index,rank,score"


def _t2v_positives(ds: Dataset) -> list[set[int]]:
    index = ds.video_index()
    return [{index[c.video_id]} for c in ds.captions]


def _v2t_positives(ds: Dataset) -> list[set[int]]:
    index = ds.video_index()
    out: list[set[int]] = [set() for _ in ds.videos]
    for j, c in enumerate(ds.captions):
        out[index[c.video_id]].add(j)
    return out


def evaluate(model, dataset: Dataset, *, attention_path=None, graph_dump_dir=None):
    """Embed a split and score retrieval in both directions.

    Returns ``(text_to_video, video_to_text)`` reports. ``attention_path``
    additionally writes per-frame region attention CSV rows;
    ``graph_dump_dir`` writes one normalized-adjacency CSV per frame.
    The video encoding loop fans out over threads capped by
    ``VISERN_THREADS`` (0 = auto); results keep dataset order.
    """
    if not dataset.videos:
        raise ConfigError("evaluate: empty split")
    workers = worker_count()
    if workers > 1 and len(dataset.videos) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            video_embs = list(pool.map(model.video_embedding, dataset.videos))
    else:
        video_embs = [model.video_embedding(v) for v in dataset.videos]
    text_embs = [model.text_embedding(c) for c in dataset.captions]

    from .embed import similarity_matrix  # import here to avoid a cycle at load

    s_vt = similarity_matrix(video_embs, text_embs)  # videos x texts
    t2v = report(rank_queries(s_vt.T, _t2v_positives(dataset)), "text-to-video")
    v2t = report(rank_queries(s_vt, _v2t_positives(dataset)), "video-to-text")

    if attention_path is not None or graph_dump_dir is not None:
        _export_attention(model, dataset, attention_path, graph_dump_dir)
    return t2v, v2t


def _export_attention(model, dataset: Dataset, attention_path, graph_dump_dir) -> None:
    from .graph import build_adjacency, normalize

    rows = [ATTENTION_HEADER]
    for video in dataset.videos:
        reasoned = model.reason_frames(video)
        for frame, out in zip(video.frames, reasoned):
            if attention_path is not None:
                att = attention_map(out)
                for region in range(out.regions.shape[0]):
                    rows.append(
                        f"{video.video_id},{frame.frame_index},{region},"
                        f"{int(att.ranks[region])},{float(att.scores[region])!r}"
                    )
            if graph_dump_dir is not None:
                g = build_adjacency(
                    frame.features,
                    model.embed_params(),
                    nonneg=model.config.adjacency == "softplus",
                )
                kind = model.config.normalization
                mat = g.adjacency if kind == "none" else normalize(g, kind)
                dump_dir = Path(graph_dump_dir)
                dump_dir.mkdir(parents=True, exist_ok=True)
                safe_id = video.video_id.replace(":", "_").replace("/", "_")
                out_path = dump_dir / f"{safe_id}_f{frame.frame_index}.csv"
                out_path.write_text(
                    "\n".join(",".join(repr(float(x)) for x in row) for row in mat) + "\n",
                    encoding="utf-8",
                )
    if attention_path is not None:
        Path(attention_path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_reports_csv(path, reports) -> None:
    lines = [REPORT_HEADER] + [r.csv_row() for r in reports]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

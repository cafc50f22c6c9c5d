"""Graph reasoning over frame regions.

One layer of relation-aware convolution with a residual shortcut:
``Z = (N V W_graph) W_residual + V`` where ``N`` is the normalized region
affinity matrix built from ``V`` itself. ``kind='none'`` bypasses the layer
entirely (``Z = V``), which is the no-reasoning ablation. The backward pass
differentiates through everything, including the affinity matrix and the
degrees used to normalize it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeError, StateError
from .graph import (
    NORMALIZATIONS,
    EmbedParams,
    _adjacency_parts,
    _normalize_parts,
    _sigmoid,
)
from .linalg import as_matrix, check_finite


@dataclass(frozen=True)
class GcnParams:
    """Weights of the reasoning layer, applied on the right of row vectors."""

    w_graph: np.ndarray  # d x d
    w_residual: np.ndarray  # d x d

    def __post_init__(self) -> None:
        d = self.w_graph.shape[0]
        if self.w_graph.shape != (d, d) or self.w_residual.shape != (d, d):
            raise ShapeError(
                f"GcnParams: expected square equal-sized weights, got "
                f"{self.w_graph.shape} and {self.w_residual.shape}"
            )


@dataclass(frozen=True)
class ReasonedRegions:
    """Per-region outputs plus their mean-pooled frame feature."""

    regions: np.ndarray  # n x d
    frame_feature: np.ndarray  # d


@dataclass
class GcnCache:
    """Forward intermediates required by :func:`rw_gcn_backward`."""

    kind: str
    nonneg: bool
    v: np.ndarray
    embed: EmbedParams
    gcn: GcnParams
    q: np.ndarray | None = None
    k: np.ndarray | None = None
    r_raw: np.ndarray | None = None
    r: np.ndarray | None = None
    norm: np.ndarray | None = None
    aux: np.ndarray | None = None
    h: np.ndarray | None = None
    g: np.ndarray | None = None


def rw_gcn_forward(
    v,
    embed: EmbedParams,
    gcn: GcnParams,
    kind: str = "rw",
    nonneg: bool = False,
    keep_cache: bool = False,
):
    """Run the reasoning layer on one frame.

    Returns ``ReasonedRegions`` or, with ``keep_cache=True``, a tuple
    ``(ReasonedRegions, GcnCache)`` for the backward pass.
    """
    vm = as_matrix(v, "regions")
    if kind not in NORMALIZATIONS:
        raise ShapeError(f"rw_gcn_forward: unknown kind {kind!r}")
    if kind == "none":
        z = vm
        out = ReasonedRegions(regions=z, frame_feature=z.mean(axis=0))
        if keep_cache:
            return out, GcnCache(kind=kind, nonneg=nonneg, v=vm, embed=embed, gcn=gcn)
        return out
    if vm.shape[1] != embed.w_query.shape[0]:
        raise ShapeError(
            f"rw_gcn_forward: regions have d={vm.shape[1]}, embed params expect "
            f"d={embed.w_query.shape[0]}"
        )
    q, k, r_raw, r, deg = _adjacency_parts(vm, embed, nonneg)
    norm, aux = _normalize_parts(r, deg, kind)
    h = norm @ vm
    g = h @ gcn.w_graph
    z = g @ gcn.w_residual + vm
    check_finite(z, "rw_gcn_forward")
    out = ReasonedRegions(regions=z, frame_feature=z.mean(axis=0))
    if not keep_cache:
        return out
    cache = GcnCache(
        kind=kind,
        nonneg=nonneg,
        v=vm,
        embed=embed,
        gcn=gcn,
        q=q,
        k=k,
        r_raw=r_raw,
        r=r,
        norm=norm,
        aux=aux,
        h=h,
        g=g,
    )
    return out, cache


def _normalize_backward(d_norm: np.ndarray, cache: GcnCache) -> np.ndarray:
    """Gradient w.r.t. the (possibly softplus-mapped) affinity matrix."""
    r, norm, aux = cache.r, cache.norm, cache.aux
    if cache.kind == "rw":
        ds = aux
        d_r = d_norm / ds[:, None]
        d_ds = -(d_norm * norm).sum(axis=1) / ds
        d_r = d_r + d_ds[:, None]  # degree = row sum of r
    elif cache.kind == "sym":
        s = aux
        d_r = d_norm / (s[:, None] * s[None, :])
        d_s = -((d_norm * norm).sum(axis=1) + (d_norm * norm).sum(axis=0)) / s
        d_ds = d_s / (2.0 * s)
        d_r = d_r + d_ds[:, None]
    elif cache.kind == "row":
        l1 = aux
        d_r = d_norm / l1[:, None]
        d_l1 = -(d_norm * norm).sum(axis=1) / l1
        d_r = d_r + d_l1[:, None] * np.sign(r)
    else:
        raise StateError(f"rw_gcn_backward: cannot differentiate kind {cache.kind!r}")
    return d_r


def rw_gcn_backward(
    cache: GcnCache | None,
    d_regions: np.ndarray | None = None,
    d_frame_feature: np.ndarray | None = None,
) -> dict[str, np.ndarray]:
    """Gradients of the layer given upstream gradients.

    Either or both of ``d_regions`` (n x d) and ``d_frame_feature`` (d)
    may be supplied. Returns gradients for the region input ``v`` and every
    parameter of ``embed`` and ``gcn``.
    """
    if cache is None:
        raise StateError("rw_gcn_backward: no forward cache")
    if d_regions is None and d_frame_feature is None:
        raise StateError("rw_gcn_backward: need d_regions or d_frame_feature")
    vm = cache.v
    n, d = vm.shape
    dz = np.zeros((n, d))
    if d_regions is not None:
        dz = dz + np.asarray(d_regions, dtype=np.float64)
    if d_frame_feature is not None:
        dz = dz + np.asarray(d_frame_feature, dtype=np.float64)[None, :] / n
    zeros = lambda name: np.zeros_like(getattr(cache.embed, name))  # noqa: E731
    if cache.kind == "none":
        return {
            "v": dz,
            "w_query": zeros("w_query"),
            "b_query": zeros("b_query"),
            "w_key": zeros("w_key"),
            "b_key": zeros("b_key"),
            "w_graph": np.zeros_like(cache.gcn.w_graph),
            "w_residual": np.zeros_like(cache.gcn.w_residual),
        }
    if cache.norm is None:
        raise StateError("rw_gcn_backward: cache is missing forward intermediates")

    d_wr = cache.g.T @ dz
    d_g = dz @ cache.gcn.w_residual.T
    d_wg = cache.h.T @ d_g
    d_h = d_g @ cache.gcn.w_graph.T
    d_norm = d_h @ vm.T
    d_v = dz + cache.norm.T @ d_h  # residual path plus the mixed path

    d_r = _normalize_backward(d_norm, cache)
    d_r_raw = d_r * _sigmoid(cache.r_raw) if cache.nonneg else d_r
    d_m = d_r_raw + d_r_raw.T  # r_raw = m + m.T
    d_q = d_m @ cache.k
    d_k = d_m.T @ cache.q
    d_v = d_v + d_q @ cache.embed.w_query.T + d_k @ cache.embed.w_key.T
    return {
        "v": d_v,
        "w_query": vm.T @ d_q,
        "b_query": d_q.sum(axis=0, keepdims=True),
        "w_key": vm.T @ d_k,
        "b_key": d_k.sum(axis=0, keepdims=True),
        "w_graph": d_wg,
        "w_residual": d_wr,
    }


def pool_frames(frame_features) -> np.ndarray:
    """Mean of per-frame feature vectors."""
    feats = list(frame_features)
    if not feats:
        raise EmptyInputError("pool_frames: no frames")
    stack = np.stack([np.asarray(f, dtype=np.float64) for f in feats])
    if stack.ndim != 2:
        raise ShapeError(f"pool_frames: expected vectors, got shape {stack.shape[1:]}")
    return stack.mean(axis=0)

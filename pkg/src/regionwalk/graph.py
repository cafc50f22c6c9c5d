"""Semantic graphs over region features.

The affinity between two regions is a symmetrized pair of bilinear scores:
``R[i, j] = q(v_i) . k(v_j) + k(v_i) . q(v_j)`` where ``q`` and ``k`` are
learned affine maps. Degrees are plain row sums (diagonal included), the
unnormalized Laplacian is ``L = D - R``, and three normalizations are
supported: random-walk ``P = D^-1 R``, symmetric ``D^-1/2 R D^-1/2`` and
L1 row normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import jacobi_eigh
from .errors import (
    ConfigError,
    DegenerateInputError,
    ShapeError,
    SingularDegreeError,
    SymmetryError,
)
from .linalg import as_matrix, check_finite

NORMALIZATIONS = ("rw", "sym", "row", "none")

# Degrees with magnitude below DEGREE_MIN are an error; magnitudes below
# DEGREE_EPS are pushed away from zero before any division.
DEGREE_EPS = 1e-8
DEGREE_MIN = 1e-12


@dataclass(frozen=True)
class EmbedParams:
    """Affine region embeddings feeding the pairwise affinity."""

    w_query: np.ndarray  # d x d
    b_query: np.ndarray  # 1 x d
    w_key: np.ndarray  # d x d
    b_key: np.ndarray  # 1 x d

    def __post_init__(self) -> None:
        d = self.w_query.shape[0]
        if self.w_query.shape != (d, d) or self.w_key.shape != (d, d):
            raise ShapeError(
                f"EmbedParams: weights must be square and equal-sized, got "
                f"{self.w_query.shape} and {self.w_key.shape}"
            )
        for b in (self.b_query, self.b_key):
            if b.shape != (1, d):
                raise ShapeError(f"EmbedParams: bias shape {b.shape}, expected (1, {d})")


@dataclass(frozen=True)
class SemanticGraph:
    """Symmetric affinity matrix with its degree vector."""

    adjacency: np.ndarray  # n x n, bitwise symmetric
    degrees: np.ndarray  # n

    def __post_init__(self) -> None:
        a = self.adjacency
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ShapeError(f"SemanticGraph: adjacency shape {a.shape}")
        if self.degrees.shape != (a.shape[0],):
            raise ShapeError(
                f"SemanticGraph: degree shape {self.degrees.shape} "
                f"for {a.shape[0]} vertices"
            )

    @property
    def order(self) -> int:
        return self.adjacency.shape[0]


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _adjacency_parts(v: np.ndarray, p: EmbedParams, nonneg: bool):
    """Forward intermediates shared with the reasoning layer's backward."""
    q = v @ p.w_query + p.b_query
    k = v @ p.w_key + p.b_key
    m = q @ k.T
    # Assemble symmetrically: r[i, j] and r[j, i] are the same two summands
    # added in the same order, so the result is symmetric bit for bit.
    r_raw = m + m.T
    r = _softplus(r_raw) if nonneg else r_raw
    deg = r.sum(axis=1)
    return q, k, r_raw, r, deg


def build_adjacency(v, params: EmbedParams, nonneg: bool = False) -> SemanticGraph:
    """Pairwise region affinities for one frame.

    ``nonneg=True`` maps every affinity through softplus so that degrees are
    positive and the random-walk matrix is a true transition matrix.
    """
    vm = as_matrix(v, "regions")
    if vm.shape[1] != params.w_query.shape[0]:
        raise ShapeError(
            f"build_adjacency: regions have d={vm.shape[1]}, params expect "
            f"d={params.w_query.shape[0]}"
        )
    _, _, _, r, deg = _adjacency_parts(vm, params, nonneg)
    check_finite(r, "adjacency")
    return SemanticGraph(adjacency=r, degrees=deg)


def laplacian(g: SemanticGraph) -> np.ndarray:
    """Unnormalized Laplacian ``L = D - R``; rows sum to zero exactly."""
    out = -g.adjacency.copy()
    idx = np.arange(g.order)
    out[idx, idx] += g.degrees
    return out


def stabilized_degrees(deg: np.ndarray) -> np.ndarray:
    """Degrees safe to divide by.

    Magnitudes below ``DEGREE_MIN`` raise; magnitudes below ``DEGREE_EPS``
    are shifted away from zero by ``sign(d) * DEGREE_EPS``. Typical degrees
    pass through unchanged, keeping row sums of ``P`` exact.
    """
    small = np.abs(deg) < DEGREE_MIN
    if small.any():
        vertex = int(np.argmax(small))
        raise SingularDegreeError(
            f"degree of vertex {vertex} is {deg[vertex]:.3e}, "
            f"below {DEGREE_MIN:.0e}"
        )
    tiny = np.abs(deg) < DEGREE_EPS
    if not tiny.any():
        return deg
    out = deg.copy()
    out[tiny] = deg[tiny] + np.sign(deg[tiny]) * DEGREE_EPS
    return out


def _normalize_parts(r: np.ndarray, deg: np.ndarray, kind: str):
    """Normalized matrix plus the auxiliary vector its backward needs."""
    if kind == "none":
        return r, None
    if kind == "rw":
        ds = stabilized_degrees(deg)
        return r / ds[:, None], ds
    if kind == "sym":
        ds = stabilized_degrees(deg)
        if (ds <= 0).any():
            vertex = int(np.argmax(ds <= 0))
            raise SingularDegreeError(
                f"symmetric normalization needs positive degrees; vertex "
                f"{vertex} has degree {ds[vertex]:.3e}"
            )
        s = np.sqrt(ds)
        return r / (s[:, None] * s[None, :]), s
    if kind == "row":
        l1 = np.abs(r).sum(axis=1)
        l1s = stabilized_degrees(l1)
        return r / l1s[:, None], l1s
    raise ConfigError(f"normalize: unknown kind {kind!r}, expected {NORMALIZATIONS}")


def normalize(g: SemanticGraph, kind: str) -> np.ndarray:
    """Normalized adjacency: ``rw`` = D^-1 R, ``sym`` = D^-1/2 R D^-1/2,
    ``row`` = L1 row normalization, ``none`` = R unchanged."""
    n, _ = _normalize_parts(g.adjacency, g.degrees, kind)
    return check_finite(n, f"normalize[{kind}]")


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, orthonormal
    lambda_max: float


def spectral_decompose(m, kernel: str | None = None) -> SpectralDecomposition:
    """Jacobi eigendecomposition of a symmetric matrix.

    Raises SymmetryError when ``max |m - m.T|`` exceeds 1e-10.
    """
    mm = as_matrix(m, "matrix")
    if mm.shape[0] != mm.shape[1]:
        raise ShapeError(f"spectral_decompose: matrix is {mm.shape}, not square")
    dev = float(np.abs(mm - mm.T).max())
    if dev > 1e-10:
        raise SymmetryError(
            f"spectral_decompose: asymmetry {dev:.3e} exceeds 1e-10"
        )
    w, u = jacobi_eigh(mm, kernel=kernel)
    return SpectralDecomposition(
        eigenvalues=w, eigenvectors=u, lambda_max=float(w[-1])
    )


@dataclass(frozen=True)
class VerifyResult:
    ok: bool
    max_eig_deviation: float
    max_transform_deviation: float
    eig_low: float
    eig_high: float

    def __iter__(self):  # (ok, worst deviation) unpacking convenience
        yield self.ok
        yield max(self.max_eig_deviation, self.max_transform_deviation)


def verify_rw_sym_similarity(g: SemanticGraph) -> VerifyResult:
    """Check that the random-walk and symmetric Laplacians are similar.

    With positive degrees, ``L_rw = D^-1/2 L_sym D^1/2``. Three checks:
    (a) sorted eigenvalues of both Laplacians agree within 1e-8, the
    non-symmetric side solved through its similarity-transformed form;
    (b) the transform identity holds entrywise within 1e-10;
    (c) all eigenvalues lie in ``[-1e-9, 2 + 1e-9]``.
    """
    deg = stabilized_degrees(g.degrees)
    if (deg <= 0).any():
        vertex = int(np.argmax(deg <= 0))
        raise SingularDegreeError(
            f"similarity check needs positive degrees; vertex {vertex} "
            f"has degree {deg[vertex]:.3e}"
        )
    r = g.adjacency
    n = g.order
    eye = np.eye(n)
    s = np.sqrt(deg)
    l_rw = eye - r / deg[:, None]
    l_sym = eye - r / (s[:, None] * s[None, :])

    # (a) eigenvalues: L_sym directly, L_rw through D^1/2 L_rw D^-1/2.
    w_sym = jacobi_eigh(l_sym)[0]
    w_rw = jacobi_eigh(s[:, None] * l_rw / s[None, :])[0]
    eig_dev = float(np.abs(np.sort(w_rw) - np.sort(w_sym)).max())

    # (b) entrywise transform identity.
    transformed = l_sym / s[:, None] * s[None, :]
    trans_dev = float(np.abs(l_rw - transformed).max())

    lo = float(min(w_rw[0], w_sym[0]))
    hi = float(max(w_rw[-1], w_sym[-1]))
    ok = eig_dev <= 1e-8 and trans_dev <= 1e-10 and lo >= -1e-9 and hi <= 2.0 + 1e-9
    return VerifyResult(
        ok=ok,
        max_eig_deviation=eig_dev,
        max_transform_deviation=trans_dev,
        eig_low=lo,
        eig_high=hi,
    )


@dataclass(frozen=True)
class ChebCoeffs:
    """Chebyshev filter coefficients, one per polynomial order 0..K."""

    coefficients: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.coefficients) < 1:
            raise ConfigError("ChebCoeffs: need at least the order-0 coefficient")
        if not all(np.isfinite(c) for c in self.coefficients):
            raise DegenerateInputError("ChebCoeffs: non-finite coefficient")

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1


def chebyshev_apply(l_scaled, coeffs: ChebCoeffs, x) -> np.ndarray:
    """Evaluate ``sum_k c_k T_k(L~) x`` with the three-term recurrence.

    ``l_scaled`` is the rescaled operator ``2 L / lambda_max - I`` whose
    spectrum lies in [-1, 1]. ``T_0 = I``, ``T_1 = L~`` and
    ``T_k = 2 L~ T_{k-1} - T_{k-2}``.
    """
    lm = as_matrix(l_scaled, "l_scaled")
    if lm.shape[0] != lm.shape[1]:
        raise ShapeError(f"chebyshev_apply: operator is {lm.shape}, not square")
    xv = np.ascontiguousarray(x, dtype=np.float64)
    squeeze = xv.ndim == 1
    if squeeze:
        xv = xv[:, None]
    if xv.shape[0] != lm.shape[0]:
        raise ShapeError(
            f"chebyshev_apply: signal has {xv.shape[0]} rows, operator {lm.shape[0]}"
        )
    c = coeffs.coefficients
    t_prev = xv  # T_0 x
    acc = c[0] * t_prev
    if len(c) > 1:
        t_cur = lm @ xv  # T_1 x
        acc = acc + c[1] * t_cur
        for k in range(2, len(c)):
            t_next = 2.0 * (lm @ t_cur) - t_prev
            acc = acc + c[k] * t_next
            t_prev, t_cur = t_cur, t_next
    out = check_finite(acc, "chebyshev_apply")
    return out[:, 0] if squeeze else out

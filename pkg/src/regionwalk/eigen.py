"""Symmetric eigensolver built on cyclic Jacobi rotations.

Two interchangeable kernels implement the same sweep: a compiled Cython
extension and a numpy fallback. The compiled one is picked at import when it
is available and ``REGIONWALK_PURE`` is not set. ``numpy.linalg`` is used
only by the test suite as an independent oracle, never here.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .errors import ConvergenceError, ShapeError

_MAX_SWEEPS = 64


def _sweep_py(a: np.ndarray, v: np.ndarray, off_tol: float, max_sweeps: int) -> int:
    """Numpy mirror of the compiled sweep; same rotations, same order."""
    n = a.shape[0]
    upper = np.triu_indices(n, k=1)
    for sweep_idx in range(max_sweeps):
        # sum the strict upper triangle directly; subtracting the diagonal
        # from the total cancels catastrophically near convergence
        off_sq = 2.0 * float(np.sum(a[upper] ** 2))
        if math.sqrt(off_sq) <= off_tol:
            return sweep_idx
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # t = sign(tau)/(|tau| + sqrt(1+tau^2)) with tau = num/den,
                # written without forming tau so tiny apq cannot overflow.
                num = a[q, q] - a[p, p]
                den = 2.0 * apq
                h = math.hypot(num, den)
                t = den / (num + h) if num >= 0.0 else den / (num - h)
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return -1


_KERNELS: dict[str, object] = {"python": _sweep_py}

try:  # pragma: no cover - absence exercised via REGIONWALK_PURE
    from . import _jacobi as _jacobi_ext
except ImportError:  # pragma: no cover
    _jacobi_ext = None
else:
    _KERNELS["compiled"] = _jacobi_ext.sweep

if os.environ.get("REGIONWALK_PURE"):
    _DEFAULT = "python"
else:
    _DEFAULT = "compiled" if "compiled" in _KERNELS else "python"


def available_kernels() -> tuple[str, ...]:
    return tuple(sorted(_KERNELS))


def active_kernel() -> str:
    """Name of the kernel used when none is requested explicitly."""
    return _DEFAULT


def jacobi_eigh(m, kernel: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric ``m``.

    ``m`` must be square and symmetric up to roundoff; it is symmetrized
    as ``(m + m.T) / 2`` before the sweeps so that accumulated rotations
    stay orthogonal. Returns ``(w, u)`` with eigenvectors in the columns
    of ``u``, sorted by eigenvalue with a stable order for ties.
    """
    a = np.array(m, dtype=np.float64, order="C", copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"jacobi_eigh: expected a square matrix, got {a.shape}")
    a = np.ascontiguousarray((a + a.T) / 2.0)
    n = a.shape[0]
    v = np.eye(n, dtype=np.float64)
    off_tol = 1e-14 * math.sqrt(float(np.sum(a * a)))
    name = _DEFAULT if kernel is None else kernel
    try:
        sweep = _KERNELS[name]
    except KeyError:
        raise ShapeError(
            f"jacobi_eigh: unknown kernel {name!r}; have {available_kernels()}"
        ) from None
    used = sweep(a, v, off_tol, _MAX_SWEEPS)
    if used < 0:
        raise ConvergenceError(
            f"jacobi_eigh: no convergence in {_MAX_SWEEPS} sweeps (n={n})"
        )
    w = np.diagonal(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])

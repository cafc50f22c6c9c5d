"""Dense float64 matrix helpers and the finite-difference gradient checker.

Matrices are C-contiguous 2-D float64 numpy arrays. The helpers here form the
validated public surface; internal hot paths use numpy operators directly and
rely on the same representation.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyInputError,
    EvaluationError,
    ShapeError,
)

Array = np.ndarray


def as_matrix(x, name: str = "matrix") -> Array:
    """Coerce ``x`` to a finite, C-contiguous 2-D float64 array."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D, got shape {a.shape}")
    if a.size == 0:
        raise EmptyInputError(f"{name}: empty matrix of shape {a.shape}")
    if not np.isfinite(a).all():
        raise DegenerateInputError(f"{name}: contains NaN or Inf")
    return a


def as_vector(x, name: str = "vector") -> Array:
    """Coerce ``x`` to a finite 1-D float64 array with at least one entry."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name}: expected 1-D, got shape {v.shape}")
    if v.size == 0:
        raise EmptyInputError(f"{name}: empty vector")
    if not np.isfinite(v).all():
        raise DegenerateInputError(f"{name}: contains NaN or Inf")
    return v


def check_finite(a: Array, name: str = "result") -> Array:
    if not np.isfinite(a).all():
        raise DegenerateInputError(f"{name}: contains NaN or Inf")
    return a


def matmul(a, b) -> Array:
    """Matrix product with explicit conformance checking."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ, {am.shape} x {bm.shape}"
        )
    return check_finite(am @ bm, "matmul")


def mean_rows(a) -> Array:
    """Column-wise mean, returned as a 1 x cols matrix."""
    am = as_matrix(a, "a")
    return am.mean(axis=0, keepdims=True)


def cosine(a, b) -> float:
    """Cosine similarity of two equal-length vectors.

    Raises DegenerateInputError when either vector has zero norm.
    """
    av = as_vector(a, "a")
    bv = as_vector(b, "b")
    if av.shape != bv.shape:
        raise ShapeError(f"cosine: shapes differ, {av.shape} vs {bv.shape}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine: zero-norm operand")
    return float(av @ bv) / (na * nb)


@dataclass(frozen=True)
class GradReport:
    """Outcome of a finite-difference gradient comparison."""

    max_rel_error: float
    per_parameter: tuple[tuple[str, float], ...]
    tolerance: float = 1e-5
    step: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def __str__(self) -> str:  # one line per parameter, used by the CLI
        lines = [f"max_rel_error={self.max_rel_error:.3e} tol={self.tolerance:.1e}"]
        lines += [f"  {name}: {err:.3e}" for name, err in self.per_parameter]
        return "\n".join(lines)


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))


def finite_diff_grad(
    f: Callable[[Sequence[Array]], float],
    params: Sequence[tuple[str, Array]],
    analytic: Mapping[str, Array],
    h: float = 1e-5,
    tolerance: float = 1e-5,
) -> GradReport:
    """Check analytic gradients of a scalar function by central differences.

    ``f`` must be a pure function of the parameter arrays, called as
    ``f([p0, p1, ...])`` with arrays in the order of ``params``. For every
    entry the numeric derivative ``(f(p+h) - f(p-h)) / 2h`` is compared with
    the matching entry of ``analytic[name]`` using the relative error
    ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    if h <= 0:
        raise EvaluationError(f"finite_diff_grad: step must be positive, got {h}")
    work = [np.array(p, dtype=np.float64, copy=True) for _, p in params]
    per_param: list[tuple[str, float]] = []
    worst = 0.0
    for i, (name, _) in enumerate(params):
        grad = np.asarray(analytic[name], dtype=np.float64)
        if grad.shape != work[i].shape:
            raise ShapeError(
                f"finite_diff_grad: gradient shape {grad.shape} does not match "
                f"parameter {name!r} of shape {work[i].shape}"
            )
        err = 0.0
        it = np.nditer(work[i], flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = work[i][idx]
            work[i][idx] = orig + h
            f_plus = float(f(work))
            work[i][idx] = orig - h
            f_minus = float(f(work))
            work[i][idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise EvaluationError(
                    f"finite_diff_grad: non-finite objective near {name}{idx}"
                )
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = max(err, _rel_err(float(grad[idx]), numeric))
        per_param.append((name, err))
        worst = max(worst, err)
    return GradReport(
        max_rel_error=worst,
        per_parameter=tuple(per_param),
        tolerance=tolerance,
        step=h,
    )

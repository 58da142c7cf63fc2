"""Dense tensor arithmetic, a regularized least-squares solver, and the
binary tensor blob format shared by every file the package writes.

Tensors are plain float64 numpy arrays in row-major order.  The helpers
here enforce the contracts the rest of the package relies on: explicit
shape checks instead of silent broadcasting, finite results, and a
deterministic closed-form solver for the many small regressions that
estimator fitting and quality probing perform.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DataError, DimensionError, FormatError, SingularMatrixError

BLOB_MAX_RANK = 32


def as_tensor(values) -> np.ndarray:
    """Coerce to a float64 array and reject non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise DataError("tensor contains NaN or Inf")
    return arr


def matmul(a, b) -> np.ndarray:
    """Matrix product of two rank-2 tensors with explicit shape checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions disagree: {a.shape} x {b.shape}")
    return a @ b


def elementwise(op: str, a, b) -> np.ndarray:
    """Pointwise add/sub/mul of equal-shaped tensors, or scale by a scalar.

    Broadcasting is limited to scalar-vs-tensor on purpose; anything else
    raises a DimensionError instead of silently expanding.
    """
    a = np.asarray(a, dtype=np.float64)
    b_is_scalar = np.isscalar(b) or (isinstance(b, np.ndarray) and b.ndim == 0)
    if op == "scale":
        if not b_is_scalar:
            raise DimensionError("scale expects a scalar second operand")
        return a * float(b)
    if not b_is_scalar:
        b = np.asarray(b, dtype=np.float64)
        if a.shape != b.shape:
            raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    else:
        b = float(b)
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise DimensionError(f"unknown elementwise op {op!r}")


def ridge_solve(A, b, lam: float) -> np.ndarray:
    """Solve min_v ||A v - b||^2 + lam ||v||^2 via the normal equations.

    Small, deterministic, and exact: A^T A + lam I is factorized with a
    symmetric positive-definite decomposition.  With lam = 0 a singular
    system raises SingularMatrixError; callers that cannot guarantee full
    rank must pass lam > 0.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if A.ndim != 2:
        raise DimensionError(f"design matrix must be rank 2, got rank {A.ndim}")
    if b.ndim != 1 or b.shape[0] != A.shape[0]:
        raise DimensionError(f"target shape {b.shape} does not match design {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError("design matrix must be at least 1x1")
    if lam < 0:
        raise DimensionError(f"ridge strength must be nonnegative, got {lam}")
    return ridge_solve_gram(A.T @ A, A.T @ b, lam)


def ridge_solve_gram(AtA, Atb, lam: float) -> np.ndarray:
    """Ridge solve from precomputed normal-equation terms A^T A and A^T b.

    This is the same computation as :func:`ridge_solve`; callers that
    already hold sufficient statistics (the quality probe fits thousands
    of regressions that share one Gram matrix) use this entry point.
    """
    AtA = np.asarray(AtA, dtype=np.float64)
    Atb = np.asarray(Atb, dtype=np.float64)
    k = AtA.shape[0]
    if AtA.shape != (k, k) or Atb.shape != (k,):
        raise DimensionError(f"gram shapes disagree: {AtA.shape}, {Atb.shape}")
    M = AtA if lam == 0 else AtA + lam * np.eye(k)
    try:
        c, low = cho_factor(M, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise SingularMatrixError(
            "normal equations are singular; pass lam > 0 to regularize"
        ) from exc
    if lam == 0:
        # rank deficiency shows up as a collapsed pivot that the
        # factorization itself may absorb as rounding noise
        pivots = np.abs(np.diag(c))
        if pivots.min() <= 1e-7 * k * pivots.max():
            raise SingularMatrixError(
                "normal equations are singular; pass lam > 0 to regularize"
            )
    v = cho_solve((c, low), Atb, check_finite=False)
    if not np.all(np.isfinite(v)):
        raise SingularMatrixError("solver produced non-finite coefficients")
    return v


def write_tensor(fh, arr: np.ndarray) -> None:
    """Write one tensor blob: rank u32, extents u32 each, f64 row-major data.

    All integers and floats are little-endian.
    """
    arr = np.asarray(arr, dtype=np.float64, order="C")
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.astype("<f8").tobytes())


def read_tensor(fh) -> np.ndarray:
    """Read one tensor blob written by :func:`write_tensor`."""
    head = fh.read(4)
    if len(head) != 4:
        raise FormatError("truncated tensor blob: missing rank")
    rank = struct.unpack("<I", head)[0]
    if rank > BLOB_MAX_RANK:
        raise FormatError(f"implausible tensor rank {rank}")
    raw = fh.read(4 * rank)
    if len(raw) != 4 * rank:
        raise FormatError("truncated tensor blob: missing extents")
    shape = struct.unpack(f"<{rank}I", raw) if rank else ()
    count = 1
    for e in shape:
        count *= e
    data = fh.read(8 * count)
    if len(data) != 8 * count:
        raise FormatError("truncated tensor blob: missing data")
    arr = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise DataError("tensor blob contains NaN or Inf")
    return arr

"""Dense complex kernels used by the filter modules.

Everything works on ``complex128`` arrays. Matrix arguments may carry leading
batch dimensions (typically frequency), in which case the operation is applied
independently to each trailing ``N x N`` / ``N x M`` block.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SingularMatrix

DEFAULT_LOADING = 1e-7
# lower bound for the loading scale, keeps all-zero statistics solvable
_LOADING_SCALE_FLOOR = 1e-30
# fixed work split for batched solves; independent of thread count
_CHUNK = 16


def conj_transpose(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim < 2:
        raise DimensionMismatch(f"conj_transpose needs a matrix, got ndim={a.ndim}")
    return np.conj(np.swapaxes(a, -1, -2))


def trace(a: np.ndarray) -> np.ndarray | complex:
    a = np.asarray(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"trace is defined for square matrices, got {a.shape}")
    tr = np.trace(a, axis1=-2, axis2=-1)
    return complex(tr) if np.ndim(tr) == 0 else tr


def outer(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``x yᴴ`` for (batched) vectors."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[:-1] != y.shape[:-1]:
        raise DimensionMismatch(f"batch shapes differ: {x.shape} vs {y.shape}")
    return x[..., :, None] * np.conj(y)[..., None, :]


def matvec(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    x = np.asarray(x)
    if a.ndim < 2 or a.shape[-1] != x.shape[-1]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by vector {x.shape}")
    return np.einsum("...ij,...j->...i", a, x)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitize(a: np.ndarray) -> np.ndarray:
    """Return ``(A + Aᴴ) / 2``."""
    return 0.5 * (a + conj_transpose(a))


def _solve_one(a: np.ndarray, b: np.ndarray, loading: float) -> np.ndarray:
    n = a.shape[0]
    scale = max(np.trace(a).real / n, _LOADING_SCALE_FLOOR)
    loaded = a + (loading * scale) * np.eye(n)
    try:
        factor = scipy.linalg.cho_factor(loaded, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(f"Cholesky factorization failed: {exc}") from exc
    x = scipy.linalg.cho_solve(factor, b, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("solution is not finite")
    return x


def hermitian_solve(
    a: np.ndarray,
    b: np.ndarray,
    loading: float = DEFAULT_LOADING,
    threads: int = 1,
) -> np.ndarray:
    """Solve ``(A + loading * tr(A)/N * I) X = B`` for Hermitian PD ``A``.

    ``A`` has shape ``(..., N, N)`` and ``B`` either ``(..., N, M)`` or
    ``(..., N)``. The loading is relative to the mean diagonal so it does not
    depend on the overall scale of ``A``. Batches are factorized one block at
    a time (Cholesky); ``threads > 1`` spreads fixed-size chunks of the batch
    over a thread pool, which never changes the result.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if loading < 0:
        raise ValueError("loading must be non-negative")
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"A must be square, got {a.shape}")
    n = a.shape[-1]
    vector_rhs = b.ndim == a.ndim - 1
    if vector_rhs:
        b = b[..., None]
    if b.shape[-2] != n or b.shape[:-2] != a.shape[:-2]:
        raise DimensionMismatch(f"A {a.shape} and B {b.shape} are incompatible")

    batch = a.shape[:-2]
    a_flat = a.reshape((-1, n, n))
    b_flat = b.reshape((-1, n, b.shape[-1]))
    out = np.empty_like(b_flat)

    def work(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            out[i] = _solve_one(a_flat[i], b_flat[i], loading)

    bounds = [(lo, min(lo + _CHUNK, len(a_flat))) for lo in range(0, len(a_flat), _CHUNK)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(work, lo, hi) for lo, hi in bounds]:
                fut.result()
    else:
        for lo, hi in bounds:
            work(lo, hi)

    out = out.reshape(batch + b.shape[-2:])
    return out[..., 0] if vector_rhs else out

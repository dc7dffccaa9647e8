"""Unitary DFT and Haar wavelet operators.

Both transforms are built as dense matrices (``n <= 4096``) and cached per
dimension. A fast path is exposed for the DFT (``numpy.fft`` with ``ortho``
normalisation) and for the Haar analysis (a lifting-free pyramid); both are
checked against the dense matrices in the test-suite.

Indexing is 0-based throughout. Row ``j`` of the DFT is
``f_jk = exp(-2*pi*i*j*k/n) / sqrt(n)``. Row ``j >= 1`` of the Haar matrix
is written ``j = 2**p + q - 1`` with ``p = floor(log2 j)``; it is
``+2**(p/2)/sqrt(n)`` on ``[(q-1)n/2**p, (q-1/2)n/2**p)`` and the negative of
that on ``[(q-1/2)n/2**p, q n/2**p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

MAX_DENSE_N = 4096


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n >= 1 and (n & (n - 1)) == 0


def _check_dimension(n: int) -> int:
    if not is_power_of_two(n):
        raise ValueError(f"dimension must be a positive power of two, got {n!r}")
    if n > MAX_DENSE_N:
        raise ValueError(f"dimension {n} exceeds dense limit {MAX_DENSE_N}")
    return int(n)


def _check_index_set(indices: Iterable[int], n: int) -> np.ndarray:
    idx = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("index set must be nonempty")
    if idx.min() < 0 or idx.max() >= n:
        raise ValueError(f"index out of range for dimension {n}: {idx.tolist()}")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"index set contains duplicates: {idx.tolist()}")
    return idx


@lru_cache(maxsize=16)
def _dft_matrix(n: int) -> np.ndarray:
    jk = np.outer(np.arange(n), np.arange(n)) % n
    mat = np.exp(-2j * np.pi * jk / n) / np.sqrt(n)
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=16)
def _haar_matrix(n: int) -> np.ndarray:
    mat = np.zeros((n, n))
    mat[0, :] = 1.0 / np.sqrt(n)
    k = np.arange(n)
    for j in range(1, n):
        p = j.bit_length() - 1
        q = j - 2**p + 1
        width = n / 2**p
        amp = 2 ** (p / 2) / np.sqrt(n)
        lo, mid, hi = (q - 1) * width, (q - 0.5) * width, q * width
        mat[j, (k >= lo) & (k < mid)] = amp
        mat[j, (k >= mid) & (k < hi)] = -amp
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class DftEnsemble:
    """The ``n`` rows of the unitary DFT, used as the candidate measurement set."""

    n: int

    def __post_init__(self):
        _check_dimension(self.n)

    @property
    def matrix(self) -> np.ndarray:
        return _dft_matrix(self.n)

    def row(self, j: int) -> np.ndarray:
        return dft_row(self, j)

    def rows(self, indices: Sequence[int]) -> np.ndarray:
        """Realized sensing matrix ``A'`` whose i-th row is ensemble row ``indices[i]``."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError(f"row index out of range for n={self.n}")
        return self.matrix[idx]

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.fft.fft(np.asarray(x), norm="ortho")

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        return np.fft.ifft(np.asarray(y), norm="ortho")

    def restricted(self, synthesis: np.ndarray) -> np.ndarray:
        """``F @ synthesis`` for an ``n x s`` column block, computed column-wise by FFT."""
        return np.fft.fft(np.asarray(synthesis), axis=0, norm="ortho")


@dataclass(frozen=True)
class HaarBasis:
    """Orthonormal Haar analysis matrix ``H``; synthesis is ``H.T``."""

    n: int
    levels: int = field(init=False)

    def __post_init__(self):
        _check_dimension(self.n)
        object.__setattr__(self, "levels", int(self.n).bit_length() - 1)

    @property
    def matrix(self) -> np.ndarray:
        return _haar_matrix(self.n)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return haar_forward(self, x)

    def adjoint(self, alpha: np.ndarray) -> np.ndarray:
        return haar_inverse(self, alpha)

    def synthesis_columns(self, support: Iterable[int]) -> np.ndarray:
        return haar_synthesis_columns(self, support)

    def block_of_index(self, index: int) -> int:
        return block_of_index(self, index)

    def block_indices(self, a: int) -> np.ndarray:
        """Wavelet indices ``n/2**a, ..., n/2**(a-1) - 1`` that form block ``a``."""
        if not 1 <= a <= self.levels:
            raise ValueError(f"block must lie in 1..{self.levels}, got {a}")
        return np.arange(self.n >> a, self.n >> (a - 1))


@lru_cache(maxsize=8)
def _fourier_haar(n: int) -> np.ndarray:
    mat = np.fft.fft(_haar_matrix(n).T, axis=0, norm="ortho")
    mat.setflags(write=False)
    return mat


def fourier_haar_matrix(n: int) -> np.ndarray:
    """Dense ``F @ H.T``: entry ``(j, k)`` is the inner product of DFT row ``j`` with Haar column ``k``."""
    return _fourier_haar(_check_dimension(n))


def dft_row(ensemble: DftEnsemble, j: int) -> np.ndarray:
    n = ensemble.n
    if not isinstance(j, (int, np.integer)) or not 0 <= j < n:
        raise ValueError(f"row index must be an integer in [0, {n - 1}], got {j!r}")
    return ensemble.matrix[int(j)].copy()


def haar_forward(basis: HaarBasis, x: np.ndarray) -> np.ndarray:
    """Return ``alpha = H @ x`` (applied along the last axis).

    Uses an O(n) pyramid: at each level, pairwise sums feed the next level and
    pairwise differences become that level's detail coefficients.
    """
    x = np.asarray(x)
    if x.ndim == 0 or not is_power_of_two(x.shape[-1]):
        raise ValueError(f"input length must be a power of two, got shape {x.shape}")
    if x.shape[-1] != basis.n:
        raise ValueError(f"input length {x.shape[-1]} does not match basis dimension {basis.n}")
    out = np.empty(x.shape, dtype=np.result_type(x.dtype, np.float64))
    approx = x.astype(out.dtype, copy=True)
    while approx.shape[-1] > 1:
        half = approx.shape[-1] // 2
        even, odd = approx[..., 0::2], approx[..., 1::2]
        out[..., half : 2 * half] = (even - odd) / np.sqrt(2.0)
        approx = (even + odd) / np.sqrt(2.0)
    out[..., 0] = approx[..., 0]
    return out


def haar_inverse(basis: HaarBasis, alpha: np.ndarray) -> np.ndarray:
    """Return ``x = H.T @ alpha`` (along the last axis), the inverse of :func:`haar_forward`."""
    alpha = np.asarray(alpha)
    if alpha.ndim == 0 or alpha.shape[-1] != basis.n:
        raise ValueError(f"coefficient vector must have trailing length {basis.n}, got {alpha.shape}")
    approx = alpha[..., :1].astype(np.result_type(alpha.dtype, np.float64))
    size = 1
    while size < basis.n:
        detail = alpha[..., size : 2 * size]
        nxt = np.empty(alpha.shape[:-1] + (2 * size,), dtype=np.result_type(approx.dtype, detail.dtype))
        nxt[..., 0::2] = (approx + detail) / np.sqrt(2.0)
        nxt[..., 1::2] = (approx - detail) / np.sqrt(2.0)
        approx = nxt
        size *= 2
    return approx


def haar_synthesis_columns(basis: HaarBasis, support: Iterable[int]) -> np.ndarray:
    idx = _check_index_set(support, basis.n)
    return basis.matrix[idx].T.copy()


def block_of_index(basis: HaarBasis, index: int) -> int:
    """Haar block ``a`` holding wavelet index ``index``; ``n/2**a <= index < n/2**(a-1)``."""
    if not isinstance(index, (int, np.integer)) or not 1 <= index < basis.n:
        raise ValueError(
            f"wavelet index must be an integer in [1, {basis.n - 1}] (index 0 is the scaling "
            f"coefficient and has no block), got {index!r}"
        )
    return basis.levels - (int(index).bit_length() - 1)

"""Sparse test signals, tree/uniform supports and measurement noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .transforms import HaarBasis, is_power_of_two

Basis = Literal["canonical", "haar"]


@dataclass(frozen=True)
class NoiseModel:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"noise variance must be nonnegative, got {self.sigma2!r}")


@dataclass(frozen=True)
class SparseSignal:
    """An ``s``-sparse coefficient vector together with its canonical-domain signal.

    ``x = H.T @ alpha`` for the Haar basis and ``x = alpha`` for the canonical one.
    """

    alpha: np.ndarray
    support: np.ndarray
    basis: Basis
    x: np.ndarray

    @property
    def n(self) -> int:
        return self.alpha.shape[0]

    @property
    def s(self) -> int:
        return self.support.shape[0]

    @classmethod
    def from_coefficients(cls, alpha: np.ndarray, basis: Basis = "haar") -> "SparseSignal":
        alpha = np.asarray(alpha, dtype=float)
        support = np.flatnonzero(alpha)
        if basis == "haar":
            x = HaarBasis(alpha.shape[0]).adjoint(alpha)
        elif basis == "canonical":
            x = alpha.copy()
        else:
            raise ValueError(f"unknown basis {basis!r}")
        return cls(alpha=alpha, support=support, basis=basis, x=x)


def _check_sparsity(n: int, s: int) -> None:
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must satisfy 1 <= s <= n={n}, got {s}")


def sample_uniform_support(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    _check_sparsity(n, s)
    return np.sort(rng.choice(n, size=s, replace=False))


def tree_children(j: int, n: int) -> list[int]:
    """Children of node ``j`` in the Haar coefficient tree (node 0 has the single child 1)."""
    if j == 0:
        return [1] if n > 1 else []
    return [c for c in (2 * j, 2 * j + 1) if c < n]


def tree_parent(j: int) -> int | None:
    if j == 0:
        return None
    return 0 if j == 1 else j // 2


def sample_tree_support(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """Grow a rooted subtree of size ``s``.

    Starts from the scaling index 0, then repeatedly adds one node chosen
    uniformly among unchosen nodes whose parent is already chosen.
    """
    _check_sparsity(n, s)
    if not is_power_of_two(n):
        raise ValueError(f"tree supports need a power-of-two dimension, got {n}")
    chosen = [0]
    frontier = tree_children(0, n)
    for _ in range(s - 1):
        pick = frontier.pop(int(rng.integers(len(frontier))))
        chosen.append(pick)
        frontier.extend(tree_children(pick, n))
    return np.sort(np.asarray(chosen, dtype=np.int64))


def draw_coefficients(support: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Coefficients i.i.d. ``N(sqrt(n), 1)`` on ``support``, zero elsewhere."""
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise ValueError("support must be nonempty")
    if support.min() < 0 or support.max() >= n or np.unique(support).size != support.size:
        raise ValueError(f"invalid support for dimension {n}: {support.tolist()}")
    alpha = np.zeros(n)
    alpha[support] = rng.normal(np.sqrt(n), 1.0, size=support.size)
    return alpha


def add_noise(clean: np.ndarray, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. noise of total per-entry variance ``sigma2``.

    Complex measurements get circularly-symmetric noise (``sigma2/2`` per
    real/imaginary part); real measurements get real Gaussian noise.
    """
    clean = np.asarray(clean)
    if clean.ndim != 1 or clean.size < 1:
        raise ValueError("measurement vector must be 1-D and nonempty")
    if model.sigma2 == 0:
        return clean.copy()
    if np.iscomplexobj(clean):
        scale = np.sqrt(model.sigma2 / 2.0)
        noise = scale * (rng.standard_normal(clean.size) + 1j * rng.standard_normal(clean.size))
    else:
        noise = np.sqrt(model.sigma2) * rng.standard_normal(clean.size)
    return clean + noise


def make_signal(
    n: int,
    s: int,
    rng: np.random.Generator,
    support_model: Literal["tree", "uniform"] = "tree",
    basis: Basis = "haar",
) -> SparseSignal:
    if support_model == "tree":
        support = sample_tree_support(n, s, rng)
    elif support_model == "uniform":
        support = sample_uniform_support(n, s, rng)
    else:
        raise ValueError(f"unknown support model {support_model!r}")
    alpha = draw_coefficients(support, n, rng)
    x = HaarBasis(n).adjoint(alpha) if basis == "haar" else alpha.copy()
    return SparseSignal(alpha=alpha, support=support, basis=basis, x=x)

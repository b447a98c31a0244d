"""Subspace and classical coherence of a block dictionary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Dictionary
from .errors import InsufficientBlocks, NonOrthonormalBasis, UnequalBlockLengths

BASIS_CHECK_TOL = 1e-8


def subspace_coherence(A_i: np.ndarray, A_j: np.ndarray, check: bool = True) -> float:
    """Cosine of the smallest principal angle between ``span(A_i)`` and ``span(A_j)``.

    Both arguments must have orthonormal columns; the value is the largest
    singular value of ``A_i.T @ A_j``, clipped to ``[0, 1]``.
    """
    A_i = np.asarray(A_i, dtype=float).reshape(len(A_i), -1)
    A_j = np.asarray(A_j, dtype=float).reshape(len(A_j), -1)
    if check:
        for A in (A_i, A_j):
            if np.max(np.abs(A.T @ A - np.eye(A.shape[1]))) > BASIS_CHECK_TOL:
                raise NonOrthonormalBasis("basis columns are not orthonormal")
    s = np.linalg.svd(A_i.T @ A_j, compute_uv=False)
    return float(np.clip(s[0], 0.0, 1.0)) if s.size else 0.0


def pairwise_coherence(dictionary: Dictionary) -> np.ndarray:
    n = dictionary.n
    P = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            P[i, j] = P[j, i] = subspace_coherence(dictionary.bases[i], dictionary.bases[j],
                                                   check=False)
    return P


def _cumulative(G: np.ndarray, k_max: int) -> np.ndarray:
    """``max_i`` of the sum of the ``k`` largest off-diagonal entries of row ``i``.

    The maximization over index sets of size ``k`` for a fixed row is
    attained by the ``k`` largest entries, so sorting each row is exact.
    """
    n = G.shape[0]
    off = G[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    rows = -np.sort(-off, axis=1)[:, :k_max]
    return np.max(np.cumsum(rows, axis=1), axis=0)


@dataclass(frozen=True, eq=False)
class CoherenceProfile:
    """Pairwise subspace coherences and derived series.

    ``zeta[k-1]`` is the k-cumulative subspace coherence and ``u[k-1]`` the
    sum of the ``k`` largest pairwise coherences, for ``k = 1..n-1``.
    """

    pairwise: np.ndarray
    mu_s: float
    zeta: np.ndarray
    u: np.ndarray

    @property
    def n(self) -> int:
        return self.pairwise.shape[0]

    def zeta_k(self, k: int) -> float:
        """``zeta_k`` with ``zeta_0 = 0``; saturates at ``zeta_{n-1}`` for ``k >= n``."""
        return _series_at(self.zeta, k)

    def u_k(self, k: int) -> float:
        return _series_at(self.u, k)

    def to_dict(self) -> dict:
        return {"n": self.n, "mu_s": self.mu_s, "zeta": self.zeta.tolist(), "u": self.u.tolist()}


def _series_at(series: np.ndarray, k: int) -> float:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return 0.0
    return float(series[min(k, len(series)) - 1])


def profile(dictionary: Dictionary) -> CoherenceProfile:
    if dictionary.n < 2:
        raise InsufficientBlocks("subspace coherence needs at least two blocks")
    return profile_from_pairwise(pairwise_coherence(dictionary))


def profile_from_pairwise(P: np.ndarray) -> CoherenceProfile:
    P = np.array(P, dtype=float)
    n = P.shape[0]
    zeta = _cumulative(P, n - 1)
    pairs = -np.sort(-P[np.triu_indices(n, 1)])
    u = np.cumsum(pairs)[: n - 1]
    for a in (P, zeta, u):
        a.flags.writeable = False
    return CoherenceProfile(P, float(pairs[0]), zeta, u)


@dataclass(frozen=True, eq=False)
class ClassicalCoherence:
    """Atom-level coherences and the equal-length block coherence.

    ``mu_b`` and ``block_length`` are ``None`` when blocks differ in length.
    """

    mu: float
    zeta_classical: np.ndarray
    mu_b: Optional[float]
    nu: float
    block_length: Optional[int]

    def zeta_k(self, k: int) -> float:
        return _series_at(self.zeta_classical, k)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "zeta_classical": self.zeta_classical.tolist(),
                "mu_b": self.mu_b, "nu": self.nu, "block_length": self.block_length}


def block_coherence(dictionary: Dictionary) -> float:
    """``max_{i != j} sigma_1(B[i]^T B[j]) / d`` for equal block length ``d``."""
    sizes = set(dictionary.structure.sizes)
    if len(sizes) != 1:
        raise UnequalBlockLengths(f"block coherence needs equal block lengths, got {sorted(sizes)}")
    if dictionary.n < 2:
        raise InsufficientBlocks("block coherence needs at least two blocks")
    (d,) = sizes
    best = 0.0
    for i in range(dictionary.n):
        for j in range(i + 1, dictionary.n):
            s = np.linalg.svd(dictionary.block(i).T @ dictionary.block(j), compute_uv=False)
            best = max(best, float(s[0]))
    return best / d


def subcoherence(dictionary: Dictionary) -> float:
    """Largest mutual coherence inside any single block (0 for 1-column blocks)."""
    nu = 0.0
    for i in range(dictionary.n):
        Bi = dictionary.block(i)
        if Bi.shape[1] > 1:
            G = np.abs(Bi.T @ Bi)
            np.fill_diagonal(G, 0.0)
            nu = max(nu, float(G.max()))
    return nu


def classical(dictionary: Dictionary, k_max: int | None = None) -> ClassicalCoherence:
    N = dictionary.N
    if N < 2:
        raise InsufficientBlocks("mutual coherence needs at least two atoms")
    k_max = N - 1 if k_max is None else max(1, min(int(k_max), N - 1))
    G = np.abs(dictionary.matrix.T @ dictionary.matrix)
    zeta = _cumulative(G, k_max)
    zeta.flags.writeable = False
    try:
        mu_b = block_coherence(dictionary)
        length = dictionary.structure.sizes[0]
    except (UnequalBlockLengths, InsufficientBlocks):
        mu_b, length = None, None
    return ClassicalCoherence(float(zeta[0]), zeta, mu_b, subcoherence(dictionary), length)

"""Block-structured dictionaries, coefficient vectors and random instances."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, DisjointnessViolation

UNIT_NORM_TOL = 1e-10
ORTHONORMAL_TOL = 1e-10
SPAN_TOL = 1e-8
DISJOINT_TOL = 1e-8
RANK_RTOL = 1e-10

# spawn-key tags for stream splitting
_BASIS_STREAM = 0
_COLUMN_STREAM = 1
_SUPPORT_STREAM = 2


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, *key)``.

    Streams with different keys are statistically independent, so work
    items can be generated in any order (or in parallel) with identical
    results.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Independent 63-bit integer seed for the sub-stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="F", copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BlockStructure:
    """Partition of ``N`` columns into ``n`` consecutive blocks."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes:
            raise DimensionMismatch("a block structure needs at least one block")
        if min(sizes) < 1:
            raise DimensionMismatch(f"block sizes must be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def N(self) -> int:
        return sum(self.sizes)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.intp)

    def slice(self, i: int) -> slice:
        return slice(int(self.offsets[i]), int(self.offsets[i + 1]))

    def block_ids(self) -> np.ndarray:
        """Block index of every column."""
        return np.repeat(np.arange(self.n), self.sizes)


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Dense ``D x N`` dictionary with unit-norm columns split into blocks.

    ``bases[i]`` is an orthonormal basis of the column span of block ``i``
    and ``dims[i]`` its dimension.  Use :meth:`from_blocks` or
    :meth:`from_matrix` unless the bases are already known.
    """

    matrix: np.ndarray
    structure: BlockStructure
    bases: tuple[np.ndarray, ...]
    dims: tuple[int, ...] = field(default=())

    def __post_init__(self):
        matrix = _readonly(self.matrix)
        if matrix.ndim != 2:
            raise DimensionMismatch("dictionary matrix must be 2-D")
        if matrix.shape[1] != self.structure.N:
            raise DimensionMismatch(
                f"block sizes sum to {self.structure.N} but matrix has "
                f"{matrix.shape[1]} columns")
        if len(self.bases) != self.structure.n:
            raise DimensionMismatch("need exactly one basis per block")
        bases = tuple(_readonly(A) for A in self.bases)
        dims = tuple(A.shape[1] for A in bases)
        if self.dims and tuple(self.dims) != dims:
            raise DimensionMismatch(f"dims {self.dims} disagree with bases {dims}")
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "dims", dims)
        self._validate()

    def _validate(self):
        D = self.D
        norms = np.linalg.norm(self.matrix, axis=0)
        if np.max(np.abs(norms - 1.0)) >= UNIT_NORM_TOL:
            raise ValueError("dictionary columns must have unit Euclidean norm")
        for i, A in enumerate(self.bases):
            if A.shape[0] != D:
                raise DimensionMismatch(f"basis {i} has {A.shape[0]} rows, expected {D}")
            if np.max(np.abs(A.T @ A - np.eye(A.shape[1]))) >= ORTHONORMAL_TOL:
                raise ValueError(f"basis {i} is not orthonormal")
            Bi = self.block(i)
            if np.linalg.norm(Bi - A @ (A.T @ Bi)) >= SPAN_TOL:
                raise ValueError(f"basis {i} does not span block {i}")
            if _rank(Bi) != A.shape[1]:
                raise ValueError(f"block {i} rank differs from basis dimension")

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray], normalize: bool = True) -> "Dictionary":
        # 1-D arrays are single columns
        blocks = [np.asarray(b, dtype=float).reshape(len(b), -1) for b in blocks]
        return cls.from_matrix(np.hstack(blocks), [b.shape[1] for b in blocks], normalize)

    @classmethod
    def from_matrix(cls, matrix, sizes: Sequence[int], normalize: bool = True) -> "Dictionary":
        matrix = np.array(matrix, dtype=float)
        structure = BlockStructure(tuple(sizes))
        if matrix.shape[1] != structure.N:
            raise DimensionMismatch(
                f"block sizes sum to {structure.N} but matrix has {matrix.shape[1]} columns")
        if normalize:
            norms = np.linalg.norm(matrix, axis=0)
            if np.any(norms == 0):
                raise ValueError("cannot normalize a zero column")
            matrix = matrix / norms
        bases = tuple(orthonormal_basis(matrix[:, structure.slice(i)])
                      for i in range(structure.n))
        return cls(matrix, structure, bases)

    @property
    def D(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.structure.n

    @property
    def N(self) -> int:
        return self.structure.N

    def block(self, i: int) -> np.ndarray:
        return self.matrix[:, self.structure.slice(i)]

    @property
    def is_redundant(self) -> bool:
        return any(m > d for m, d in zip(self.structure.sizes, self.dims))

    @cached_property
    def stacked_basis(self) -> np.ndarray:
        """``[A_1 ... A_n]``, the concatenation of all block bases."""
        return np.hstack(self.bases)

    @cached_property
    def basis_structure(self) -> BlockStructure:
        return BlockStructure(self.dims)

    def augment_identity(self) -> "Dictionary":
        """Dictionary ``[B I]`` whose extra blocks are the ``D`` standard atoms."""
        eye = np.eye(self.D)
        return Dictionary(
            np.hstack([self.matrix, eye]),
            BlockStructure(self.structure.sizes + (1,) * self.D),
            self.bases + tuple(eye[:, [j]] for j in range(self.D)),
        )


def _rank(M: np.ndarray) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * max(s[0], 1e-300) * max(M.shape)))


def orthonormal_basis(M: np.ndarray) -> np.ndarray:
    """Orthonormal basis for the column span of ``M`` (via SVD)."""
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    r = int(np.sum(s > RANK_RTOL * max(s[0], 1e-300) * max(M.shape)))
    return U[:, :r]


@dataclass(frozen=True, eq=False)
class BlockSparseCoefficients:
    values: np.ndarray
    structure: BlockStructure

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.structure.N:
            raise DimensionMismatch(
                f"coefficient vector has length {values.shape[0]}, expected {self.structure.N}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def block(self, i: int) -> np.ndarray:
        return self.values[self.structure.slice(i)]

    def block_norms(self, q=2) -> np.ndarray:
        return np.array([np.linalg.norm(self.block(i), ord=q) if self.structure.sizes[i] > 1
                         else abs(self.block(i)[0]) for i in range(self.structure.n)])

    def support(self, tol: float = 0.0) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.block_norms(2) > tol))


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    dictionary: Dictionary
    signal: np.ndarray
    truth: BlockSparseCoefficients
    support: tuple[int, ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.support)


def random_basis(D: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalized ``D x d`` standard Gaussian matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((D, d)))
    # sign fix makes the basis a deterministic function of the Gaussian draw
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def sample_block(basis: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` unit vectors drawn as ``basis @ g`` with standard Gaussian ``g``."""
    cols = basis @ rng.standard_normal((basis.shape[1], m))
    return cols / np.linalg.norm(cols, axis=0)


def check_disjoint(bases: Sequence[np.ndarray], tol: float = DISJOINT_TOL):
    """Return the first pair ``(i, j)`` whose bases are not jointly full rank, else None."""
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            pair = np.hstack([bases[i], bases[j]])
            if pair.shape[1] > pair.shape[0]:
                return i, j
            if np.linalg.svd(pair, compute_uv=False)[-1] < tol:
                return i, j
    return None


def generate_dictionary(D: int, n: int, d: int, m: int, seed: int,
                        max_retries: int = 10) -> Dictionary:
    """Random union-of-subspaces dictionary.

    Each of the ``n`` subspaces gets an orthonormalized Gaussian basis
    ``A_i`` (``D x d``); block ``i`` holds ``m`` unit vectors drawn inside
    ``span(A_i)``.  Draws are repeated (with fresh streams) when some pair
    of subspaces intersects nontrivially.

    Raises
    ------
    DisjointnessViolation
        If no disjoint draw was found within ``max_retries`` attempts.
    """
    if not (D >= d >= 1 and m >= d and n >= 1):
        raise ValueError(f"need D >= d >= 1, m >= d, n >= 1 (got D={D}, d={d}, m={m}, n={n})")
    for attempt in range(max_retries):
        bases = [random_basis(D, d, make_rng(seed, attempt, i, _BASIS_STREAM)) for i in range(n)]
        bad = check_disjoint(bases)
        if bad is not None:
            continue
        blocks = [sample_block(A, m, make_rng(seed, attempt, i, _COLUMN_STREAM))
                  for i, A in enumerate(bases)]
        return Dictionary(np.hstack(blocks), BlockStructure((m,) * n), tuple(bases))
    raise DisjointnessViolation(
        f"subspaces {bad} intersect after {max_retries} attempts (D={D}, d={d}, n={n})")


def plant_signal(dictionary: Dictionary, k: int, seed: int) -> PlantedInstance:
    """Signal ``y = B c0`` with ``k`` blocks of i.i.d. standard Gaussian coefficients.

    The support is drawn uniformly without replacement.
    """
    n = dictionary.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = make_rng(seed, _SUPPORT_STREAM)
    support = tuple(sorted(int(i) for i in rng.choice(n, size=k, replace=False)))
    c = np.zeros(dictionary.N)
    for i in support:
        sl = dictionary.structure.slice(i)
        c[sl] = rng.standard_normal(sl.stop - sl.start)
    truth = BlockSparseCoefficients(c, dictionary.structure)
    y = dictionary.matrix @ truth.values
    y.flags.writeable = False
    return PlantedInstance(dictionary, y, truth, support, int(seed))

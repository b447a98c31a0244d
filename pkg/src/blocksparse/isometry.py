"""Intra-block isometry constants ``eps_q``, ``sigma_q`` and ``eps'_q``.

All three constants reduce, block by block, to the extreme values of a
norm ratio:

* ``eps_q``: ``||Bs c||_2 / ||c||_q`` for the best full-rank ``d_i``-column
  submatrix ``Bs`` of each block (two-sided),
* ``sigma_q``: ``||B[i] c||_2 / ||c||_q`` over the whole block (upper side),
* ``eps'_q``: ``||z||_2 / ||z||_q`` for ``z`` in the span of each block.

Extremes that are maxima of a convex function over a polytope are found by
enumerating sign vectors / vertices when that is affordable; minima over an
l_inf sphere split into one convex bounded least-squares problem per facet.
Every value carries a method tag:

``exact``       closed form or a finite set of convex solves,
``enumerated``  exhaustive enumeration (also exact),
``greedy``      submatrix search truncated; an upper bound on ``eps_q``,
``sampled``     random search with local ascent; a lower bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, lsq_linear

from .core import Dictionary, _rank, make_rng
from .errors import RankDeficientBlock
from .norms import parse_q, q_label

ENUMERATION_CAP = 5000
SIGN_CAP = 20
VERTEX_CAP = 200_000
SAMPLES = 10_000
ASCENT_STEPS = 50
ASCENT_STARTS = 8

_RANK = {"exact": 0, "enumerated": 1, "greedy": 2, "sampled": 3}


def worst_method(methods) -> str:
    return max(methods, key=_RANK.__getitem__, default="exact")


def _sign_chunks(d: int, chunk: int = 1 << 14):
    """All sign vectors in {-1, 1}^d with first entry +1, in row chunks."""
    k = d - 1
    total = 1 << k
    shifts = np.arange(k)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))[:, None]
        bits = (idx >> shifts) & 1
        yield np.hstack([np.ones((len(idx), 1)), 1.0 - 2.0 * bits])


def max_sign_quadratic(Q: np.ndarray, cap: int = SIGN_CAP, rng=None,
                       samples: int = 2000) -> tuple[float, str]:
    """``max s^T Q s`` over sign vectors ``s``.

    Exhaustive for dimension ``<= cap``; otherwise random starts followed by
    single-flip local search (a lower bound).
    """
    d = Q.shape[0]
    if d <= cap:
        best = -np.inf
        for S in _sign_chunks(d):
            best = max(best, float(np.max(np.einsum("ij,jk,ik->i", S, Q, S))))
        return best, ("exact" if d == 1 else "enumerated")
    rng = rng if rng is not None else make_rng(0)
    S = np.where(rng.random((samples, d)) < 0.5, -1.0, 1.0)
    vals = np.einsum("ij,jk,ik->i", S, Q, S)
    best = -np.inf
    for s in S[np.argsort(vals)[-ASCENT_STARTS:]]:
        s = s.copy()
        for _ in range(ASCENT_STEPS * d):
            # flipping s_j changes the value by -4 s_j (Q s)_j + 4 Q_jj
            gain = -4.0 * s * (Q @ s) + 4.0 * np.diag(Q)
            j = int(np.argmax(gain))
            if gain[j] <= 1e-14:
                break
            s[j] = -s[j]
        best = max(best, float(s @ Q @ s))
    return best, "sampled"


# -- ratio extremes for a fixed matrix --------------------------------------

def _linf_face_min(M: np.ndarray) -> float:
    """``min ||M c||_2`` over ``||c||_inf = 1``: one box-constrained LS per facet."""
    d = M.shape[1]
    if d == 1:
        return float(np.linalg.norm(M[:, 0]))
    best = np.inf
    for j in range(d):
        others = np.delete(M, j, axis=1)
        res = lsq_linear(others, -M[:, j], bounds=(-1.0, 1.0), method="bvls", tol=1e-13)
        best = min(best, float(np.linalg.norm(others @ res.x + M[:, j])))
    return best


def coefficient_ratio_extremes(M: np.ndarray, q, cap: int = SIGN_CAP, rng=None):
    """``(inf, sup, method)`` of ``||M c||_2 / ||c||_q`` over nonzero ``c``.

    The lower extreme assumes ``M`` has full column rank.
    """
    q = parse_q(q)
    M = np.asarray(M, dtype=float)
    if q == 2:
        s = np.linalg.svd(M, compute_uv=False)
        return float(s[-1]), float(s[0]), "exact"
    G = M.T @ M
    if q == 1:
        sup = float(np.max(np.linalg.norm(M, axis=0)))
        # sup ||c||_1 on the ellipsoid c^T G c <= 1 is max_s sqrt(s^T G^-1 s)
        val, method = max_sign_quadratic(np.linalg.inv(G), cap, rng)
        return 1.0 / math.sqrt(val), sup, method
    val, method = max_sign_quadratic(G, cap, rng)
    return _linf_face_min(M), math.sqrt(val), method


def _upper_ratio(M: np.ndarray, q, cap: int, rng) -> tuple[float, str]:
    """Only the supremum of ``||M c||_2 / ||c||_q`` (rank deficiency allowed)."""
    q = parse_q(q)
    if q == 2:
        return float(np.linalg.svd(M, compute_uv=False)[0]), "exact"
    if q == 1:
        return float(np.max(np.linalg.norm(M, axis=0))), "exact"
    val, method = max_sign_quadratic(M.T @ M, cap, rng)
    return math.sqrt(val), method


def _deviation(inf: float, sup: float) -> float:
    return max(sup * sup - 1.0, 1.0 - inf * inf)


# -- per-block constants ----------------------------------------------------

def _candidate_subsets(B: np.ndarray, d: int, cap: int, rng):
    m = B.shape[1]
    if math.comb(m, d) <= cap:
        return itertools.combinations(range(m), d), "enumerated" if m > d else "exact"
    _, _, piv = scipy.linalg.qr(B, pivoting=True, mode="economic")
    subsets = {tuple(sorted(int(j) for j in piv[:d]))}
    while len(subsets) < cap:
        subsets.add(tuple(sorted(int(j) for j in rng.choice(m, size=d, replace=False))))
    return sorted(subsets), "greedy"


def block_eps(B: np.ndarray, d: int, q, enum_cap: int = ENUMERATION_CAP,
              sign_cap: int = SIGN_CAP, rng=None) -> tuple[float, str]:
    """Smallest two-sided deviation over full-rank ``d``-column submatrices."""
    rng = rng if rng is not None else make_rng(0)
    subsets, subset_method = _candidate_subsets(B, d, enum_cap, rng)
    best, methods = np.inf, [subset_method]
    for cols in subsets:
        Bs = B[:, list(cols)]
        if _rank(Bs) < d:
            continue
        inf, sup, method = coefficient_ratio_extremes(Bs, q, sign_cap, rng)
        methods.append(method)
        best = min(best, _deviation(inf, sup))
    if not np.isfinite(best):
        raise RankDeficientBlock(f"no full-rank {d}-column submatrix found")
    method = worst_method(methods)
    if method == "enumerated" and subset_method == "exact" and parse_q(q) == 2:
        method = "exact"
    return best, method


def block_sigma(B: np.ndarray, q, sign_cap: int = SIGN_CAP, rng=None) -> tuple[float, str]:
    sup, method = _upper_ratio(B, q, sign_cap, rng)
    return sup * sup - 1.0, method


def sphere_samples(A: np.ndarray, count: int, rng) -> np.ndarray:
    """``count`` unit vectors uniformly distributed on the sphere of ``span(A)``."""
    W = rng.standard_normal((A.shape[1], count))
    return A @ (W / np.linalg.norm(W, axis=0))


def _l1_sphere_max(A, samples, rng):
    """``max ||A w||_1`` over unit ``w``: sign enumeration or sampling + sign ascent."""
    D = A.shape[0]
    if D <= SIGN_CAP:
        val, method = max_sign_quadratic(A @ A.T, SIGN_CAP)
        return math.sqrt(val), method, np.empty((D, 0))
    Z = sphere_samples(A, samples, rng)
    vals = np.abs(Z).sum(axis=0)
    best = float(vals.max())
    refined = []
    for z in Z[:, np.argsort(vals)[-ASCENT_STARTS:]].T:
        w = A.T @ z
        for _ in range(ASCENT_STEPS):
            g = A.T @ np.sign(A @ w)
            w_new = g / np.linalg.norm(g)
            if np.linalg.norm(w_new - w) < 1e-14:
                break
            w = w_new
        refined.append(A @ w)
        best = max(best, float(np.abs(A @ w).sum()))
    return best, "sampled", np.column_stack([Z] + refined)


def _linf_polytope_max(A, samples, rng, vertex_cap=VERTEX_CAP):
    """``max ||w||_2`` subject to ``||A w||_inf <= 1`` (A orthonormal columns)."""
    D, d = A.shape
    if math.comb(D, d) * (1 << (d - 1)) <= vertex_cap:
        signs = np.vstack(list(_sign_chunks(d)))
        best = 0.0
        for rows in itertools.combinations(range(D), d):
            AR = A[list(rows)]
            if abs(np.linalg.det(AR)) < 1e-12:
                continue
            W = np.linalg.solve(AR, signs.T)
            ok = np.max(np.abs(A @ W), axis=0) <= 1.0 + 1e-9
            if ok.any():
                best = max(best, float(np.max(np.linalg.norm(W[:, ok], axis=0))))
        return best, "enumerated", np.empty((D, 0))
    Z = sphere_samples(A, samples, rng)
    vals = 1.0 / np.max(np.abs(Z), axis=0)
    best = float(vals.max())
    refined = []
    A_ub = np.vstack([A, -A])
    b_ub = np.ones(2 * D)
    for z in Z[:, np.argsort(vals)[-ASCENT_STARTS:]].T:
        w = A.T @ z / np.max(np.abs(z))
        for _ in range(ASCENT_STEPS):
            # linearized ascent of the convex objective over the polytope
            res = linprog(-w, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
            if res.status != 0 or np.linalg.norm(res.x) <= np.linalg.norm(w) + 1e-13:
                break
            w = res.x
        refined.append(A @ w)
        best = max(best, float(np.linalg.norm(w)))
    return best, "sampled", np.column_stack([Z] + refined)


def block_eps_prime(A: np.ndarray, q, samples: int = SAMPLES, rng=None, return_points=False):
    """Two-sided constant between ``||z||_2`` and ``||z||_q`` on ``span(A)``.

    With ``return_points`` also returns the sampled points the estimate is
    based on (empty when the value was enumerated).
    """
    q = parse_q(q)
    rng = rng if rng is not None else make_rng(0)
    D, d = A.shape
    points = np.empty((D, 0))
    if q == 2:
        out = (0.0, "exact")
    elif d == 1:
        z = A[:, 0]
        r = np.linalg.norm(z) / np.linalg.norm(z, ord=q)
        out = (max(1.0 - r * r, r * r - 1.0), "exact")
    elif q == 1:
        # ||z||_2 <= ||z||_1, so only the lower side binds
        top, method, points = _l1_sphere_max(A, samples, rng)
        out = (1.0 - 1.0 / top ** 2, method)
    else:
        # ||z||_inf <= ||z||_2, so only the upper side binds
        top, method, points = _linf_polytope_max(A, samples, rng)
        out = (top ** 2 - 1.0, method)
    return (*out, points) if return_points else out


@dataclass(frozen=True, eq=False)
class IsometryConstants:
    """Constants for one ``q``; ``methods`` maps each field name to its tag."""

    q: float
    eps_q: float
    sigma_q: float
    eps_prime_q: float
    methods: dict = field(default_factory=dict)
    per_block: dict = field(default_factory=dict, repr=False)

    def is_sampled(self, name: str) -> bool:
        return self.methods.get(name) == "sampled"

    def to_dict(self) -> dict:
        return {"q": q_label(self.q), "eps_q": self.eps_q, "sigma_q": self.sigma_q,
                "eps_prime_q": self.eps_prime_q, "methods": dict(self.methods),
                "per_block": {k: list(map(float, v)) for k, v in self.per_block.items()}}


def eps_q(dictionary: Dictionary, q, enum_cap=ENUMERATION_CAP, sign_cap=SIGN_CAP, seed=0):
    vals, methods = [], []
    for i in range(dictionary.n):
        v, m = block_eps(dictionary.block(i), dictionary.dims[i], q, enum_cap, sign_cap,
                         make_rng(seed, i, 0))
        vals.append(v)
        methods.append(m)
    return float(max(vals)), worst_method(methods), vals


def sigma_q(dictionary: Dictionary, q, sign_cap=SIGN_CAP, seed=0):
    vals, methods = [], []
    for i in range(dictionary.n):
        v, m = block_sigma(dictionary.block(i), q, sign_cap, make_rng(seed, i, 1))
        vals.append(v)
        methods.append(m)
    return float(max(vals)), worst_method(methods), vals


def eps_prime_q(dictionary: Dictionary, q, samples=SAMPLES, seed=0):
    vals, methods = [], []
    for i in range(dictionary.n):
        v, m = block_eps_prime(dictionary.bases[i], q, samples, make_rng(seed, i, 2))
        vals.append(v)
        methods.append(m)
    return float(max(vals)), worst_method(methods), vals


def isometry_constants(dictionary: Dictionary, q, enum_cap=ENUMERATION_CAP,
                       sign_cap=SIGN_CAP, samples=SAMPLES, seed=0) -> IsometryConstants:
    q = parse_q(q)
    e, em, eb = eps_q(dictionary, q, enum_cap, sign_cap, seed)
    s, sm, sb = sigma_q(dictionary, q, sign_cap, seed)
    p, pm, pb = eps_prime_q(dictionary, q, samples, seed)
    return IsometryConstants(q, e, s, p,
                             {"eps_q": em, "sigma_q": sm, "eps_prime_q": pm},
                             {"eps_q": eb, "sigma_q": sb, "eps_prime_q": pb})

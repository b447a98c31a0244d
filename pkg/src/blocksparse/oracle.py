"""Exhaustive support search for the block-l0 programs (desk-scale ground truth)."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import BlockSparseCoefficients, Dictionary, _rank
from .errors import InfeasibleDimensions, SolverFailure, WorkCapExceeded
from .norms import parse_q
from .solvers import FEASIBILITY_RTOL, SolveResult, SolveSpec, parse_family

WORK_CAP = 1_000_000
TIE_RTOL = 1e-12


def oracle_work(n: int, k_max: int) -> int:
    """Number of (support, block) pairs visited by the search."""
    return sum(math.comb(n, s) * s for s in range(1, k_max + 1))


def _restricted_cvx(blocks, y, q, family):
    """``min sum ||c_i||_q`` (or ``||B_i c_i||_q``) s.t. ``sum B_i c_i = y``."""
    import cvxpy as cp

    cs = [cp.Variable(B.shape[1]) for B in blocks]
    terms = [cp.norm(c if family == "P" else B @ c, q) for B, c in zip(blocks, cs)]
    prob = cp.Problem(cp.Minimize(sum(terms)), [sum(B @ c for B, c in zip(blocks, cs)) == y])
    try:
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    except cp.error.SolverError as exc:
        raise SolverFailure(f"restricted problem failed: {exc}") from exc
    if prob.status not in ("optimal", "optimal_inaccurate"):
        raise SolverFailure(f"restricted problem status {prob.status}")
    return [np.asarray(c.value, dtype=float) for c in cs]


def _restricted(dictionary: Dictionary, support, y, family, q):
    """Optimal coefficients on a feasible support, in closed form when unique."""
    blocks = [dictionary.block(i) for i in support]
    if family == "P":
        Bs = np.hstack(blocks)
        if _rank(Bs) == Bs.shape[1]:
            sol = np.linalg.lstsq(Bs, y, rcond=None)[0]
            cuts = np.cumsum([0] + [B.shape[1] for B in blocks])
            return [sol[cuts[j]:cuts[j + 1]] for j in range(len(blocks))]
        return _restricted_cvx(blocks, y, q, family)
    bases = [dictionary.bases[i] for i in support]
    As = np.hstack(bases)
    if _rank(As) == As.shape[1]:
        # block reconstructions z_i = A_i w_i are unique; take minimum-norm c_i
        w = np.linalg.lstsq(As, y, rcond=None)[0]
        cuts = np.cumsum([0] + [A.shape[1] for A in bases])
        return [np.linalg.pinv(B) @ (A @ w[cuts[j]:cuts[j + 1]])
                for j, (A, B) in enumerate(zip(bases, blocks))]
    return _restricted_cvx(blocks, y, q, family)


def oracle_solve(dictionary: Dictionary, y, k_max: int, family="P'", q=2,
                 work_cap: int = WORK_CAP) -> SolveResult:
    """Fewest-block exact representation of ``y``, best ``l_q/l_1`` value among ties.

    Supports are visited by increasing size and then lexicographically; a
    support is feasible when the least-squares residual of ``y`` on its
    blocks is below ``1e-8 * max(1, ||y||)``.  Among feasible supports of
    the smallest size the one with the lowest restricted objective wins,
    earlier supports winning exact ties.

    Raises
    ------
    WorkCapExceeded
        If the search would visit more than ``work_cap`` (support, block) pairs.
    """
    family, q = parse_family(family), parse_q(q)
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != dictionary.D:
        raise InfeasibleDimensions(f"signal length {y.shape[0]} differs from D={dictionary.D}")
    n = dictionary.n
    k_max = min(int(k_max), n)
    work = oracle_work(n, k_max)
    if work > work_cap:
        raise WorkCapExceeded(f"oracle needs {work} block visits, cap is {work_cap}")

    spec = SolveSpec(family=family, q=q, certificate=False)
    limit = FEASIBILITY_RTOL * max(1.0, float(np.linalg.norm(y)))
    N = dictionary.N
    for size in range(1, k_max + 1):
        best = None
        for support in itertools.combinations(range(n), size):
            As = np.hstack([dictionary.bases[i] for i in support])
            w = np.linalg.lstsq(As, y, rcond=None)[0]
            if np.linalg.norm(As @ w - y) >= limit:
                continue
            parts = _restricted(dictionary, support, y, family, q)
            if family == "P":
                obj = sum(np.linalg.norm(c, ord=q) for c in parts)
            else:
                obj = sum(np.linalg.norm(dictionary.block(i) @ c, ord=q)
                          for i, c in zip(support, parts))
            if best is None or obj < best[0] * (1 - TIE_RTOL) - TIE_RTOL:
                best = (float(obj), support, parts)
        if best is not None:
            obj, support, parts = best
            c = np.zeros(N)
            for i, part in zip(support, parts):
                c[dictionary.structure.slice(i)] = part
            return SolveResult(BlockSparseCoefficients(c, dictionary.structure), None, obj, 0,
                               0.0, 0.0, float(np.linalg.norm(dictionary.matrix @ c - y)),
                               "converged", tuple(support), None, spec)
    return SolveResult(BlockSparseCoefficients(np.zeros(N), dictionary.structure), None,
                       float("nan"), 0, 0.0, 0.0, float(np.linalg.norm(y)), "infeasible", (),
                       None, spec)

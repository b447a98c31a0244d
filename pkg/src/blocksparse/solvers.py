"""Batched ADMM solvers for the two block-sparse convex program families.

Family ``"P"`` minimizes ``sum_i ||c[i]||_q``; family ``"P'"`` minimizes
``sum_i ||B[i] c[i]||_q``.  Both are subject to ``B c = y`` (equality) or
``||y - B c||_2 <= delta`` (ball).

Family ``P'`` is solved in subspace coordinates: every ``B[i] c[i]`` equals
``A_i w_i`` for the orthonormal basis ``A_i`` of the block, so the program is
``min sum_i ||A_i w_i||_q`` over ``w`` with ``A w = y``.  Coefficients are
mapped back with the minimum-norm solution ``c[i] = pinv(B[i]) A_i w_i``.

Generic form handled by the iteration::

    minimize  sum_i ||z[i]||_q   subject to  z = M x,  K x = y  (or ||K x - y|| <= delta)

with ``M^T M = I``.  Signals sharing a dictionary are solved together as the
columns of one matrix, each with its own adaptive penalty.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import BlockSparseCoefficients, BlockStructure, Dictionary
from .errors import InfeasibleDimensions, MaxIterationsExceeded, SolverFailure
from .norms import dual_q, parse_q, q_label
from .prox import BlockProx

FAMILIES = ("P", "P'")
FEASIBILITY_RTOL = 1e-8
_CHECK_STEP = 10
_RHO_STEP = 50
_RHO_RATIO = 10.0


def parse_family(family: str) -> str:
    key = str(family).strip().lower().replace("prime", "'")
    if key in ("p", "coefficient", "coefficient-norm"):
        return "P"
    if key in ("p'", "reconstruction", "reconstruction-norm"):
        return "P'"
    raise ValueError(f"unknown family {family!r}; use 'P' or 'P''")


@dataclass(frozen=True)
class SolveSpec:
    """Program choice and solver settings.

    ``delta=None`` selects the equality constraint, a number selects the
    ball ``||y - B c||_2 <= delta``.  ``corrupt=True`` appends an identity
    block per coordinate and penalizes the error vector with its l1 norm.
    """

    family: str = "P"
    q: float = 2
    delta: Optional[float] = None
    corrupt: bool = False
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    max_iter: int = 10_000
    rho: float = 1.0
    alpha: float = 1.6
    contribution_threshold: float = 1e-6
    certificate: bool = True
    strict: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", parse_family(self.family))
        object.__setattr__(self, "q", parse_q(self.q))
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.rho <= 0 or self.max_iter < 1:
            raise ValueError("rho must be positive and max_iter >= 1")
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")

    @property
    def constraint(self) -> str:
        return "equality" if self.delta is None else "ball"

    @property
    def label(self) -> str:
        return f"{self.family}_l{q_label(self.q)}"

    def to_dict(self) -> dict:
        return {"family": self.family, "q": q_label(self.q), "delta": self.delta,
                "corrupt": self.corrupt, "tol_primal": self.tol_primal,
                "tol_dual": self.tol_dual, "max_iter": self.max_iter, "rho": self.rho,
                "alpha": self.alpha, "contribution_threshold": self.contribution_threshold,
                "certificate": self.certificate}


@dataclass(frozen=True, eq=False)
class DualCertificate:
    """Dual vector ``nu`` with the blockwise dual norms it attains."""

    nu: np.ndarray
    block_dual_norms: np.ndarray

    @property
    def max_dual_norm(self) -> float:
        return float(np.max(self.block_dual_norms))

    def to_dict(self) -> dict:
        return {"nu": self.nu.tolist(), "block_dual_norms": self.block_dual_norms.tolist(),
                "max_dual_norm": self.max_dual_norm}


@dataclass(frozen=True, eq=False)
class SolveResult:
    """Output of :func:`solve` for one signal.

    ``coefficients`` cover the original dictionary only; with corruption
    enabled the identity part is returned as ``error_vector``.  ``status``
    is ``"converged"``, ``"max_iter"`` or (oracle only) ``"infeasible"``.
    """

    coefficients: BlockSparseCoefficients
    error_vector: Optional[np.ndarray]
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    feasibility: float
    status: str
    support: tuple
    certificate: Optional[DualCertificate] = None
    spec: Optional[SolveSpec] = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        out = {"status": self.status, "converged": self.converged,
               "objective": self.objective, "iterations": self.iterations,
               "primal_residual": self.primal_residual, "dual_residual": self.dual_residual,
               "feasibility": self.feasibility, "support": list(self.support),
               "coefficients": self.coefficients.values.tolist(),
               "error_vector": None if self.error_vector is None else self.error_vector.tolist(),
               "certificate": None if self.certificate is None else self.certificate.to_dict()}
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        return out


# -- problem setup -----------------------------------------------------------

class _Problem:
    """Matrices shared by every solve on one (dictionary, family, q)."""

    def __init__(self, dictionary: Dictionary, family: str, q):
        self.dictionary = dictionary
        self.family = family
        self.q = q
        structure = dictionary.structure
        if family == "P":
            self.K = np.asarray(dictionary.matrix)
            self.M = None
            self.x_structure = structure
            self.z_structure = structure
            self.to_coef = None
        else:
            A = dictionary.stacked_basis
            self.K = np.asarray(A)
            self.x_structure = dictionary.basis_structure
            if q == 2:
                # ||A_i w_i||_2 = ||w_i||_2
                self.M = None
                self.z_structure = self.x_structure
            else:
                self.M = sp.block_diag([sp.csr_matrix(Ai) for Ai in dictionary.bases],
                                       format="csr")
                self.Mt = self.M.T.tocsr()
                self.z_structure = BlockStructure((dictionary.D,) * dictionary.n)
            self.to_coef = sp.block_diag(
                [np.linalg.pinv(dictionary.block(i)) @ dictionary.bases[i]
                 for i in range(dictionary.n)], format="csr")
        self.prox = BlockProx(self.z_structure, q)
        self.p = self.K.shape[1]
        self.Kpinv = np.linalg.pinv(self.K)
        self._null = None
        self._graph = None

    def Mx(self, X):
        return X if self.M is None else self.M @ X

    def MTz(self, Z):
        return Z if self.M is None else self.Mt @ Z

    @property
    def null_projector(self):
        if self._null is None:
            self._null = np.eye(self.p) - self.Kpinv @ self.K
        return self._null

    @property
    def graph_inverse(self):
        if self._graph is None:
            self._graph = np.linalg.inv(np.eye(self.p) + self.K.T @ self.K)
        return self._graph

    def project_affine(self, V, X0):
        """Project columns of ``V`` onto ``{x : K x = y}`` (least-squares set if infeasible)."""
        if self.p < 2 * self.K.shape[0]:
            return self.null_projector @ V + X0
        return V - self.Kpinv @ (self.K @ V) + X0

    def coefficients(self, X):
        """Dictionary coefficients ``(N, T)`` from iterates ``x``."""
        return X if self.to_coef is None else self.to_coef @ X


_PROBLEMS: "weakref.WeakKeyDictionary[Dictionary, dict]" = weakref.WeakKeyDictionary()
_AUGMENTED: "weakref.WeakKeyDictionary[Dictionary, Dictionary]" = weakref.WeakKeyDictionary()


def augmented(dictionary: Dictionary) -> Dictionary:
    """Cached ``[B I]`` dictionary used for corrupted signals."""
    if dictionary not in _AUGMENTED:
        _AUGMENTED[dictionary] = dictionary.augment_identity()
    return _AUGMENTED[dictionary]


def _problem(dictionary: Dictionary, family: str, q) -> _Problem:
    cache = _PROBLEMS.setdefault(dictionary, {})
    key = (family, q)
    if key not in cache:
        cache[key] = _Problem(dictionary, family, q)
    return cache[key]


# -- iteration ----------------------------------------------------------------

def _col_norms(X):
    return np.sqrt(np.einsum("ij,ij->j", X, X))


def _admm(prob: _Problem, Y: np.ndarray, spec: SolveSpec):
    """Run ADMM on every column of ``Y``; returns per-column final state."""
    D, T = Y.shape
    p = prob.p
    ball = spec.delta is not None
    alpha = spec.alpha
    eps = min(spec.tol_primal, spec.tol_dual)

    X0 = prob.Kpinv @ Y
    X = X0.copy()
    Z = prob.Mx(X)
    U = np.zeros_like(Z)
    if ball:
        V = Y.copy()
        U2 = np.zeros_like(Y)
    rho = np.full(T, float(spec.rho))

    out_x = np.zeros((p, T))
    out_z = np.zeros((Z.shape[0], T))
    out_u = np.zeros((Z.shape[0], T))
    out_rho = np.zeros(T)
    out_it = np.full(T, spec.max_iter)
    out_r = np.zeros(T)
    out_s = np.zeros(T)
    done = np.zeros(T, dtype=bool)
    cols = np.arange(T)
    nz = Z.shape[0]

    for it in range(1, spec.max_iter + 1):
        Z_old = Z
        if ball:
            rhs = prob.MTz(Z - U) + prob.K.T @ (V - U2)
            X = prob.graph_inverse @ rhs
            MX, KX = prob.Mx(X), prob.K @ X
            MXh = alpha * MX + (1 - alpha) * Z_old
            KXh = alpha * KX + (1 - alpha) * V
            Z = prob.prox(MXh + U, 1.0 / rho)
            W = KXh + U2 - Y
            nrm = _col_norms(W)
            with np.errstate(divide="ignore", invalid="ignore"):
                shrink = np.where(nrm > spec.delta, spec.delta / nrm, 1.0)
            V_old = V
            V = Y + W * shrink
            U += MXh - Z
            U2 += KXh - V
        else:
            X = prob.project_affine(prob.MTz(Z - U), X0)
            MX = prob.Mx(X)
            MXh = alpha * MX + (1 - alpha) * Z_old
            Z = prob.prox(MXh + U, 1.0 / rho)
            U += MXh - Z

        if it % _CHECK_STEP and it != spec.max_iter:
            continue

        R = MX - Z
        r = _col_norms(R)
        dz = prob.MTz(Z - Z_old)
        if ball:
            r = np.sqrt(r ** 2 + _col_norms(KX - V) ** 2)
            dz = dz + prob.K.T @ (V - V_old)
            scale_p = np.maximum(np.sqrt(_col_norms(MX) ** 2 + _col_norms(KX) ** 2),
                                 np.sqrt(_col_norms(Z) ** 2 + _col_norms(V) ** 2))
            scale_d = rho * np.sqrt(_col_norms(prob.MTz(U)) ** 2 + _col_norms(U2) ** 2)
            n_primal = nz + D
        else:
            scale_p = np.maximum(_col_norms(MX), _col_norms(Z))
            scale_d = rho * _col_norms(prob.MTz(U))
            n_primal = nz
        s = rho * _col_norms(dz)
        conv = (r <= np.sqrt(n_primal) * eps + spec.tol_primal * scale_p) & \
               (s <= np.sqrt(p) * eps + spec.tol_dual * scale_d)
        ok = np.ones_like(conv) if it == spec.max_iter else conv
        if ok.any():
            idx = cols[ok]
            out_x[:, idx], out_z[:, idx], out_u[:, idx] = X[:, ok], Z[:, ok], U[:, ok]
            out_rho[idx], out_r[idx], out_s[idx] = rho[ok], r[ok], s[ok]
            out_it[idx] = it
            done[idx] = conv[ok]
            keep = ~ok
            if not keep.any():
                break
            cols, X, Z, U, rho, Y, X0 = (cols[keep], X[:, keep], Z[:, keep], U[:, keep],
                                         rho[keep], Y[:, keep], X0[:, keep])
            r, s = r[keep], s[keep]
            if ball:
                V, U2 = V[:, keep], U2[:, keep]
        if it % _RHO_STEP:
            continue
        # residual balancing; scaled duals follow rho
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.sqrt(r / s)
        unbalanced = (r > _RHO_RATIO * s) | (s > _RHO_RATIO * r)
        factor = np.where(unbalanced & np.isfinite(ratio) & (ratio > 0),
                          np.clip(ratio, 0.1, 10.0), 1.0)
        if np.any(factor != 1.0):
            rho = rho * factor
            U /= factor
            if ball:
                U2 /= factor
    return out_x, out_z, out_u, out_rho, out_it, out_r, out_s, done


# -- post-processing ----------------------------------------------------------

def _block_mask(structure: BlockStructure, blocks) -> np.ndarray:
    mask = np.zeros(structure.N, dtype=bool)
    for i in blocks:
        mask[structure.slice(i)] = True
    return mask


def _contributions(dictionary: Dictionary, c: np.ndarray, q) -> np.ndarray:
    return np.array([np.linalg.norm(dictionary.block(i) @ c[dictionary.structure.slice(i)], ord=q)
                     for i in range(dictionary.n)])


def _finish(prob: _Problem, y, x, z, spec: SolveSpec):
    """Threshold, polish and map one column back to dictionary coefficients."""
    dictionary = prob.dictionary
    K = prob.K
    zn = prob.prox.block_norms(z[:, None], 2)[:, 0]
    active = np.flatnonzero(zn > 0)
    c_full = prob.coefficients(x[:, None])[:, 0]
    contrib = _contributions(dictionary, c_full, spec.q)
    top = contrib.max() if contrib.size else 0.0
    support = [int(i) for i in active if contrib[i] >= spec.contribution_threshold * top]

    xs = np.where(_block_mask(prob.x_structure, support), x, 0.0)
    if spec.delta is None and support:
        mask = _block_mask(prob.x_structure, support)
        Ks = K[:, mask]
        # polish: nearest point of the affine set restricted to the support
        corr = np.linalg.lstsq(Ks, Ks @ xs[mask] - y, rcond=None)[0]
        cand = xs.copy()
        cand[mask] -= corr
        limit = FEASIBILITY_RTOL * max(1.0, np.linalg.norm(y))
        if np.linalg.norm(K @ cand - y) <= max(limit, np.linalg.norm(K @ xs - y)):
            xs = cand
        elif np.linalg.norm(K @ xs - y) > np.linalg.norm(K @ x - y):
            xs, support = x, [int(i) for i in active]
    c = prob.coefficients(xs[:, None])[:, 0]
    return c, tuple(support)


def _objective(dictionary: Dictionary, c: np.ndarray, family: str, q) -> float:
    if family == "P":
        return float(sum(np.linalg.norm(c[dictionary.structure.slice(i)], ord=q)
                         for i in range(dictionary.n)))
    return float(_contributions(dictionary, c, q).sum())


def _restricted_dual_norm(nu: np.ndarray, A: np.ndarray, q) -> float:
    """``max <nu, z>`` over ``z`` in ``span(A)`` with ``||z||_q <= 1``."""
    if q == 2:
        return float(np.linalg.norm(A.T @ nu))
    D, d = A.shape
    g = A.T @ nu
    scale = np.linalg.norm(g)
    if scale == 0:
        return 0.0
    # the value is homogeneous in g; unit scaling keeps the LP well conditioned
    g = g / scale
    if q == np.inf:
        lp = dict(c=-g, A_ub=np.vstack([A, -A]), b_ub=np.ones(2 * D),
                  bounds=[(None, None)] * d)
    else:
        # variables (w, t): -t <= A w <= t, sum t <= 1
        I = np.eye(D)
        lp = dict(c=np.concatenate([-g, np.zeros(D)]),
                  A_ub=np.vstack([np.hstack([A, -I]), np.hstack([-A, -I]),
                                  np.hstack([np.zeros((1, d)), np.ones((1, D))])]),
                  b_ub=np.concatenate([np.zeros(2 * D), [1.0]]),
                  bounds=[(None, None)] * d + [(0, None)] * D)
    res = linprog(**lp, method="highs")
    if res.status != 0:
        res = linprog(**lp, method="highs-ipm")
    if res.status != 0:
        raise SolverFailure(f"dual norm LP failed: {res.message}")
    return float(-res.fun) * scale


def dual_certificate(dictionary: Dictionary, family: str, q, subgradient_x: np.ndarray
                     ) -> DualCertificate:
    """Least-squares dual vector from a subgradient expressed in ``x`` coordinates.

    For family ``P`` the blockwise value is ``||B[i]^T nu||_{q*}``; for family
    ``P'`` it is the dual of the restricted norm ``||.||_q`` on ``span(A_i)``.
    """
    family, q = parse_family(family), parse_q(q)
    K = dictionary.matrix if family == "P" else dictionary.stacked_basis
    nu = np.linalg.lstsq(K.T, subgradient_x, rcond=None)[0]
    if family == "P":
        qd = dual_q(q)
        norms = np.array([np.linalg.norm(dictionary.block(i).T @ nu, ord=qd)
                          for i in range(dictionary.n)])
    else:
        norms = np.array([_restricted_dual_norm(nu, A, q) for A in dictionary.bases])
    return DualCertificate(nu, norms)


def solve_many(dictionary: Dictionary, Y, spec: SolveSpec = SolveSpec()) -> list[SolveResult]:
    """Solve one program for every column of ``Y`` (shape ``(D, T)``)."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != dictionary.D:
        raise InfeasibleDimensions(f"signal length {Y.shape[0]} differs from D={dictionary.D}")
    work = augmented(dictionary) if spec.corrupt else dictionary
    prob = _problem(work, spec.family, spec.q)
    if spec.delta is None:
        resid = prob.K @ (prob.Kpinv @ Y) - Y
        bad = _col_norms(resid) > FEASIBILITY_RTOL * np.maximum(1.0, _col_norms(Y))
        if bad.any():
            raise InfeasibleDimensions(
                f"{int(bad.sum())} signal(s) lie outside the range of the dictionary; "
                "the equality constraint cannot be met")

    xs, zs, us, rhos, its, rs, ss, done = _admm(prob, Y.copy(), spec)
    results = []
    N = dictionary.N
    for t in range(Y.shape[1]):
        y = Y[:, t]
        c, support = _finish(prob, y, xs[:, t], zs[:, t], spec)
        cert = None
        if spec.certificate and spec.delta is None:
            g = prob.MTz(rhos[t] * us[:, t][:, None])[:, 0]
            cert = dual_certificate(work, spec.family, spec.q, g)
        err = c[N:] if spec.corrupt else None
        feas = float(np.linalg.norm(work.matrix @ c - y))
        status = "converged" if done[t] else "max_iter"
        res = SolveResult(
            coefficients=BlockSparseCoefficients(c[:N], dictionary.structure),
            error_vector=err,
            objective=_objective(work, c, spec.family, spec.q),
            iterations=int(its[t]), primal_residual=float(rs[t]), dual_residual=float(ss[t]),
            feasibility=feas, status=status,
            support=tuple(i for i in support if i < dictionary.n) if spec.corrupt else support,
            certificate=cert, spec=spec)
        results.append(res)
    if spec.strict:
        for res in results:
            if not res.converged:
                raise MaxIterationsExceeded(
                    f"no convergence within {spec.max_iter} iterations", result=res)
    return results


def solve(dictionary: Dictionary, y, spec: SolveSpec = SolveSpec()) -> SolveResult:
    """Solve one program for a single signal ``y``.

    Non-convergence yields a result with ``status == "max_iter"``; with
    ``spec.strict`` it raises :class:`MaxIterationsExceeded` carrying that
    result instead.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    return solve_many(dictionary, y[:, None], spec)[0]


def error_support(result: SolveResult, tol: float = 0.0) -> tuple:
    """Coordinates of the recovered error vector with magnitude above ``tol``."""
    if result.error_vector is None:
        return ()
    return tuple(int(j) for j in np.flatnonzero(np.abs(result.error_vector) > tol))

"""Sufficient recovery conditions, a randomized uniqueness probe and a
sampling check of the cross-block operator-norm bound.

Every condition has the form ``lhs < rhs`` and is evaluated with a small
safety margin, ``lhs < rhs - 1e-12``, so that round-off never certifies a
boundary case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coherence import ClassicalCoherence, CoherenceProfile
from .core import Dictionary, _rank, make_rng
from .errors import DenominatorNonpositive, MissingInput, NotApplicable
from .isometry import IsometryConstants

MARGIN = 1e-12

# condition id -> (isometry fields used, counts atoms instead of blocks)
CONDITIONS = {
    "P-cumulative": (("eps_q", "sigma_q"), False),
    "P-mutual": (("eps_q", "sigma_q"), False),
    "P-mutual-nonredundant": (("eps_q",), False),
    "P-cumulative-nonredundant": (("eps_q",), False),
    "P-intermediate-u_k": (("eps_q", "sigma_q"), False),
    "P'-cumulative": (("eps_prime_q",), False),
    "P'-mutual": (("eps_prime_q",), False),
    "P'-mutual-q2": ((), False),
    "P'-cumulative-q2": ((), False),
    "P'-intermediate-u_k": (("eps_prime_q",), False),
    "classical-mutual": ((), True),
    "classical-cumulative": ((), True),
    "block-coherence": ((), False),
}
CONDITION_IDS = tuple(sorted(CONDITIONS))
_NONREDUNDANT_ONLY = ("P-mutual-nonredundant", "P-cumulative-nonredundant")


@dataclass(frozen=True)
class Certificate:
    """Outcome of one condition at one sparsity level ``k``."""

    condition: str
    k: int
    lhs: float
    rhs: float
    holds: bool
    exactness: str

    def to_dict(self) -> dict:
        return {"condition": self.condition, "k": self.k, "lhs": self.lhs, "rhs": self.rhs,
                "holds": self.holds, "exactness": self.exactness}


@dataclass(frozen=True, eq=False)
class ConditionInputs:
    """Everything the certifiers may read.

    ``redundant`` marks dictionaries with ``m_i > d_i`` for some block;
    ``n_atoms`` bounds ``k`` for the atom-level conditions.
    """

    profile: Optional[CoherenceProfile] = None
    constants: Optional[IsometryConstants] = None
    classical: Optional[ClassicalCoherence] = None
    redundant: Optional[bool] = None
    n_blocks: Optional[int] = None
    n_atoms: Optional[int] = None

    @classmethod
    def from_dictionary(cls, dictionary: Dictionary, q=2, **isometry_kw) -> "ConditionInputs":
        from . import coherence, isometry

        return cls(profile=coherence.profile(dictionary),
                   constants=isometry.isometry_constants(dictionary, q, **isometry_kw),
                   classical=coherence.classical(dictionary),
                   redundant=dictionary.is_redundant,
                   n_blocks=dictionary.n, n_atoms=dictionary.N)


def _need(value, what: str, condition: str):
    if value is None:
        raise MissingInput(f"condition {condition!r} needs {what}")
    return value


def _exactness(constants: Optional[IsometryConstants], used) -> str:
    methods = {constants.methods.get(name, "exact") for name in used} if used else set()
    if "sampled" in methods:
        return "optimistic"
    if "greedy" in methods:
        return "conservative"
    return "exact"


def evaluate(condition: str, k: int, inputs: ConditionInputs) -> tuple[float, float]:
    """``(lhs, rhs)`` of a condition at sparsity ``k``."""
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}; choose from {CONDITION_IDS}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if condition in _NONREDUNDANT_ONLY and inputs.redundant:
        raise NotApplicable(f"condition {condition!r} needs non-redundant blocks")
    used, atoms = CONDITIONS[condition]
    if atoms:
        cl = _need(inputs.classical, "classical coherence", condition)
        if condition == "classical-mutual":
            return (2 * k - 1) * cl.mu, 1.0
        return cl.zeta_k(k) + cl.zeta_k(k - 1), 1.0
    if condition == "block-coherence":
        cl = _need(inputs.classical, "classical coherence", condition)
        if cl.mu_b is None or cl.block_length is None:
            raise MissingInput("block coherence needs equal block lengths")
        d = cl.block_length
        return (2 * k - 1) * d * cl.mu_b, 1.0 - (d - 1) * cl.nu

    pr = _need(inputs.profile, "a coherence profile", condition)
    if used:
        c = _need(inputs.constants, "isometry constants", condition)
    zk, zk1 = pr.zeta_k(k), pr.zeta_k(k - 1)
    mu = pr.mu_s
    if condition.startswith("P'"):
        if condition == "P'-mutual-q2":
            return (2 * k - 1) * mu, 1.0
        if condition == "P'-cumulative-q2":
            return zk + zk1, 1.0
        e = c.eps_prime_q
        rhs = (1 - e) / (1 + e)
        if condition == "P'-cumulative":
            return zk + zk1, rhs
        if condition == "P'-mutual":
            return (2 * k - 1) * mu, rhs
        return pr.u_k(k) + pr.u_k(k - 1), rhs

    e = c.eps_q
    rhs = (1 - e) / (1 + e)
    if condition in _NONREDUNDANT_ONLY:
        if condition == "P-mutual-nonredundant":
            return (2 * k - 1) * mu, rhs
        return zk + zk1, rhs
    growth = math.sqrt((1 + c.sigma_q) / (1 + e))
    if condition == "P-cumulative":
        return growth * zk + zk1, rhs
    if condition == "P-mutual":
        return (k * growth + k - 1) * mu, rhs
    return growth * pr.u_k(k) + pr.u_k(k - 1), rhs


def certify(inputs: ConditionInputs, k: int, condition: str) -> Certificate:
    lhs, rhs = evaluate(condition, k, inputs)
    used, _ = CONDITIONS[condition]
    return Certificate(condition, int(k), float(lhs), float(rhs), bool(lhs < rhs - MARGIN),
                       _exactness(inputs.constants, used))


def _limit(condition: str, inputs: ConditionInputs) -> int:
    if CONDITIONS[condition][1]:
        n = inputs.n_atoms if inputs.n_atoms is not None else (
            len(inputs.classical.zeta_classical) + 1 if inputs.classical is not None else None)
    else:
        n = inputs.n_blocks if inputs.n_blocks is not None else (
            inputs.profile.n if inputs.profile is not None else None)
    return _need(n, "the number of blocks/atoms", condition)


@dataclass(frozen=True)
class CertifiedRow:
    condition: str
    max_k: int
    exactness: str
    status: str = "ok"

    def to_dict(self) -> dict:
        return {"condition": self.condition, "max_k": self.max_k,
                "exactness": self.exactness, "status": self.status}


def max_certified_k(inputs: ConditionInputs, conditions=CONDITION_IDS) -> list[CertifiedRow]:
    """Largest ``k`` certified by each condition (scan stops at the first failure).

    Conditions whose inputs are missing or that do not apply are reported
    with ``max_k = 0`` and a status explaining why.
    """
    rows = []
    for cond in sorted(conditions):
        try:
            limit = _limit(cond, inputs)
            best, exactness = 0, "exact"
            for k in range(1, limit + 1):
                cert = certify(inputs, k, cond)
                exactness = cert.exactness
                if not cert.holds:
                    break
                best = k
            rows.append(CertifiedRow(cond, best, exactness))
        except (MissingInput, NotApplicable) as exc:
            rows.append(CertifiedRow(cond, 0, "exact", f"{type(exc).__name__}: {exc}"))
    return rows


# -- uniqueness probe ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UniquenessProbe:
    """Sampled ranks of ``[s_1 ... s_n]`` with ``s_i`` in subspace ``i``.

    ``k_star = floor(min_rank / 2)``.  A rank below ``n`` is a definite
    witness that some ``k``-block-sparse vectors are not unique; full rank on
    every sample is only evidence.
    """

    tau: float
    trials: int
    k_star: int
    min_rank: int
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tau": self.tau, "trials": self.trials, "k_star": self.k_star,
                "min_rank": self.min_rank, "failures": self.failures}


def _band_vectors(basis: np.ndarray, count: int, tau: float, rng) -> np.ndarray:
    """``count`` vectors of ``span(basis)`` with squared norm uniform in ``[1-tau, 1+tau]``."""
    g = basis @ rng.standard_normal((basis.shape[1], count))
    g /= np.linalg.norm(g, axis=0)
    return g * np.sqrt(rng.uniform(1 - tau, 1 + tau, size=count))


def _principal_pair(Ai: np.ndarray, Aj: np.ndarray):
    """Unit vectors of the two subspaces with the smallest principal angle."""
    U, _, Vt = np.linalg.svd(Ai.T @ Aj)
    return Ai @ U[:, 0], Aj @ Vt[0]


def uniqueness_probe(dictionary: Dictionary, tau: float = 0.0, trials: int = 100,
                     seed: int = 0) -> UniquenessProbe:
    """Sample ``trials`` random matrices plus one aligned matrix per block pair.

    Aligned samples put the principal-vector pair of two subspaces into the
    matrix, which is where rank loss appears first when subspaces nearly
    intersect.
    """
    if not 0 <= tau < 1:
        raise ValueError("tau must lie in [0, 1)")
    n = dictionary.n
    bases = dictionary.bases
    failures, min_rank = [], n
    samples = []
    for t in range(trials):
        rng = make_rng(seed, t)
        cols = [_band_vectors(A, 1, tau, rng)[:, 0] for A in bases]
        samples.append((f"random:{t}", cols))
    for i in range(n):
        for j in range(i + 1, n):
            rng = make_rng(seed, trials, i, j)
            cols = [_band_vectors(A, 1, tau, rng)[:, 0] for A in bases]
            si, sj = _principal_pair(bases[i], bases[j])
            scale = np.sqrt(rng.uniform(1 - tau, 1 + tau, size=2))
            cols[i], cols[j] = si * scale[0], sj * scale[1]
            samples.append((f"aligned:{i},{j}", cols))
    for name, cols in samples:
        r = _rank(np.column_stack(cols))
        min_rank = min(min_rank, r)
        if r < n:
            failures.append({"sample": name, "rank": r})
    return UniquenessProbe(float(tau), int(trials), min_rank // 2, min_rank, failures)


# -- cross-block operator norm bound ------------------------------------------

@dataclass(frozen=True)
class CrossBlockReport:
    """Largest sampled ``||(E^T E)^-1 E^T F||_1`` against its coherence bound."""

    bound: float
    max_norm: float
    samples: int
    violations: int

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"bound": self.bound, "max_norm": self.max_norm, "samples": self.samples,
                "violations": self.violations, "ok": self.ok}


def induced_l1_norm(M: np.ndarray) -> float:
    """Operator norm induced by l1: the largest absolute column sum."""
    return float(np.max(np.sum(np.abs(M), axis=0))) if M.size else 0.0


def cross_block_bound(profile: CoherenceProfile, k: int, alpha: float, beta: float) -> float:
    denom = 1.0 - (alpha + (1 + alpha) * profile.zeta_k(k - 1))
    if denom <= 0:
        raise DenominatorNonpositive(f"bound denominator is {denom:.3g} <= 0")
    return math.sqrt((1 + alpha) * (1 + beta)) * profile.zeta_k(k) / denom


def cross_block_check(dictionary: Dictionary, support, alpha: float = 0.0, beta: float = 0.0,
                 samples: int = 1000, seed: int = 0, profile: CoherenceProfile | None = None,
                 tol: float = 1e-9) -> CrossBlockReport:
    """Sample ``E`` (one column per block of ``support``, squared norms in
    ``[1-alpha, 1+alpha]``) and ``F`` (one column per remaining block, norms at
    most ``sqrt(1+beta)``) and compare ``||(E^T E)^-1 E^T F||_1`` with the bound.

    Half of the samples align every ``F`` column with the principal vector
    of its most coherent support block, the other half are random.
    """
    from .coherence import profile as coherence_profile

    profile = profile if profile is not None else coherence_profile(dictionary)
    support = sorted(int(i) for i in support)
    k = len(support)
    bound = cross_block_bound(profile, k, alpha, beta)
    others = [j for j in range(dictionary.n) if j not in support]
    bases = dictionary.bases
    if not others:
        return CrossBlockReport(bound, 0.0, 0, 0)
    worst, violations = 0.0, 0
    for t in range(samples):
        rng = make_rng(seed, t)
        E = np.column_stack([_band_vectors(bases[i], 1, alpha, rng)[:, 0] for i in support])
        F = np.column_stack([_band_vectors(bases[j], 1, 0.0, rng)[:, 0] for j in others])
        if t % 2:
            for col, j in enumerate(others):
                i = max(support, key=lambda i: float(np.linalg.norm(bases[i].T @ bases[j], 2)))
                si, sj = _principal_pair(bases[i], bases[j])
                E[:, support.index(i)] = si * np.linalg.norm(E[:, support.index(i)])
                F[:, col] = sj
        F = F * np.sqrt(rng.uniform(0, 1 + beta, size=len(others)))
        val = induced_l1_norm(np.linalg.solve(E.T @ E, E.T @ F))
        worst = max(worst, val)
        violations += val > bound + tol
    return CrossBlockReport(float(bound), float(worst), int(samples), int(violations))

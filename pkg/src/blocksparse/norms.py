"""Helpers for the norm index q in {1, 2, inf}."""

import numpy as np

VALID_Q = (1, 2, np.inf)


def parse_q(q):
    """Normalize ``q`` to one of ``1``, ``2`` or ``np.inf``."""
    if isinstance(q, str):
        q = q.strip().lower()
        if q in ("inf", "infinity", "oo"):
            return np.inf
        q = float(q)
    q = float(q)
    if q == 1:
        return 1
    if q == 2:
        return 2
    if np.isinf(q) and q > 0:
        return np.inf
    raise ValueError(f"q must be 1, 2 or inf, got {q!r}")


def q_label(q) -> str:
    q = parse_q(q)
    return "inf" if np.isinf(q) else str(int(q))


def dual_q(q):
    """Hoelder conjugate: 1 <-> inf, 2 <-> 2."""
    q = parse_q(q)
    if q == 1:
        return np.inf
    return 2 if q == 2 else 1


def vector_norm(x, q) -> float:
    return float(np.linalg.norm(np.ravel(x), ord=parse_q(q)))

"""Proximal operators of ``lam * ||.||_q`` and blockwise batched versions."""

from __future__ import annotations

import numpy as np

from .core import BlockStructure
from .norms import parse_q


def project_l1_ball(v: np.ndarray, radius, axis: int = -1) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= radius}`` along ``axis``.

    Uses the sort-based simplex projection on ``|v|``; ``radius`` broadcasts
    against ``v`` with ``axis`` removed.
    """
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    radius = np.asarray(radius, dtype=float)[..., None]
    a = np.abs(v)
    inside = a.sum(axis=-1, keepdims=True) <= radius
    u = -np.sort(-a, axis=-1)
    css = np.cumsum(u, axis=-1) - radius
    ind = np.arange(1, v.shape[-1] + 1)
    cond = u - css / ind > 0
    # index 0 always qualifies when radius > 0, rounding can hide it for tiny radii
    cond[..., 0] = True
    # last qualifying index
    rho = v.shape[-1] - 1 - np.argmax(cond[..., ::-1], axis=-1)
    theta = np.take_along_axis(css, rho[..., None], axis=-1) / (rho[..., None] + 1)
    w = np.sign(v) * np.maximum(a - theta, 0.0)
    out = np.where(inside, v, np.where(radius > 0, w, 0.0))
    return np.moveaxis(out, -1, axis)


def _prox_last_axis(x: np.ndarray, lam, q) -> np.ndarray:
    """Prox of ``lam * ||.||_q`` applied along axis 1 of a ``(b, s, T)`` array."""
    if q == 2:
        nrm = np.linalg.norm(x, axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(nrm > lam, 1.0 - lam / nrm, 0.0)
        return x * scale
    if q == 1:
        return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)
    # Moreau: prox of the inf-norm is the residual of projecting onto the dual ball
    lam_b = np.broadcast_to(np.asarray(lam, dtype=float), (x.shape[0], 1, x.shape[2]))[:, 0, :]
    return x - project_l1_ball(x, lam_b, axis=1)


def prox_block_norm(x, lam: float, q) -> np.ndarray:
    """``argmin_u lam*||u||_q + 0.5*||u - x||_2^2`` for a single vector ``x``."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    x = np.asarray(x, dtype=float).reshape(-1)
    return _prox_last_axis(x[None, :, None], lam, parse_q(q))[0, :, 0]


class BlockProx:
    """Blockwise prox on ``(N, T)`` arrays for a fixed block structure.

    Blocks of equal size are gathered into one ``(b, s, T)`` array so each
    size class costs a few vectorized numpy calls.
    """

    def __init__(self, structure: BlockStructure, q):
        self.q = parse_q(q)
        self.structure = structure
        sizes = np.asarray(structure.sizes)
        offsets = structure.offsets
        self.groups = []
        for s in np.unique(sizes):
            blocks = np.flatnonzero(sizes == s)
            idx = offsets[blocks][:, None] + np.arange(s)[None, :]
            self.groups.append((blocks, idx))

    def __call__(self, X: np.ndarray, lam) -> np.ndarray:
        """``lam`` is a scalar or one value per column of ``X``."""
        lam = np.asarray(lam, dtype=float)
        out = np.empty_like(X)
        for _, idx in self.groups:
            out[idx] = _prox_last_axis(X[idx], lam, self.q)
        return out

    def block_norms(self, X: np.ndarray, q=None) -> np.ndarray:
        """``(n, T)`` array of blockwise ``q``-norms (default: the prox's own ``q``)."""
        q = self.q if q is None else parse_q(q)
        out = np.empty((self.structure.n, X.shape[1]))
        for blocks, idx in self.groups:
            out[blocks] = np.linalg.norm(X[idx], ord=q, axis=1)
        return out

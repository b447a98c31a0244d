import itertools

import numpy as np
import pytest

from blocksparse import coherence
from blocksparse.core import Dictionary, generate_dictionary, make_rng, random_basis
from blocksparse.errors import NonOrthonormalBasis, UnequalBlockLengths

from conftest import four_lines, orthogonal_dictionary


def test_principal_angle_examples():
    e = np.eye(2)
    assert coherence.subspace_coherence(e[:, [0]], e[:, [1]]) == 0.0
    assert coherence.subspace_coherence(e[:, [0]], e[:, [0]]) == 1.0
    t = np.pi / 6
    v = np.array([[np.cos(t)], [np.sin(t)]])
    assert abs(coherence.subspace_coherence(e[:, [0]], v) - 0.8660254037844386) < 1e-12


def test_non_orthonormal_basis_rejected():
    with pytest.raises(NonOrthonormalBasis):
        coherence.subspace_coherence(np.array([[2.0], [0.0]]), np.eye(2)[:, [0]])


def test_four_lines_profile():
    t = np.pi / 6
    p = coherence.profile(four_lines(t))
    assert abs(p.zeta_k(3) - (np.cos(t) + np.sin(t))) < 1e-12
    assert abs(p.u_k(3) - (2 * np.cos(t) + np.sin(t))) < 1e-12
    assert abs(p.mu_s - np.cos(t)) < 1e-12
    assert p.zeta_k(3) < 3 * p.mu_s


def test_orthogonal_subspaces_have_zero_series():
    p = coherence.profile(orthogonal_dictionary())
    assert p.mu_s == 0 and not p.zeta.any() and not p.u.any()


def brute_force_zeta(P, k):
    n = P.shape[0]
    best = 0.0
    for i in range(n):
        others = [j for j in range(n) if j != i]
        for S in itertools.combinations(others, k):
            best = max(best, sum(P[i, j] for j in S))
    return best


def test_zeta_matches_exhaustive_search():
    d = generate_dictionary(20, 7, 2, 2, seed=11)
    p = coherence.profile(d)
    for k in range(1, 7):
        assert abs(p.zeta_k(k) - brute_force_zeta(p.pairwise, k)) < 1e-12
        pairs = sorted(p.pairwise[np.triu_indices(7, 1)], reverse=True)
        assert abs(p.u_k(k) - sum(pairs[:k])) < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_chain_and_monotonicity(seed):
    p = coherence.profile(generate_dictionary(40, 12, 3, 3, seed=seed))
    ks = np.arange(1, 12)
    z = np.array([p.zeta_k(k) for k in ks])
    u = np.array([p.u_k(k) for k in ks])
    assert np.all(z <= u + 1e-12) and np.all(u <= ks * p.mu_s + 1e-12)
    assert np.all(np.diff(z) >= 0) and np.all(np.diff(u) >= 0)
    assert p.mu_s == p.zeta_k(1) == p.u_k(1)


def test_symmetry_and_basis_invariance():
    rng = make_rng(0)
    A, B = random_basis(15, 3, rng), random_basis(15, 4, rng)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = coherence.subspace_coherence(A, B)
    assert abs(a - coherence.subspace_coherence(B, A)) < 1e-12
    assert abs(a - coherence.subspace_coherence(A @ Q, B)) < 1e-10


def test_classical_orthonormal_and_duplicates():
    cl = coherence.classical(orthogonal_dictionary())
    assert cl.mu == 0 and not cl.zeta_classical.any()
    d = Dictionary.from_blocks([np.array([1.0, 0, 0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0])])
    assert coherence.classical(d).mu == 1.0


def test_block_coherence_matches_direct_loop():
    d = generate_dictionary(100, 40, 4, 4, seed=0)
    cl = coherence.classical(d)
    best = 0.0
    for i in range(40):
        for j in range(40):
            if i != j:
                G = d.matrix[:, 4 * i:4 * i + 4].T @ d.matrix[:, 4 * j:4 * j + 4]
                best = max(best, np.sqrt(np.max(np.linalg.eigvalsh(G.T @ G))))
    assert abs(cl.mu_b - best / 4) < 1e-12
    assert cl.block_length == 4
    G = np.abs(d.matrix.T @ d.matrix)
    assert abs(cl.mu - np.max(G - np.eye(160))) < 1e-12
    assert cl.zeta_k(1) == cl.mu
    nu = max(np.max(np.abs(np.triu(d.block(i).T @ d.block(i), 1))) for i in range(40))
    assert abs(cl.nu - nu) < 1e-12


def test_unequal_blocks_have_no_block_coherence():
    d = Dictionary.from_blocks([np.eye(4)[:, :2], np.eye(4)[:, 2:3]])
    with pytest.raises(UnequalBlockLengths):
        coherence.block_coherence(d)
    assert coherence.classical(d).mu_b is None

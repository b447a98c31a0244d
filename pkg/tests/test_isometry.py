import numpy as np
import pytest

from blocksparse import isometry
from blocksparse.core import Dictionary, generate_dictionary, make_rng, random_basis
from blocksparse.errors import RankDeficientBlock

from conftest import orthogonal_dictionary

Q_ALL = [1, 2, np.inf]


def circle(count=400_001):
    phi = np.linspace(0, np.pi, count)
    return np.vstack([np.cos(phi), np.sin(phi)])


def grid_ratio_extremes(M, q):
    """Brute-force inf/sup of ||M c||_2 / ||c||_q over a fine grid of directions."""
    C = circle()
    r = np.linalg.norm(M @ C, axis=0) / np.linalg.norm(C, ord=q, axis=0)
    return r.min(), r.max()


@pytest.mark.parametrize("q", Q_ALL)
def test_ratio_extremes_match_grid(q):
    rng = make_rng(4)
    M = rng.standard_normal((6, 2))
    M /= np.linalg.norm(M, axis=0)
    inf, sup, _ = isometry.coefficient_ratio_extremes(M, q)
    g_inf, g_sup = grid_ratio_extremes(M, q)
    assert abs(inf - g_inf) < 1e-6 and abs(sup - g_sup) < 1e-6


@pytest.mark.parametrize("q", Q_ALL)
def test_ratio_extremes_three_columns(q):
    # random directions in 3-D can only get close to the extremes from inside
    rng = make_rng(5)
    M = rng.standard_normal((8, 3))
    M /= np.linalg.norm(M, axis=0)
    inf, sup, _ = isometry.coefficient_ratio_extremes(M, q)
    C = rng.standard_normal((3, 200_000))
    r = np.linalg.norm(M @ C, axis=0) / np.linalg.norm(C, ord=q, axis=0)
    assert inf <= r.min() + 1e-12 and r.max() <= sup + 1e-12
    assert r.min() - inf < 2e-2 and sup - r.max() < 2e-2


@pytest.mark.parametrize("q", Q_ALL)
def test_single_column_blocks_are_isometric(q):
    d = Dictionary.from_blocks([np.array([1.0, 2.0, 2.0]), np.array([0.0, 1.0, 0.0])])
    c = isometry.isometry_constants(d, q)
    assert abs(c.eps_q) < 1e-12 and abs(c.sigma_q) < 1e-12


def test_orthonormal_block_q2():
    c = isometry.isometry_constants(orthogonal_dictionary(), 2)
    assert abs(c.eps_q) < 1e-12 and abs(c.sigma_q) < 1e-12
    assert c.methods["eps_q"] == "exact"


@pytest.mark.parametrize("phi", [0.3, 1.0, 2.2])
def test_two_columns_at_angle(phi):
    block = np.array([[1.0, np.cos(phi)], [0.0, np.sin(phi)], [0.0, 0.0]])
    d = Dictionary.from_blocks([block])
    assert abs(isometry.eps_q(d, 2)[0] - abs(np.cos(phi))) < 1e-12


def test_sigma_examples():
    d = generate_dictionary(20, 5, 3, 6, seed=2)
    assert abs(isometry.sigma_q(d, 1)[0]) < 1e-12
    rng = make_rng(0)
    B = d.block(0)
    C = rng.standard_normal((6, 10_000))
    r = np.linalg.norm(B @ C, axis=0) / np.abs(C).sum(axis=0)
    assert r.max() <= 1 + 1e-12
    e = np.eye(2)
    assert abs(isometry.sigma_q(Dictionary.from_blocks([e]), np.inf)[0] - 1.0) < 1e-12


def test_sigma_inf_falls_back_to_sampling_for_long_blocks():
    d = generate_dictionary(30, 2, 3, 22, seed=1)
    val, method, _ = isometry.sigma_q(d, np.inf)
    assert method == "sampled"
    exact_small = generate_dictionary(30, 2, 3, 12, seed=1)
    assert isometry.sigma_q(exact_small, np.inf)[1] == "enumerated"


def test_eps_prime_examples():
    v = np.array([1.0, 1.0]) / np.sqrt(2)
    d = Dictionary.from_blocks([v, np.array([1.0, 0.0])])
    val, method, blocks = isometry.eps_prime_q(d, 1)
    assert abs(blocks[0] - 0.5) < 1e-12 and abs(blocks[1]) < 1e-12
    assert method == "exact"
    for q in Q_ALL:
        assert isometry.eps_prime_q(Dictionary.from_blocks([np.eye(3)[:, 0]]), q)[0] == 0.0
    assert isometry.eps_prime_q(generate_dictionary(30, 4, 3, 5, seed=0), 2) == (0.0, "exact", [0.0] * 4)


def grid_eps_prime(A, q):
    Z = A @ circle()
    r2 = (np.linalg.norm(Z, axis=0) / np.linalg.norm(Z, ord=q, axis=0)) ** 2
    return max(1 - r2.min(), r2.max() - 1)


@pytest.mark.parametrize("q,D", [(1, 12), (1, 40), (np.inf, 12), (np.inf, 40)])
def test_eps_prime_against_grid(q, D):
    A = random_basis(D, 2, make_rng(D))
    val, method = isometry.block_eps_prime(A, q, samples=5000, rng=make_rng(1))
    # the grid misses kinks of the q-norm by a first-order amount
    grid = grid_eps_prime(A, q)
    if method == "enumerated":
        assert grid - 1e-12 <= val < grid + 1e-4
    else:
        assert method == "sampled" and abs(val - grid) < 1e-3


@pytest.mark.parametrize("q", [1, np.inf])
def test_eps_prime_consistent_with_its_samples(q):
    A = random_basis(50, 4, make_rng(7))
    val, method, pts = isometry.block_eps_prime(A, q, samples=3000, rng=make_rng(2),
                                                return_points=True)
    assert method == "sampled" and pts.shape[1] >= 3000
    r2 = (np.linalg.norm(pts, axis=0) / np.linalg.norm(pts, ord=q, axis=0)) ** 2
    assert np.all(r2 >= 1 - val - 1e-12) and np.all(r2 <= 1 + val + 1e-12)


@pytest.mark.parametrize("q", Q_ALL)
def test_sigma_monotone_under_block_growth(q):
    d = generate_dictionary(20, 1, 3, 5, seed=9)
    B = d.block(0)
    extra = d.bases[0] @ make_rng(3).standard_normal(3)
    grown = np.column_stack([B, extra / np.linalg.norm(extra)])
    before = isometry.block_sigma(B, q)[0]
    after = isometry.block_sigma(grown, q)[0]
    assert after >= before - 1e-12


@pytest.mark.parametrize("q", Q_ALL)
def test_nonredundant_eps_is_two_sided_version_of_sigma(q):
    # with one admissible submatrix, eps_q = max(sigma_q, lower deviation)
    d = generate_dictionary(30, 6, 3, 3, seed=4)
    e, _, eb = isometry.eps_q(d, q)
    s, _, sb = isometry.sigma_q(d, q)
    assert np.all(np.array(eb) >= np.array(sb) - 1e-9)
    for i in range(d.n):
        inf, sup, _ = isometry.coefficient_ratio_extremes(d.block(i), q)
        assert abs(eb[i] - max(sup ** 2 - 1, 1 - inf ** 2)) < 1e-9


def test_two_column_blocks_have_equal_eps_and_sigma():
    d = generate_dictionary(30, 6, 2, 2, seed=4)
    assert abs(isometry.eps_q(d, 2)[0] - isometry.sigma_q(d, 2)[0]) < 1e-9


def test_greedy_subsets_bound_enumeration_from_above():
    d = generate_dictionary(20, 2, 3, 9, seed=6)
    full, m_full, _ = isometry.eps_q(d, 2)
    capped, m_cap, _ = isometry.eps_q(d, 2, enum_cap=10)
    assert m_full == "enumerated" and m_cap == "greedy"
    assert capped >= full - 1e-12


def test_rank_deficient_block():
    B = np.array([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(RankDeficientBlock):
        isometry.block_eps(B, 2, 2)


def test_method_tags_and_serialization():
    c = isometry.isometry_constants(generate_dictionary(60, 3, 3, 3, seed=0), 1, samples=500)
    assert c.methods["eps_prime_q"] == "sampled" and c.is_sampled("eps_prime_q")
    assert c.to_dict()["q"] == "1"

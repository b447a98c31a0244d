import numpy as np
import pytest
from PIL import Image

from blocksparse.classify import (accuracy, apply, build_labeled_dictionary, classify,
                                  classify_many, fit_reducer, ingest_images, nearest_subspace,
                                  synthetic_union_of_subspaces)
from blocksparse.core import make_rng
from blocksparse.errors import (InconsistentDimensions, NonDivisibleDownsample,
                                RankDeficientCovariance, UnreadableImage)
from blocksparse.solvers import SolveSpec, solve


def test_downsample_examples():
    x = np.arange(8.0)
    r = fit_reducer(x[:, None], "down", factor=2)
    assert np.array_equal(apply(r, x), [0.0, 2.0, 4.0, 6.0])
    img = np.arange(16.0)
    r = fit_reducer(img[:, None], "down", factor=2, image_shape=(4, 4))
    assert np.array_equal(r.apply(img), [0.0, 2.0, 8.0, 10.0])
    with pytest.raises(NonDivisibleDownsample):
        fit_reducer(np.ones((9, 1)), "down", factor=2)


def test_pca_on_subspace_data_reconstructs_exactly():
    rng = make_rng(0)
    X = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 40))
    r = fit_reducer(X, "eigen", dim=3)
    assert np.allclose(r.projection @ r.projection.T, np.eye(3), atol=1e-12)
    Xc = X - X.mean(axis=1, keepdims=True)
    assert np.linalg.norm(Xc - r.projection.T @ r.apply(Xc)) < 1e-10
    with pytest.raises(RankDeficientCovariance):
        fit_reducer(X, "eigen", dim=4)


def test_pca_captures_top_variance():
    rng = make_rng(1)
    X = rng.standard_normal((15, 60)) * np.linspace(3, 0.1, 15)[:, None]
    Xc = X - X.mean(axis=1, keepdims=True)
    s = np.linalg.svd(Xc, compute_uv=False)
    for dim in (1, 4, 9):
        r = fit_reducer(X, "eigen", dim=dim)
        resid = Xc - r.projection.T @ r.apply(Xc)
        assert np.linalg.svd(resid, compute_uv=False)[0] <= s[dim] + 1e-8


def test_random_projection_variance():
    r = fit_reducer(np.ones((758, 1)), "rand", dim=132, seed=3)
    vals = r.projection.ravel()[:100_000]
    assert abs(vals.var() * 132 - 1) < 0.1 and abs(vals.mean()) < 0.01
    again = fit_reducer(np.ones((758, 1)), "rand", dim=132, seed=3)
    assert np.array_equal(again.projection, r.projection)


@pytest.fixture(scope="module")
def synthetic():
    X, y, Xt, yt = synthetic_union_of_subspaces(noise=0.0, tests_per_class=5, seed=2)
    return build_labeled_dictionary(X, y), X, y, Xt, yt


def test_training_column_gets_its_own_class(synthetic):
    model, X, y, _, _ = synthetic
    for j in (0, 37, 99):
        assert classify(model, X[:, j]).label == y[j]


def test_noiseless_test_points(synthetic):
    model, _, _, Xt, yt = synthetic
    preds = classify_many(model, Xt)
    assert accuracy(preds, yt) == 1.0
    assert accuracy([nearest_subspace(model, Xt[:, t]) for t in range(Xt.shape[1])], yt) == 1.0


def test_vector_outside_training_span_is_flagged():
    e = np.eye(6)
    model = build_labeled_dictionary(e[:, :4], [2, 2, 1, 1])
    assert model.labels == (1, 2)
    out = classify(model, e[:, 5])
    assert out.label == 1 and out.flagged
    assert np.allclose(out.residuals, 1.0)


def test_nearest_subspace_examples():
    e = np.eye(6)
    model = build_labeled_dictionary(e[:, :6], [1, 1, 2, 2, 3, 3])
    assert nearest_subspace(model, e[:, 4] + 0.5 * e[:, 5]).label == 3
    tie = nearest_subspace(model, e[:, 0] + e[:, 2])
    assert tie.label == 1 and tie.flagged


def test_single_block_solution_agrees_with_classifier(synthetic):
    model, _, _, Xt, _ = synthetic
    spec = SolveSpec("P'", 2, delta=0.05, certificate=False)
    for t in range(0, Xt.shape[1], 7):
        y = Xt[:, t] / np.linalg.norm(Xt[:, t])
        sol = solve(model.dictionary, y, spec)
        if len(sol.support) == 1:
            assert classify(model, y, spec).label == model.labels[sol.support[0]]


def write_pgm(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


def test_ingest_pgm_folders(tmp_path):
    for c, name in enumerate(("alice", "bob")):
        (tmp_path / name).mkdir()
        for j in range(3):
            write_pgm(tmp_path / name / f"{j}.pgm", np.full((2, 3), 40 * c + j))
    X, labels, shape = ingest_images(tmp_path)
    assert X.shape == (6, 6) and shape == (2, 3)
    assert labels.tolist() == [1, 1, 1, 2, 2, 2]
    assert X.min() >= 0 and X.max() <= 1
    again, _, _ = ingest_images(tmp_path)
    assert again.tobytes() == X.tobytes()


def test_ingest_rejects_mixed_sizes_and_color(tmp_path):
    (tmp_path / "a").mkdir()
    write_pgm(tmp_path / "a" / "0.pgm", np.zeros((2, 3)))
    write_pgm(tmp_path / "a" / "1.pgm", np.zeros((3, 3)))
    with pytest.raises(InconsistentDimensions):
        ingest_images(tmp_path)
    (tmp_path / "a" / "1.pgm").unlink()
    Image.new("RGB", (3, 2)).save(tmp_path / "a" / "2.png")
    with pytest.raises(UnreadableImage):
        ingest_images(tmp_path)
    (tmp_path / "a" / "2.png").write_bytes(b"not an image")
    with pytest.raises(UnreadableImage):
        ingest_images(tmp_path)


def test_nearest_subspace_not_better_under_heavy_noise():
    X, y, Xt, yt = synthetic_union_of_subspaces(noise=0.1, seed=0)
    model = build_labeled_dictionary(X, y)
    acc = accuracy(classify_many(model, Xt), yt)
    ns = accuracy([nearest_subspace(model, Xt[:, t]) for t in range(Xt.shape[1])], yt)
    assert ns <= acc, f"nearest subspace {ns:.3f} beats block-sparse classifier {acc:.3f}"


def test_test_points_off_the_training_span_are_still_classified():
    # with m = d the training span misses most noisy test points by more than delta
    X, y, Xt, yt = synthetic_union_of_subspaces(d=5, m=5, noise=0.01, tests_per_class=5, seed=1)
    preds = classify_many(build_labeled_dictionary(X, y), Xt)
    assert any(p.flagged for p in preds)
    assert accuracy(preds, yt) >= 0.95

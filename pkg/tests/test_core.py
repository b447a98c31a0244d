import json

import numpy as np
import pytest

from blocksparse import io as bsio
from blocksparse.core import (BlockSparseCoefficients, BlockStructure, Dictionary,
                              derive_seed, generate_dictionary, make_rng, plant_signal)
from blocksparse.errors import (ChecksumMismatch, DimensionMismatch, DisjointnessViolation,
                                InsufficientBlocks, MalformedFile)
from blocksparse.coherence import profile

from conftest import orthogonal_dictionary


def test_full_scale_shapes():
    d = generate_dictionary(100, 40, 4, 4, seed=0)
    assert d.matrix.shape == (100, 160)
    assert d.n == 40 and d.dims == (4,) * 40
    assert not d.is_redundant


def test_redundant_blocks_keep_subspace_rank():
    d = generate_dictionary(100, 40, 4, 8, seed=0)
    assert d.matrix.shape == (100, 320)
    for i in range(d.n):
        assert np.linalg.matrix_rank(d.block(i)) == 4
    assert d.is_redundant


def test_single_block_has_no_subspace_coherence():
    d = generate_dictionary(2, 1, 1, 1, seed=0)
    assert d.matrix.shape == (2, 1)
    assert abs(np.linalg.norm(d.matrix[:, 0]) - 1) < 1e-12
    with pytest.raises(InsufficientBlocks):
        profile(d)


@pytest.mark.parametrize("m", [4, 8])
def test_invariants(m):
    d = generate_dictionary(60, 20, 4, m, seed=5)
    assert np.max(np.abs(np.linalg.norm(d.matrix, axis=0) - 1)) < 1e-10
    for i, A in enumerate(d.bases):
        assert np.allclose(A.T @ A, np.eye(4), atol=1e-10)
        B = d.block(i)
        assert np.linalg.norm(B - A @ (A.T @ B)) < 1e-8
    for i in range(d.n):
        for j in range(i + 1, d.n):
            assert np.linalg.matrix_rank(np.hstack([d.bases[i], d.bases[j]])) == 8


def test_generation_is_deterministic():
    a = generate_dictionary(40, 8, 3, 5, seed=42)
    b = generate_dictionary(40, 8, 3, 5, seed=42)
    assert a.matrix.tobytes() == b.matrix.tobytes()
    c = generate_dictionary(40, 8, 3, 5, seed=43)
    assert a.matrix.tobytes() != c.matrix.tobytes()


def test_streams_do_not_depend_on_draw_order():
    forward = [make_rng(9, i).standard_normal(3) for i in range(5)]
    backward = [make_rng(9, i).standard_normal(3) for i in reversed(range(5))][::-1]
    assert all(np.array_equal(x, y) for x, y in zip(forward, backward))
    assert derive_seed(1, 2) == derive_seed(1, 2) != derive_seed(1, 3)


def test_disjointness_violation_after_retries():
    # two planes in R^3 always share a line
    with pytest.raises(DisjointnessViolation):
        generate_dictionary(3, 2, 2, 2, seed=0, max_retries=3)


def test_bad_generation_parameters():
    with pytest.raises(ValueError):
        generate_dictionary(3, 2, 4, 4, seed=0)
    with pytest.raises(ValueError):
        generate_dictionary(10, 2, 3, 2, seed=0)


def test_plant_signal_full_support():
    d = generate_dictionary(30, 6, 2, 2, seed=1)
    inst = plant_signal(d, 6, seed=2)
    assert inst.support == tuple(range(6))
    assert np.allclose(inst.signal, d.matrix @ inst.truth.values, atol=1e-12)
    assert inst.truth.support() == inst.support


def test_single_block_signal_lies_in_its_subspace():
    d = orthogonal_dictionary()
    inst = plant_signal(d, 1, seed=4)
    (i,) = inst.support
    A = d.bases[i]
    assert np.linalg.norm(inst.signal - A @ (A.T @ inst.signal)) < 1e-12


def test_planted_support_reproducible():
    d = generate_dictionary(100, 40, 4, 4, seed=0)
    a = plant_signal(d, 5, seed=77)
    b = plant_signal(d, 5, seed=77)
    assert a.support == b.support and len(a.support) == 5
    assert a.signal.tobytes() == b.signal.tobytes()


def test_plant_signal_rejects_bad_k():
    d = generate_dictionary(10, 3, 2, 2, seed=0)
    with pytest.raises(ValueError):
        plant_signal(d, 4, seed=0)


def test_structure_and_coefficients():
    s = BlockStructure((2, 1, 3))
    assert s.N == 6 and list(s.offsets) == [0, 2, 3, 6]
    assert list(s.block_ids()) == [0, 0, 1, 2, 2, 2]
    c = BlockSparseCoefficients([1.0, 0, 0, 0, 0, -2], s)
    assert c.support() == (0, 2)
    assert np.allclose(c.block_norms(1), [1, 0, 2])
    with pytest.raises(DimensionMismatch):
        BlockStructure((2, 0))
    with pytest.raises(DimensionMismatch):
        BlockSparseCoefficients([1.0, 2.0], s)


def test_dictionary_validation():
    with pytest.raises(ValueError):
        Dictionary.from_matrix(np.ones((3, 2)) * 2, [2], normalize=False)
    with pytest.raises(DimensionMismatch):
        Dictionary.from_matrix(np.eye(3), [2, 2])
    d = Dictionary.from_blocks([np.eye(3)[:, :2], np.ones(3)])
    assert d.structure.sizes == (2, 1) and d.dims == (2, 1)
    assert not d.matrix.flags.writeable


def test_augment_identity():
    d = generate_dictionary(10, 3, 2, 2, seed=0)
    a = d.augment_identity()
    assert a.n == 13 and a.N == 16
    assert np.array_equal(a.matrix[:, 6:], np.eye(10))


def test_round_trip_is_bit_exact(tmp_path):
    d = generate_dictionary(30, 6, 2, 3, seed=8)
    path = tmp_path / "dict.bsd"
    bsio.save(d, path)
    back = bsio.load(path)
    assert back.matrix.tobytes() == d.matrix.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.bases, d.bases))
    assert back.structure == d.structure

    inst = plant_signal(d, 2, seed=3)
    back = bsio.loads(bsio.dumps(inst))
    assert back.signal.tobytes() == inst.signal.tobytes()
    assert back.truth.values.tobytes() == inst.truth.values.tobytes()
    assert back.support == inst.support and back.seed == 3


def _split(raw):
    hlen = int.from_bytes(raw[5:13], "little")
    return json.loads(raw[13:13 + hlen]), raw[13 + hlen:]


def _join(header, payload):
    head = json.dumps(header, sort_keys=True).encode()
    return bsio.MAGIC + len(head).to_bytes(8, "little") + head + payload


def test_size_mismatch_in_header():
    raw = bsio.dumps(generate_dictionary(10, 3, 2, 2, seed=0))
    header, payload = _split(raw)
    header["sizes"] = [2, 2, 3]
    with pytest.raises(DimensionMismatch):
        bsio.loads(_join(header, payload))


def test_truncated_payload():
    raw = bsio.dumps(generate_dictionary(10, 3, 2, 2, seed=0))
    with pytest.raises(MalformedFile):
        bsio.loads(raw[:-16])
    with pytest.raises(MalformedFile):
        bsio.loads(raw[:10])


def test_checksum_and_magic():
    raw = bytearray(bsio.dumps(generate_dictionary(10, 3, 2, 2, seed=0)))
    raw[-3] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        bsio.loads(bytes(raw))
    with pytest.raises(MalformedFile):
        bsio.loads(b"XXXX" + bytes(raw[4:]))

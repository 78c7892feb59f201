import numpy as np
import pytest
from hypothesis import given, strategies as st

from sct.correction import ErrorMask, error_mask, inpaint
from sct.guidance import FeatureMap
from sct.modular.packet import Packet
from sct.synthesis import KnowledgeBase


def fmap_from(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = np.repeat(v[..., None], 64, axis=2)
    return FeatureMap(v, 8, 1)


def pkt(sid, seq, ok):
    return Packet(sid, seq, 0, 0, np.zeros(0, np.uint8), crc_ok=ok)


def test_error_mask_examples():
    cov = {(0, 0): np.arange(0, 10), (0, 1): np.arange(10, 18), (0, 2): np.arange(18, 30)}
    ok = error_mask([pkt(0, 0, True), pkt(0, 1, True), pkt(0, 2, True)], cov, (5, 6))
    assert ok.count == 0
    one = error_mask([pkt(0, 0, True), pkt(0, 1, False), pkt(0, 2, True)], cov, (5, 6))
    assert list(np.flatnonzero(one.mask)) == list(range(10, 18))
    assert one.packets == [(0, 1)]
    missing = error_mask([pkt(0, 0, True)], cov, (5, 6))
    assert list(np.flatnonzero(missing.mask)) == list(range(10, 30))
    none = error_mask([pkt(0, s, False) for s in range(3)], cov, (5, 6))
    assert none.count == 30
    assert set(np.unique(none.to_pgm_array())) == {0}


def test_empty_mask_is_bit_exact():
    f = fmap_from(np.random.default_rng(0).standard_normal((4, 4, 64)))
    out = inpaint(f, np.zeros((4, 4), bool), np.zeros((4, 4), int))
    assert np.array_equal(out.coeffs, f.coeffs) and out is not f


def test_single_cell_constant_neighbours():
    v = np.full((3, 3), 7.0)
    v[1, 1] = -100
    mask = np.zeros((3, 3), bool)
    mask[1, 1] = True
    out = inpaint(fmap_from(v), mask, np.zeros((3, 3), int))
    assert np.allclose(out.coeffs[1, 1], 7.0)


def laplace_oracle(values, mask):
    """Direct solve of the 4-neighbour Laplace equation on the masked cells."""
    h, w = values.shape
    idx = -np.ones((h, w), int)
    ys, xs = np.nonzero(mask)
    idx[ys, xs] = np.arange(len(ys))
    A = np.zeros((len(ys), len(ys)))
    b = np.zeros(len(ys))
    for i, (y, x) in enumerate(zip(ys, xs)):
        nb = [(y + dy, x + dx) for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1))
              if 0 <= y + dy < h and 0 <= x + dx < w]
        A[i, i] = len(nb)
        for p in nb:
            if mask[p]:
                A[i, idx[p]] -= 1
            else:
                b[i] += values[p]
    return np.linalg.solve(A, b), ys, xs


def test_jacobi_matches_direct_solve_on_5x5():
    rng = np.random.default_rng(1)
    v = rng.uniform(-50, 50, (5, 5))
    mask = np.zeros((5, 5), bool)
    mask[1:4, 1:4] = True
    out = inpaint(fmap_from(v), mask, np.zeros((5, 5), int))
    sol, ys, xs = laplace_oracle(v, mask)
    assert np.allclose(out.coeffs[ys, xs, 0], sol, atol=1e-4)
    const = np.full((5, 5), 3.5)
    out = inpaint(fmap_from(const), mask, np.zeros((5, 5), int))
    assert np.allclose(out.coeffs[mask], 3.5, atol=1e-4)


@given(st.integers(0, 10**6))
def test_maximum_principle_and_intact_cells(seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(-20, 20, (6, 7, 64))
    mask = rng.random((6, 7)) < 0.4
    if mask.all():
        mask[0, 0] = False
    f = fmap_from(v)
    out = inpaint(f, mask, np.zeros((6, 7), int))
    assert np.array_equal(out.coeffs[~mask], v[~mask])
    lo, hi = v[~mask].min(axis=0), v[~mask].max(axis=0)
    assert np.all(out.coeffs[mask] >= lo - 1e-9) and np.all(out.coeffs[mask] <= hi + 1e-9)


def test_label_confinement():
    labels = np.zeros((4, 4), int)
    labels[:, 2:] = 1
    mask = np.zeros((4, 4), bool)
    mask[1:3, 1] = True  # label-0 cells bordering label 1
    v = np.zeros((4, 4))
    v[labels == 0] = 5.0
    v[labels == 1] = 200.0
    a = inpaint(fmap_from(v), mask, labels).coeffs[mask]
    v2 = v.copy()
    v2[labels == 1] = -300.0
    b = inpaint(fmap_from(v2), mask, labels).coeffs[mask]
    assert np.allclose(a, 5.0, atol=1e-5) and np.array_equal(a, b)


def test_fully_masked_grid_uses_knowledge_base():
    labels = np.array([[0, 0], [1, 1]])
    kb = KnowledgeBase({0: np.full(64, 2.0), 1: np.full(64, -3.0)}, np.zeros(64))
    out = inpaint(fmap_from(np.zeros((2, 2))), np.ones((2, 2), bool), labels, kb=kb)
    assert np.allclose(out.coeffs[0], 2.0) and np.allclose(out.coeffs[1], -3.0)


def test_fully_masked_region_blends_dc_with_knowledge_base():
    labels = np.zeros((4, 4), int)
    labels[:, 2:] = 1
    mask = labels == 1
    v = np.full((4, 4), 10.0)
    kb = KnowledgeBase({0: np.full(64, 10.0), 1: np.full(64, 30.0)}, np.zeros(64))
    out = inpaint(fmap_from(v), mask, labels, kb=kb).coeffs
    assert np.allclose(out[mask][:, 0], 20.0, atol=1e-4)
    assert np.allclose(out[mask][:, 1:], 10.0, atol=1e-4)


def test_grid_mismatch_rejected():
    with pytest.raises(ValueError):
        inpaint(fmap_from(np.zeros((2, 2))), np.zeros((3, 3), bool), np.zeros((2, 2), int))
    inpaint(fmap_from(np.zeros((2, 2))), ErrorMask(np.zeros((2, 2), bool)), np.zeros((2, 2), int))

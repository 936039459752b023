import numpy as np
import pytest

from nxflow import (PyramidError, avg_pool2, build_pyramid, mask_density,
                    max_pool2, sparse_avg_pool2, upsample_bilinear)


def test_avg_pool2_single_block():
    f = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert avg_pool2(f).item() == 2.5


def test_avg_pool2_constant_stays_constant():
    f = np.full((6, 8, 3), 4.25)
    out = avg_pool2(f)
    assert out.shape == (3, 4, 3)
    assert np.array_equal(out, np.full((3, 4, 3), 4.25))


def test_avg_pool2_preserves_mean(rng):
    f = rng.normal(size=(8, 8, 2))
    pooled = avg_pool2(f)
    # independent oracle: direct summation
    assert pooled.mean() == pytest.approx(f.sum() / f.size, abs=1e-12)


def test_avg_pool2_odd_dims_floor():
    f = np.arange(5 * 7, dtype=float).reshape(5, 7)
    out = avg_pool2(f)
    assert out.shape == (2, 3)
    assert out[0, 0] == pytest.approx((f[0, 0] + f[0, 1] + f[1, 0] + f[1, 1]) / 4)


@pytest.mark.parametrize("shape", [(1, 8), (8, 1), (1, 1)])
def test_pooling_rejects_degenerate_dims(shape):
    with pytest.raises(PyramidError):
        avg_pool2(np.zeros(shape))
    with pytest.raises(PyramidError):
        max_pool2(np.zeros(shape, dtype=bool))


def test_max_pool2_any_semantics():
    m = np.zeros((2, 2), dtype=bool)
    m[0, 0] = True
    assert max_pool2(m)[0, 0]
    assert not max_pool2(np.zeros((4, 4), dtype=bool)).any()


def test_max_pool2_density_never_decreases(rng):
    for _ in range(25):
        m = rng.random((16, 16)) < rng.uniform(0, 0.3)
        pooled = max_pool2(m)
        # counting oracle: every known pixel keeps its block known
        assert mask_density(pooled) >= mask_density(m)


def test_sparse_avg_pool2_partial_block():
    flow = np.zeros((2, 2, 2))
    mask = np.zeros((2, 2), dtype=bool)
    flow[0, 0] = (2.0, 0.0)
    flow[0, 1] = (4.0, 0.0)
    mask[0, 0] = mask[0, 1] = True
    out, pooled_mask = sparse_avg_pool2(flow, mask)
    assert out[0, 0, 0] == 3.0 and out[0, 0, 1] == 0.0
    assert pooled_mask[0, 0]


def test_sparse_avg_pool2_empty_block_is_zero_unknown():
    out, mask = sparse_avg_pool2(np.ones((2, 2, 2)), np.zeros((2, 2), dtype=bool))
    assert np.array_equal(out, np.zeros((1, 1, 2)))
    assert not mask.any()


def test_sparse_avg_pool2_fully_known_matches_dense(rng):
    flow = rng.normal(size=(8, 6, 2))
    mask = np.ones((8, 6), dtype=bool)
    out, pooled_mask = sparse_avg_pool2(flow, mask)
    assert np.array_equal(out, avg_pool2(flow))
    assert pooled_mask.all()


def test_sparse_avg_pool2_matches_dense_on_fully_known_blocks(rng):
    flow = rng.normal(size=(12, 12, 2))
    mask = rng.random((12, 12)) < 0.6
    out, _ = sparse_avg_pool2(flow, mask)
    dense = avg_pool2(flow)
    full_blocks = mask.reshape(6, 2, 6, 2).all(axis=(1, 3))
    assert np.array_equal(out[full_blocks], dense[full_blocks])


def test_upsample_constant():
    f = np.full((3, 3, 2), -1.5)
    out = upsample_bilinear(f, 7, 5)
    assert out.shape == (5, 7, 2)
    assert np.allclose(out, -1.5, atol=0, rtol=0)


def test_upsample_1x2_endpoints_and_monotonicity():
    f = np.array([[0.0, 1.0]])
    out = upsample_bilinear(f, 4, 1)[0]
    assert out[0] == 0.0 and out[-1] == 1.0
    assert np.all(np.diff(out) >= 0)


def test_upsample_bounds(rng):
    f = rng.normal(size=(4, 4, 2))
    out = upsample_bilinear(f, 8, 8)
    assert out.min() >= f.min() - 1e-12
    assert out.max() <= f.max() + 1e-12


def test_upsample_rejects_shrinking():
    with pytest.raises(ValueError):
        upsample_bilinear(np.zeros((4, 4)), 2, 4)


def test_build_pyramid_single_level_is_identity(rng):
    img = rng.random((8, 8, 3))
    mask = rng.random((8, 8)) < 0.3
    flow = rng.normal(size=(8, 8, 2)) * mask[:, :, None]
    levels = build_pyramid(img, mask, flow, 1)
    assert len(levels) == 1
    assert np.array_equal(levels[0].image, img)
    assert np.array_equal(levels[0].mask, mask)
    assert np.array_equal(levels[0].sparse_flow, flow)


def test_build_pyramid_384_four_levels():
    img = np.zeros((384, 384, 3))
    mask = np.ones((384, 384), dtype=bool)
    flow = np.zeros((384, 384, 2))
    levels = build_pyramid(img, mask, flow, 4)
    assert [lv.shape for lv in levels] == [(384, 384), (192, 192), (96, 96), (48, 48)]
    assert all(lv.mask.all() for lv in levels)  # full density stays full


def test_build_pyramid_dims_halve_and_coverage_grows(rng):
    img = rng.random((40, 56, 3))
    mask = rng.random((40, 56)) < 0.1
    flow = rng.normal(size=(40, 56, 2))
    levels = build_pyramid(img, mask, flow, 3)
    for fine, coarse in zip(levels, levels[1:]):
        assert coarse.shape == (fine.shape[0] // 2, fine.shape[1] // 2)
        assert mask_density(coarse.mask) >= mask_density(fine.mask)
        # off-mask flow is exactly zero on every level
        assert np.array_equal(coarse.sparse_flow[~coarse.mask],
                              np.zeros_like(coarse.sparse_flow[~coarse.mask]))


def test_build_pyramid_rejects_too_many_levels():
    with pytest.raises(PyramidError):
        build_pyramid(np.zeros((4, 4, 3)), np.ones((4, 4), dtype=bool),
                      np.zeros((4, 4, 2)), 4)

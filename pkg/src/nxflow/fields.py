"""Dense 2-D grids, binary masks, and the coarse-to-fine pyramid operators.

Fields are plain numpy arrays of shape (h, w) or (h, w, c), float64,
row-major with interleaved channels.  Masks are boolean (h, w) arrays.
The grid spacing is 1 on every pyramid level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PyramidError


def as_field(arr, channels=None):
    """Coerce to a float64 (h, w, c) array, validating shape and finiteness."""
    f = np.asarray(arr, dtype=np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    if f.ndim != 3:
        raise ValueError(f"field must be 2-D or 3-D, got shape {f.shape}")
    if channels is not None and f.shape[2] != channels:
        raise ValueError(f"expected {channels} channels, got {f.shape[2]}")
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    return np.ascontiguousarray(f)


def as_mask(arr):
    """Coerce to a boolean (h, w) mask."""
    m = np.asarray(arr)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool)


def mask_density(mask):
    return float(np.count_nonzero(mask)) / mask.size


@dataclass
class PyramidLevel:
    """Co-registered image, mask and sparse flow at one resolution.

    ``level_index`` 0 is the finest resolution.  ``sparse_flow`` is exactly
    zero wherever ``mask`` is false.
    """

    image: np.ndarray
    mask: np.ndarray
    sparse_flow: np.ndarray
    level_index: int

    @property
    def shape(self):
        return self.mask.shape


def _check_poolable(h, w):
    if h < 2 or w < 2:
        raise PyramidError(f"cannot pool a {h}x{w} field; both dims must be >= 2")


def avg_pool2(field):
    """Halve resolution by averaging non-overlapping 2x2 blocks.

    Output dims are floor(h/2) x floor(w/2); a trailing odd row/column is
    dropped so that every output pixel averages a full in-bounds block.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    _check_poolable(h, w)
    hh, ww = h // 2, w // 2
    f = f[: 2 * hh, : 2 * ww]
    if f.ndim == 2:
        return f.reshape(hh, 2, ww, 2).mean(axis=(1, 3))
    return f.reshape(hh, 2, ww, 2, f.shape[2]).mean(axis=(1, 3))


def max_pool2(mask):
    """Halve a mask: an output pixel is known iff any pixel of its 2x2 block is."""
    m = as_mask(mask)
    h, w = m.shape
    _check_poolable(h, w)
    hh, ww = h // 2, w // 2
    return m[: 2 * hh, : 2 * ww].reshape(hh, 2, ww, 2).any(axis=(1, 3))


def sparse_avg_pool2(flow, mask):
    """Average only the known pixels of each 2x2 block.

    Returns the pooled flow and the pooled (max-pooled) mask.  Blocks with
    no known pixel produce value 0 and stay unknown.
    """
    f = np.asarray(flow, dtype=np.float64)
    m = as_mask(mask)
    if f.shape[:2] != m.shape:
        raise ValueError(f"flow dims {f.shape[:2]} do not match mask dims {m.shape}")
    h, w = m.shape
    _check_poolable(h, w)
    hh, ww = h // 2, w // 2
    mc = m[: 2 * hh, : 2 * ww].reshape(hh, 2, ww, 2)
    counts = mc.sum(axis=(1, 3))
    fc = f[: 2 * hh, : 2 * ww] * m[: 2 * hh, : 2 * ww, None]
    sums = fc.reshape(hh, 2, ww, 2, f.shape[2]).sum(axis=(1, 3))
    out = sums / np.maximum(counts, 1)[:, :, None]
    pooled_mask = counts > 0
    out[~pooled_mask] = 0.0
    return out, pooled_mask


def upsample_bilinear(field, target_w, target_h):
    """Resize a field with bilinear interpolation (half-pixel center convention).

    Constant fields stay constant and every output value lies within the
    input's [min, max] range.  The target must not be smaller than the source.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    if target_w < w or target_h < h:
        raise ValueError(
            f"target {target_w}x{target_h} is smaller than source {w}x{h}"
        )
    squeeze = f.ndim == 2
    if squeeze:
        f = f[:, :, None]

    def _axis_coords(n_src, n_dst):
        c = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        c = np.clip(c, 0.0, n_src - 1.0)
        i0 = np.floor(c).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_src - 1)
        return i0, i1, c - i0

    y0, y1, fy = _axis_coords(h, target_h)
    x0, x1, fx = _axis_coords(w, target_w)
    rows = f[y0] * (1.0 - fy)[:, None, None] + f[y1] * fy[:, None, None]
    out = rows[:, x0] * (1.0 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    return out[:, :, 0] if squeeze else out


def build_pyramid(image, mask, sparse_flow, levels):
    """Build the coarse-to-fine pyramid: average-pooled image, max-pooled mask,
    known-pixel-averaged sparse flow.

    Returns a list of :class:`PyramidLevel`, index 0 holding the inputs at
    full resolution.  Off-mask flow values are forced to exact zero on every
    level.
    """
    img = as_field(image)
    m = as_mask(mask)
    flow = as_field(sparse_flow, channels=2)
    if img.shape[:2] != m.shape or flow.shape[:2] != m.shape:
        raise ValueError("image, mask and sparse flow must share dimensions")
    if levels < 1:
        raise PyramidError("a pyramid needs at least one level")
    h, w = m.shape
    min_dim = 2 ** (levels - 1)
    if h < min_dim or w < min_dim:
        raise PyramidError(
            f"{levels} levels need at least {min_dim}x{min_dim} pixels, got {w}x{h}"
        )

    flow = flow * m[:, :, None]
    out = [PyramidLevel(img, m, flow, 0)]
    for k in range(1, levels):
        prev = out[-1]
        img_k = avg_pool2(prev.image)
        flow_k, mask_k = sparse_avg_pool2(prev.sparse_flow, prev.mask)
        out.append(PyramidLevel(img_k, mask_k, flow_k, k))
    return out

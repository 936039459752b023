"""File codecs for flow fields, masks, images and zfield stacks.

Everything is little-endian and bit-exact on the representable domain:

* ``.flo``: float32 magic 202021.25, int32 width/height, interleaved (u, v)
  float32 rows.
* KITTI flow PNG: 16-bit RGB; u/v encoded as uint16 via value*64 + 2^15,
  third channel is the validity bit.
* zfield container: magic ``NXZF``, u32 version 1, u32 level count, then per
  level u32 width/height/channels (=5) and float32 payload, finest level
  first with dims halving toward the coarsest.
"""

from __future__ import annotations

import struct

import cv2
import numpy as np

from .errors import CorruptFileError, FormatError

FLO_MAGIC = 202021.25
ZFIELD_MAGIC = b"NXZF"
ZFIELD_VERSION = 1
ZFIELD_CHANNELS = 5

_KITTI_OFFSET = 2**15
_KITTI_SCALE = 64.0


def read_flo(path):
    """Read a .flo flow field as a float64 (h, w, 2) array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a .flo header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(FLO_MAGIC):
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    w, h = np.frombuffer(raw, dtype="<i4", count=2, offset=4)
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid dimensions {w}x{h}")
    expected = 12 + int(w) * int(h) * 2 * 4
    if len(raw) < expected:
        raise CorruptFileError(
            f"{path}: payload truncated ({len(raw)} bytes, expected {expected})"
        )
    data = np.frombuffer(raw, dtype="<f4", count=int(w) * int(h) * 2, offset=12)
    return data.reshape(int(h), int(w), 2).astype(np.float64)


def write_flo(path, flow):
    """Write a (h, w, 2) flow field as .flo (values stored as float32)."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (h, w, 2), got {flow.shape}")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array(FLO_MAGIC, dtype="<f4").tobytes())
        fh.write(struct.pack("<ii", w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_kitti_png(path):
    """Read a KITTI 16-bit flow PNG; returns (flow (h, w, 2), valid mask)."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FormatError(f"{path}: not a readable image")
    if img.dtype != np.uint16:
        raise FormatError(f"{path}: expected 16-bit PNG, got {img.dtype}")
    if img.ndim != 3 or img.shape[2] != 3:
        raise FormatError(f"{path}: expected 3 channels, got shape {img.shape}")
    bgr = img.astype(np.float64)
    # cv2 loads BGR, so channel 2 is u, channel 1 is v, channel 0 validity.
    flow = np.stack(
        [(bgr[:, :, 2] - _KITTI_OFFSET) / _KITTI_SCALE,
         (bgr[:, :, 1] - _KITTI_OFFSET) / _KITTI_SCALE], axis=2)
    mask = img[:, :, 0] > 0
    flow[~mask] = 0.0
    return flow, mask


def write_kitti_png(path, flow, mask):
    """Write flow + validity as a KITTI 16-bit PNG.

    Values are quantized to 1/64 px and clipped to the representable range;
    invalid pixels encode as zero flow with the validity bit cleared.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (h, w, 2), got {flow.shape}")
    m = np.asarray(mask, dtype=bool)
    enc = np.rint(flow * _KITTI_SCALE) + _KITTI_OFFSET
    enc = np.clip(enc, 0, 65535).astype(np.uint16)
    enc[~m] = _KITTI_OFFSET
    bgr = np.stack([m.astype(np.uint16), enc[:, :, 1], enc[:, :, 0]], axis=2)
    if not cv2.imwrite(str(path), bgr):
        raise IOError(f"could not write {path}")


def write_zfield(path, levels):
    """Write a stack of (h, w, 5) parameter fields, finest level first."""
    levels = [np.asarray(z) for z in levels]
    _check_zfield_stack(levels)
    with open(path, "wb") as fh:
        fh.write(ZFIELD_MAGIC)
        fh.write(struct.pack("<II", ZFIELD_VERSION, len(levels)))
        for z in levels:
            h, w, c = z.shape
            fh.write(struct.pack("<III", w, h, c))
            fh.write(np.ascontiguousarray(z, dtype="<f4").tobytes())


def read_zfield(path):
    """Read a zfield stack; returns a list of float64 (h, w, 5) arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != ZFIELD_MAGIC:
        raise FormatError(f"{path}: missing {ZFIELD_MAGIC!r} magic")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != ZFIELD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    offset = 12
    levels = []
    for _ in range(count):
        if offset + 12 > len(raw):
            raise CorruptFileError(f"{path}: truncated level header")
        w, h, c = struct.unpack_from("<III", raw, offset)
        offset += 12
        if c != ZFIELD_CHANNELS:
            raise FormatError(f"{path}: expected {ZFIELD_CHANNELS} channels, got {c}")
        if w < 1 or h < 1:
            raise FormatError(f"{path}: invalid level dims {w}x{h}")
        nbytes = w * h * c * 4
        if offset + nbytes > len(raw):
            raise CorruptFileError(f"{path}: truncated level payload")
        data = np.frombuffer(raw, dtype="<f4", count=w * h * c, offset=offset)
        levels.append(data.reshape(h, w, c).astype(np.float64))
        offset += nbytes
    _check_zfield_stack(levels, path=path)
    return levels


def _check_zfield_stack(levels, path="zfield"):
    if not levels:
        raise FormatError(f"{path}: no levels")
    for z in levels:
        if z.ndim != 3 or z.shape[2] != ZFIELD_CHANNELS:
            raise FormatError(
                f"{path}: each level must be (h, w, {ZFIELD_CHANNELS}), got {z.shape}"
            )
    for fine, coarse in zip(levels, levels[1:]):
        fh, fw = fine.shape[:2]
        ch, cw = coarse.shape[:2]
        if (ch, cw) != (fh // 2, fw // 2):
            raise FormatError(
                f"{path}: level dims must halve finest to coarsest, "
                f"got {fw}x{fh} -> {cw}x{ch}"
            )


def read_image(path):
    """Read an 8-bit image (PNG/PPM/...) as a float64 (h, w, 3) field in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise FormatError(f"{path}: not a readable image")
    return img[:, :, ::-1].astype(np.float64) / 255.0


def write_image(path, rgb):
    """Write an (h, w, 3) uint8 RGB image."""
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8 or rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected (h, w, 3) uint8 RGB data")
    if not cv2.imwrite(str(path), rgb[:, :, ::-1]):
        raise IOError(f"could not write {path}")


def read_mask_png(path):
    """Read an 8-bit mask image; nonzero pixels are known."""
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FormatError(f"{path}: not a readable image")
    return img > 0


def write_mask_png(path, mask):
    m = np.asarray(mask, dtype=bool)
    if not cv2.imwrite(str(path), (m * np.uint8(255))):
        raise IOError(f"could not write {path}")


def _make_colorwheel():
    """The standard 55-color flow wheel (hue transitions RY-YG-GC-CB-BM-MR)."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    for steps, up_ch, down_ch, full_ch in (
        (ry, 1, None, 0), (yg, None, 0, 1), (gc, 2, None, 1),
        (cb, None, 1, 2), (bm, 0, None, 2), (mr, None, 2, 0),
    ):
        ramp = np.arange(steps) / steps
        wheel[col : col + steps, full_ch] = 1.0
        if up_ch is not None:
            wheel[col : col + steps, up_ch] = ramp
        if down_ch is not None:
            wheel[col : col + steps, down_ch] = 1.0 - ramp
        col += steps
    return wheel


_COLORWHEEL = _make_colorwheel()


def flow_to_color(flow, max_mag=None):
    """Render a flow field on the standard color wheel as (h, w, 3) uint8.

    Direction maps to hue, magnitude to saturation (white at zero flow).
    Magnitudes are normalized by ``max_mag`` (default: the 99th percentile)
    and clamped at full saturation.
    """
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be (h, w, 2), got {flow.shape}")
    u = flow[:, :, 0]
    v = flow[:, :, 1]
    mag = np.hypot(u, v)
    if max_mag is None:
        max_mag = float(np.percentile(mag, 99.0))
    rad = np.clip(mag / max(max_mag, 1e-12), 0.0, 1.0)

    ncols = len(_COLORWHEEL)
    angle = np.arctan2(-v, -u) / np.pi  # in [-1, 1]
    fk = (angle + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    f = (fk - np.floor(fk))[:, :, None]
    col = (1.0 - f) * _COLORWHEEL[k0] + f * _COLORWHEEL[k1]
    col = 1.0 - rad[:, :, None] * (1.0 - col)
    return np.rint(col * 255.0).astype(np.uint8)

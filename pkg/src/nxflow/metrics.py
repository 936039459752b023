"""Endpoint-error and outlier metrics, mask generation, and density sweeps."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .fields import as_field, as_mask
from .pipeline import inpaint

SCOPE_ALL = "all"
SCOPE_UNKNOWN = "unknown"
SCOPE_HELDOUT = "heldout"

CSV_HEADER = "density,seed,epe,fl,n_pixels,scope"


@dataclass
class EvalReport:
    """One evaluation row: averaged endpoint error and outlier rate."""

    density: float
    seed: int
    epe: float
    fl_rate: float
    n_pixels: int
    scope: str

    def csv_row(self):
        return (f"{self.density!r},{self.seed},{self.epe!r},{self.fl_rate!r},"
                f"{self.n_pixels},{self.scope}")


def _error_norms(est, gt, scope_mask):
    est = as_field(est, channels=2)
    gt = as_field(gt, channels=2)
    if est.shape != gt.shape:
        raise ValueError(f"flow dims differ: {est.shape} vs {gt.shape}")
    diff = est - gt
    err = np.hypot(diff[:, :, 0], diff[:, :, 1])
    if scope_mask is not None:
        scope = as_mask(scope_mask)
        if scope.shape != err.shape:
            raise ValueError("scope mask dims do not match the flow")
        err = err[scope]
        gt_mag = np.hypot(gt[:, :, 0], gt[:, :, 1])[scope]
    else:
        err = err.ravel()
        gt_mag = np.hypot(gt[:, :, 0], gt[:, :, 1]).ravel()
    if err.size == 0:
        raise MetricError("metric undefined: evaluation scope is empty")
    return err, gt_mag


def epe(est, gt, scope_mask=None):
    """Mean Euclidean distance between estimated and true displacement."""
    err, _ = _error_norms(est, gt, scope_mask)
    return float(err.mean())


def fl_rate(est, gt, scope_mask=None, mode="and"):
    """Fraction of outlier pixels.

    mode="and": error > 3 px and also > 5% of the true magnitude (the KITTI
    convention).  mode="or": error > 3 px or at least 5% of the magnitude.
    """
    err, gt_mag = _error_norms(est, gt, scope_mask)
    if mode == "and":
        out = (err > 3.0) & (err > 0.05 * gt_mag)
    elif mode == "or":
        out = (err > 3.0) | (err >= 0.05 * gt_mag)
    else:
        raise ValueError(f"unknown outlier mode {mode!r}")
    return float(np.count_nonzero(out)) / err.size


def genmask(width, height, density, seed):
    """Random known-pixel mask with exactly floor(density * w * h) true bits.

    The known pixels are the top-k of seeded uniform draws, so the same seed
    always reproduces the same mask bit for bit.
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError("density must lie in [0, 1]")
    size = width * height
    k = int(np.floor(density * size))
    mask = np.zeros(size, dtype=bool)
    if k > 0:
        draws = np.random.default_rng(seed).random(size)
        mask[np.argpartition(draws, size - k)[size - k:]] = True
    return mask.reshape(height, width)


def genmask_subset(valid, density, seed):
    """Like :func:`genmask` but only pixels of ``valid`` may become known.

    The target count floor(density * w * h) is capped by the number of valid
    pixels.
    """
    valid = as_mask(valid)
    h, w = valid.shape
    k = min(int(np.floor(density * valid.size)), int(valid.sum()))
    mask = np.zeros(valid.size, dtype=bool)
    if k > 0:
        draws = np.random.default_rng(seed).random(valid.size)
        draws[~valid.ravel()] = -1.0  # never selected
        mask[np.argpartition(draws, valid.size - k)[valid.size - k:]] = True
    return mask.reshape(h, w)


def density_sweep(image, gt_flow, densities, cfg, seeds, scope=SCOPE_ALL,
                  fl_mode="and", max_workers=1):
    """Inpaint subsampled ground truth at each (density, seed) and score it.

    Returns one :class:`EvalReport` per combination, densities outer, seeds
    inner.  scope="all" scores every pixel; scope="unknown" only the pixels
    that were hidden from the solver.  Entries are independent, so
    ``max_workers`` > 1 may run them concurrently without changing any
    result.
    """
    if not densities:
        raise ValueError("need at least one density")
    img = as_field(image)
    gt = as_field(gt_flow, channels=2)
    h, w = gt.shape[:2]

    def _entry(density, seed):
        mask = genmask(w, h, density, seed)
        sparse = gt * mask[:, :, None]
        result = inpaint(img, mask, sparse, cfg)
        scope_mask = None if scope == SCOPE_ALL else ~mask
        return EvalReport(
            density=float(density),
            seed=int(seed),
            epe=epe(result.flow, gt, scope_mask),
            fl_rate=fl_rate(result.flow, gt, scope_mask, mode=fl_mode),
            n_pixels=int(h * w if scope_mask is None else scope_mask.sum()),
            scope=scope,
        )

    jobs = [(d, s) for d in densities for s in seeds]
    if max_workers <= 1:
        return [_entry(d, s) for d, s in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda job: _entry(*job), jobs))


def reports_to_csv(reports):
    """Serialize reports deterministically (UTF-8, LF line endings)."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for rep in reports:
        buf.write(rep.csv_row() + "\n")
    return buf.getvalue()

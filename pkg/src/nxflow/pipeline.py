"""Coarse-to-fine diffusion inpainting of sparse flow fields.

The pipeline pools image/mask/flow down a pyramid, derives a diffusion
tensor field per level (either image-driven or from supplied zfields),
solves coarsest-to-finest, and hands each result to the next finer level
through bilinear upsampling with the finer level's known pixels re-imposed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fields import as_field, as_mask, build_pyramid, upsample_bilinear
from .solver import SolverConfig, solve_level
from .tensors import DiffusivityParams, TensorField, eed_tensor, zfield_to_tensor

MODE_EED = "eed"
MODE_ZFIELD = "zfield"

# Coarse-to-fine iteration budget used with one extrapolation cycle per level.
DEFAULT_ITERATIONS = (5, 15, 30, 45)


@dataclass
class PipelineConfig:
    """Settings of a coarse-to-fine inpainting run.

    ``iterations`` and ``lambdas`` are ordered coarse to fine and must have
    one entry per pyramid level.  ``alpha`` is the constant discretization
    weight of the image-driven mode (the zfield mode carries per-pixel
    weights in the files).
    """

    levels: int = 4
    mode: str = MODE_EED
    iterations: tuple[int, ...] = DEFAULT_ITERATIONS
    lambdas: tuple[float, ...] = (1e-4,) * 4
    rho: float = 1.0
    alpha: float = 0.3
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(stop_mode="residual"))

    def __post_init__(self):
        if self.levels < 1:
            raise ConfigError("levels must be >= 1")
        if self.mode not in (MODE_EED, MODE_ZFIELD):
            raise ConfigError(f"unknown pipeline mode {self.mode!r}")
        if len(self.iterations) != self.levels:
            raise ConfigError(
                f"need {self.levels} iteration counts, got {len(self.iterations)}"
            )
        if len(self.lambdas) != self.levels:
            raise ConfigError(
                f"need {self.levels} contrast parameters, got {len(self.lambdas)}"
            )
        if not 0.0 <= self.alpha <= 0.5:
            raise ConfigError("alpha must lie in [0, 1/2]")

    @classmethod
    def for_eed(cls, levels=4, lam=1e-4, rho=1.0, alpha=0.3, tol=1e-6,
                tau=0.25, cycle_len=None, max_steps=200_000):
        """Image-driven mode: converge each level to a relative residual."""
        solver = SolverConfig(tau=tau, fsi_cycle_len=cycle_len,
                              stop_mode="residual", residual_tol=tol,
                              max_steps=max_steps)
        return cls(levels=levels, mode=MODE_EED,
                   iterations=_spread(DEFAULT_ITERATIONS, levels),
                   lambdas=(lam,) * levels, rho=rho, alpha=alpha, solver=solver)

    @classmethod
    def for_zfield(cls, levels=4, lambdas=None, tau=0.25, iterations=None):
        """Zfield mode: fixed iteration budget, one cycle per level."""
        iters = tuple(iterations) if iterations else _spread(DEFAULT_ITERATIONS, levels)
        lams = tuple(lambdas) if lambdas else (1.0,) * levels
        solver = SolverConfig(tau=tau, stop_mode="fixed")
        return cls(levels=levels, mode=MODE_ZFIELD, iterations=iters,
                   lambdas=lams, alpha=0.25, solver=solver)


def _spread(values, levels):
    """Trim or extend a coarse-to-fine default list to the level count."""
    if levels <= len(values):
        return tuple(values[-levels:])
    return (values[0],) * (levels - len(values)) + tuple(values)


@dataclass
class InpaintResult:
    flow: np.ndarray
    converged: bool = True
    applications: int = 0
    empty_mask: bool = False


def _level_tensors(cfg, pyramid, z_levels):
    """One tensor field per pyramid level (indexed like the pyramid)."""
    n = len(pyramid)
    tensors = []
    for level in pyramid:
        lam = cfg.lambdas[n - 1 - level.level_index]  # lambdas are coarse->fine
        if cfg.mode == MODE_EED:
            params = DiffusivityParams(contrast=lam, rho=cfg.rho)
            tensors.append(eed_tensor(level.image, params, cfg.alpha))
        else:
            z = z_levels[level.level_index]
            if z.shape[:2] != level.shape:
                raise ConfigError(
                    f"zfield level {level.level_index} has dims {z.shape[1::-1]}, "
                    f"expected {level.shape[::-1]}"
                )
            tensors.append(zfield_to_tensor(z, lam))
    return tensors


def _solve_pyramid(pyramid, tensors, cfg):
    n = len(pyramid)
    u = None
    applications = 0
    converged = True
    for level in reversed(pyramid):  # coarsest first
        if u is None:
            init = level.sparse_flow  # zero off-mask: the diffusion start state
        else:
            h, w = level.shape
            init = upsample_bilinear(u, w, h)
            init[level.mask] = level.sparse_flow[level.mask]
        iters = cfg.iterations[n - 1 - level.level_index]
        result = solve_level(level, tensors[level.level_index], init,
                             cfg.solver, iterations=iters)
        u = result.flow
        applications += result.applications
        converged = converged and result.converged
    return u, applications, converged


def inpaint(image, mask, sparse_flow, cfg, z_levels=None):
    """Reconstruct a dense flow field from sparse samples.

    ``z_levels`` (finest first, one 5-channel field per pyramid level) is
    required in zfield mode and ignored otherwise.  The output equals
    ``sparse_flow`` exactly on the mask; an empty mask yields the all-zero
    field with ``empty_mask`` flagged.
    """
    img = as_field(image)
    m = as_mask(mask)
    flow = as_field(sparse_flow, channels=2)
    if cfg.mode == MODE_ZFIELD:
        if z_levels is None or len(z_levels) != cfg.levels:
            raise ConfigError(
                f"zfield mode needs {cfg.levels} zfield levels, got "
                f"{0 if z_levels is None else len(z_levels)}"
            )
    if not m.any():
        return InpaintResult(flow=np.zeros_like(flow), empty_mask=True)

    pyramid = build_pyramid(img, m, flow, cfg.levels)
    tensors = _level_tensors(cfg, pyramid, z_levels)
    u, applications, converged = _solve_pyramid(pyramid, tensors, cfg)
    return InpaintResult(flow=u, converged=converged, applications=applications)


def inpaint_homogeneous(mask, sparse_flow, cfg):
    """Baseline: the same pipeline with the unit diffusion tensor everywhere."""
    m = as_mask(mask)
    flow = as_field(sparse_flow, channels=2)
    if not m.any():
        return InpaintResult(flow=np.zeros_like(flow), empty_mask=True)
    image = np.zeros(m.shape + (3,))
    pyramid = build_pyramid(image, m, flow, cfg.levels)
    tensors = [TensorField.identity(*lv.shape, alpha=cfg.alpha) for lv in pyramid]
    u, applications, converged = _solve_pyramid(pyramid, tensors, cfg)
    return InpaintResult(flow=u, converged=converged, applications=applications)

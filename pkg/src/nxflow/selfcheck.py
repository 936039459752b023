"""Numeric self-checks of the diffusion operator on random instances.

These are the built-in oracle suites: agreement of the fused stencil with
the kernel decomposition, adjoint symmetry, mean conservation under
mask-free stepping, energy dissipation, and the explicit-step stability
probe.  All randomness is seeded, so a given invocation is reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .solver import DiffusionStencil, divergence_decomposed, divergence_stencil
from .tensors import TensorField, zfield_to_tensor

CHECK_NAMES = ("equivalence", "adjoint", "conservation", "dissipation", "stability")


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    threshold: float
    detail: str = ""

    def json_line(self):
        return json.dumps(
            {"check": self.name, "passed": self.passed,
             "max_error": self.max_error, "threshold": self.threshold},
            sort_keys=True)

    def human_line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return (f"[{status}] {self.name}: max_error={self.max_error:.3e} "
                f"threshold={self.threshold:.1e}{extra}")


def random_tensor_field(rng, h, w, include_isotropic=False):
    """A random valid tensor field, produced through the zfield constructor
    (valid by construction) with occasional constant-weight variants."""
    if include_isotropic and rng.random() < 0.25:
        return TensorField.identity(h, w, alpha=float(rng.uniform(0, 0.5)))
    z = rng.normal(scale=2.0, size=(h, w, 5))
    return zfield_to_tensor(z, contrast=float(rng.uniform(0.2, 2.0)))


def _rel_max_err(x, y):
    scale = max(float(np.abs(y).max()), 1e-30)
    return float(np.abs(x - y).max()) / scale


def check_equivalence(seed=0, instances=100, size=32, threshold=1e-6):
    """Fused stencil and kernel decomposition agree on random instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        t = random_tensor_field(rng, size, size, include_isotropic=True)
        u = rng.normal(size=(size, size, 2))
        worst = max(worst, _rel_max_err(divergence_stencil(u, t),
                                        divergence_decomposed(u, t)))
    return CheckResult("equivalence", worst < threshold, worst, threshold,
                       f"{instances} instances of {size}x{size}")


def check_adjoint(seed=1, instances=50, size=24, threshold=1e-6):
    """<A(u), w> == <u, A(w)> for the divergence operator."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        t = random_tensor_field(rng, size, size)
        stencil = DiffusionStencil(t)
        u = rng.normal(size=(size, size, 2))
        w = rng.normal(size=(size, size, 2))
        left = float(np.vdot(stencil.apply(u), w))
        right = float(np.vdot(u, stencil.apply(w)))
        worst = max(worst, abs(left - right) / max(abs(left), abs(right), 1e-30))
    return CheckResult("adjoint", worst < threshold, worst, threshold)


def check_conservation(seed=2, steps=1000, size=48, tau=0.25, threshold=1e-8):
    """Per-channel mean is preserved by mask-free explicit stepping."""
    rng = np.random.default_rng(seed)
    t = random_tensor_field(rng, size, size)
    stencil = DiffusionStencil(t)
    u = rng.normal(size=(size, size, 2))
    mean0 = u.mean(axis=(0, 1))
    div = np.empty_like(u)
    for _ in range(steps):
        stencil.apply(u, out=div)
        u += tau * div
    drift = np.abs(u.mean(axis=(0, 1)) - mean0) / np.maximum(np.abs(mean0), 1e-12)
    worst = float(drift.max())
    return CheckResult("conservation", worst < threshold, worst, threshold,
                       f"{steps} steps")


def check_dissipation(seed=3, instances=100, size=32, threshold=1e-9):
    """<u, A(u)> <= 0 (up to rounding): diffusion never creates energy."""
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(instances):
        t = random_tensor_field(rng, size, size, include_isotropic=True)
        u = rng.normal(size=(size, size, 2))
        worst = max(worst, float(np.vdot(u, divergence_stencil(u, t))))
    return CheckResult("dissipation", worst <= threshold, worst, threshold,
                       f"{instances} instances; value is max <u, A(u)>")


def check_stability(tau=0.25, seed=4, instances=25, size=32, threshold=1e-12):
    """Mask-free explicit steps never grow the L2 norm at the configured tau."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        if k == 0:
            t = TensorField.identity(size, size, alpha=0.0)  # worst-case spectrum
        else:
            t = random_tensor_field(rng, size, size, include_isotropic=True)
        u = rng.normal(size=(size, size, 2))
        stepped = u + tau * divergence_stencil(u, t)
        growth = float(np.linalg.norm(stepped) / max(np.linalg.norm(u), 1e-30)) - 1.0
        worst = max(worst, growth)
    return CheckResult("stability", worst <= threshold, worst, threshold,
                       f"tau={tau:g}; value is max norm growth per step")


def run_selfcheck(checks=None, tau=0.25, seed=0):
    """Run the requested checks (default: all) and return their results."""
    selected = CHECK_NAMES if not checks else tuple(checks)
    results = []
    for name in selected:
        if name == "equivalence":
            results.append(check_equivalence(seed=seed))
        elif name == "adjoint":
            results.append(check_adjoint(seed=seed + 1))
        elif name == "conservation":
            results.append(check_conservation(seed=seed + 2, tau=min(tau, 0.25)))
        elif name == "dissipation":
            results.append(check_dissipation(seed=seed + 3))
        elif name == "stability":
            results.append(check_stability(tau=tau, seed=seed + 4))
        else:
            raise ValueError(f"unknown check {name!r}")
    return results

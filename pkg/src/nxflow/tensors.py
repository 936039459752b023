"""Per-pixel diffusion tensors and discretization weights.

Two producers are supported: the classic image-driven route (structure
tensor -> eigendecomposition -> Perona-Malik damping of the dominant
direction) and the externally supplied 5-channel parameter field ("zfield")
that encodes per-pixel discretization weight and tensor eigensystem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d
from scipy.special import expit

from .fields import as_field

# Below this, the direction channels of a zfield are considered degenerate
# and the eigenbasis falls back to the coordinate axes.
DIRECTION_EPS = 1e-8


@dataclass
class DiffusivityParams:
    """Contrast parameter of the Perona-Malik diffusivity and the Gaussian
    pre-smoothing scale (in pixels) used for the structure tensor."""

    contrast: float
    rho: float = 1.0

    def __post_init__(self):
        if self.contrast <= 0:
            raise ValueError("contrast parameter must be positive")
        if self.rho < 0:
            raise ValueError("smoothing scale must be non-negative")


@dataclass
class StructureTensorField:
    """Entries of the per-pixel symmetric 2x2 structure tensor."""

    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray


@dataclass
class EigenPair:
    """Eigenvalues (mu1 >= mu2) and orthonormal eigenvectors of a symmetric
    2x2 matrix field."""

    mu1: np.ndarray
    mu2: np.ndarray
    v1x: np.ndarray
    v1y: np.ndarray
    v2x: np.ndarray
    v2y: np.ndarray


@dataclass
class TensorField:
    """Per-pixel diffusion tensor [[a, b], [b, c]] plus the discretization
    weights of the 3x3 divergence stencil.

    Validity: the tensor is positive semidefinite with eigenvalues <= 1,
    alpha lies in [0, 1/2] and |beta| <= 1 - 2*alpha at every pixel.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @property
    def shape(self):
        return self.a.shape

    @classmethod
    def identity(cls, h, w, alpha=0.0):
        """Unit tensor everywhere (homogeneous diffusion)."""
        one = np.ones((h, w))
        zero = np.zeros((h, w))
        return cls(a=one.copy(), b=zero.copy(), c=one.copy(),
                   alpha=np.full((h, w), float(alpha)), beta=zero.copy())

    def validate(self, atol=1e-9):
        """Raise ValueError if any per-pixel invariant is violated."""
        tr = self.a + self.c
        det = self.a * self.c - self.b * self.b
        disc = np.sqrt(np.maximum(0.25 * (self.a - self.c) ** 2 + self.b**2, 0.0))
        lo = 0.5 * tr - disc
        hi = 0.5 * tr + disc
        problems = []
        if lo.min() < -atol:
            problems.append(f"negative eigenvalue {lo.min():.3e}")
        if det.min() < -atol:
            problems.append(f"negative determinant {det.min():.3e}")
        if hi.max() > 1.0 + atol:
            problems.append(f"eigenvalue above 1: {hi.max():.6f}")
        if self.alpha.min() < -atol or self.alpha.max() > 0.5 + atol:
            problems.append("alpha outside [0, 1/2]")
        slack = 1.0 - 2.0 * self.alpha - np.abs(self.beta)
        if slack.min() < -atol:
            problems.append(f"|beta| exceeds 1-2*alpha by {-slack.min():.3e}")
        if problems:
            raise ValueError("invalid tensor field: " + "; ".join(problems))


def gaussian_smooth(field, rho):
    """Separable Gaussian convolution with reflecting boundaries.

    The kernel is truncated at radius ceil(3*rho) and renormalized to sum 1,
    so constant fields are reproduced exactly.  rho = 0 is the identity.
    """
    if rho < 0:
        raise ValueError("smoothing scale must be non-negative")
    f = np.asarray(field, dtype=np.float64)
    if rho == 0:
        return f.copy()
    radius = int(np.ceil(3.0 * rho))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * rho * rho))
    kernel /= kernel.sum()
    out = correlate1d(f, kernel, axis=0, mode="reflect")
    out = correlate1d(out, kernel, axis=1, mode="reflect")
    return out


def _gradients(channel):
    # Central differences inside, one-sided at the borders; axes with a
    # single sample have no variation.
    h, w = channel.shape
    gx = np.gradient(channel, axis=1, edge_order=1) if w > 1 else np.zeros_like(channel)
    gy = np.gradient(channel, axis=0, edge_order=1) if h > 1 else np.zeros_like(channel)
    return gx, gy


def structure_tensor(image, rho):
    """Channel-summed outer product of smoothed image gradients."""
    img = as_field(image)
    smooth = gaussian_smooth(img, rho)
    h, w = img.shape[:2]
    s11 = np.zeros((h, w))
    s12 = np.zeros((h, w))
    s22 = np.zeros((h, w))
    for ch in range(img.shape[2]):
        gx, gy = _gradients(smooth[:, :, ch])
        s11 += gx * gx
        s12 += gx * gy
        s22 += gy * gy
    return StructureTensorField(s11, s12, s22)


def eigen2x2(s11, s12, s22):
    """Closed-form eigendecomposition of symmetric 2x2 matrices.

    Works elementwise on arrays (or scalars).  Returns mu1 >= mu2 and unit
    eigenvectors; isotropic pixels fall back to the coordinate axes.
    """
    s11 = np.asarray(s11, dtype=np.float64)
    s12 = np.asarray(s12, dtype=np.float64)
    s22 = np.asarray(s22, dtype=np.float64)
    half_tr = 0.5 * (s11 + s22)
    half_diff = 0.5 * (s11 - s22)
    disc = np.sqrt(half_diff * half_diff + s12 * s12)
    mu1 = half_tr + disc
    mu2 = half_tr - disc

    # Two parallel candidates for the dominant eigenvector; pick the one
    # further from cancellation.
    cand1 = (half_diff + disc, s12)
    cand2 = (s12, disc - half_diff)
    use1 = half_diff >= 0
    vx = np.where(use1, cand1[0], cand2[0])
    vy = np.where(use1, cand1[1], cand2[1])
    norm = np.hypot(vx, vy)
    degenerate = norm < np.finfo(np.float64).tiny ** 0.5
    safe = np.where(degenerate, 1.0, norm)
    v1x = np.where(degenerate, 1.0, vx / safe)
    v1y = np.where(degenerate, 0.0, vy / safe)

    # Deterministic sign: first nonzero component positive.
    flip = (v1x < 0) | ((v1x == 0) & (v1y < 0))
    sign = np.where(flip, -1.0, 1.0)
    v1x = v1x * sign
    v1y = v1y * sign
    return EigenPair(mu1=mu1, mu2=mu2, v1x=v1x, v1y=v1y, v2x=-v1y, v2y=v1x)


def perona_malik(x, contrast):
    """Perona-Malik diffusivity 1 / (1 + (x/contrast)^2), in (0, 1]."""
    if contrast <= 0:
        raise ValueError("contrast parameter must be positive")
    x = np.asarray(x, dtype=np.float64)
    out = 1.0 / (1.0 + (x * x) / (contrast * contrast))
    return out if out.ndim else float(out)


def _tensor_from_eigen(mu1, mu2, v1x, v1y, v2x, v2y):
    a = mu1 * v1x * v1x + mu2 * v2x * v2x
    b = mu1 * v1x * v1y + mu2 * v2x * v2y
    c = mu1 * v1y * v1y + mu2 * v2y * v2y
    return a, b, c


def eed_tensor(image, params, alpha_const):
    """Edge-enhancing diffusion tensor from the reference image.

    Propagation across the dominant image-contrast direction is damped by the
    Perona-Malik diffusivity of the larger structure-tensor eigenvalue; the
    perpendicular direction keeps full strength 1.  The discretization weight
    alpha is constant; beta follows (1 - 2*alpha) * sign(b).
    """
    if not 0.0 <= alpha_const <= 0.5:
        raise ValueError("alpha must lie in [0, 1/2]")
    st = structure_tensor(image, params.rho)
    eig = eigen2x2(st.s11, st.s12, st.s22)
    mu1 = perona_malik(eig.mu1, params.contrast)
    a, b, c = _tensor_from_eigen(mu1, 1.0, eig.v1x, eig.v1y, eig.v2x, eig.v2y)
    alpha = np.full(a.shape, float(alpha_const))
    beta = (1.0 - 2.0 * alpha) * np.sign(b)
    return TensorField(a=a, b=b, c=c, alpha=alpha, beta=beta)


def zfield_to_tensor(zfield, contrast):
    """Diffusion tensor and discretization weights from a 5-channel field.

    Channel 0 sets alpha = sigmoid(.)/2; channels 1-2 give both eigenvalues
    through the Perona-Malik diffusivity (unlike the image-driven route, the
    damping applies to both directions); channels 3-4 span the dominant
    eigenvector, normalized.  Near-zero direction vectors fall back to the
    coordinate axes.  beta = (1 - 2*alpha) * sign(b).
    """
    z = as_field(zfield, channels=5)
    alpha = 0.5 * expit(z[:, :, 0])
    mu1 = perona_malik(z[:, :, 1], contrast)
    mu2 = perona_malik(z[:, :, 2], contrast)
    zx = z[:, :, 3]
    zy = z[:, :, 4]
    norm = np.hypot(zx, zy)
    degenerate = norm < DIRECTION_EPS
    safe = np.where(degenerate, 1.0, norm)
    v1x = np.where(degenerate, 1.0, zx / safe)
    v1y = np.where(degenerate, 0.0, zy / safe)
    a, b, c = _tensor_from_eigen(mu1, mu2, v1x, v1y, -v1y, v1x)
    beta = (1.0 - 2.0 * alpha) * np.sign(b)
    return TensorField(a=a, b=b, c=c, alpha=alpha, beta=beta)

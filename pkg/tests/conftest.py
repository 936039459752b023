import numpy as np
import pytest

from nxflow.tensors import TensorField, zfield_to_tensor


def make_edge_fixture(n=96):
    """Synthetic scene with a vertical contrast edge at n/2 and a
    piecewise-affine flow whose discontinuity sits on the same edge."""
    y, x = np.mgrid[0:n, 0:n].astype(float)
    left = x < n // 2
    image = np.where(left[:, :, None], 0.25, 0.75) * np.ones((n, n, 3))
    image[:, :, 1] = np.where(left, 0.3, 0.7) + 0.1 * y / n
    u = np.where(left, 1.0 + 1.0 * x / n + 0.5 * y / n, -1.0 - 0.5 * x / n + 0.2 * y / n)
    v = np.where(left, 0.5 - 1.0 * y / n, -0.5 + 1.0 * x / n)
    return image, np.stack([u, v], axis=2)


def random_valid_tensors(rng, h, w, isotropic_fraction=0.0):
    """Random tensor field that satisfies all invariants by construction."""
    if isotropic_fraction and rng.random() < isotropic_fraction:
        return TensorField.identity(h, w, alpha=float(rng.uniform(0, 0.5)))
    z = rng.normal(scale=2.0, size=(h, w, 5))
    return zfield_to_tensor(z, contrast=float(rng.uniform(0.2, 2.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)

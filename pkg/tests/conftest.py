import numpy as np
import pytest

from stentmech.mesh import SynthGeometry, build_slice_mesh


def circle(radius: float, n: int = 64, center=(0.0, 0.0)) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)])


@pytest.fixture
def annulus_mesh():
    """Concentric r=1.5 / 2.0 slice with default layer thicknesses."""
    return build_slice_mesh(circle(1.5), circle(2.0), t_media=0.3, t_adv=0.3,
                            n_sectors=8, rings=(1, 1, 1))


@pytest.fixture
def lame_mesh():
    """Homogeneous thick cylinder a=1.5, b=3.0 at the benchmark resolution."""
    geom = SynthGeometry(lumen_radius=1.5, intima_thickness=2.34 - 1.5)
    lumen, outer = geom.contours()
    return build_slice_mesh(lumen, outer, t_media=0.32, t_adv=0.34,
                            n_sectors=64, rings=(4, 4, 4))


def random_plane_strain_states(n: int, seed: int, j_range=(0.7, 1.5)):
    """Random in-plane gradients with controlled determinant plus random
    circumferential directions."""
    rng = np.random.default_rng(seed)
    F2 = np.eye(2) + 0.4 * rng.standard_normal((n, 2, 2))
    det = F2[:, 0, 0] * F2[:, 1, 1] - F2[:, 0, 1] * F2[:, 1, 0]
    flip = det <= 0.05
    F2[flip] = np.eye(2) + 0.1 * rng.standard_normal((int(flip.sum()), 2, 2))
    det = F2[:, 0, 0] * F2[:, 1, 1] - F2[:, 0, 1] * F2[:, 1, 0]
    target = rng.uniform(*j_range, size=n)
    F2 *= np.sqrt(target / det)[:, None, None]
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    circ = np.column_stack([np.cos(theta), np.sin(theta)])
    return F2, circ

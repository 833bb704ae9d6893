import numpy as np
import pytest

from weakfp.data_model import DomainConfig, Grid, SnapshotSet


def heat_field(grid: Grid, D, C0=np.eye(2) * 100.0, center=(87.5, 87.5)) -> np.ndarray:
    """Analytic anisotropic Gaussian with covariance ``C0 + 2 t D``."""
    D = np.asarray(D, dtype=float)
    X, Y = grid.mesh()
    out = np.empty(grid.shape)
    for k, t in enumerate(grid.t):
        C = C0 + 2 * t * D
        P = np.linalg.inv(C)
        dx, dy = X - center[0], Y - center[1]
        q = P[0, 0] * dx * dx + 2 * P[0, 1] * dx * dy + P[1, 1] * dy * dy
        out[:, :, k] = np.exp(-q / 2) / (2 * np.pi * np.sqrt(np.linalg.det(C)))
    return out


def random_snapshots(seed=0, times=(0.0, 1.0, 2.0, 4.0), n=30, spread=10.0) -> SnapshotSet:
    rng = np.random.default_rng(seed)
    pos = tuple(np.clip(87.5 + spread * rng.standard_normal((n, 2)), 0, 175) for _ in times)
    return SnapshotSet(np.array(times), pos, DomainConfig())


@pytest.fixture
def default_grid() -> Grid:
    return Grid.from_domain(DomainConfig(), 0.0, 48.0)

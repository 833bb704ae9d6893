"""
Dimensionless groups and the Boltzmann limit
============================================

A learned model is summarized by Pi_V (potential vs diffusion) and Pi_K
(interaction vs diffusion). With a strong potential the population should
settle into exp(-Pi_V V). We check that with a long simulation.
"""

import numpy as np

from weakfp.data_model import DomainConfig, Grid
from weakfp.nondim import (ScaleSet, boltzmann_stationary, diffusion_centric_A, pi_groups,
                           potential_gradient, spatial_l2)
from weakfp.simulate import SimConfig, sigma_from_diffusion, simulate
from weakfp.weakform import env_potential

L, D, amp = 175.0, 8.0, 24.0
modes = {(2, 2): amp}
grid = Grid.from_domain(DomainConfig(), 0.0, 300.0)
V_c = spatial_l2(*potential_gradient(modes, grid, L, L), grid)

t_c = 48.0
scales = ScaleSet(diffusion_centric_A(D * np.eye(2), t_c), t_c, 1e-4, V_c, 0.0)
groups = pi_groups(scales, D * np.eye(2))
print(f"V_c = {V_c:.2f}   Pi_V = {groups.iso_pi_v:.2f}   Pi_D =\n{np.round(groups.pi_d, 6)}")

# dimensional Boltzmann state exp(-V / D) on the grid
V = env_potential(modes, grid, L, L)
u_star = boltzmann_stationary(V, 1.0 / D, grid)

rng = np.random.default_rng(8)
cfg = SimConfig(n=5000, sigma=sigma_from_diffusion(D * np.eye(2)), v_weights=modes,
                times=(0.0, 100.0, 200.0, 300.0), dt=0.5,
                initial=rng.uniform(0, L, (5000, 2)), seed=8)
final = simulate(cfg).positions[-1]
hist, _, _ = np.histogram2d(final[:, 0], final[:, 1], bins=[40, 40], range=[[0, L], [0, L]])
coarse = u_star[:80, :80].reshape(40, 2, 40, 2).mean(axis=(1, 3))
r = np.corrcoef(hist.ravel(), coarse.ravel())[0, 1]
print(f"histogram vs Boltzmann state: Pearson r = {r:.3f}")

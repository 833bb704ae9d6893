"""
A gallery of dispersal regimes
==============================

Hold the diffusion fixed and dial the two dimensionless groups. Repulsive
interactions spread insects apart; a strong potential herds them into
wells. Nearest-neighbour spacing and the fraction of insects near a well
bottom summarize each run.
"""

import numpy as np
from scipy.spatial import cKDTree

from weakfp.simulate import SimConfig, regime_gallery

base = SimConfig(n=400, v_weights={(2, 2): 1.0}, k_weights={1: 1.0},
                 times=(0.0, 8.0, 16.0, 24.0), dt=0.4, init_spread=10.0, seed=5)
L = base.domain.length_x

print(" Pi_V   Pi_K   median NN (cm)   near well (%)")
for pv, pk, snaps in regime_gallery([0.0, 20.0], [0.0, 200.0], base):
    p = snaps.positions[-1]
    nn = np.median(cKDTree(p).query(p, k=2)[0][:, 1])
    v = np.cos(4 * np.pi * p[:, 0] / L) * np.cos(4 * np.pi * p[:, 1] / L)
    print(f"{pv:5.0f}  {pk:5.0f}   {nn:10.2f}        {100 * np.mean(v < -0.8):6.1f}")

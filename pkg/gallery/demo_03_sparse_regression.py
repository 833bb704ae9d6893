"""
Thresholded least squares on a planted system
=============================================

Ten candidate columns, two of them active. The sweep scores every
threshold by the normalized loss and keeps the sparsest good fit.
"""

import numpy as np

from weakfp.regression import default_lambdas, fit_ols, mstls_sweep

rng = np.random.default_rng(0)
G = rng.standard_normal((300, 10))
b = G[:, [2, 5]] @ np.array([3.0, -1.0]) + 0.05 * rng.standard_normal(300)
labels = [f"c{j}" for j in range(10)]

model = mstls_sweep(G, b, default_lambdas(), labels=labels, n_particles=1000)
print("selected:", model.selected(), " lambda =", f"{model.lam:.3g}")
print("weights:", np.round(model.weights[model.support], 4))
print("two sigma:", np.round(2 * model.std_errors[model.support], 4))

# loss along the threshold grid: flat while the true support survives
for lam, loss in list(zip(model.lambdas, model.losses))[::7]:
    print(f"  lambda={lam:8.2e}  loss={loss:.4f}")

dense = fit_ols(G, b, labels=labels, n_particles=1000)
print("AIC sparse - dense:", round(model.aic - dense.aic, 2))

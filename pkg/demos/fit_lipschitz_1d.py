"""Fitting a noisy 1-d Lipschitz function with the three main variants.

The max-form class handles convex regions well, its sign-flipped twin
handles concave ones, and the symmetric difference-of-two-components class
handles both.  The refinement stage is where most of the accuracy comes
from, so the initial-stage error is printed alongside.
"""

import numpy as np

from dcreg import (COMPLEMENT, Dataset, FitConfig, LINF, SINGLE, SYMMETRIC,
                   eval_model, fit_dcf, fvu)

rng = np.random.default_rng(0)
n = 1000
X = rng.uniform(0.0, 6.0, (n, 1))
y = X[:, 0] * np.sin(X[:, 0]) + 0.1 * rng.standard_normal(n)
train = Dataset(X, y)

grid = np.linspace(0.0, 6.0, 2000)[:, None]
truth = grid[:, 0] * np.sin(grid[:, 0])

print(f"n={n}, noise 0.1, target x*sin(x) on [0, 6]\n")
print(f"{'variant':12s} {'K':>3s} {'pieces':>6s} {'FVU initial':>12s} "
      f"{'FVU final':>10s} {'slope stat':>10s}")
for variant in (SINGLE, COMPLEMENT, SYMMETRIC):
    result = fit_dcf(train, FitConfig(variant=variant, kind=LINF, seed=1))
    final = result.final_model
    pieces = sum(c.n_pieces for c in final.components())
    fvu_init = fvu(eval_model(result.initial_model, grid), truth)
    fvu_final = fvu(eval_model(final, grid), truth)
    print(f"{variant:12s} {result.partition.n_centers:3d} {pieces:6d} "
          f"{fvu_init:12.4f} {fvu_final:10.4f} {result.lip_chain[2]:10.3f}")

print("\nThe initial estimator only ties the pieces together at the centers;")
print("local refinement is what makes the fit competitive.")

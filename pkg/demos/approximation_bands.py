"""Closed-form approximation bands on two 1-d benchmark functions.

Builds the finite-cover lower/upper envelopes (norm feature), the quadratic
and gradient-based variants, prints their uniform errors against the proven
bands, and drops the plot-ready CSVs next to this script.
"""

from pathlib import Path

import numpy as np

from dcreg import LINF, eval_max, fvu, grid_cover
from dcreg.approx import (eval_min_convex, mcshane_lower, min_convex_upper,
                          quad_lower, smooth_lower)
from dcreg.experiment import demo_figures
from dcreg.targets import empirical_lipschitz, pw_linear_target, xsinx_target

grid = np.linspace(0.0, 6.0, 1000)[:, None]
cover = grid_cover(0.0, 6.0, 10)   # 10 equidistant centers, radius 1/3
print(f"cover: {cover.centers.shape[0]} centers on [0, 6], radius {cover.eps:.4f}\n")

for name, target in (("x*sin(x)", xsinx_target()), ("three spikes", pw_linear_target())):
    f = target(grid)
    lam = empirical_lipschitz(f, grid) * 1.01
    print(f"{name}: sampled Lipschitz constant {lam:.3f}")

    lower = mcshane_lower(target, cover, LINF)
    upper = min_convex_upper(target, cover, LINF)
    fhat = eval_max(lower, grid)
    fcheck = eval_min_convex(upper, grid)
    print(f"  norm-feature envelope : max|f - fhat| = {np.max(f - fhat):.4f}"
          f"  (band {2 * lam * cover.eps:.4f}), FVU = {fvu(fhat, f):.4f}")
    print(f"  min-convex companion  : max|fcheck - f| = {np.max(fcheck - f):.4f},"
          f" FVU = {fvu(fcheck, f):.4f}")

    f0 = quad_lower(target, cover)(grid)
    print(f"  quadratic envelope    : error in "
          f"[{np.min(f - f0):.4f}, {np.max(f - f0):.4f}]"
          f"  (band [{-lam * cover.eps / 4:.4f}, {2 * lam * cover.eps:.4f}])")

    if target.smoothness is not None:
        f1 = smooth_lower(target, cover)(grid)
        band = 2 * target.smoothness * cover.eps ** 2
        print(f"  gradient envelope     : max error {np.max(f - f1):.4f}"
              f"  (band {band:.4f}, uses smoothness {target.smoothness:.2f})")
    print()

out = Path(__file__).resolve().parent / "out_bands"
demo_figures(out)
print(f"grid CSVs written to {out}")

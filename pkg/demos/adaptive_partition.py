"""How the adaptive stopping rule sizes the partition.

The center count tracks n^(d*/(2+d*)) in the *intrinsic* dimension: data on
a 1-d curve embedded in 5 ambient dimensions produces far fewer cells than
a genuinely 5-d cloud of the same size.
"""

import numpy as np

from dcreg import afpc

rng = np.random.default_rng(3)

print(f"{'n':>6s} {'ambient d':>9s} {'shape':>12s} {'K':>5s} {'cap n^(d/(2+d))':>16s} "
      f"{'cover radius':>12s}")
for n in (512, 2048, 8192):
    t = rng.uniform(0, 4 * np.pi, n)
    curve = np.stack([np.cos(t), np.sin(t), t / 10, 0 * t, 0 * t], axis=1)
    curve += 0.01 * rng.standard_normal(curve.shape)
    cloud = rng.standard_normal((n, 5))
    for label, X in (("helix in 5d", curve), ("full 5d", cloud)):
        p = afpc(X, seed=0)
        cap = int(np.ceil(n ** (5 / 7)))
        print(f"{n:6d} {5:9d} {label:>12s} {p.n_centers:5d} {cap:16d} {p.eps_n:12.4f}")

print("\nCell sizes for the last partition (many cells hold fewer points than d,")
print("which is why per-piece slope regularization matters):")
p = afpc(rng.standard_normal((4096, 8)), seed=1)
sizes = p.cell_sizes()
print(f"K={p.n_centers}, cell sizes min/median/max = "
      f"{sizes.min()}/{np.median(sizes):.0f}/{sizes.max()}, "
      f"cells with < d points: {(sizes < 8).sum()}")

"""Density-based importance for misclassified samples.

For an edge sample we take the radius that covers 30% of its own class
pool, then ask what share of the most similar foreign class falls within
1.5 times that radius. A foreign class that is denser there marks the
sample as high importance (its weight goes up); otherwise it is low
importance (its weight goes down). The weight curves for the three
reweighting families follow.

Run:  python3 demos/03_density_reweighting.py
"""
import numpy as np

from lrcalib import DensityParams, ReweightFunction, local_densities
from lrcalib.fdbo import FAMILIES, region_of

rng = np.random.default_rng(11)
own = rng.normal(loc=[0.0, 0.0], scale=1.0, size=(50, 2))
tight = rng.normal(loc=[1.5, 0.0], scale=0.3, size=(50, 2))
loose = rng.normal(loc=[4.0, 0.0], scale=2.0, size=(50, 2))

params = DensityParams(d_in=0.3, eta=1.5)
x = np.array([1.2, 0.1])  # sits between the two clusters
for name, other in (("tight neighbour", tight), ("loose neighbour", loose)):
    d_in, d_sim, radius = local_densities(x, own, other, params)
    print(f"{name}: radius {radius:.3f}, own density {d_in:.2f}, foreign density {d_sim:.2f} "
          f"-> {region_of(d_in, d_sim)} importance")

# %% weight curves
losses = np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0])
print("\nloss      " + "  ".join(f"{v:5.1f}" for v in losses))
for family in FAMILIES:
    fn = ReweightFunction(family, alpha=0.5)
    print(f"{family:11s} up   " + "  ".join(f"{v:5.2f}" for v in fn.raise_weight(losses)))
    print(f"{'':11s} down " + "  ".join(f"{v:5.2f}" for v in fn.lower_weight(losses)))

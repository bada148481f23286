"""How an LRSample target is picked.

A class pool sits in a memory bank. For an input feature we score every
stored candidate on two axes: how closely its offset from the class
prototype points the same way as the input's offset (lower is better, we
want the candidate on the far side), and how different its similarity to
the prototype is from the input's. The fused score is the sum of the two
softmaxed score vectors; the argmin is the target.

Run:  python3 demos/01_lrsample_selection.py
"""
import numpy as np

from lrcalib import MemoryBank, select_lrsample
from lrcalib.geometry import cosine_sim

rng = np.random.default_rng(3)

# %% a small 2-D class pool around (4, 1)
pool = rng.normal(loc=[4.0, 1.0], scale=[0.8, 0.4], size=(12, 2))
bank = MemoryBank(dim=2, capacity=64)
bank.insert_many(0, pool, partition="base")
proto = bank.prototype(0).mean
print("prototype:", np.round(proto, 3))

# %% an input that sits above the prototype
x = proto + np.array([0.2, 0.9])
res = select_lrsample(x, 0, bank)

print("\n idx   candidate          diff    gap     fused")
for i in np.argsort(res.fused):
    mark = "<-" if i == res.target_index else ""
    print(f"{i:4d}   {np.round(pool[i], 2)!s:17s} {res.diff_scores[i]:+.3f}  {res.gap_scores[i]:.3f}  "
          f"{res.fused[i]:.4f} {mark}")

# %% the chosen target lies on the opposite side of the prototype
x_off = x / np.linalg.norm(x) - proto / np.linalg.norm(proto)
t_off = res.target / np.linalg.norm(res.target) - proto / np.linalg.norm(proto)
print(f"\ncosine between the input offset and the target offset: {cosine_sim(x_off, t_off):+.3f}")

# %% rank fusion ignores score magnitudes
ranked = select_lrsample(x, 0, bank, fusion="rank")
print(f"score fusion picks {res.target_index}, rank fusion picks {ranked.target_index}")

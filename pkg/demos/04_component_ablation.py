"""Which module helps: a paired-seed component ablation.

Every arm fine-tunes the same base models on the same shots, so the
differences between arms come from the modules alone. Expect calibration
with augmentation to carry most of the gain at two shots.

Run:  python3 demos/04_component_ablation.py   (about half a minute)
"""
from lrcalib import ExperimentConfig, run_ablation

cfg = ExperimentConfig().replace(train__k_shot=2, run__seeds=(0, 1, 2, 3, 4))
ablation = run_ablation(cfg, "component=none,ccva,fdbo,both")

print("arm     novel accuracy      base accuracy")
for row in ablation.table():
    n, b = row["novel_acc"], row["base_acc"]
    print(f"{row['cell'].split('=')[1]:6s}  {n['mean']:.3f} +/- {n['std']:.3f}   {b['mean']:.3f} +/- {b['std']:.3f}")

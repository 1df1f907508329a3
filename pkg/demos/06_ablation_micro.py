"""Micro ablation: every attention-structure variant, one seed, a few epochs.

This exercises the comparison machinery quickly; meaningful numbers need the
full desk scale (see README).  Run:  python demos/06_ablation_micro.py
"""

from avtse.ablation import AblationScale, run_ablation

scale = AblationScale(
    train_count=30,
    eval_count=8,
    epochs=4,
    seeds=(0,),
)

table = run_ablation("TABLE_V", scale=scale, out_dir="runs/demo_ablation", quiet=False)
print()
print(table.render_text())

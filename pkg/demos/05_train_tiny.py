"""Train a tiny model on synthetic mixtures and evaluate it.

Takes a couple of minutes on CPU.  Run:  python demos/05_train_tiny.py
"""

from avtse.ablation import AblationScale
from avtse.training import SyntheticDataSpec, TrainConfig, evaluate, train

scale = AblationScale()
net_cfg = scale.network_config("SEANET")

cfg = TrainConfig(
    network=net_cfg,
    data=SyntheticDataSpec(scenarios=("S", "S_N"), count=60, duration_s=0.6, seed=0),
    val_data=SyntheticDataSpec(scenarios=("S", "S_N"), count=10, duration_s=0.6, seed=900),
    lr=2e-3,
    max_epochs=12,
    validate_every=4,
    segment_seconds=0.6,
    batch_size=10,
    seed=0,
)

result = train(cfg, out_dir="runs/demo_tiny", quiet=False)
print(f"\nbest validation epoch: {result.best_epoch} (si_sdri {result.best_val_si_sdri:.2f} dB)")
print(f"checkpoint: {result.checkpoint_path}")

report = evaluate(result.net, SyntheticDataSpec(scenarios=("S", "S_N"), count=10, duration_s=0.6, seed=5000))
print("\nheld-out evaluation:")
print(report.render_text())

"""Training loop, evaluation runner, and checkpoint I/O.

Runs are deterministic for a fixed seed in single-worker mode: data
generation, weight init, batch order, and optimizer steps all derive from
explicit seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .decoder import total_loss
from .encoders import oracle_visual_embed
from .metrics import MetricsReport, improvement, si_sdr
from .mixing import MixtureSample, generate_scenario, load_sample, read_manifest
from .multimodal import contrastive_av_loss
from .network import ExtractionNetwork, NetworkConfig, build_network

CHECKPOINT_VERSION = 1


@dataclass
class SyntheticDataSpec:
    """Scenario-bank data source: ``count`` mixtures cycling over ``scenarios``."""

    scenarios: tuple[str, ...] = ("S",)
    count: int = 200
    duration_s: float = 2.0
    seed: int = 0
    with_visual: bool = False  # attach feature frames for the real visual path


@dataclass
class TrainConfig:
    network: NetworkConfig = field(default_factory=NetworkConfig)
    data: SyntheticDataSpec | str = field(default_factory=SyntheticDataSpec)
    val_data: SyntheticDataSpec | str | None = None
    lr: float = 1e-3
    lr_decay: float = 0.97
    lr_decay_every: int = 3
    lr_schedule: str = "multiplicative"  # or "linear": subtract 3% of the initial rate
    max_epochs: int = 150
    validate_every: int = 3
    segment_seconds: float = 2.0
    batch_size: int = 8
    seed: int = 0
    beta: float | None = None  # defaults to network.beta
    grad_clip: float = 5.0

    def resolved_beta(self) -> float:
        return self.network.beta if self.beta is None else self.beta

    def validate(self) -> None:
        self.network.validate()
        for name in ("lr", "max_epochs", "validate_every", "segment_seconds", "batch_size", "lr_decay_every"):
            if (getattr(self, name) or 0) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("lr_decay must be in (0, 1]")
        if self.lr_schedule not in ("multiplicative", "linear"):
            raise ValueError(f"unknown lr_schedule: {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["network"] = self.network.to_dict()
        if isinstance(self.data, SyntheticDataSpec):
            out["data"] = asdict(self.data)
        if isinstance(self.val_data, SyntheticDataSpec):
            out["val_data"] = asdict(self.val_data)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in known}
        kwargs["network"] = NetworkConfig.from_dict(data.get("network", {}))
        for key in ("data", "val_data"):
            value = kwargs.get(key)
            if isinstance(value, dict):
                if "scenarios" in value:
                    value = dict(value)
                    value["scenarios"] = tuple(value["scenarios"])
                kwargs[key] = SyntheticDataSpec(**value)
        return cls(**kwargs)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate applied during 0-based ``epoch``."""
    steps = epoch // cfg.lr_decay_every
    if cfg.lr_schedule == "multiplicative":
        return cfg.lr * cfg.lr_decay**steps
    return cfg.lr * max(0.0, 1.0 - (1.0 - cfg.lr_decay) * steps)


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


@dataclass
class TrainingItem:
    mixture: torch.Tensor
    target: torch.Tensor
    noise: torch.Tensor
    visual_embedding: torch.Tensor | None = None
    visual_frames: torch.Tensor | None = None
    sample_id: str = ""
    scenario: str = ""


def make_samples(spec: SyntheticDataSpec) -> list[MixtureSample]:
    samples = []
    for i in range(spec.count):
        scenario = spec.scenarios[i % len(spec.scenarios)]
        samples.append(
            generate_scenario(
                scenario,
                spec.duration_s,
                spec.seed + i,
                with_visual=spec.with_visual,
                sample_id=f"{scenario}_{i:05d}",
            )
        )
    return samples


def load_manifest_samples(manifest_path: str | Path) -> list[MixtureSample]:
    path = Path(manifest_path)
    return [load_sample(e, path.parent) for e in read_manifest(path)]


def resolve_samples(data: SyntheticDataSpec | str | Path) -> list[MixtureSample]:
    if isinstance(data, (str, Path)):
        return load_manifest_samples(data)
    return make_samples(data)


def prepare_item(sample: MixtureSample, cfg: NetworkConfig, max_samples: int | None = None) -> TrainingItem:
    """Convert one MixtureSample to tensors, precomputing the visual input."""
    mix = sample.mixture.samples
    tgt = sample.target.samples
    noi = sample.noise.samples
    if max_samples is not None and mix.size > max_samples:
        mix, tgt, noi = mix[:max_samples], tgt[:max_samples], noi[:max_samples]
    item = TrainingItem(
        mixture=torch.from_numpy(mix).float(),
        target=torch.from_numpy(tgt).float(),
        noise=torch.from_numpy(noi).float(),
        sample_id=sample.sample_id,
        scenario=sample.scenario,
    )
    if cfg.visual_mode == "oracle":
        length = (mix.size - cfg.win) // cfg.hop + 1
        emb = oracle_visual_embed(
            tgt, length, cfg.d_visual, cfg.win, cfg.hop, fps=cfg.oracle_fps, sample_rate=cfg.sample_rate
        )
        item.visual_embedding = torch.from_numpy(emb).float()
    else:
        if sample.visual is None:
            raise ValueError(f"sample {sample.sample_id!r} carries no visual stream")
        item.visual_frames = torch.from_numpy(sample.visual.frames).float()
    return item


def collate(items: list[TrainingItem]) -> dict:
    batch = {
        "mixture": torch.stack([i.mixture for i in items]),
        "target": torch.stack([i.target for i in items]),
        "noise": torch.stack([i.noise for i in items]),
    }
    if items[0].visual_embedding is not None:
        batch["visual_embedding"] = torch.stack([i.visual_embedding for i in items])
    else:
        batch["visual_frames"] = torch.stack([i.visual_frames for i in items])
    batch["ids"] = [i.sample_id for i in items]
    return batch


def forward_loss(net: ExtractionNetwork, batch: dict, beta: float) -> torch.Tensor:
    kwargs = {}
    if "visual_embedding" in batch:
        kwargs["visual_embedding"] = batch["visual_embedding"]
    else:
        kwargs["visual_frames"] = batch["visual_frames"]
    outputs = net(batch["mixture"], **kwargs)
    loss = total_loss(outputs, batch["target"], batch["noise"], beta)
    if net.cfg.mm_variant == "A":
        loss = loss + net.cfg.contrastive_weight * contrastive_av_loss(
            outputs.speech_features, outputs.noise_features, outputs.visual_features
        )
    return loss


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(
    path: str | Path,
    net: ExtractionNetwork,
    optimizer: torch.optim.Optimizer | None = None,
    epoch: int = 0,
    extra: dict | None = None,
) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "network_config": net.cfg.to_dict(),
        "model_state": net.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "epoch": epoch,
        "torch_rng_state": torch.get_rng_state(),
        "extra": extra or {},
    }
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path) -> tuple[ExtractionNetwork, dict]:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format version: {version}")
    cfg = NetworkConfig.from_dict(payload["network_config"])
    net = ExtractionNetwork(cfg)
    net.load_state_dict(payload["model_state"])
    return net, payload


def extend_from_checkpoint(path: str | Path, mm_variant: str, seed: int = 0) -> ExtractionNetwork:
    """Load a base checkpoint and extend it with a multi-modal variant.

    Base weights are kept; only the appended multi-modal modules start fresh.
    """
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    cfg = NetworkConfig.from_dict(payload["network_config"])
    if cfg.variant != "SEANET":
        raise ValueError("multi-modal extension requires a full-network checkpoint")
    cfg.mm_variant = mm_variant
    net = build_network(cfg, seed=seed)
    missing, unexpected = net.load_state_dict(payload["model_state"], strict=False)
    if unexpected:
        raise ValueError(f"checkpoint has unexpected keys: {unexpected}")
    return net


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    net: ExtractionNetwork
    log: list[dict]
    best_epoch: int
    best_val_si_sdri: float
    checkpoint_path: Path | None = None


def train(
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    quiet: bool = True,
    net: ExtractionNetwork | None = None,
) -> TrainResult:
    """Optimize the composite loss under the configured schedule.

    Saves the best-by-validation checkpoint (and the log as JSONL) into
    ``out_dir`` when given.  Passing ``net`` continues training an existing
    network (fine-tuning) instead of building a fresh one.
    """
    cfg.validate()
    torch.manual_seed(cfg.seed)
    if net is None:
        net = build_network(cfg.network, seed=cfg.seed)
    beta = cfg.resolved_beta()
    max_len = int(round(cfg.segment_seconds * cfg.network.sample_rate))

    items = [prepare_item(s, cfg.network, max_len) for s in resolve_samples(cfg.data)]
    val_items = None
    if cfg.val_data is not None:
        val_items = [prepare_item(s, cfg.network) for s in resolve_samples(cfg.val_data)]

    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    log: list[dict] = []
    best_epoch, best_val = -1, -math.inf
    best_state = None
    last_grad_norm = float("nan")

    for epoch in range(cfg.max_epochs):
        lr = lr_at_epoch(cfg, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        order = torch.randperm(len(items), generator=torch.Generator().manual_seed(cfg.seed + epoch))
        epoch_losses = []
        net.train()
        for start in range(0, len(items), cfg.batch_size):
            idx = order[start : start + cfg.batch_size].tolist()
            batch = collate([items[i] for i in idx])
            loss = forward_loss(net, batch, beta)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch ids {batch['ids']}, "
                    f"last grad norm {last_grad_norm:.4g}"
                )
            optimizer.zero_grad()
            loss.backward()
            last_grad_norm = float(torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.grad_clip))
            optimizer.step()
            epoch_losses.append(float(loss.detach()))

        entry = {"epoch": epoch, "split": "train", "loss": float(np.mean(epoch_losses)), "si_sdri": None, "lr": lr}
        log.append(entry)
        if not quiet:
            print(json.dumps(entry))

        if val_items is not None and (epoch + 1) % cfg.validate_every == 0:
            val_loss, val_si_sdri = _validate(net, val_items, beta, cfg.batch_size)
            entry = {"epoch": epoch, "split": "val", "loss": val_loss, "si_sdri": val_si_sdri, "lr": lr}
            log.append(entry)
            if not quiet:
                print(json.dumps(entry))
            if val_si_sdri > best_val:
                best_val = val_si_sdri
                best_epoch = epoch
                best_state = {k: v.detach().clone() for k, v in net.state_dict().items()}

    checkpoint_path = None
    if best_state is not None:
        net_best = ExtractionNetwork(cfg.network)
        net_best.load_state_dict(best_state)
        net = net_best
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out / "checkpoint.pt"
        save_checkpoint(checkpoint_path, net, optimizer, epoch=cfg.max_epochs - 1, extra={"train_config": cfg.to_dict()})
        with open(out / "train_log.jsonl", "w") as f:
            for entry in log:
                f.write(json.dumps(entry) + "\n")
    return TrainResult(net=net, log=log, best_epoch=best_epoch, best_val_si_sdri=best_val, checkpoint_path=checkpoint_path)


def _validate(net: ExtractionNetwork, items: list[TrainingItem], beta: float, batch_size: int):
    net.eval()
    losses, improvements = [], []
    with torch.no_grad():
        for start in range(0, len(items), batch_size):
            batch = collate(items[start : start + batch_size])
            losses.append(float(forward_loss(net, batch, beta)))
            kwargs = {k: batch[k] for k in ("visual_embedding", "visual_frames") if k in batch}
            outputs = net(batch["mixture"], decode_all=False, **kwargs)
            for b in range(batch["mixture"].size(0)):
                est = outputs.estimate[b].numpy().astype(np.float64)
                mix = batch["mixture"][b].numpy().astype(np.float64)
                ref = batch["target"][b].numpy().astype(np.float64)
                improvements.append(improvement(si_sdr, est, mix, ref))
    net.train()
    return float(np.mean(losses)), float(np.mean(improvements))


def overfit(net: ExtractionNetwork, batch: dict, steps: int, lr: float = 1e-3, beta: float = 0.1):
    """Fit a fixed batch for ``steps`` optimizer steps; returns the loss trace."""
    optimizer = torch.optim.Adam(net.parameters(), lr=lr)
    trace = []
    for _ in range(steps):
        loss = forward_loss(net, batch, beta)
        optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(net.parameters(), 5.0)
        optimizer.step()
        trace.append(float(loss.detach()))
    return trace


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(
    net,
    data: list[MixtureSample] | SyntheticDataSpec | str | Path,
    net_cfg: NetworkConfig | None = None,
    segment_len_s: float = 0.5,
    mu_db: float = 1.0,
    est_dir: str | Path | None = None,
) -> MetricsReport:
    """Full-length evaluation: per-utterance metrics plus aggregate means.

    Items are processed independently (variable lengths allowed); a failure on
    one item is recorded and the run continues.  When ``est_dir`` is given the
    estimates are written there as ``<id>_est.wav``.
    """
    from .mixing import Waveform, write_wav  # local import to avoid cycle at module load

    cfg = net_cfg if net_cfg is not None else net.cfg
    samples = data if isinstance(data, list) else resolve_samples(data)
    report = MetricsReport(segment_len_s=segment_len_s, mu_db=mu_db)
    if hasattr(net, "eval"):
        net.eval()
    for sample in samples:
        try:
            item = prepare_item(sample, cfg)
            kwargs = {}
            if item.visual_embedding is not None:
                kwargs["visual_embedding"] = item.visual_embedding.unsqueeze(0)
            else:
                kwargs["visual_frames"] = item.visual_frames.unsqueeze(0)
            with torch.no_grad():
                outputs = net(item.mixture.unsqueeze(0), decode_all=False, **kwargs)
            est = outputs.estimate[0].detach().numpy().astype(np.float64)
            # score against the buffers the network consumed, so e.g. an
            # identity network yields improvements of exactly zero
            row = report.add_row(
                sample.sample_id or f"item_{len(report.rows)}",
                est,
                item.mixture.numpy().astype(np.float64),
                item.target.numpy().astype(np.float64),
                item.noise.numpy().astype(np.float64),
                scenario=sample.scenario,
            )
            if est_dir is not None:
                Path(est_dir).mkdir(parents=True, exist_ok=True)
                write_wav(Path(est_dir) / f"{row['id']}_est.wav", Waveform(np.clip(est, -1, 1), cfg.sample_rate))
        except Exception as exc:  # per-item isolation
            report.errors.append({"id": sample.sample_id, "error": str(exc)})
    return report

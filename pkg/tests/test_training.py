import json
import math

import numpy as np
import pytest
import torch

from avtse.decoder import BlockOutputs
from avtse.metrics import si_sdr
from avtse.mixing import generate_scenario
from avtse.network import NetworkConfig, build_network, count_parameters
from avtse.training import (
    SyntheticDataSpec,
    TrainConfig,
    collate,
    evaluate,
    extend_from_checkpoint,
    load_checkpoint,
    lr_at_epoch,
    make_samples,
    prepare_item,
    save_checkpoint,
    train,
)


def _tiny_train_cfg(tiny_cfg, **overrides):
    kwargs = dict(
        network=tiny_cfg,
        data=SyntheticDataSpec(scenarios=("S",), count=6, duration_s=0.25, seed=10),
        val_data=SyntheticDataSpec(scenarios=("S",), count=2, duration_s=0.25, seed=77),
        lr=1e-3,
        max_epochs=2,
        validate_every=1,
        segment_seconds=0.25,
        batch_size=3,
        seed=0,
    )
    kwargs.update(overrides)
    return TrainConfig(**kwargs)


class TestLrSchedule:
    def test_multiplicative_law(self):
        cfg = TrainConfig()
        assert lr_at_epoch(cfg, 0) == 1e-3
        assert lr_at_epoch(cfg, 2) == 1e-3
        assert lr_at_epoch(cfg, 3) == pytest.approx(1e-3 * 0.97)
        assert lr_at_epoch(cfg, 6) == pytest.approx(1e-3 * 0.97**2)
        assert lr_at_epoch(cfg, 150) == pytest.approx(1e-3 * 0.97**50)

    def test_linear_variant(self):
        cfg = TrainConfig(lr_schedule="linear")
        assert lr_at_epoch(cfg, 6) == pytest.approx(1e-3 * (1 - 0.03 * 2))

    def test_applied_during_training(self, tiny_cfg):
        cfg = _tiny_train_cfg(tiny_cfg, max_epochs=4, lr=1e-2)
        result = train(cfg)
        by_epoch = {e["epoch"]: e["lr"] for e in result.log if e["split"] == "train"}
        for epoch, lr in by_epoch.items():
            assert lr == pytest.approx(lr_at_epoch(cfg, epoch))


class TestDeterminism:
    def test_same_seed_same_log(self, tiny_cfg):
        log_a = train(_tiny_train_cfg(tiny_cfg)).log
        log_b = train(_tiny_train_cfg(tiny_cfg)).log
        assert log_a == log_b

    def test_different_seed_differs(self, tiny_cfg):
        log_a = train(_tiny_train_cfg(tiny_cfg)).log
        log_b = train(_tiny_train_cfg(tiny_cfg, seed=1)).log
        assert log_a != log_b


class TestCheckpoint:
    def test_roundtrip_is_bit_exact_on_probe_forward(self, tiny_cfg, tmp_path):
        result = train(_tiny_train_cfg(tiny_cfg))
        net = result.net
        net.eval()
        batch = collate([prepare_item(generate_scenario("S", 0.25, 5), tiny_cfg)])
        with torch.no_grad():
            before = net(batch["mixture"], visual_embedding=batch["visual_embedding"]).estimate
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net, epoch=3)
        loaded, payload = load_checkpoint(path)
        loaded.eval()
        with torch.no_grad():
            after = loaded(batch["mixture"], visual_embedding=batch["visual_embedding"]).estimate
        assert torch.equal(before, after)
        assert payload["epoch"] == 3
        assert payload["format_version"] == 1

    def test_version_gate(self, tiny_cfg, tmp_path):
        net = build_network(tiny_cfg, seed=0)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, net)
        payload = torch.load(path, weights_only=False)
        payload["format_version"] = 99
        torch.save(payload, path)
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)

    @pytest.mark.parametrize("mm", ["F", "P", "A"])
    def test_multimodal_extension_preserves_base_weights(self, tiny_cfg, tmp_path, mm):
        net = build_network(tiny_cfg, seed=0)
        path = tmp_path / "base.pt"
        save_checkpoint(path, net)
        extended = extend_from_checkpoint(path, mm)
        base_state = net.state_dict()
        ext_state = extended.state_dict()
        for key, value in base_state.items():
            assert torch.equal(ext_state[key], value)
        assert count_parameters(extended) > count_parameters(net)

    def test_extension_requires_full_variant(self, tiny_cfg, tmp_path):
        cfg = NetworkConfig(**{**tiny_cfg.to_dict(), "variant": "AV_DPRNN"})
        path = tmp_path / "lean.pt"
        save_checkpoint(path, build_network(cfg, seed=0))
        with pytest.raises(ValueError, match="full-network"):
            extend_from_checkpoint(path, "F")


class TestTrainContracts:
    def test_nan_loss_aborts_with_diagnostics(self, tiny_cfg, monkeypatch):
        import avtse.training as training_mod

        def bad_loss(net, batch, beta):
            return torch.tensor(float("nan"), requires_grad=True)

        monkeypatch.setattr(training_mod, "forward_loss", bad_loss)
        with pytest.raises(RuntimeError, match="batch ids"):
            train(_tiny_train_cfg(tiny_cfg))

    def test_best_by_validation_checkpoint_saved(self, tiny_cfg, tmp_path):
        result = train(_tiny_train_cfg(tiny_cfg, max_epochs=3), out_dir=tmp_path)
        assert result.checkpoint_path is not None and result.checkpoint_path.exists()
        assert result.best_epoch >= 0
        log_lines = (tmp_path / "train_log.jsonl").read_text().strip().splitlines()
        records = [json.loads(line) for line in log_lines]
        assert {r["split"] for r in records} == {"train", "val"}
        assert all({"epoch", "split", "loss", "si_sdri"} <= set(r) for r in records)

    def test_invalid_config_rejected(self, tiny_cfg):
        with pytest.raises(ValueError):
            _tiny_train_cfg(tiny_cfg, lr_decay=1.5).validate()

    def test_config_dict_roundtrip(self, tiny_cfg):
        cfg = _tiny_train_cfg(tiny_cfg)
        again = TrainConfig.from_dict(cfg.to_dict())
        assert again == cfg


class _StubNet:
    """Evaluation stub: returns a fixed role of the sample as the estimate."""

    def __init__(self, cfg, mode):
        self.cfg = cfg
        self.mode = mode
        self._current = None

    def eval(self):
        return self

    def __call__(self, mixture, decode_all=True, **kwargs):
        est = mixture[0] if self.mode == "identity" else self._current
        return BlockOutputs(decoded_speech=[est.unsqueeze(0)])


class TestEvaluate:
    def test_identity_network_has_zero_improvements(self, tiny_cfg):
        samples = make_samples(SyntheticDataSpec(scenarios=("S",), count=3, duration_s=0.3, seed=2))
        report = evaluate(_StubNet(tiny_cfg, "identity"), samples, net_cfg=tiny_cfg)
        assert not report.errors
        for row in report.rows:
            assert row["si_sdri"] == 0.0
            assert row["sdri"] == 0.0

    def test_passthrough_reference_network_hits_floored_max(self, tiny_cfg):
        samples = make_samples(SyntheticDataSpec(scenarios=("S",), count=2, duration_s=0.3, seed=3))
        stub = _StubNet(tiny_cfg, "reference")
        report = evaluate_with_reference(stub, samples, tiny_cfg)
        for row, sample in zip(report.rows, samples):
            target = prepare_item(sample, tiny_cfg).target.numpy().astype(np.float64)
            mixture = prepare_item(sample, tiny_cfg).mixture.numpy().astype(np.float64)
            expected = si_sdr(target, target) - si_sdr(mixture, target)
            assert row["si_sdri"] == pytest.approx(expected, abs=1e-6)
            assert row["si_sdr"] >= 110.0

    def test_mean_equals_mean_of_rows(self, tiny_cfg):
        samples = make_samples(SyntheticDataSpec(scenarios=("S", "S_N"), count=4, duration_s=0.3, seed=4))
        report = evaluate(_StubNet(tiny_cfg, "identity"), samples, net_cfg=tiny_cfg)
        agg = report.aggregate()
        for key in ("si_sdr", "sdr", "si_sdri", "sdri"):
            assert agg[key] == pytest.approx(float(np.mean([r[key] for r in report.rows])))

    def test_per_item_errors_recorded_and_run_continues(self, tiny_cfg):
        samples = make_samples(SyntheticDataSpec(scenarios=("S",), count=3, duration_s=0.3, seed=5))
        samples[1].target.samples = samples[1].target.samples[:-1]  # corrupt one item
        report = evaluate(_StubNet(tiny_cfg, "identity"), samples, net_cfg=tiny_cfg)
        assert len(report.errors) == 1
        assert len(report.rows) == 2

    def test_real_network_end_to_end(self, tiny_cfg):
        net = build_network(tiny_cfg, seed=0)
        samples = make_samples(SyntheticDataSpec(scenarios=("S",), count=2, duration_s=0.3, seed=6))
        report = evaluate(net, samples)
        assert not report.errors
        assert all(math.isfinite(r["si_sdr"]) for r in report.rows)

    def test_evaluation_leaves_parameters_untouched(self, tiny_cfg):
        net = build_network(tiny_cfg, seed=0)
        before = {k: v.clone() for k, v in net.state_dict().items()}
        samples = make_samples(SyntheticDataSpec(scenarios=("S",), count=2, duration_s=0.3, seed=8))
        evaluate(net, samples)
        after = net.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)


def evaluate_with_reference(stub, samples, cfg):
    """Drive the evaluate loop while feeding the stub each sample's target."""
    from avtse.metrics import MetricsReport

    report = MetricsReport()
    for sample in samples:
        stub._current = torch.from_numpy(sample.target.samples).float()
        partial = evaluate(stub, [sample], net_cfg=cfg)
        report.rows.extend(partial.rows)
        report.errors.extend(partial.errors)
    return report

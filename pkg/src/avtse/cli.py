"""Command-line entry points: mix generate / metrics eval / train / eval / ablate / plots."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from .ablation import SUITES, AblationScale, run_ablation
from .metrics import MetricsReport
from .mixing import SCENARIOS, generate_dataset, load_sample, load_wav, read_manifest
from .plots import emit_plots
from .training import TrainConfig, evaluate, load_checkpoint, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avtse", description="audio-visual target speaker extraction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    mix = sub.add_parser("mix", help="mixture simulation")
    mix_sub = mix.add_subparsers(dest="mix_command", required=True)
    gen = mix_sub.add_parser("generate", help="generate a synthetic mixture dataset")
    gen.add_argument("--scenario", required=True, choices=SCENARIOS)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--duration", type=float, default=2.0, help="seconds per mixture")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory (WAVs + manifest.jsonl)")
    gen.add_argument("--sample-rate", type=int, default=16000)
    gen.add_argument("--with-visual", action="store_true", help="attach synthetic visual feature frames")

    met = sub.add_parser("metrics", help="metric computation")
    met_sub = met.add_subparsers(dest="metrics_command", required=True)
    meval = met_sub.add_parser("eval", help="score estimates in a directory against a manifest")
    meval.add_argument("--manifest", required=True)
    meval.add_argument("--est-dir", required=True, help="directory holding <id>_est.wav files")
    meval.add_argument("--segment-seconds", type=float, default=0.5)
    meval.add_argument("--mu", type=float, default=1.0, help="incorrect-extraction margin in dB")
    meval.add_argument("--out", default=None, help="optional report JSON path")

    tr = sub.add_parser("train", help="train a network from a YAML config")
    tr.add_argument("--config", required=True)
    tr.add_argument("--out", default="runs/train", help="checkpoint/log directory")

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", default=None, help="directory for estimates and report JSON")
    ev.add_argument("--segment-seconds", type=float, default=0.5)
    ev.add_argument("--mu", type=float, default=1.0)

    ab = sub.add_parser("ablate", help="run a desk-scale comparison suite")
    ab.add_argument("--suite", required=True, choices=SUITES)
    ab.add_argument("--out", default=None)
    ab.add_argument("--epochs", type=int, default=None)
    ab.add_argument("--train-count", type=int, default=None)
    ab.add_argument("--eval-count", type=int, default=None)
    ab.add_argument("--seeds", type=int, nargs="+", default=None)

    pl = sub.add_parser("plots", help="emit spectrograms and summary charts for a report")
    pl.add_argument("--report", required=True, help="report JSON written by `avtse eval`")
    pl.add_argument("--out", required=True)
    return parser


def _cmd_mix_generate(args) -> int:
    entries = generate_dataset(
        args.out, args.scenario, args.count, args.duration, args.seed, args.sample_rate, args.with_visual
    )
    print(f"wrote {len(entries)} mixtures to {args.out} (manifest.jsonl)")
    return 0


def _cmd_metrics_eval(args) -> int:
    manifest = Path(args.manifest)
    entries = read_manifest(manifest)
    report = MetricsReport(segment_len_s=args.segment_seconds, mu_db=args.mu)
    for entry in entries:
        try:
            sample = load_sample(entry, manifest.parent)
            est = load_wav(Path(args.est_dir) / f"{entry.id}_est.wav", sample.mixture.sample_rate)
            report.add_row(
                entry.id,
                est.samples,
                sample.mixture.samples,
                sample.target.samples,
                sample.noise.samples,
                scenario=entry.scenario,
            )
        except Exception as exc:
            report.errors.append({"id": entry.id, "error": str(exc)})
    print(report.render_text())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2))
    return 1 if report.errors else 0


def _cmd_train(args) -> int:
    with open(args.config) as f:
        cfg = TrainConfig.from_dict(yaml.safe_load(f))
    result = train(cfg, out_dir=args.out, quiet=False)
    print(f"checkpoint: {result.checkpoint_path}")
    if result.best_epoch >= 0:
        print(f"best validation epoch {result.best_epoch}: si_sdri={result.best_val_si_sdri:.3f} dB")
    return 0


def _cmd_eval(args) -> int:
    net, _ = load_checkpoint(args.ckpt)
    manifest = Path(args.manifest)
    entries = read_manifest(manifest)
    samples = [load_sample(e, manifest.parent) for e in entries]
    est_dir = Path(args.out) / "est" if args.out else None
    report = evaluate(net, samples, segment_len_s=args.segment_seconds, mu_db=args.mu, est_dir=est_dir)
    by_id = {e.id: e for e in entries}
    if est_dir is not None:
        for row in report.rows:  # absolute paths so plots can find the audio
            entry = by_id[row["id"]]
            row["mixture_path"] = str((manifest.parent / entry.mixture_path).resolve())
            row["target_path"] = str((manifest.parent / entry.target_path).resolve())
            row["est_path"] = str((est_dir / f"{row['id']}_est.wav").resolve())
    print(report.render_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2))
        print(f"report: {out / 'report.json'}")
    return 1 if report.errors else 0


def _cmd_ablate(args) -> int:
    scale = AblationScale()
    if args.epochs is not None:
        scale.epochs = args.epochs
    if args.train_count is not None:
        scale.train_count = args.train_count
    if args.eval_count is not None:
        scale.eval_count = args.eval_count
    if args.seeds is not None:
        scale.seeds = tuple(args.seeds)
    table = run_ablation(args.suite, scale=scale, out_dir=args.out, quiet=False)
    print(table.render_text())
    return 0


def _cmd_plots(args) -> int:
    report = json.loads(Path(args.report).read_text())
    written = emit_plots(report, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "mix":
        return _cmd_mix_generate(args)
    if args.command == "metrics":
        return _cmd_metrics_eval(args)
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "eval":
        return _cmd_eval(args)
    if args.command == "ablate":
        return _cmd_ablate(args)
    return _cmd_plots(args)


if __name__ == "__main__":
    sys.exit(main())

"""Mel-spectrogram triptychs and summary charts for evaluation reports."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .mixing import load_wav

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    HAVE_MPL = True
except Exception:  # degrade to text tables
    HAVE_MPL = False


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(n_mels: int, sample_rate: int, f_min: float = 0.0) -> np.ndarray:
    """Center frequencies (Hz) of the mel bands."""
    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(sample_rate / 2), n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft//2 + 1)."""
    mels = np.linspace(hz_to_mel(f_min), hz_to_mel(sample_rate / 2), n_mels + 2)
    hz = mel_to_hz(mels)
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, bins.size))
    for m in range(n_mels):
        lo, center, hi = hz[m], hz[m + 1], hz[m + 2]
        up = (bins - lo) / max(center - lo, 1e-9)
        down = (hi - bins) / max(hi - center, 1e-9)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_spectrogram(
    samples: np.ndarray,
    sample_rate: int,
    n_fft: int = 512,
    hop: int = 128,
    n_mels: int = 64,
) -> np.ndarray:
    """Log-power mel spectrogram in dB, shape (n_mels, frames)."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size < n_fft:
        samples = np.pad(samples, (0, n_fft - samples.size))
    frames = np.lib.stride_tricks.sliding_window_view(samples, n_fft)[::hop]
    spec = np.abs(np.fft.rfft(frames * np.hanning(n_fft), axis=1)) ** 2
    mel = mel_filterbank(n_mels, n_fft, sample_rate) @ spec.T
    return 10.0 * np.log10(mel + 1e-10)


def emit_plots(report, out_dir: str | Path, base_dir: str | Path | None = None) -> list[Path]:
    """Write one mel-spectrogram triptych per row carrying audio paths plus a
    summary chart.  Returns the written paths; empty reports produce nothing
    but a warning.  Without a plot backend, a text summary is written instead.
    """
    if hasattr(report, "to_dict"):
        report = report.to_dict()
    rows = report.get("rows", [])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    if not rows:
        print("warning: empty report, no plots emitted")
        return written

    if not HAVE_MPL:
        path = out / "summary.txt"
        with open(path, "w") as f:
            f.write(f"{'id':<16} {'si_sdri':>9}\n")
            for r in rows:
                f.write(f"{r['id']:<16} {r.get('si_sdri', float('nan')):>9.3f}\n")
        return [path]

    base = Path(base_dir) if base_dir is not None else Path(".")
    for row in rows:
        paths = {k: row.get(k) for k in ("mixture_path", "est_path", "target_path")}
        if not all(paths.values()):
            continue
        fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
        titles = ("mixture", "estimate", "reference")
        for ax, key, title in zip(axes, ("mixture_path", "est_path", "target_path"), titles):
            wav = load_wav(base / paths[key])
            mel = mel_spectrogram(wav.samples, wav.sample_rate)
            ax.imshow(mel, origin="lower", aspect="auto", cmap="magma")
            ax.set_ylabel(title)
        axes[0].set_title(f"{row['id']}  si_sdr={row.get('si_sdr', float('nan')):.2f} dB")
        axes[-1].set_xlabel("frame")
        path = out / f"{row['id']}_spectrogram.png"
        fig.savefig(path, dpi=100, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(max(6, 0.4 * len(rows)), 4))
    ids = [r["id"] for r in rows]
    values = [r.get("si_sdri", math.nan) for r in rows]
    ax.bar(range(len(rows)), values)
    mean = float(np.mean(values))
    ax.axhline(mean, color="k", linestyle="--", linewidth=1, label=f"mean {mean:.2f} dB")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(ids, rotation=90, fontsize=6)
    ax.set_ylabel("SI-SDR improvement (dB)")
    ax.legend()
    path = out / "summary.png"
    fig.savefig(path, dpi=100, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written

"""Audio and visual front-ends producing temporally aligned embeddings."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .mixing import VIDEO_FPS, Waveform

_ORACLE_PROJECTION_SEED = 12345
_ORACLE_BANDS = 8


def num_frames(n_samples: int, win: int, hop: int) -> int:
    """Frame count of a strided window analysis: floor((T - win)/hop) + 1."""
    if n_samples < win:
        raise ValueError(f"input of {n_samples} samples is shorter than the {win}-sample window")
    return (n_samples - win) // hop + 1


class AudioEncoder(nn.Module):
    """Strided 1-D convolution + ReLU mapping waveforms to (D_a, L) embeddings.

    Bias-free so an all-zero waveform maps to an all-zero embedding.
    """

    def __init__(self, d_audio: int = 256, win: int = 32, hop: int = 16):
        super().__init__()
        self.d_audio = d_audio
        self.win = win
        self.hop = hop
        self.conv = nn.Conv1d(1, d_audio, kernel_size=win, stride=hop, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: B x T -> B x D_a x L
        if x.dim() == 1:
            x = x.unsqueeze(0)
        if x.size(-1) < self.win:
            raise ValueError(
                f"input of {x.size(-1)} samples is shorter than the encoder window ({self.win})"
            )
        return torch.relu(self.conv(x.unsqueeze(1)))


class _VtcnBlock(nn.Module):
    """Residual temporal block: ReLU -> BN -> depthwise-separable Conv1d."""

    def __init__(self, channels: int):
        super().__init__()
        self.bn = nn.BatchNorm1d(channels)
        # replicate padding keeps constant inputs exactly constant at the edges
        self.depthwise = nn.Conv1d(
            channels, channels, kernel_size=3, padding=1, groups=channels, padding_mode="replicate"
        )
        self.pointwise = nn.Conv1d(channels, channels, kernel_size=1)

    def forward(self, x):
        return x + self.pointwise(self.depthwise(self.bn(torch.relu(x))))


class VisualEncoder(nn.Module):
    """Per-frame spatial features, a 5-block residual temporal stack, and
    up-sampling to the audio frame rate.

    Accepts (B, F, H, W) gray-scale frames or (B, F, feat) synthetic feature
    frames; the appropriate front-end is picked from the input rank.
    """

    def __init__(
        self,
        d_visual: int = 256,
        frontend_dim: int = 512,
        feature_in_dim: int = 24,
        fps: float = VIDEO_FPS,
        upsample: str = "nearest",
    ):
        super().__init__()
        if upsample not in ("nearest", "linear"):
            raise ValueError(f"unknown upsample mode: {upsample!r}")
        self.d_visual = d_visual
        self.fps = fps
        self.upsample_mode = upsample
        self.image_frontend = nn.Sequential(
            nn.Conv2d(1, 8, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(8, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.image_proj = nn.Linear(64, frontend_dim)
        self.feature_proj = nn.Linear(feature_in_dim, frontend_dim)
        self.temporal = nn.Sequential(*[_VtcnBlock(frontend_dim) for _ in range(5)])
        self.out_proj = nn.Conv1d(frontend_dim, d_visual, kernel_size=1)

    def spatial_features(self, frames: torch.Tensor) -> torch.Tensor:
        # frames: B x F x H x W or B x F x feat -> B x C x F
        if frames.dim() == 4:
            b, f = frames.shape[:2]
            feats = self.image_frontend(frames.reshape(b * f, 1, *frames.shape[2:]))
            feats = self.image_proj(feats.reshape(b, f, -1))
        elif frames.dim() == 3:
            feats = self.feature_proj(frames)
        else:
            raise ValueError(f"expected (B,F,H,W) or (B,F,feat) frames, got rank {frames.dim()}")
        return feats.transpose(1, 2)

    def temporal_features(self, frames: torch.Tensor) -> torch.Tensor:
        return self.temporal(self.spatial_features(frames))

    def forward(self, frames: torch.Tensor, num_audio_frames: int, audio_duration_s: float | None = None):
        # -> B x D_v x L, exactly L frames
        if audio_duration_s is not None:
            video_duration = frames.shape[1] / self.fps
            if abs(video_duration - audio_duration_s) > 0.1 * audio_duration_s:
                raise ValueError(
                    f"video duration {video_duration:.3f}s mismatches audio {audio_duration_s:.3f}s by >10%"
                )
        feats = self.out_proj(self.temporal_features(frames))
        return upsample_time(feats, num_audio_frames, self.upsample_mode)


def upsample_time(x: torch.Tensor, length: int, mode: str = "nearest") -> torch.Tensor:
    """Resample (B, C, F) to (B, C, length) along the last axis."""
    if x.size(-1) == length:
        return x
    if mode == "nearest":
        idx = np.floor((np.arange(length) + 0.5) * x.size(-1) / length).astype(np.int64)
        idx = np.clip(idx, 0, x.size(-1) - 1)
        return x[..., torch.from_numpy(idx)]
    return torch.nn.functional.interpolate(x, size=length, mode="linear", align_corners=False)


def oracle_visual_embed(
    target,
    num_audio_frames: int,
    d_visual: int = 256,
    win: int = 32,
    hop: int = 16,
    fps: float | None = None,
    sample_rate: int = 16000,
) -> np.ndarray:
    """Deterministic synchronization cue derived from the clean target.

    Standardized log band energies, projected by a fixed random matrix to
    ``d_visual``.  Correlated with the target, independent of any
    interference, and noise-free -- a desk-scale stand-in for a frozen
    pretrained lip-feature extractor.

    With ``fps=None`` the cue is framed at the audio encoder's (win, hop).
    With a frame rate (e.g. 25.0) it is computed at that coarser video rate
    and nearest-upsampled, mirroring the real visual path's resolution.

    Returns a (d_visual, L) float64 array with L == ``num_audio_frames``.
    """
    samples = target.samples if isinstance(target, Waveform) else np.asarray(target, dtype=np.float64)
    expected = num_frames(samples.size, win, hop)
    if expected != num_audio_frames:
        raise ValueError(f"target yields {expected} frames but {num_audio_frames} were requested")

    if fps is None:
        frame_win, frame_hop = win, hop
    else:
        frame_hop = max(int(round(sample_rate / fps)), 1)
        frame_win = 2 * frame_hop
    if samples.size < frame_win:
        frame_win = samples.size
        frame_hop = max(frame_win // 2, 1)

    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_win)[::frame_hop]
    spec = np.abs(np.fft.rfft(windows * np.hanning(frame_win), axis=1)) ** 2
    usable = spec[:, 1:]  # drop DC
    edges = np.linspace(0, usable.shape[1], _ORACLE_BANDS + 1).astype(int)
    bands = np.stack(
        [usable[:, edges[b] : max(edges[b + 1], edges[b] + 1)].sum(axis=1) for b in range(_ORACLE_BANDS)],
        axis=1,
    )
    feats = np.log10(bands + 1e-10)
    feats -= feats.mean(axis=0, keepdims=True)
    feats /= feats.std(axis=0, keepdims=True) + 1e-6

    proj_rng = np.random.default_rng(_ORACLE_PROJECTION_SEED)
    projection = proj_rng.standard_normal((d_visual, _ORACLE_BANDS)) / np.sqrt(_ORACLE_BANDS)
    emb = projection @ feats.T
    if emb.shape[1] != num_audio_frames:
        idx = np.floor((np.arange(num_audio_frames) + 0.5) * emb.shape[1] / num_audio_frames).astype(int)
        emb = emb[:, np.clip(idx, 0, emb.shape[1] - 1)]
    return emb

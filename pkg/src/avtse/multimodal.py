"""Multi-modal temporal attention and the contrastive audio-visual loss.

Three ways of tightening the audio-visual coupling on top of the base
network: attention at the fusion stage (visual queries against the shared
audio representation), attention inside each processing block (chunked visual
queries against the speech/noise branches), and a contrastive loss pushing
speech features toward and noise features away from the visual stream.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

MM_VARIANTS = ("NONE", "F", "P", "A")


class MultimodalTemporalAttention(nn.Module):
    """Two-branch attention with visual queries and audio keys/values.

    The positive branch attends with softmax(+Q_v K^T / sqrt(D)); the negative
    branch negates its logits first, mirroring the reverse speech-noise term.
    ``combine="sum"`` merges both branch outputs into one representation (the
    fusion placement); ``combine="separate"`` returns both (the in-block
    placement); ``combine="concat"`` merges by concatenation + projection.
    """

    def __init__(self, d: int, combine: str = "separate"):
        super().__init__()
        if combine not in ("separate", "sum", "concat"):
            raise ValueError(f"unknown combine mode: {combine!r}")
        self.d = d
        self.combine = combine
        self.query_pos = nn.Linear(d, d)
        self.query_neg = nn.Linear(d, d)
        self.key_s = nn.Linear(d, d)
        self.value_s = nn.Linear(d, d)
        self.key_n = nn.Linear(d, d)
        self.value_n = nn.Linear(d, d)
        self.merge = nn.Linear(2 * d, d) if combine == "concat" else None

    def forward(self, f_s: torch.Tensor, f_n: torch.Tensor, v_q: torch.Tensor, need_scores: bool = False):
        # f_s, f_n, v_q: N x n x D
        if not (f_s.shape == f_n.shape == v_q.shape):
            raise ValueError(
                f"aligned inputs required, got {tuple(f_s.shape)}, {tuple(f_n.shape)}, {tuple(v_q.shape)}"
            )
        scale = math.sqrt(self.d)
        a_pos = torch.softmax(self.query_pos(v_q) @ self.key_s(f_s).transpose(-1, -2) / scale, dim=-1)
        a_neg = torch.softmax(-self.query_neg(v_q) @ self.key_n(f_n).transpose(-1, -2) / scale, dim=-1)
        out_s = a_pos @ self.value_s(f_s) + f_s
        out_n = a_neg @ self.value_n(f_n) + f_n
        if self.combine == "sum":
            out = out_s + out_n
        elif self.combine == "concat":
            out = self.merge(torch.cat([out_s, out_n], dim=-1))
        else:
            out = (out_s, out_n)
        if need_scores:
            return out, a_pos, a_neg
        return out


def frame_cosine(a: torch.Tensor, b: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    """Per-frame cosine similarity for (B, D, L) feature maps -> (B, L)."""
    num = (a * b).sum(dim=1)
    den = a.norm(dim=1) * b.norm(dim=1) + eps
    return num / den


def contrastive_av_loss(
    speech_features: list[torch.Tensor],
    noise_features: list[torch.Tensor],
    visual_features: torch.Tensor,
    eps: float = 1e-8,
) -> torch.Tensor:
    """-sum_i [mean_t cos(M_si, V) - mean_t cos(M_ni, V)].

    Minimizing raises speech-visual similarity and lowers noise-visual
    similarity at every stage.  Features and the visual stream must be
    temporally aligned (B, D, L).
    """
    if len(speech_features) != len(noise_features):
        raise ValueError("speech and noise feature lists must have equal length")
    if not speech_features:
        raise ValueError("no per-stage features given")
    loss = visual_features.new_zeros(())
    for m_s, m_n in zip(speech_features, noise_features):
        c = frame_cosine(m_s, visual_features, eps).mean() - frame_cosine(m_n, visual_features, eps).mean()
        loss = loss - c
    return loss

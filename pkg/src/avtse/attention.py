"""Dual-branch attention implementing speech-noise mutual exclusivity.

Each branch owns four linear maps (value, key, self query, cross query).  The
speech branch's applied score averages its self-attention with a cross term
whose logits come from the noise query against the speech keys, negated before
the softmax ("reverse attention"): frames resembling the other branch are
pushed toward low weight.  The noise branch is symmetric.  Ablation modes keep
only selected terms or move the subtraction inside the softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

ATTENTION_MODES = (
    "FULL",            # 0.5 * (softmax(self) + softmax(-cross))
    "SELF_ONLY",       # softmax(self)
    "CROSS_POSITIVE",  # softmax(+cross)
    "CROSS_REVERSE",   # softmax(-cross)
    "BOTH_POSITIVE",   # 0.5 * (softmax(self) + softmax(+cross))
    "GAMMA",           # softmax(self_logits - cross_logits)
)

_POSITIVE_CROSS_MODES = ("CROSS_POSITIVE", "BOTH_POSITIVE")


@dataclass
class AttentionScores:
    """Row-stochastic score matrices for one branch."""

    a: torch.Tensor        # applied scores, N x n x n
    a_plus: torch.Tensor   # self term
    a_minus: torch.Tensor  # cross term (sign per mode)
    axis: str = ""         # "intra" or "inter"


class _BranchProjections(nn.Module):
    """value / key / self-query / cross-query maps for one branch."""

    def __init__(self, d: int):
        super().__init__()
        self.value = nn.Linear(d, d)
        self.key = nn.Linear(d, d)
        self.query_self = nn.Linear(d, d)
        self.query_cross = nn.Linear(d, d)


class DualBranchAttention(nn.Module):
    """Paired attention over aligned speech and noise sequences.

    Inputs are (N, n, D) views; the same module serves the within-chunk axis
    (n = K) and the across-chunk axis (n = P).  Single attention head; logits
    are scaled by sqrt(D).
    """

    def __init__(self, d: int, speech_mode: str = "FULL", noise_mode: str | None = None):
        super().__init__()
        noise_mode = speech_mode if noise_mode is None else noise_mode
        for mode in (speech_mode, noise_mode):
            if mode not in ATTENTION_MODES:
                raise ValueError(f"unknown attention mode: {mode!r}")
        self.d = d
        self.speech_mode = speech_mode
        self.noise_mode = noise_mode
        self.speech = _BranchProjections(d)
        self.noise = _BranchProjections(d)

    def _branch_scores(self, q_self, q_cross, k, mode) -> AttentionScores:
        scale = math.sqrt(self.d)
        logits_self = q_self @ k.transpose(-1, -2) / scale
        logits_cross = q_cross @ k.transpose(-1, -2) / scale
        sign = 1.0 if mode in _POSITIVE_CROSS_MODES else -1.0
        a_plus = torch.softmax(logits_self, dim=-1)
        a_minus = torch.softmax(sign * logits_cross, dim=-1)
        if mode in ("FULL", "BOTH_POSITIVE"):
            a = 0.5 * (a_plus + a_minus)
        elif mode == "SELF_ONLY":
            a = a_plus
        elif mode in ("CROSS_POSITIVE", "CROSS_REVERSE"):
            a = a_minus
        else:  # GAMMA: subtract logits first, then normalize
            a = torch.softmax((q_self - q_cross) @ k.transpose(-1, -2) / scale, dim=-1)
        return AttentionScores(a=a, a_plus=a_plus, a_minus=a_minus)

    def forward(
        self,
        f_speech: torch.Tensor,
        f_noise: torch.Tensor,
        need_scores: bool = False,
        axis: str = "",
    ):
        # f_speech, f_noise: N x n x D -> same shapes, residual included
        if f_speech.shape != f_noise.shape:
            raise ValueError(f"shape mismatch: {tuple(f_speech.shape)} vs {tuple(f_noise.shape)}")
        s, n = self.speech, self.noise
        scores_s = self._branch_scores(
            s.query_self(f_speech), n.query_cross(f_noise), s.key(f_speech), self.speech_mode
        )
        scores_n = self._branch_scores(
            n.query_self(f_noise), s.query_cross(f_speech), n.key(f_noise), self.noise_mode
        )
        out_s = scores_s.a @ s.value(f_speech) + f_speech
        out_n = scores_n.a @ n.value(f_noise) + f_noise
        if need_scores:
            scores_s.axis = axis
            scores_n.axis = axis
            return out_s, out_n, scores_s, scores_n
        return out_s, out_n

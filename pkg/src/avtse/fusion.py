"""Audio-visual fusion and the chunk segmentation / aggregation pair.

``aggregate(segment(E)) == E`` holds exactly: the tail is zero-padded so the
windows tile, and overlap-added frames are divided by their per-frame overlap
count.  Both maps are linear, which downstream gradient checks rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class ChunkedEmbedding:
    """Chunked view (B, D, K, P) of a (B, D, L) sequence, hop K/2."""

    data: torch.Tensor
    k: int
    pad_len: int
    orig_len: int

    @property
    def p(self) -> int:
        return self.data.shape[-1]


def chunk_count(length: int, k: int) -> int:
    """P = ceil(max(L - K, 0) / (K/2)) + 1."""
    hop = k // 2
    return -((-max(length - k, 0)) // hop) + 1


def segment(embedding: torch.Tensor, k: int) -> ChunkedEmbedding:
    """Slice (B, D, L) into overlapping chunks of length ``k`` with hop k/2.

    Chunk c covers frames [c*k/2, c*k/2 + k); the tail is zero-padded so the
    last chunk is complete.
    """
    if k < 2 or k % 2 != 0:
        raise ValueError("chunk length k must be even and >= 2")
    squeeze = embedding.dim() == 2
    if squeeze:
        embedding = embedding.unsqueeze(0)
    b, d, length = embedding.shape
    hop = k // 2
    p = chunk_count(length, k)
    padded = (p - 1) * hop + k
    pad_len = padded - length
    if pad_len:
        embedding = F.pad(embedding, (0, pad_len))
    chunks = embedding.unfold(2, k, hop)  # B x D x P x K
    data = chunks.permute(0, 1, 3, 2).contiguous()
    return ChunkedEmbedding(data=data, k=k, pad_len=pad_len, orig_len=length)


def aggregate(chunked: ChunkedEmbedding) -> torch.Tensor:
    """Invert ``segment``: overlap-add, divide by overlap counts, drop padding."""
    data = chunked.data
    b, d, k, p = data.shape
    hop = k // 2
    padded = (p - 1) * hop + k
    cols = data.reshape(b, d * k, p)
    summed = F.fold(cols, output_size=(1, padded), kernel_size=(1, k), stride=(1, hop))
    ones = torch.ones(1, k, p, dtype=data.dtype, device=data.device)
    counts = F.fold(ones, output_size=(1, padded), kernel_size=(1, k), stride=(1, hop))
    out = (summed / counts).reshape(b, d, padded)[..., : chunked.orig_len]
    return out


class FusionModule(nn.Module):
    """Frame-wise fusion: normalize/project audio, stack visual features per
    frame, and project the joint feature down to the working dimension."""

    def __init__(self, d_audio: int = 256, d_visual: int = 256, d: int = 64):
        super().__init__()
        self.norm = nn.GroupNorm(1, d_audio)
        self.audio_proj = nn.Conv1d(d_audio, d_audio, kernel_size=1)
        self.joint_proj = nn.Conv1d(d_audio + d_visual, d, kernel_size=1)

    def forward(self, audio_emb: torch.Tensor, visual_emb: torch.Tensor) -> torch.Tensor:
        # audio_emb: B x D_a x L, visual_emb: B x D_v x L -> B x D x L
        if audio_emb.size(-1) != visual_emb.size(-1):
            raise ValueError(
                f"temporal mismatch: audio has {audio_emb.size(-1)} frames, "
                f"visual has {visual_emb.size(-1)}"
            )
        joint = torch.cat([self.audio_proj(self.norm(audio_emb)), visual_emb], dim=1)
        return self.joint_proj(joint)

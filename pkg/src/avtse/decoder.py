"""Mask application, overlap-add waveform reconstruction, and the training loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .fusion import ChunkedEmbedding, aggregate
from .metrics import si_sdr_loss


@dataclass
class BlockOutputs:
    """Decoded waveforms and mask embeddings from every processing stage.

    Lists run over stages i = 0..R (the pre-module output plus R blocks).
    Noise lists are empty for speech-only variants.
    """

    decoded_speech: list[torch.Tensor] = field(default_factory=list)  # each B x T
    decoded_noise: list[torch.Tensor] = field(default_factory=list)
    speech_features: list[torch.Tensor] = field(default_factory=list)  # each B x D x L
    noise_features: list[torch.Tensor] = field(default_factory=list)
    visual_features: torch.Tensor | None = None  # B x D x L, for the contrastive loss

    @property
    def estimate(self) -> torch.Tensor:
        """The speech estimate scored at evaluation time (last stage)."""
        return self.decoded_speech[-1]


class MaskHead(nn.Module):
    """pReLU + 1-D conv mapping aggregated block embeddings to mask space.

    No output nonlinearity: masked values may be signed.
    """

    def __init__(self, d: int, d_audio: int):
        super().__init__()
        self.act = nn.PReLU()
        self.proj = nn.Conv1d(d, d_audio, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: B x D x L -> B x D_a x L
        return self.proj(self.act(x))


class WaveformDecoder(nn.Module):
    """Per-frame linear map to window samples followed by overlap-add.

    Uses the audio encoder's (win, hop) and the same overlap-count
    normalization as chunk aggregation.  One instance is shared by every
    speech/noise decode.
    """

    def __init__(self, d_audio: int, win: int = 32, hop: int = 16):
        super().__init__()
        self.win = win
        self.hop = hop
        # bias-free so an all-zero mask decodes to exact silence
        self.linear = nn.Linear(d_audio, win, bias=False)

    def forward(self, masked: torch.Tensor, out_len: int) -> torch.Tensor:
        # masked: B x D_a x L -> B x out_len
        frames = self.linear(masked.transpose(1, 2))  # B x L x win
        b, length, win = frames.shape
        recon = (length - 1) * self.hop + win
        cols = frames.transpose(1, 2).reshape(b, win, length)
        summed = F.fold(cols, output_size=(1, recon), kernel_size=(1, win), stride=(1, self.hop))
        ones = torch.ones(1, win, length, dtype=frames.dtype, device=frames.device)
        counts = F.fold(ones, output_size=(1, recon), kernel_size=(1, win), stride=(1, self.hop))
        wav = (summed / counts).reshape(b, recon)
        if recon < out_len:
            wav = F.pad(wav, (0, out_len - recon))
        return wav[:, :out_len]


def mask_and_decode(
    chunked: ChunkedEmbedding,
    audio_emb: torch.Tensor,
    head: MaskHead,
    decoder: WaveformDecoder,
    out_len: int,
) -> tuple[torch.Tensor, torch.Tensor]:
    """head(aggregate(M)) * X, decoded to a waveform of ``out_len`` samples.

    Returns (waveform, aggregated features) so callers can reuse the
    aggregated embedding (e.g. for the contrastive loss).
    """
    features = aggregate(chunked)
    if features.size(-1) != audio_emb.size(-1):
        raise ValueError(
            f"mask has {features.size(-1)} frames but the audio embedding has {audio_emb.size(-1)}"
        )
    masked = head(features) * audio_emb
    return decoder(masked, out_len), features


def loss_terms(outputs: BlockOutputs, target: torch.Tensor, noise: torch.Tensor | None):
    """Batch-mean reconstruction losses: (main, speech auxiliaries, noise auxiliaries).

    The main term scores the final speech estimate.  Auxiliaries cover the
    earlier speech stages (i = 0..R-1) and every noise stage (i = 0..R).
    """
    if not outputs.decoded_speech:
        raise ValueError("no decoded speech outputs")
    if outputs.decoded_noise and noise is None:
        raise ValueError("noise reference required when noise outputs are present")
    main = si_sdr_loss(outputs.decoded_speech[-1], target).mean()
    speech_aux = [si_sdr_loss(est, target).mean() for est in outputs.decoded_speech[:-1]]
    noise_aux = [si_sdr_loss(est, noise).mean() for est in outputs.decoded_noise]
    return main, speech_aux, noise_aux


def total_loss(
    outputs: BlockOutputs,
    target: torch.Tensor,
    noise: torch.Tensor | None,
    beta: float,
) -> torch.Tensor:
    """main + beta * (sum of speech and noise auxiliaries).

    With beta = 0 the auxiliaries are skipped entirely and the result equals
    the main term exactly (speech-only multi-output weighting).
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    main, speech_aux, noise_aux = loss_terms(outputs, target, noise)
    if beta == 0.0:
        return main
    aux = sum(speech_aux) + sum(noise_aux)
    return main + beta * aux

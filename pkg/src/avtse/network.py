"""Network assembly: dual-path units, parallel speech/noise blocks, builder.

Data flow: waveform -> audio encoder -> fusion with the visual embedding ->
chunking -> a pre-extractor/pre-suppressor pair producing the initial speech
and noise embeddings -> R serially connected blocks, each interleaving
dual-branch attention on the within-chunk and across-chunk axes with a
dual-path refiner per branch -> per-stage mask heads and a shared overlap-add
decoder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn

from .attention import DualBranchAttention
from .decoder import BlockOutputs, MaskHead, WaveformDecoder, mask_and_decode
from .encoders import AudioEncoder, VisualEncoder, num_frames
from .fusion import ChunkedEmbedding, FusionModule, segment
from .multimodal import MM_VARIANTS, MultimodalTemporalAttention

VARIANTS = ("SEANET", "AV_DPRNN", "S1", "S2", "S3", "S4", "ALPHA", "BETA_VARIANT", "GAMMA")

#: (speech branch, noise branch) attention modes per variant
_VARIANT_ATTENTION = {
    "SEANET": ("FULL", "FULL"),
    "S1": ("SELF_ONLY", "SELF_ONLY"),
    "S2": ("CROSS_POSITIVE", "CROSS_POSITIVE"),
    "S3": ("CROSS_REVERSE", "CROSS_REVERSE"),
    "S4": ("BOTH_POSITIVE", "BOTH_POSITIVE"),
    "ALPHA": ("FULL", "FULL"),
    "BETA_VARIANT": ("FULL", "CROSS_REVERSE"),  # noise branch loses its self term
    "GAMMA": ("GAMMA", "GAMMA"),
}


@dataclass
class NetworkConfig:
    """Architecture knob set selecting size, variant, and multi-modal mode."""

    k: int = 100                     # chunk length (hop k/2)
    d_audio: int = 256               # audio embedding dimension
    d_visual: int = 256              # visual embedding dimension
    d: int = 64                      # working dimension inside the blocks
    r: int = 5                       # number of serial blocks after the pre-modules
    beta: float = 0.1                # auxiliary loss weight
    variant: str = "SEANET"
    recurrent_hidden: int = 128      # BLSTM hidden size per direction
    mm_variant: str = "NONE"         # NONE | F (fusion) | P (in-block) | A (contrastive)
    win: int = 32                    # audio encoder window (samples)
    hop: int = 16                    # audio encoder stride (samples)
    sample_rate: int = 16000
    fps: float = 25.0
    visual_mode: str = "frames"      # "frames" (encoder) | "oracle" (precomputed cue)
    oracle_fps: float | None = 25.0  # oracle cue frame rate; None = audio frame rate
    visual_feature_dim: int = 24     # feature-frame input width for the visual encoder
    visual_frontend_dim: int = 512   # visual front-end/temporal stack width
    upsample: str = "nearest"
    fusion_combine: str = "sum"      # F-variant branch combination: "sum" | "concat"
    contrastive_weight: float = 0.1  # A-variant loss weight

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant: {self.variant!r}")
        if self.mm_variant not in MM_VARIANTS:
            raise ValueError(f"unknown mm_variant: {self.mm_variant!r}")
        if self.mm_variant != "NONE" and self.variant != "SEANET":
            raise ValueError(
                f"multi-modal variant {self.mm_variant!r} extends the full network; "
                f"it cannot be combined with variant {self.variant!r}"
            )
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.k < 2 or self.k % 2 != 0:
            raise ValueError("k must be even and >= 2")
        for name in ("d", "d_audio", "d_visual", "recurrent_hidden", "win", "hop", "sample_rate"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.visual_mode not in ("frames", "oracle"):
            raise ValueError(f"unknown visual_mode: {self.visual_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def _to_intra(x: torch.Tensor) -> torch.Tensor:
    # B x D x K x P -> (B*P) x K x D
    b, d, k, p = x.shape
    return x.permute(0, 3, 2, 1).reshape(b * p, k, d)


def _from_intra(y: torch.Tensor, b: int, d: int, k: int, p: int) -> torch.Tensor:
    return y.reshape(b, p, k, d).permute(0, 3, 2, 1)


def _to_inter(x: torch.Tensor) -> torch.Tensor:
    # B x D x K x P -> (B*K) x P x D
    b, d, k, p = x.shape
    return x.permute(0, 2, 3, 1).reshape(b * k, p, d)


def _from_inter(y: torch.Tensor, b: int, d: int, k: int, p: int) -> torch.Tensor:
    return y.reshape(b, k, p, d).permute(0, 3, 1, 2)


class _ChunkNorm(nn.Module):
    """Global (single-group) normalization over a chunk tensor."""

    def __init__(self, d: int):
        super().__init__()
        self.norm = nn.GroupNorm(1, d, eps=1e-8)

    def forward(self, x):
        b, d, k, p = x.shape
        return self.norm(x.reshape(b, d, k * p)).reshape(b, d, k, p)


class _PostNorm(nn.Module):
    """Linear + global norm applied after an attention stage."""

    def __init__(self, d: int):
        super().__init__()
        self.proj = nn.Linear(d, d)
        self.norm = _ChunkNorm(d)

    def forward(self, x):
        # x: B x D x K x P
        y = self.proj(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        return self.norm(y)


class DprnnUnit(nn.Module):
    """Dual-path unit: BLSTM over the within-chunk axis, then over the
    across-chunk axis, each followed by linear + norm and a residual add."""

    def __init__(self, d: int, hidden: int):
        super().__init__()
        self.intra_rnn = nn.LSTM(d, hidden, batch_first=True, bidirectional=True)
        self.intra_proj = nn.Linear(2 * hidden, d)
        self.intra_norm = _ChunkNorm(d)
        self.inter_rnn = nn.LSTM(d, hidden, batch_first=True, bidirectional=True)
        self.inter_proj = nn.Linear(2 * hidden, d)
        self.inter_norm = _ChunkNorm(d)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: B x D x K x P, shape preserved
        b, d, k, p = x.shape
        intra, _ = self.intra_rnn(_to_intra(x))
        intra = self.intra_norm(_from_intra(self.intra_proj(intra), b, d, k, p))
        x = x + intra
        inter, _ = self.inter_rnn(_to_inter(x))
        inter = self.inter_norm(_from_inter(self.inter_proj(inter), b, d, k, p))
        return x + inter


class PsnlBlock(nn.Module):
    """One parallel speech/noise stage: dual-branch attention on both chunk
    axes (each followed by linear + norm), optional in-block multi-modal
    attention, then a dual-path extractor/suppressor pair."""

    def __init__(
        self,
        d: int,
        hidden: int,
        speech_mode: str,
        noise_mode: str,
        with_refiners: bool = True,
        with_mm_attention: bool = False,
    ):
        super().__init__()
        self.intra_att = DualBranchAttention(d, speech_mode, noise_mode)
        self.intra_post_s = _PostNorm(d)
        self.intra_post_n = _PostNorm(d)
        self.inter_att = DualBranchAttention(d, speech_mode, noise_mode)
        self.inter_post_s = _PostNorm(d)
        self.inter_post_n = _PostNorm(d)
        self.extractor = DprnnUnit(d, hidden) if with_refiners else None
        self.suppressor = DprnnUnit(d, hidden) if with_refiners else None
        self.mm_attention = MultimodalTemporalAttention(d, combine="separate") if with_mm_attention else None

    def forward(self, m_s, m_n, visual_chunks=None, need_scores=False):
        # m_s, m_n: B x D x K x P -> same shapes
        if m_s.shape != m_n.shape:
            raise ValueError(f"shape mismatch: {tuple(m_s.shape)} vs {tuple(m_n.shape)}")
        b, d, k, p = m_s.shape
        scores = []

        f_s, f_n = _to_intra(m_s), _to_intra(m_n)
        if need_scores:
            f_s, f_n, s_sc, n_sc = self.intra_att(f_s, f_n, need_scores=True, axis="intra")
            scores += [s_sc, n_sc]
        else:
            f_s, f_n = self.intra_att(f_s, f_n)
        f_s = self.intra_post_s(_from_intra(f_s, b, d, k, p))
        f_n = self.intra_post_n(_from_intra(f_n, b, d, k, p))

        g_s, g_n = _to_inter(f_s), _to_inter(f_n)
        if need_scores:
            g_s, g_n, s_sc, n_sc = self.inter_att(g_s, g_n, need_scores=True, axis="inter")
            scores += [s_sc, n_sc]
        else:
            g_s, g_n = self.inter_att(g_s, g_n)
        f_s = self.inter_post_s(_from_inter(g_s, b, d, k, p))
        f_n = self.inter_post_n(_from_inter(g_n, b, d, k, p))

        if self.mm_attention is not None:
            if visual_chunks is None:
                raise ValueError("this block was built with multi-modal attention; visual chunks required")
            v_q = _to_intra(visual_chunks)
            o_s, o_n = self.mm_attention(_to_intra(f_s), _to_intra(f_n), v_q)
            f_s = _from_intra(o_s, b, d, k, p)
            f_n = _from_intra(o_n, b, d, k, p)

        if self.extractor is not None:
            f_s = self.extractor(f_s)
            f_n = self.suppressor(f_n)
        if need_scores:
            return f_s, f_n, scores
        return f_s, f_n


class ExtractionNetwork(nn.Module):
    """End-to-end extraction model assembled from a NetworkConfig."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        dual = cfg.variant != "AV_DPRNN"

        self.audio_encoder = AudioEncoder(cfg.d_audio, cfg.win, cfg.hop)
        self.visual_encoder = (
            VisualEncoder(
                cfg.d_visual,
                frontend_dim=cfg.visual_frontend_dim,
                feature_in_dim=cfg.visual_feature_dim,
                fps=cfg.fps,
                upsample=cfg.upsample,
            )
            if cfg.visual_mode == "frames"
            else None
        )
        self.fusion = FusionModule(cfg.d_audio, cfg.d_visual, cfg.d)

        self.pre_extractor = DprnnUnit(cfg.d, cfg.recurrent_hidden)
        self.pre_suppressor = DprnnUnit(cfg.d, cfg.recurrent_hidden) if dual else None

        if dual:
            speech_mode, noise_mode = _VARIANT_ATTENTION[cfg.variant]
            self.blocks = nn.ModuleList(
                PsnlBlock(
                    cfg.d,
                    cfg.recurrent_hidden,
                    speech_mode,
                    noise_mode,
                    with_refiners=cfg.variant != "ALPHA",
                    with_mm_attention=cfg.mm_variant == "P",
                )
                for _ in range(cfg.r)
            )
        else:
            self.blocks = nn.ModuleList(DprnnUnit(cfg.d, cfg.recurrent_hidden) for _ in range(cfg.r))

        self.speech_head = MaskHead(cfg.d, cfg.d_audio)
        self.noise_head = MaskHead(cfg.d, cfg.d_audio) if dual else None
        self.decoder = WaveformDecoder(cfg.d_audio, cfg.win, cfg.hop)

        self.mm_visual_proj = None
        self.mm_fusion = None
        if cfg.mm_variant != "NONE":
            self.mm_visual_proj = nn.Conv1d(cfg.d_visual, cfg.d, kernel_size=1)
        if cfg.mm_variant == "F":
            self.mm_fusion = MultimodalTemporalAttention(cfg.d, combine=cfg.fusion_combine)

    @property
    def is_dual_branch(self) -> bool:
        return self.pre_suppressor is not None

    def _visual(self, visual_frames, visual_embedding, length: int, duration_s: float) -> torch.Tensor:
        if visual_embedding is not None:
            v = torch.as_tensor(visual_embedding)
            if v.dim() == 2:
                v = v.unsqueeze(0)
            if v.size(1) != self.cfg.d_visual or v.size(2) != length:
                raise ValueError(
                    f"visual embedding must be (B, {self.cfg.d_visual}, {length}), got {tuple(v.shape)}"
                )
            return v.to(next(self.parameters()).dtype)
        if visual_frames is None:
            raise ValueError("either visual_frames or visual_embedding is required")
        if self.visual_encoder is None:
            raise ValueError("network was built in oracle visual mode; pass visual_embedding")
        frames = torch.as_tensor(visual_frames).to(next(self.parameters()).dtype)
        if frames.dim() in (2, 3) and frames.shape[-1] == self.cfg.visual_feature_dim:
            if frames.dim() == 2:
                frames = frames.unsqueeze(0)
        elif frames.dim() == 3:  # single clip of images
            frames = frames.unsqueeze(0)
        return self.visual_encoder(frames, length, audio_duration_s=duration_s)

    def forward(
        self,
        mixture: torch.Tensor,
        visual_frames=None,
        visual_embedding=None,
        decode_all: bool = True,
        need_scores: bool = False,
    ):
        """Run extraction.  Returns BlockOutputs (and attention scores when asked).

        ``decode_all=False`` is the evaluation fast path: only the final speech
        estimate is decoded.
        """
        cfg = self.cfg
        x = torch.as_tensor(mixture)
        if x.dim() == 1:
            x = x.unsqueeze(0)
        x = x.to(next(self.parameters()).dtype)
        n_samples = x.size(-1)

        audio_emb = self.audio_encoder(x)  # B x D_a x L
        length = audio_emb.size(-1)
        visual = self._visual(visual_frames, visual_embedding, length, n_samples / cfg.sample_rate)

        fused = self.fusion(audio_emb, visual)  # B x D x L
        if cfg.mm_variant == "F":
            v_q = self.mm_visual_proj(visual).transpose(1, 2)
            fused = self.mm_fusion(fused.transpose(1, 2), fused.transpose(1, 2), v_q).transpose(1, 2)

        chunked = segment(fused, cfg.k)
        visual_chunks = None
        if cfg.mm_variant == "P":
            visual_chunks = segment(self.mm_visual_proj(visual), cfg.k).data

        all_scores = []
        if self.is_dual_branch:
            m_s = self.pre_extractor(chunked.data)
            m_n = self.pre_suppressor(chunked.data)
            speech_stages, noise_stages = [m_s], [m_n]
            for block in self.blocks:
                if need_scores:
                    m_s, m_n, scores = block(m_s, m_n, visual_chunks, need_scores=True)
                    all_scores.append(scores)
                else:
                    m_s, m_n = block(m_s, m_n, visual_chunks)
                speech_stages.append(m_s)
                noise_stages.append(m_n)
        else:
            m_s = self.pre_extractor(chunked.data)
            speech_stages = [m_s]
            noise_stages = []
            for block in self.blocks:
                m_s = block(m_s)
                speech_stages.append(m_s)

        outputs = BlockOutputs()
        to_decode = speech_stages if decode_all else speech_stages[-1:]
        for stage in to_decode:
            wav, feats = mask_and_decode(
                ChunkedEmbedding(stage, cfg.k, chunked.pad_len, chunked.orig_len),
                audio_emb,
                self.speech_head,
                self.decoder,
                n_samples,
            )
            outputs.decoded_speech.append(wav)
            outputs.speech_features.append(feats)
        if decode_all:
            for stage in noise_stages:
                wav, feats = mask_and_decode(
                    ChunkedEmbedding(stage, cfg.k, chunked.pad_len, chunked.orig_len),
                    audio_emb,
                    self.noise_head,
                    self.decoder,
                    n_samples,
                )
                outputs.decoded_noise.append(wav)
                outputs.noise_features.append(feats)
        if cfg.mm_variant == "A":
            outputs.visual_features = self.mm_visual_proj(visual)

        if need_scores:
            return outputs, all_scores
        return outputs

    def expected_frames(self, n_samples: int) -> int:
        return num_frames(n_samples, self.cfg.win, self.cfg.hop)


def _init_parameters(net: nn.Module) -> None:
    # Xavier-uniform linear/conv maps, orthogonal recurrent weights, zero biases
    for module in net.modules():
        if isinstance(module, (nn.Linear, nn.Conv1d, nn.Conv2d)):
            nn.init.xavier_uniform_(module.weight)
            if module.bias is not None:
                nn.init.zeros_(module.bias)
        elif isinstance(module, nn.LSTM):
            for name, param in module.named_parameters():
                if "weight" in name:
                    nn.init.orthogonal_(param)
                else:
                    nn.init.zeros_(param)


def build_network(cfg: NetworkConfig, seed: int = 0) -> ExtractionNetwork:
    """Construct and deterministically initialize a network for ``cfg``."""
    torch.manual_seed(seed)
    net = ExtractionNetwork(cfg)
    _init_parameters(net)
    return net


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def parameter_report(net: ExtractionNetwork) -> dict:
    """Total trainable parameters with a per-submodule breakdown."""
    breakdown = {}
    for name, child in net.named_children():
        if child is None:
            continue
        n = count_parameters(child)
        if n:
            breakdown[name] = n
    return {
        "total": count_parameters(net),
        "breakdown": breakdown,
        "variant": net.cfg.variant,
        "mm_variant": net.cfg.mm_variant,
    }

"""Audio-visual target speaker extraction toolkit.

Library layout:

- ``mixing``      -- synthetic sources, exact-SNR mixing, scenario generation, WAV/manifest I/O
- ``metrics``     -- SI-SDR / SDR, improvement metrics, incorrect-extraction counter
- ``encoders``    -- audio encoder, visual encoder, oracle visual embedding
- ``fusion``      -- audio-visual fusion, chunk segmentation and its exact inverse
- ``attention``   -- dual-branch attention with the reverse (negated-logit) cross term
- ``network``     -- dual-path units, parallel speech/noise blocks, network builder
- ``decoder``     -- mask head, overlap-add waveform decoder, composite training loss
- ``multimodal``  -- multi-modal temporal attention variants and contrastive AV loss
- ``training``    -- train/evaluate harness, checkpoints, deterministic seeding
- ``ablation``    -- desk-scale comparison suites
- ``plots``       -- spectrogram and summary figure emission
"""

from .mixing import (
    MixtureSample,
    VisualStream,
    Waveform,
    generate_scenario,
    load_wav,
    make_mixture,
    read_manifest,
    scale_to_snr,
    synth_source,
    write_wav,
)
from .metrics import count_incorrect_segments, improvement, sdr, si_sdr, si_sdr_loss
from .network import NetworkConfig, build_network

__all__ = [
    "MixtureSample",
    "NetworkConfig",
    "VisualStream",
    "Waveform",
    "build_network",
    "count_incorrect_segments",
    "generate_scenario",
    "improvement",
    "load_wav",
    "make_mixture",
    "read_manifest",
    "scale_to_snr",
    "sdr",
    "si_sdr",
    "si_sdr_loss",
    "synth_source",
    "write_wav",
]

__version__ = "0.1.0"

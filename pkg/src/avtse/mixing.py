"""Supervised mixture simulation: x = s + n with n a sum of exactly-scaled sources.

Every generator here is a pure function of its arguments and a seed, so
datasets are reproducible sample-by-sample.  Real recordings can be brought in
through WAV files and manifests; the synthetic source bank stands in for
speech/noise corpora at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

DEFAULT_SAMPLE_RATE = 16000
VIDEO_FPS = 25.0

#: scenario tags: S = one interfering speaker, N = non-speech background
SCENARIOS = ("S", "S_N", "S_S", "S_S_N", "N")

SOURCE_KINDS = ("speechlike", "tonal", "broadband_noise", "music_like")

SPEECH_SNR_RANGE_DB = (-10.0, 10.0)
NONSPEECH_SNR_RANGE_DB = (-5.0, 5.0)

_SILENCE_ENERGY = 1e-10


@dataclass
class Waveform:
    """A mono time-domain signal, nominal amplitude range [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))


@dataclass
class VisualStream:
    """Frame sequence for the target speaker.

    ``frames`` is either (F, H, W) gray-scale images or (F, feat) synthetic
    feature frames; both are accepted by the visual encoder.
    """

    frames: np.ndarray
    frame_rate: float = VIDEO_FPS

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim not in (2, 3):
            raise ValueError("frames must be (F, H, W) images or (F, feat) features")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class ScaledComponent:
    """One noise source after exact-SNR scaling against the target."""

    kind: str  # "speech" or "nonspeech"
    snr_db: float
    waveform: Waveform


@dataclass
class MixtureSample:
    """A supervised item: mixture = target + noise, plus the visual cue."""

    mixture: Waveform
    target: Waveform
    noise: Waveform
    visual: VisualStream | None
    scenario: str
    snr_db: float
    components: list[ScaledComponent] = field(default_factory=list)
    peak_factor: float = 1.0
    sample_id: str = ""
    additivity_tol: float = 1e-9  # loaders of independently quantized stems relax this

    def __post_init__(self):
        lengths = {len(self.mixture), len(self.target), len(self.noise)}
        rates = {self.mixture.sample_rate, self.target.sample_rate, self.noise.sample_rate}
        if len(lengths) != 1 or len(rates) != 1:
            raise ValueError("mixture/target/noise must share length and sample rate")
        residual = self.mixture.samples - self.target.samples - self.noise.samples
        if np.max(np.abs(residual)) > self.additivity_tol:
            raise ValueError(f"mixture does not equal target + noise within {self.additivity_tol}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario tag: {self.scenario!r}")


def _energy(x: np.ndarray) -> float:
    return float(np.dot(x, x))


def measured_snr_db(reference: Waveform, other: Waveform) -> float:
    """10*log10(||reference||^2 / ||other||^2)."""
    return 10.0 * np.log10(reference.energy / other.energy)


def scale_to_snr(target: Waveform, interference: Waveform, snr_db: float) -> Waveform:
    """Scale ``interference`` so its SNR against ``target`` equals ``snr_db`` exactly."""
    if len(target) != len(interference) or target.sample_rate != interference.sample_rate:
        raise ValueError("target and interference must share length and sample rate")
    e_s, e_o = target.energy, interference.energy
    if e_s < 1e-30 or e_o < 1e-30:
        raise ValueError("cannot define an SNR against a zero-energy signal")
    gain = np.sqrt(e_s / (e_o * 10.0 ** (snr_db / 10.0)))
    return Waveform(gain * interference.samples, interference.sample_rate)


def make_mixture(
    target: Waveform,
    interferers: list[Waveform],
    background: Waveform | None,
    snrs_db: list[float],
    visual: VisualStream | None = None,
    sample_id: str = "",
) -> MixtureSample:
    """Build x = s + sum(scaled interferers) + scaled background.

    Each noise source is scaled against the target independently at its own
    SNR, then summed.  If the mixture peak exceeds 1.0, mixture, target, noise
    and all stored components are divided by the same peak factor, preserving
    additivity and every SNR.
    """
    sources = list(interferers) + ([background] if background is not None else [])
    if not sources:
        raise ValueError("need at least one noise source; extraction is degenerate without one")
    if len(snrs_db) != len(sources):
        raise ValueError(f"expected {len(sources)} SNR values, got {len(snrs_db)}")
    if len(interferers) > 2:
        raise ValueError("scenario tags cover at most two interfering speakers")
    for src in sources:
        if len(src) != len(target) or src.sample_rate != target.sample_rate:
            raise ValueError("all sources must share the target's length and sample rate")

    components = []
    for i, (src, snr) in enumerate(zip(sources, snrs_db)):
        scaled = scale_to_snr(target, src, snr)
        kind = "speech" if i < len(interferers) else "nonspeech"
        components.append(ScaledComponent(kind, float(snr), scaled))

    noise = np.sum([c.waveform.samples for c in components], axis=0)
    target_samples = target.samples.copy()
    mixture = target_samples + noise

    peak = float(np.max(np.abs(mixture)))
    peak_factor = peak if peak > 1.0 else 1.0
    if peak_factor > 1.0:
        mixture = mixture / peak_factor
        target_samples = target_samples / peak_factor
        noise = noise / peak_factor
        components = [
            ScaledComponent(c.kind, c.snr_db, Waveform(c.waveform.samples / peak_factor, c.waveform.sample_rate))
            for c in components
        ]

    scenario = _infer_scenario(len(interferers), background is not None)
    rate = target.sample_rate
    overall_snr = 10.0 * np.log10(_energy(target_samples) / _energy(noise))
    return MixtureSample(
        mixture=Waveform(mixture, rate),
        target=Waveform(target_samples, rate),
        noise=Waveform(noise, rate),
        visual=visual,
        scenario=scenario,
        snr_db=float(overall_snr),
        components=components,
        peak_factor=peak_factor,
        sample_id=sample_id,
    )


def _infer_scenario(n_interferers: int, has_background: bool) -> str:
    tag = "_".join(["S"] * n_interferers + (["N"] if has_background else []))
    if tag not in SCENARIOS:
        raise ValueError(f"no scenario tag for {n_interferers} interferers, background={has_background}")
    return tag


def generate_scenario(
    kind: str,
    duration_s: float,
    rng_seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    with_visual: bool = False,
    sample_id: str = "",
) -> MixtureSample:
    """Draw one supervised mixture for the given scenario, deterministically.

    Interfering speech SNRs are uniform in [-10, 10] dB and non-speech SNRs
    uniform in [-5, 5] dB.  ``with_visual`` attaches synthetic 25 fps feature
    frames derived from the clean target; otherwise the oracle embedding path
    is expected downstream.
    """
    if kind not in SCENARIOS:
        raise ValueError(f"unknown scenario: {kind!r}")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    rng = np.random.default_rng(rng_seed)

    def draw(source_kind: str) -> Waveform:
        for _ in range(5):
            w = synth_source(source_kind, duration_s, int(rng.integers(2**31)), sample_rate)
            if w.energy >= _SILENCE_ENERGY:
                return w
        raise RuntimeError(f"could not draw a non-silent {source_kind} source")

    target = draw("speechlike")
    # tag tokens name the noise sources; the target speaker is implicit
    n_interferers = kind.split("_").count("S")
    has_background = "N" in kind.split("_")

    interferers = [draw("speechlike") for _ in range(n_interferers)]
    snrs = [float(rng.uniform(*SPEECH_SNR_RANGE_DB)) for _ in range(n_interferers)]
    background = None
    if has_background:
        bg_kind = str(rng.choice(["tonal", "broadband_noise", "music_like"]))
        background = draw(bg_kind)
        snrs.append(float(rng.uniform(*NONSPEECH_SNR_RANGE_DB)))

    visual = synthetic_visual_features(target) if with_visual else None
    return make_mixture(target, interferers, background, snrs, visual=visual, sample_id=sample_id)


def synthetic_visual_features(target: Waveform, n_bands: int = 24, fps: float = VIDEO_FPS) -> VisualStream:
    """Feature-frame stand-in for lip video: per-frame log band energies of the target."""
    n_frames = int(round(target.duration_s * fps))
    n_frames = max(n_frames, 1)
    hop = target.sample_rate / fps
    win = int(2 * hop)
    feats = np.zeros((n_frames, n_bands))
    for i in range(n_frames):
        start = int(round(i * hop))
        seg = target.samples[start : start + win]
        if seg.size < 8:
            continue
        spec = np.abs(np.fft.rfft(seg * np.hanning(seg.size))) ** 2
        edges = np.linspace(0, spec.size, n_bands + 1).astype(int)
        for b in range(n_bands):
            feats[i, b] = np.log10(np.sum(spec[edges[b] : max(edges[b + 1], edges[b] + 1)]) + 1e-10)
    feats -= feats.mean(axis=0, keepdims=True)
    feats /= feats.std(axis=0, keepdims=True) + 1e-6
    return VisualStream(feats, fps)


# ---------------------------------------------------------------------------
# Synthetic source bank
# ---------------------------------------------------------------------------


def synth_source(kind: str, duration_s: float, seed: int, sample_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Deterministic synthetic source with a kind-specific spectral envelope."""
    if kind not in SOURCE_KINDS:
        raise ValueError(f"unknown source kind: {kind!r}")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s * sample_rate))
    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate

    if kind == "speechlike":
        x = _speechlike(rng, t, n, sample_rate, duration_s)
    elif kind == "tonal":
        x = _tonal(rng, t, n)
    elif kind == "broadband_noise":
        x = _broadband(rng, n)
    else:
        x = _music_like(rng, t, n, sample_rate, duration_s)

    peak = np.max(np.abs(x))
    if peak > 0:
        x = 0.9 * x / peak
    return Waveform(x, sample_rate)


def _harmonic_stack(phase: np.ndarray, amps: list[float], rng: np.random.Generator) -> np.ndarray:
    out = np.zeros_like(phase)
    for k, a in enumerate(amps, start=1):
        out += a * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return out


def _speechlike(rng, t, n, sample_rate, duration_s):
    # drifting pitch + formant-shaped harmonics + syllable-rate amplitude modulation
    f0 = rng.uniform(95.0, 230.0)
    drift = 1.0 + 0.04 * np.sin(2 * np.pi * rng.uniform(1.5, 3.5) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * drift) / sample_rate
    amps = []
    for k in range(1, 11):
        fk = k * f0
        formants = 0.35 + np.exp(-0.5 * ((fk - 550.0) / 350.0) ** 2) + 0.7 * np.exp(-0.5 * ((fk - 1650.0) / 500.0) ** 2)
        amps.append(formants / k)
    voiced = _harmonic_stack(phase, amps, rng)

    n_ctrl = max(4, int(round(duration_s * 8)))
    ctrl = rng.random(n_ctrl) ** 1.5
    env = np.interp(np.linspace(0, n_ctrl - 1, n), np.arange(n_ctrl), ctrl)
    env = 0.08 + 0.92 * env

    hiss = rng.normal(size=n)
    hiss = np.diff(hiss, prepend=hiss[0])  # first difference: high-pass excitation
    return env * (voiced + 0.25 * hiss)


def _tonal(rng, t, n):
    freqs = rng.uniform(200.0, 2000.0, size=rng.integers(1, 4))
    tremolo = 1.0 + 0.1 * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
    x = np.zeros(n)
    for f in freqs:
        x += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)) / len(freqs)
    fade = np.minimum(1.0, np.minimum(t, t[::-1]) / 0.05) if n > 1 else np.ones(n)
    return x * tremolo * fade


def _broadband(rng, n):
    white = rng.normal(size=n)
    spec = np.fft.rfft(white)
    freqs = np.arange(spec.size)
    tilt = rng.uniform(0.0, 0.35)  # keep spectra broad; flatness stays well above harmonic sources
    spec = spec / np.maximum(freqs, 1.0) ** tilt
    return np.fft.irfft(spec, n=n)


def _music_like(rng, t, n, sample_rate, duration_s):
    # note grid with decaying harmonic chords on a 12-TET lattice
    x = np.zeros(n)
    pos = 0
    while pos < n:
        note_len = int(rng.uniform(0.25, 0.6) * sample_rate)
        note_len = min(note_len, n - pos)
        if note_len < 8:
            break
        seg_t = np.arange(note_len) / sample_rate
        decay = np.exp(-seg_t / rng.uniform(0.15, 0.4))
        chord = np.zeros(note_len)
        for _ in range(rng.integers(2, 4)):
            f = 110.0 * 2.0 ** (rng.integers(0, 25) / 12.0)
            for k in range(1, 6):
                chord += np.sin(2 * np.pi * k * f * seg_t + rng.uniform(0, 2 * np.pi)) / k**2
        x[pos : pos + note_len] += chord * decay
        pos += note_len
    x += 0.01 * rng.normal(size=n)
    return x


# ---------------------------------------------------------------------------
# WAV and manifest I/O
# ---------------------------------------------------------------------------

PCM16_SCALE = 32767.0


def write_wav(path: str | Path, waveform: Waveform) -> None:
    """Write mono 16-bit PCM little-endian."""
    clipped = np.clip(waveform.samples, -1.0, 1.0)
    pcm = np.round(clipped * PCM16_SCALE).astype(np.int16)
    wavfile.write(str(path), waveform.sample_rate, pcm)


def load_wav(path: str | Path, expected_rate: int | None = None) -> Waveform:
    rate, data = wavfile.read(str(path))
    if expected_rate is not None and rate != expected_rate:
        raise ValueError(f"{path}: sample rate {rate} does not match expected {expected_rate}")
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    return Waveform(data.astype(np.float64) / PCM16_SCALE, rate)


MANIFEST_REQUIRED_FIELDS = ("id", "mixture_path", "target_path", "noise_path", "scenario", "snr_db")


@dataclass
class ManifestEntry:
    id: str
    mixture_path: str
    target_path: str
    noise_path: str
    scenario: str
    snr_db: float
    visual_path: str | None = None


def write_manifest(path: str | Path, entries: list[ManifestEntry]) -> None:
    with open(path, "w") as f:
        for e in entries:
            record = {
                "id": e.id,
                "mixture_path": e.mixture_path,
                "target_path": e.target_path,
                "noise_path": e.noise_path,
                "scenario": e.scenario,
                "snr_db": e.snr_db,
            }
            if e.visual_path is not None:
                record["visual_path"] = e.visual_path
            f.write(json.dumps(record) + "\n")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Parse a line-delimited manifest; errors carry the 1-based line number."""
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            for fld in MANIFEST_REQUIRED_FIELDS:
                if fld not in record:
                    raise ValueError(f"{path}:{lineno}: missing required field {fld!r}")
            entries.append(
                ManifestEntry(
                    id=str(record["id"]),
                    mixture_path=str(record["mixture_path"]),
                    target_path=str(record["target_path"]),
                    noise_path=str(record["noise_path"]),
                    scenario=str(record["scenario"]),
                    snr_db=float(record["snr_db"]),
                    visual_path=record.get("visual_path"),
                )
            )
    return entries


def load_sample(entry: ManifestEntry, base_dir: str | Path, expected_rate: int | None = None) -> MixtureSample:
    """Load one manifest entry.  The three stems are quantized independently
    on disk, so additivity is only checked to within a few PCM steps here."""
    base = Path(base_dir)
    mixture = load_wav(base / entry.mixture_path, expected_rate)
    target = load_wav(base / entry.target_path, mixture.sample_rate)
    noise = load_wav(base / entry.noise_path, mixture.sample_rate)
    visual = None
    if entry.visual_path is not None:
        frames = np.load(base / entry.visual_path)
        visual = VisualStream(frames)
    return MixtureSample(
        mixture=mixture,
        target=target,
        noise=noise,
        visual=visual,
        scenario=entry.scenario,
        snr_db=entry.snr_db,
        sample_id=entry.id,
        additivity_tol=2.0**-13,
    )


def generate_dataset(
    out_dir: str | Path,
    scenario: str,
    count: int,
    duration_s: float,
    seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    with_visual: bool = False,
) -> list[ManifestEntry]:
    """Generate ``count`` mixtures, write WAVs plus ``manifest.jsonl``, return entries."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        sid = f"{scenario}_{i:05d}"
        sample = generate_scenario(scenario, duration_s, seed + i, sample_rate, with_visual, sample_id=sid)
        paths = {}
        for role, wf in (("mix", sample.mixture), ("target", sample.target), ("noise", sample.noise)):
            rel = f"{sid}_{role}.wav"
            write_wav(out / rel, wf)
            paths[role] = rel
        visual_path = None
        if sample.visual is not None:
            visual_path = f"{sid}_visual.npy"
            np.save(out / visual_path, sample.visual.frames)
        entries.append(
            ManifestEntry(
                id=sid,
                mixture_path=paths["mix"],
                target_path=paths["target"],
                noise_path=paths["noise"],
                scenario=scenario,
                snr_db=sample.snr_db,
                visual_path=visual_path,
            )
        )
    write_manifest(out / "manifest.jsonl", entries)
    return entries

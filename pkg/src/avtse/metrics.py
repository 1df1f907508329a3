"""Reference evaluation metrics and the incorrect-extraction diagnostic.

``si_sdr``/``sdr`` accept numpy arrays (returning floats) or torch tensors
(returning differentiable tensors reduced over the last axis), so the same
formula serves evaluation and training.  All log-ratio denominators and the
projection divisor are stabilized with ``eps = 1e-12``, capping values near
+/-120 dB.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

EPS = 1e-12

#: value reported when a reference segment is silent and no ratio is defined
SILENT_REF_DB = -120.0


def _is_tensor(x) -> bool:
    return isinstance(x, torch.Tensor)


def si_sdr(est, ref):
    """Scale-invariant SDR in dB: 10*log10(||a*ref||^2 / ||est - a*ref||^2).

    ``a = <est, ref> / ||ref||^2`` projects the estimate onto the reference,
    so any positive rescaling of ``est`` is absorbed.  Raises on a zero-energy
    reference; a zero-energy estimate returns the eps-floored value instead.
    """
    if _is_tensor(est) or _is_tensor(ref):
        est = torch.as_tensor(est)
        ref = torch.as_tensor(ref)
        if est.shape != ref.shape:
            raise ValueError(f"shape mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}")
        ref_energy = (ref * ref).sum(dim=-1)
        if bool((ref_energy < 1e-30).any()):
            raise ValueError("reference has zero energy; SI-SDR is undefined")
        alpha = (est * ref).sum(dim=-1) / (ref_energy + EPS)
        proj = alpha.unsqueeze(-1) * ref
        err = est - proj
        num = (proj * proj).sum(dim=-1)
        den = (err * err).sum(dim=-1)
        return 10.0 * torch.log10((num + EPS) / (den + EPS))

    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy < 1e-30:
        raise ValueError("reference has zero energy; SI-SDR is undefined")
    alpha = float(np.dot(est, ref)) / (ref_energy + EPS)
    proj = alpha * ref
    err = est - proj
    num = float(np.dot(proj, proj))
    den = float(np.dot(err, err))
    return float(10.0 * np.log10((num + EPS) / (den + EPS)))


def si_sdr_loss(est, ref):
    """Training loss: the negative of ``si_sdr`` (lower is better)."""
    return -si_sdr(est, ref)


def sdr(est, ref):
    """Energy-ratio SDR in dB: 10*log10(||ref||^2 / ||est - ref||^2)."""
    if _is_tensor(est) or _is_tensor(ref):
        est = torch.as_tensor(est)
        ref = torch.as_tensor(ref)
        if est.shape != ref.shape:
            raise ValueError(f"shape mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}")
        ref_energy = (ref * ref).sum(dim=-1)
        if bool((ref_energy < 1e-30).any()):
            raise ValueError("reference has zero energy; SDR is undefined")
        err = est - ref
        return 10.0 * torch.log10((ref_energy + EPS) / ((err * err).sum(dim=-1) + EPS))

    est = np.asarray(est, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    ref_energy = float(np.dot(ref, ref))
    if ref_energy < 1e-30:
        raise ValueError("reference has zero energy; SDR is undefined")
    err = est - ref
    return float(10.0 * np.log10((ref_energy + EPS) / (float(np.dot(err, err)) + EPS)))


def improvement(metric_fn, est, mixture, ref):
    """metric(est, ref) - metric(mixture, ref), the usual "i"-suffix metric."""
    return metric_fn(est, ref) - metric_fn(mixture, ref)


def _segment_si_sdr(est_seg: np.ndarray, ref_seg: np.ndarray) -> float:
    if float(np.dot(ref_seg, ref_seg)) < 1e-30:
        return SILENT_REF_DB
    return si_sdr(est_seg, ref_seg)


def count_incorrect_segments(
    est,
    target,
    noise,
    segment_len_s: float,
    mu_db: float,
    sample_rate: int = 16000,
    loss_semantics: bool = False,
) -> int:
    """Count fixed-length segments where the estimate tracks the noise.

    A segment is incorrect when SI-SDR(est, target) < SI-SDR(est, noise) - mu,
    i.e. the output is closer to the ground-truth noise than to the speech by
    more than the ``mu_db`` margin.  The trailing partial segment is dropped.
    ``loss_semantics=True`` applies the same rule to negated (loss-valued)
    scores instead, which inverts the inequality.
    """
    est = np.asarray(est, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if not (est.shape == target.shape == noise.shape):
        raise ValueError("est/target/noise must share shape")
    if segment_len_s <= 0:
        raise ValueError("segment_len_s must be positive")
    seg = int(round(segment_len_s * sample_rate))
    if seg < 2:
        raise ValueError("segment length must cover at least 2 samples")

    count = 0
    for start in range(0, est.size - seg + 1, seg):
        sl = slice(start, start + seg)
        score_s = _segment_si_sdr(est[sl], target[sl])
        score_n = _segment_si_sdr(est[sl], noise[sl])
        if loss_semantics:
            incorrect = -score_s < -score_n - mu_db
        else:
            incorrect = score_s < score_n - mu_db
        count += int(incorrect)
    return count


@dataclass
class MetricsReport:
    """Per-utterance rows plus aggregate means for an evaluation run."""

    rows: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    segment_len_s: float = 0.5
    mu_db: float = 1.0

    METRIC_KEYS = ("si_sdr", "sdr", "si_sdri", "sdri")

    def add_row(self, sample_id: str, est, mixture, target, noise, **extra) -> dict:
        row = {
            "id": sample_id,
            "si_sdr": si_sdr(est, target),
            "sdr": sdr(est, target),
            "si_sdri": improvement(si_sdr, est, mixture, target),
            "sdri": improvement(sdr, est, mixture, target),
            "incorrect_segments": count_incorrect_segments(
                est, target, noise, self.segment_len_s, self.mu_db,
            ),
        }
        row.update(extra)
        self.rows.append(row)
        return row

    def aggregate(self) -> dict:
        agg = {}
        for key in self.METRIC_KEYS:
            values = [r[key] for r in self.rows]
            agg[key] = float(np.mean(values)) if values else float("nan")
        agg["incorrect_segments"] = int(sum(r["incorrect_segments"] for r in self.rows))
        agg["count"] = len(self.rows)
        agg["errors"] = len(self.errors)
        return agg

    def render_text(self) -> str:
        lines = [f"{'id':<16} {'si_sdr':>9} {'sdr':>9} {'si_sdri':>9} {'sdri':>9} {'bad_seg':>8}"]
        for r in self.rows:
            lines.append(
                f"{r['id']:<16} {r['si_sdr']:>9.3f} {r['sdr']:>9.3f} "
                f"{r['si_sdri']:>9.3f} {r['sdri']:>9.3f} {r['incorrect_segments']:>8d}"
            )
        agg = self.aggregate()
        lines.append(
            f"{'MEAN':<16} {agg['si_sdr']:>9.3f} {agg['sdr']:>9.3f} "
            f"{agg['si_sdri']:>9.3f} {agg['sdri']:>9.3f} {agg['incorrect_segments']:>8d}"
        )
        if self.errors:
            lines.append(f"errors: {len(self.errors)}")
            for e in self.errors:
                lines.append(f"  {e['id']}: {e['error']}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "errors": self.errors,
            "aggregate": self.aggregate(),
            "segment_len_s": self.segment_len_s,
            "mu_db": self.mu_db,
        }

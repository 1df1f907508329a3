"""Metric behavior: scale invariance, improvements, incorrect-extraction counts.

Run:  python demos/02_metrics.py
"""

import numpy as np

from avtse.metrics import count_incorrect_segments, improvement, sdr, si_sdr

rng = np.random.default_rng(0)
ref = rng.standard_normal(16000)
noise = rng.standard_normal(16000)
mixture = ref + noise

print("scale invariance of SI-SDR (the projection absorbs any gain):")
est = ref + 0.5 * noise
for c in (0.1, 1.0, 100.0):
    print(f"  si_sdr({c:>5} * est, ref) = {si_sdr(c * est, ref):8.4f} dB")

print("\nimprovement metrics relative to the unprocessed mixture:")
print(f"  si_sdr(mixture) = {si_sdr(mixture, ref):7.3f} dB   si_sdri(est) = {improvement(si_sdr, est, mixture, ref):6.3f} dB")
print(f"  sdr(mixture)    = {sdr(mixture, ref):7.3f} dB   sdri(est)    = {improvement(sdr, est, mixture, ref):6.3f} dB")

print("\nincorrect-extraction counter (0.5 s segments, margin mu):")
half_and_half = np.concatenate([ref[:8000], noise[8000:]])
for mu in (0.0, 1.0, 3.0):
    n_bad = count_incorrect_segments(half_and_half, ref, noise, 0.5, mu)
    print(f"  estimate = [target | noise], mu={mu}: {n_bad} of 2 segments flagged")

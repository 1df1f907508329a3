"""Chunk segmentation and its exact inverse.

Run:  python demos/03_segmentation.py
"""

import torch

from avtse.fusion import aggregate, chunk_count, segment

e = torch.randn(1, 4, 250, dtype=torch.float64)

chunked = segment(e, k=100)
print(f"sequence of 250 frames, K=100 (hop 50): P={chunked.p} chunks, pad={chunked.pad_len}")
print("chunk c covers frames [50c, 50c + 100):")
for c in range(chunked.p):
    print(f"  chunk {c}: frames {50 * c}..{50 * c + 99}")

back = aggregate(chunked)
print(f"round-trip max |aggregate(segment(E)) - E| = {float((back - e).abs().max()):.3e}")

print("\nchunk-count law P = ceil(max(L - K, 0) / (K/2)) + 1:")
for length, k in ((100, 100), (99, 100), (101, 100), (250, 100), (5, 16)):
    c = segment(torch.zeros(1, 1, length), k)
    print(f"  L={length:4d} K={k:3d} -> P={c.p} (pad {c.pad_len})  [chunk_count={chunk_count(length, k)}]")

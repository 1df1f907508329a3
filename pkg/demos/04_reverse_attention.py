"""The dual-branch attention module and its ablation modes.

The speech branch averages plain self-attention with a cross term whose
logits (noise query against speech keys) are negated before the softmax, so
speech frames that resemble the estimated noise lose weight.

Run:  python demos/04_reverse_attention.py
"""

import torch

from avtse.attention import ATTENTION_MODES, DualBranchAttention

torch.manual_seed(0)
d, n = 16, 12
f_speech, f_noise = torch.randn(1, n, d), torch.randn(1, n, d)

print("applied score matrix row sums (must be 1) and negative-entry count:")
for mode in ATTENTION_MODES:
    att = DualBranchAttention(d, speech_mode=mode)
    _, _, s_scores, _ = att(f_speech, f_noise, need_scores=True)
    a = s_scores.a
    print(f"  {mode:15s} max |row sum - 1| = {float((a.sum(-1) - 1).abs().max()):.2e}, min entry = {float(a.min()):.2e}")

print("\ntied weights (noise cross-query = -speech self-query, identical inputs):")
att = DualBranchAttention(d, speech_mode="FULL")
with torch.no_grad():
    att.noise.query_cross.weight.copy_(-att.speech.query_self.weight)
    att.noise.query_cross.bias.copy_(-att.speech.query_self.bias)
_, _, s_scores, _ = att(f_speech, f_speech.clone(), need_scores=True)
print(f"  reverse term == self term: {torch.equal(s_scores.a_minus, s_scores.a_plus)}")

print("\nzeroing the value projections leaves only the residual path:")
att = DualBranchAttention(d, speech_mode="FULL")
with torch.no_grad():
    for branch in (att.speech, att.noise):
        branch.value.weight.zero_()
        branch.value.bias.zero_()
out_s, out_n = att(f_speech, f_noise)
print(f"  outputs identical to inputs: {torch.equal(out_s, f_speech) and torch.equal(out_n, f_noise)}")

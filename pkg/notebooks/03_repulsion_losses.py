"""
Repulsion losses along a shift
==============================

Slide a predicted box from its own ground truth G to the neighbouring ground
truth R and compare the plain repulsion loss with the truncated normalized
variant. The plain loss starts high because G already covers part of R; the
normalized one starts at exactly 0 and reaches its cap only when B lands on R.
"""

import numpy as np

from chromodet.geometry import Box
from chromodet.losses import ProposalTriple, normalized_iog, shift_curve, tnrl_term, tnrl_term_grad

for overlap in (0.3, 0.5, 0.7):
    c = shift_curve(overlap, steps=10)
    print(f"overlap IoU {overlap}")
    print("  shift  " + " ".join(f"{s:5.1f}" for s in c.shift))
    print("  RL     " + " ".join(f"{v:5.2f}" for v in c.rl))
    print("  TNRL   " + " ".join(f"{v:5.2f}" for v in c.tnrl))
    print(f"  range: RL {np.ptp(c.rl):.3f}, TNRL {np.ptp(c.tnrl):.3f}")

#%%
# One triple by hand. IoG(B, R) = 0.7 and IoG(G, R) = 0.5, so the
# normalized value is (0.7 - 0.5) / (1 - 0.5) = 0.4.
g, r, b = Box(0, 0, 10, 10), Box(5, 0, 15, 10), Box(2, 0, 12, 10)
tri = ProposalTriple(b, g, r)
print("normalized IoG", normalized_iog(b, r, g))
print("TNRL term", tnrl_term(tri), "= -ln 0.6")
print("d/d(x1, y1, x2, y2)", tnrl_term_grad(tri))

#%%
# Curves for plotting elsewhere
shift_curve(0.5).to_csv("shift_curve_0.5.csv")

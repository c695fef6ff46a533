"""How the three-condition score composition behaves as scales move.

Uses hand-made noise estimates so the affine structure is visible by eye:
the coefficients always sum to one, scale 0 recovers the unconditional
estimate, and each scale pushes the composition toward its condition.
"""
import numpy as np

from stylediff import GuidanceScales, cfg, composed_guidance

eps_null = np.zeros(4)
eps_content = np.array([1.0, 0.0, 0.0, 0.0])
eps_style = np.array([0.0, 1.0, 0.0, 0.0])
eps_mask = np.array([0.0, 0.0, 1.0, 0.0])

print("single-condition classifier-free guidance (uncond=0, cond=1):")
for s in (0.0, 0.5, 1.0, 2.0, 4.0):
    v = cfg(np.ones(1), np.zeros(1), s)[0]
    print(f"  s={s:3.1f} -> {v:+.2f}")

print("\ncomposed guidance as the style scale sweeps (s_I=1.2, s_M=0.5):")
for s_t in (0.0, 0.5, 1.5, 3.0):
    scales = GuidanceScales(1.2, s_t, 0.5)
    out = composed_guidance(eps_null, eps_content, eps_style, eps_mask, scales)
    print(f"  s_T={s_t:3.1f} -> {np.round(out, 2)}")

print("\nshift invariance (coefficients sum to 1): adding 10 to every input")
scales = GuidanceScales(1.2, 1.5, 0.5)
a = composed_guidance(eps_null, eps_content, eps_style, eps_mask, scales)
b = composed_guidance(eps_null + 10, eps_content + 10, eps_style + 10, eps_mask + 10, scales)
print(f"  output shift: {np.round(b - a, 12)}")

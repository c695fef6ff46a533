"""Self-attention saliency masks from the denoiser's attention block.

Runs an untrained denoiser on the latent of a synthetic frame, reads the
attention record, and prints the binary saliency mask next to the frame so
you can see which patches receive above-average attention. The mask images
are also written as PGM files under /tmp/stylediff_masks.
"""
import numpy as np

from stylediff import ConditionSet, DenoiserConfig, Rng, forward, generate_video, init_denoiser, random_scene
from stylediff.attention import saliency_mask
from stylediff.containers import export_pgm

vid = generate_video(random_scene(Rng(12), 16, 1))
frame = vid[0]

cfg = DenoiserConfig(latent_channels=3, timesteps=30)
w = init_denoiser(cfg, Rng(3))
_, rec = forward(frame, 10, ConditionSet(style=1), w)
mask = saliency_mask(rec)

print(f"attention record: {rec.a.shape[0]} heads, {rec.a.shape[1]} patches")
print(f"threshold psi = {mask.psi:.6f} (the mean received attention)")
print(f"mask keeps {int(mask.m.sum())} of {mask.m.size} patches\n")

lum = frame.mean(axis=0)
for i in range(16):
    row_img = "".join(" .:-=+*#%@"[min(int(v * 10), 9)] for v in lum[i])
    row_msk = "".join("#" if v else "." for v in mask.m[i])
    print(f"  {row_img}    {row_msk}")

paths = export_pgm(np.stack([lum[None], mask.m[None]]), "/tmp/stylediff_masks")
print("\nwrote", ", ".join(paths))

"""Classifier-free guidance and the three-condition score composition.

Both operations are affine combinations of noise estimates whose
coefficients sum to one, so shifting every estimate by a constant shifts
the output by exactly that constant.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .numerics import as_grid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GuidanceScales:
    s_content: float = 1.2
    s_style: float = 1.5
    s_mask: float = 0.5

    def __post_init__(self):
        vals = (self.s_content, self.s_style, self.s_mask)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("guidance scales must be finite")
        if any(v < 0 for v in vals):
            log.warning("negative guidance scale(s) %s: exploratory territory", vals)


def cfg(eps_cond, eps_uncond, s):
    """Single-condition guidance: uncond + s * (cond - uncond)."""
    eps_cond = as_grid(eps_cond)
    eps_uncond = as_grid(eps_uncond)
    if eps_cond.shape != eps_uncond.shape:
        raise ValueError("guidance estimates must share a shape")
    return eps_uncond + s * (eps_cond - eps_uncond)


def composed_guidance(eps_null, eps_content, eps_style, eps_mask, scales):
    """(1 - sI - sT - sM) * eps_null + sI*eps_I + sT*eps_T + sM*eps_M."""
    grids = [as_grid(g) for g in (eps_null, eps_content, eps_style, eps_mask)]
    if any(g.shape != grids[0].shape for g in grids[1:]):
        raise ValueError("guidance estimates must share a shape")
    si, st, sm = scales.s_content, scales.s_style, scales.s_mask
    return (1.0 - si - st - sm) * grids[0] + si * grids[1] + st * grids[2] + sm * grids[3]

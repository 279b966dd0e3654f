"""Binary tactile pads and the opposing-contact closure test.

A pad registers contact when its center's signed distance to the object
surface is at most the pad radius; penetration (negative distance) counts as
contact, which keeps the kinematic hand robust to over-closing. Pad layout
follows kinematics.hand_fk_full: indices 0..7 are finger pads (mid, tip per
finger; thumb is pads 6 and 7), index 8 is the palm.
"""
from __future__ import annotations

import numpy as np

PALM_PAD = 8
THUMB_PADS = (6, 7)
NON_THUMB_PADS = (0, 1, 2, 3, 4, 5)


def pad_contact_flags(pads: np.ndarray, sdf, radius: float) -> np.ndarray:
    """(9,) 0/1 flags; `sdf` maps (N,3) world points to signed distances."""
    sd = np.asarray(sdf(pads), dtype=np.float64)
    return (sd <= radius).astype(np.int64)


def touch_summary(flags: np.ndarray) -> tuple[int, int]:
    """(f_touch, c_palm): finger-pad contact count and the palm flag."""
    return int(np.sum(flags[:PALM_PAD])), int(flags[PALM_PAD])


def has_opposing_pair(pads: np.ndarray, flags: np.ndarray, center: np.ndarray,
                      sdf, n_segment_samples: int = 17) -> bool:
    """True if a contacting thumb pad and finger pad sit on opposing sides.

    Opposing means the object center projects strictly between the two
    contact points along their connecting axis AND the segment between them
    passes through the object interior (rejects same-face pinches, where
    the segment skims along the surface without ever entering it).
    """
    thumb_hits = [i for i in THUMB_PADS if flags[i]]
    finger_hits = [i for i in NON_THUMB_PADS if flags[i]]
    ts = np.linspace(0.0, 1.0, n_segment_samples)[:, None]
    for ti in thumb_hits:
        for fi in finger_hits:
            axis = pads[ti] - pads[fi]
            norm = np.linalg.norm(axis)
            if norm < 1e-9:
                continue
            u = axis / norm
            s_f = float(u @ (pads[fi] - center))
            s_t = float(u @ (pads[ti] - center))
            if not (s_f < 0.0 < s_t):
                continue
            segment = pads[fi] + ts * axis
            if float(np.min(sdf(segment))) <= 0.0:
                return True
    return False

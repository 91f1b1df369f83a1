"""Pure-numpy raycast kernel; arithmetic mirrors _raycast.pyx op for op.

Both backends must produce bit-identical outputs: same IEEE divisions,
same strict comparisons, same first-wins tie handling.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "numpy"


def raycast_into(origin, dirs, boxes, out_t, out_idx, out_axis):
    """Nearest box hit per pixel.

    origin: (3,) float64; dirs: (H, W, 3) float64 unit rays;
    boxes: (N, 6) float64 rows [minx, miny, minz, maxx, maxy, maxz].
    Writes entry distance (inf on miss), box index (-1 on miss) and the
    slab axis that produced the entry (-1 on miss). Boundary contact counts
    as a hit; an origin inside a box hits at t = 0; ties on t keep the
    lowest box index.
    """
    h, w, _ = dirs.shape
    out_t.fill(np.inf)
    out_idx.fill(-1)
    out_axis.fill(-1)

    for bi in range(boxes.shape[0]):
        tlo = np.full((h, w), -np.inf)
        thi = np.full((h, w), np.inf)
        axis = np.full((h, w), -1, dtype=np.int8)
        alive = np.ones((h, w), dtype=bool)
        for ax in range(3):
            d = dirs[:, :, ax]
            o = origin[ax]
            lo = boxes[bi, ax]
            hi = boxes[bi, ax + 3]
            nz = d != 0.0
            safe = np.where(nz, d, 1.0)
            t1 = (lo - o) / safe
            t2 = (hi - o) / safe
            lo_t = np.minimum(t1, t2)
            hi_t = np.maximum(t1, t2)
            # parallel rays: inside the slab -> unconstrained, else dead
            inside = (o >= lo) & (o <= hi)
            lo_t = np.where(nz, lo_t, -np.inf)
            hi_t = np.where(nz, hi_t, np.inf)
            alive &= nz | inside
            upd = lo_t > tlo
            axis = np.where(upd, np.int8(ax), axis)
            tlo = np.maximum(tlo, lo_t)
            thi = np.minimum(thi, hi_t)
        hit = alive & (thi >= tlo) & (thi >= 0.0)
        entry = np.where(tlo > 0.0, tlo, 0.0)
        better = hit & (entry < out_t)
        out_t[better] = entry[better]
        out_idx[better] = bi
        out_axis[better] = axis[better]

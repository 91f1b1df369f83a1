"""Raycast backend selection: compiled extension if built, numpy otherwise.

Set CAPNAV_PURE_PYTHON=1 to force the numpy path (used by tests and the
benchmark to exercise both backends).
"""

from __future__ import annotations

import os

import numpy as np

from capnav import _raycast_py

if os.environ.get("CAPNAV_PURE_PYTHON") == "1":
    _impl = _raycast_py
else:
    try:
        from capnav import _raycast as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _raycast_py

BACKEND = _impl.BACKEND_NAME


def raycast_grid(origin, dirs, boxes, impl=None):
    """Nearest-hit raycast of a (H, W) ray grid against N boxes.

    Returns (t, idx, axis): entry distances (inf on miss), box indices
    (-1 on miss) and entry slab axes (-1 on miss).
    """
    impl = impl or _impl
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6)
    h, w, _ = dirs.shape
    out_t = np.empty((h, w), dtype=np.float64)
    out_idx = np.empty((h, w), dtype=np.int32)
    out_axis = np.empty((h, w), dtype=np.int8)
    impl.raycast_into(origin, dirs, boxes, out_t, out_idx, out_axis)
    return out_t, out_idx, out_axis


def available_backends() -> dict[str, object]:
    """Importable kernel implementations keyed by name."""
    impls: dict[str, object] = {_raycast_py.BACKEND_NAME: _raycast_py}
    try:
        from capnav import _raycast

        impls[_raycast.BACKEND_NAME] = _raycast
    except ImportError:
        pass
    return impls

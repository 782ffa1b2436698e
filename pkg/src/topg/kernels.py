"""Kernel backend selection.

Prefers the compiled extension, falls back to the pure-Python twin.
Set TOPG_KERNELS=py (or =c) to force a backend; forcing the compiled
backend raises if it is not importable.
"""

from __future__ import annotations

import os

_choice = os.environ.get("TOPG_KERNELS", "").strip().lower()

if _choice in ("py", "python"):
    from . import _kernels_py as _impl
elif _choice in ("c", "compiled", "cython"):
    from . import _kernels as _impl  # type: ignore[no-redef]
elif _choice == "":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as _impl
else:
    raise RuntimeError(f"unknown TOPG_KERNELS value {_choice!r}")

BACKEND_NAME: str = _impl.BACKEND_NAME
label_edge_groups = _impl.label_edge_groups
build_reach = _impl.build_reach
refine_boxes = _impl.refine_boxes
score_boxes = _impl.score_boxes
nms_keep = _impl.nms_keep

"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-Python twin is
the fallback. Set CYCLICDP_PURE=1 to force the fallback. Both produce
bit-identical results; only speed differs.
"""

from __future__ import annotations

import os


def load_backend(name: str | None = None):
    if name is None:
        name = "python" if os.environ.get("CYCLICDP_PURE") == "1" else "auto"
    if name in ("auto", "compiled"):
        try:
            from . import _kernels

            return _kernels
        except ImportError:
            if name == "compiled":
                raise
    from . import _kernels_py

    return _kernels_py


kernels = load_backend()
BACKEND_NAME = kernels.NAME

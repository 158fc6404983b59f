"""Backend selection for the hot growth and valuation kernels.

The compiled extension is preferred; set ``BOREALROT_PURE=1`` to force the
numpy fallback (used by the equivalence tests and the benchmark).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("BOREALROT_PURE"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernels_py

BACKEND = "compiled" if _impl is not _kernels_py else "python"

simulate = _impl.simulate
thinning_fractions = _impl.thinning_fractions
cycle_curve = _impl.cycle_curve


def get_backend(name: str):
    """Return the kernel module named ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")

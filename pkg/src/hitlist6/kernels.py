"""Kernel backend selection.

The compiled ``_core`` extension is used when it was built; otherwise the
pure-Python ``_pycore`` kernels. Set ``HITLIST6_PURE=1`` to force the
fallback.
"""

from __future__ import annotations

import os

from . import _pycore

if os.environ.get("HITLIST6_PURE", "") not in ("", "0"):
    _impl = _pycore
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pycore

BACKEND: str = _impl.BACKEND
cluster_runs = _impl.cluster_runs
dense_prefixes = _impl.dense_prefixes


def compiled():
    """The compiled module, or ``None`` when it is not built."""
    try:
        from . import _core
    except ImportError:
        return None
    return _core

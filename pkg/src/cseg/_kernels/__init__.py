"""Fusion kernel backends: compiled extension with pure-Python fallback.

The compiled kernel is selected at import when available; setting the
CSEG_PURE environment variable forces the fallback. Both produce
bit-identical labelings.
"""

import os

if os.environ.get("CSEG_PURE"):
    from . import fusion_py as backend
else:
    try:
        from . import _fusion as backend  # type: ignore[attr-defined]
    except ImportError:
        from . import fusion_py as backend

fuse = backend.fuse
BACKEND_NAME = backend.NAME

STATUS_OK = 0
STATUS_BUDGET = 1
STATUS_STRANDED = 2

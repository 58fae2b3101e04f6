"""Kernel backend selection.

The compiled ``_fvcore`` extension is used when it imports; otherwise the
numpy fallback is. Setting ``ENTRODIFF_PURE_PYTHON=1`` forces the fallback.
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

_compiled = None
if os.environ.get("ENTRODIFF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _fvcore as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable, using numpy fallback")

backend = _compiled if _compiled is not None else _fallback
BACKEND_NAME = "compiled" if _compiled is not None else "numpy"


def available_backends():
    out = {"numpy": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


__all__ = ["BACKEND_NAME", "available_backends", "backend"]

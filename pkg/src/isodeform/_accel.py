"""Numba switch.

Set ``ISODEFORM_NUMBA=0`` to run the pure-numpy kernels instead of the
compiled ones. The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("ISODEFORM_NUMBA", "1").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and _FLAG not in ("0", "false", "no", "off")
HAVE_NUMBA = numba is not None

if numba is not None:
    # the bundled TBB is too old on some hosts; avoid the probe warning
    numba.config.THREADING_LAYER = os.environ.get("NUMBA_THREADING_LAYER", "workqueue")

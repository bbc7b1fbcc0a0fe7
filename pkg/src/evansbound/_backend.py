"""Kernel backend selection.

The compiled extension is preferred; set ``EVANSBOUND_BACKEND=python`` to
force the pure-Python kernels.
"""

from __future__ import annotations

import os

from . import _pycore

python = _pycore

try:
    from . import _core as native
except ImportError:  # extension not built
    native = None

if os.environ.get("EVANSBOUND_BACKEND", "").lower() == "python" or native is None:
    kernels = _pycore
    name = "python"
else:
    kernels = native
    name = "native"

"""Kernel backend selection: compiled extension if built, numpy fallback
otherwise. Set LBSIM_KERNELS=python to force the fallback (used by the
benchmark and the backend-parity tests).
"""

from __future__ import annotations

import os

if os.environ.get("LBSIM_KERNELS", "").lower() == "python":
    from . import _kernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "python"

advance_particles = _impl.advance_particles
bin_particles = _impl.bin_particles

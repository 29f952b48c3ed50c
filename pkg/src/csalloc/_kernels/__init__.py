"""Hot-kernel selection: compiled Cython core with a numpy fallback.

The compiled extension is preferred when importable; set the environment
variable ``CSALLOC_NO_EXT=1`` to force the fallback (used by the
benchmark to compare both paths in one process).
"""

from __future__ import annotations

import os

from . import _fallback

if os.environ.get("CSALLOC_NO_EXT", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

HAVE_COMPILED = getattr(_impl, "IMPL", "fallback") == "compiled"

hubo_energy_table = _impl.hubo_energy_table
qaoa_evolve = _impl.qaoa_evolve
enumerate_best = _impl.enumerate_best

# always-available numpy helpers (independent evaluators for tests, and
# building blocks shared by the pure-Python paths)
batch_cvar = _fallback.batch_cvar
batch_check = _fallback.batch_check
batch_objective = _fallback.batch_objective


def implementation_name() -> str:
    return "compiled" if HAVE_COMPILED else "fallback"

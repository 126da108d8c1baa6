"""Chain-kernel selection: compiled extension if available, else pure Python.

Set ``BLOCKERGM_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the kernel-equivalence tests).
"""
import os

if os.environ.get("BLOCKERGM_PURE_PYTHON", "") == "1":
    from . import _chain_py as _impl
else:
    try:
        from . import _chain as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _chain_py as _impl

run_chain = _impl.run_chain
IS_COMPILED = _impl.IS_COMPILED

__all__ = ["run_chain", "IS_COMPILED"]

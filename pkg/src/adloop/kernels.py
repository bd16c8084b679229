"""Kernel selection: compiled extension if built, NumPy fallback otherwise."""

from __future__ import annotations

try:
    from adloop._ckernels import apply_forest

    USING_COMPILED = True
except ImportError:  # extension not built on this install
    from adloop._kernels_py import apply_forest

    USING_COMPILED = False

__all__ = ["apply_forest", "USING_COMPILED"]

"""Compute backend selection.

Two interchangeable kernel sets drive training and inference: a compiled
Cython core (float32, fused forward/backward/update over BLAS) and a pure
NumPy reference that also accepts float64 for high-precision checks. The
compiled core is preferred when importable; set WMARK_BACKEND=python or
WMARK_BACKEND=compiled to force a choice.
"""

from __future__ import annotations

import os

from wmark.backends import python_ref

_ACTIVE = None
_ACTIVE_CHOICE = None


def _load_compiled():
    from wmark.backends import _fastcore

    return _fastcore


def available_backends() -> dict:
    """Importable backends by name."""
    out = {"python": python_ref}
    try:
        out["compiled"] = _load_compiled()
    except ImportError:
        pass
    return out


def active_backend():
    """The backend module WMARK_BACKEND currently selects.

    The resolution is cached per choice, so changing the environment
    variable between calls re-selects (benchmarks flip it mid-process).
    """
    global _ACTIVE, _ACTIVE_CHOICE
    choice = os.environ.get("WMARK_BACKEND", "auto").strip().lower()
    if _ACTIVE is not None and choice == _ACTIVE_CHOICE:
        return _ACTIVE
    if choice in ("", "auto"):
        try:
            _ACTIVE = _load_compiled()
        except ImportError:
            _ACTIVE = python_ref
    elif choice == "python":
        _ACTIVE = python_ref
    elif choice == "compiled":
        _ACTIVE = _load_compiled()
    else:
        raise ValueError(f"WMARK_BACKEND must be 'auto', 'python', or 'compiled', got {choice!r}")
    _ACTIVE_CHOICE = choice
    return _ACTIVE

"""Kernel backend selection.

The hot loops (Gillespie sampling and per-trajectory formula monitoring)
exist twice: a Cython extension (``_speedups``) and a pure-python
reference (``_pure``).  Both consume randomness identically and return
bit-identical results; the compiled one is picked automatically when the
extension built.  Set ``COARSEQEST_BACKEND=pure`` or ``=compiled`` to
force a choice (e.g. for the backend benchmark).
"""
from __future__ import annotations

import os

from coarseqest._backend import _pure

try:
    from coarseqest._backend import _speedups as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None


def active_backend():
    forced = os.environ.get("COARSEQEST_BACKEND", "").strip().lower()
    if forced == "pure":
        return _pure
    if forced == "compiled":
        if _compiled is None:
            raise ImportError(
                "COARSEQEST_BACKEND=compiled but the extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            )
        return _compiled
    if forced:
        raise ValueError(f"unknown COARSEQEST_BACKEND value {forced!r}")
    return _compiled if _compiled is not None else _pure


def backend_name() -> str:
    return "compiled" if active_backend() is _compiled and _compiled is not None else "pure"

"""Backend selection for the hot kernels.

The compiled extension (anosynth._native) is preferred when it was built;
otherwise the numpy fallback is used. ANOSYNTH_KERNELS=pure|native forces
the choice (native raises if the extension is missing).
"""
import os

from . import _pure

_choice = os.environ.get("ANOSYNTH_KERNELS", "").strip().lower()
if _choice not in ("", "pure", "native"):
    raise RuntimeError(f"ANOSYNTH_KERNELS must be 'pure' or 'native', got {_choice!r}")

if _choice == "pure":
    _impl = _pure
else:
    try:
        from .. import _native as _impl
    except ImportError:
        if _choice == "native":
            raise
        _impl = _pure

BACKEND = "native" if _impl is not _pure else "pure"

counter_words = _impl.counter_words
posterior_chain = _impl.posterior_chain


def get_backend(name):
    """Return (counter_words, posterior_chain) for an explicit backend name."""
    if name == "pure":
        return _pure.counter_words, _pure.posterior_chain
    if name == "native":
        from .. import _native

        return _native.counter_words, _native.posterior_chain
    raise ValueError(f"unknown backend {name!r}")

"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports. Setting
``PQCLUSTER_BACKEND=python`` forces the NumPy fallback.
"""
import os

from pqcluster import _pycore

BACKEND = "python"
_impl = _pycore

if os.environ.get("PQCLUSTER_BACKEND", "").lower() != "python":
    try:
        from pqcluster import _core as _impl  # noqa: F811
        BACKEND = "compiled"
    except ImportError:
        _impl = _pycore

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
tsne_gradient = _impl.tsne_gradient


def backends():
    """Return the importable kernel modules keyed by name."""
    out = {"python": _pycore}
    try:
        from pqcluster import _core
        out["compiled"] = _core
    except ImportError:
        pass
    return out

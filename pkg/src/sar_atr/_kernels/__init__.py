"""Hot kernels: compiled extensions when available, numpy fallbacks otherwise.

``bp`` holds back-projection and its adjoint, ``conv`` the im2col
convolution.  Set ``SAR_ATR_PURE_PYTHON=1`` to force the fallbacks.
"""
import os

from . import _bp_py, _conv_py

python_bp, python_conv = _bp_py, _conv_py
compiled_bp = compiled_conv = None
if os.environ.get("SAR_ATR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _bp as compiled_bp
        from . import _conv as compiled_conv
    except ImportError:  # extensions not built
        compiled_bp = compiled_conv = None

bp = compiled_bp or python_bp
conv = compiled_conv or python_conv
BACKEND = "compiled" if compiled_bp is not None else "python"

# kept for callers that pick a back-projection backend explicitly
python = python_bp
compiled = compiled_bp

__all__ = ["bp", "conv", "python_bp", "python_conv", "compiled_bp", "compiled_conv",
           "python", "compiled", "BACKEND"]

"""Hot loop kernels with a numba path and a pure-numpy fallback.

The backend is fixed at import time. Set ``PWF_NUMBA=0`` to force the
numpy path (useful when numba is unavailable or for bisecting numeric
differences); any other value, or unset, uses numba when importable.
"""
import os

from . import _numpy

_want_numba = os.environ.get("PWF_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if _want_numba:
    try:
        from . import _numba as _impl
        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on environment
        _impl = _numpy
        BACKEND = "numpy"
else:
    _impl = _numpy
    BACKEND = "numpy"

dw3x3_forward = _impl.dw3x3_forward
dw3x3_grad_input = _impl.dw3x3_grad_input
# einsum's blocked reduction beats the scalar loop here (see benchmarks/bench_kernels.py)
dw3x3_grad_weight = _numpy.dw3x3_grad_weight
wav_analysis = _impl.wav_analysis
wav_synthesis = _impl.wav_synthesis
wav_kernel_grad = _impl.wav_kernel_grad
splat_segments = _impl.splat_segments
gelu_with_grad = _impl.gelu_with_grad

__all__ = [
    "BACKEND",
    "dw3x3_forward",
    "dw3x3_grad_input",
    "dw3x3_grad_weight",
    "wav_analysis",
    "wav_synthesis",
    "wav_kernel_grad",
    "splat_segments",
    "gelu_with_grad",
]

"""Thread control shared by the CLI, benchmarks and tests."""
import os
import warnings

from threadpoolctl import threadpool_limits

_LIMITER = None


def resolve_threads(cli_value=None):
    """``--threads`` wins over ``PWF_THREADS``; ``None`` leaves libraries alone."""
    if cli_value is not None:
        n = int(cli_value)
    else:
        env = os.environ.get("PWF_THREADS", "").strip()
        if not env:
            return None
        n = int(env)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n


def set_threads(n):
    """Cap BLAS/FFT pools and numba at ``n`` threads for the rest of the process."""
    global _LIMITER
    if n is None:
        return None
    _LIMITER = threadpool_limits(limits=n)
    try:
        import numba

        with warnings.catch_warnings():
            # numba probes every threading layer here and warns about old TBB builds
            warnings.simplefilter("ignore")
            numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    except ImportError:  # pragma: no cover
        pass
    return n

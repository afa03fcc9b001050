"""Cloud segmentation for ground-based longwave infrared sky imagers."""

import os as _os

__version__ = "0.1.0"


def _configure_threads() -> None:
    """Honor IRSEG_THREADS before numpy (and its BLAS) is first imported.

    This module is imported ahead of any submodule, so setting the standard
    thread-pool variables here caps BLAS parallelism for the whole process.
    Explicitly set environment variables win.
    """
    threads = _os.environ.get("IRSEG_THREADS")
    if not threads:
        return
    if not threads.isdigit() or int(threads) < 1:
        raise SystemExit(f"IRSEG_THREADS must be a positive integer, "
                         f"got {threads!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(var, threads)


_configure_threads()

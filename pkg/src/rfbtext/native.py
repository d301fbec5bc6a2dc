"""ctypes bridge to the optional native NMS kernel.

The shared library implements the same candidate-buffer contract as
postprocess.nms_buffer_reference: records of 9 f64 values, an IoU threshold
and a mode flag. Lookup order: RFBTEXT_NMS_KERNEL env var, then the kernel
crate's release/debug build dirs next to this repo checkout.
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .postprocess import RECORD_SIZE

_SONAMES = ("libnms_kernel.so", "libnms_kernel.dylib", "nms_kernel.dll")

STATUS_OK = 0

_lib = None
_lib_searched = False


class NativeKernelError(RuntimeError):
    """Native kernel rejected the call (status code != 0)."""


def _candidate_paths():
    env = os.environ.get("RFBTEXT_NMS_KERNEL")
    if env:
        yield Path(env)
    repo_root = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        for name in _SONAMES:
            yield repo_root / "nms_kernel" / "target" / profile / name


def _load():
    global _lib, _lib_searched
    if _lib_searched:
        return _lib
    _lib_searched = True
    for path in _candidate_paths():
        if path.is_file():
            lib = ctypes.CDLL(str(path))
            lib.nms_kernel_version.restype = ctypes.c_uint32
            lib.nms_kernel_run.restype = ctypes.c_int32
            lib.nms_kernel_run.argtypes = [
                ctypes.POINTER(ctypes.c_double),
                ctypes.c_size_t,
                ctypes.c_double,
                ctypes.c_uint32,
                ctypes.POINTER(ctypes.c_double),
                ctypes.c_size_t,
                ctypes.POINTER(ctypes.c_size_t),
            ]
            _lib = lib
            break
    return _lib


def available() -> bool:
    return _load() is not None


def kernel_version() -> int:
    lib = _load()
    if lib is None:
        raise NativeKernelError("native kernel not found")
    return int(lib.nms_kernel_version())


def nms_buffer_native(buffer: np.ndarray, iou_threshold: float, mode: int) -> np.ndarray:
    lib = _load()
    if lib is None:
        raise NativeKernelError("native kernel not found")
    buf = np.ascontiguousarray(np.asarray(buffer, dtype=np.float64).reshape(-1, RECORD_SIZE))
    n = buf.shape[0]
    out = np.empty_like(buf)
    n_out = ctypes.c_size_t(0)
    in_ptr = buf.ctypes.data_as(ctypes.POINTER(ctypes.c_double))
    out_ptr = out.ctypes.data_as(ctypes.POINTER(ctypes.c_double))
    status = lib.nms_kernel_run(
        in_ptr, n, float(iou_threshold), int(mode), out_ptr, n, ctypes.byref(n_out)
    )
    if status != STATUS_OK:
        raise NativeKernelError(f"native kernel returned status {status}")
    return out[: n_out.value].copy()

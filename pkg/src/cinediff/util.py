"""Seed derivation, complex/channel conversion, and reference-mode control."""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json

import numpy as np
import torch

# Stage tags used when deriving per-artifact seeds from a master seed, so
# that e.g. phantom noise and mask randomness never share a stream.
STAGE_PHANTOM = 1
STAGE_REFERENCE_NOISE = 2
STAGE_MASK = 3
STAGE_KSPACE_NOISE = 4
STAGE_SAMPLING = 5


def derive_seed(*keys: int) -> int:
    """Derive an independent 32-bit seed from integer keys.

    Built on ``np.random.SeedSequence`` so derived streams are independent
    of scheduling order: ``derive_seed(master, i)`` depends only on the key
    tuple, never on how many seeds were derived before it.
    """
    for k in keys:
        if not isinstance(k, (int, np.integer)):
            raise ValueError(f"seed keys must be integers, got {k!r}")
    ss = np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_from(*keys: int) -> np.random.Generator:
    """PCG64 generator seeded from ``derive_seed(*keys)``."""
    return np.random.default_rng(derive_seed(*keys))


def complex_to_channels(x: np.ndarray) -> np.ndarray:
    """(T,H,W) complex -> (2,T,H,W) float32 with channels (real, imag)."""
    x = np.asarray(x)
    if not np.iscomplexobj(x):
        raise ValueError("expected a complex array")
    return np.stack([x.real, x.imag]).astype(np.float32)


def channels_to_complex(c: np.ndarray) -> np.ndarray:
    """(2,T,H,W) float -> (T,H,W) complex64. Inverse of complex_to_channels."""
    c = np.asarray(c)
    if c.ndim < 1 or c.shape[0] != 2:
        raise ValueError(f"expected leading channel axis of size 2, got {c.shape}")
    return (c[0] + 1j * c[1]).astype(np.complex64)


def fingerprint_of(obj) -> str:
    """Stable hex digest of a (possibly nested) dataclass or plain mapping."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


@contextlib.contextmanager
def reference_mode():
    """Force single-threaded deterministic torch execution.

    Used by the bit-reproducibility contract: inside this context two runs
    with identical seeds produce bit-identical parameters and outputs.
    """
    n_threads = torch.get_num_threads()
    was_deterministic = torch.are_deterministic_algorithms_enabled()
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
    try:
        yield
    finally:
        torch.set_num_threads(n_threads)
        torch.use_deterministic_algorithms(was_deterministic)

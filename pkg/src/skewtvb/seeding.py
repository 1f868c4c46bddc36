"""Counter-based random streams.

Every piece of randomness in the repo flows from one root seed.  A stream is
addressed by the root seed plus a label path, e.g. ``stream(seed, "run", 17,
"pf")``; the address is hashed with SHA-256 into a Philox key, so streams are
independent, reproducible across platforms, and insensitive to the order in
which they are created.
"""

from __future__ import annotations

import hashlib

import numpy as np


def philox_key(root_seed: int, *labels) -> int:
    """128-bit Philox key derived from the root seed and a label path."""
    for lab in labels:
        if not isinstance(lab, (int, str)):
            raise TypeError(f"stream labels must be ints or strings, got {type(lab)!r}")
    payload = repr((int(root_seed),) + tuple(labels)).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:16], "little")


def stream(root_seed: int, *labels) -> np.random.Generator:
    """Independent generator for the given label path under the root seed."""
    return np.random.Generator(np.random.Philox(key=philox_key(root_seed, *labels)))

"""Named sub-seeds derived from one root seed."""

import zlib

import numpy as np


def sub_seed(root: int, name: str) -> int:
    """Stable 63-bit seed for stage ``name`` under ``root``."""
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

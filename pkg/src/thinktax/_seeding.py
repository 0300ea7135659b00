"""Counter-based pseudo-random draws keyed by stable identifiers.

Everything random in the simulator and the orchestrator is a pure function of
a key tuple, so results never depend on call order or thread scheduling.
"""

from __future__ import annotations

import hashlib

_SEP = "\x1f"
_MASK63 = (1 << 63) - 1


def _digest(parts) -> int:
    key = _SEP.join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


def derive_seed(*parts) -> int:
    """Nonnegative 63-bit integer seed from any tuple of printable parts."""
    return _digest(parts) & _MASK63


def uniform(*parts) -> float:
    """Uniform draw in the open interval (0, 1)."""
    return ((_digest(parts) >> 11) + 0.5) / float(1 << 53)

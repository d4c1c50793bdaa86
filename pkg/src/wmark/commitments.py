"""Salted-hash commitments over trigger inputs and labels.

A commitment is SHA-256 over ``tag || r || body`` where ``tag`` is a one-byte
domain separator (trigger input vs label), ``r`` is 32 bytes of fresh
randomness, and ``body`` is the canonical byte serialization of the committed
value. The scheme is hiding when the hash is modeled as a random oracle and
binding under collision resistance; the interface permits swapping in a
statistically hiding scheme without touching callers.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

import numpy as np

TAG_TRIGGER_INPUT = 0x01
TAG_LABEL = 0x02
_VALID_TAGS = (TAG_TRIGGER_INPUT, TAG_LABEL)

RANDOMNESS_BYTES = 32
DIGEST_BYTES = 32


@dataclass(frozen=True)
class Payload:
    """A value to be committed: one tag byte plus a non-empty body."""

    tag: int
    body: bytes

    def __post_init__(self) -> None:
        if self.tag not in _VALID_TAGS:
            raise ValueError(f"payload tag must be one of {_VALID_TAGS}, got {self.tag:#x}")
        if not isinstance(self.body, bytes) or len(self.body) == 0:
            raise ValueError("payload body must be non-empty bytes")


def _check_randomness(r: bytes) -> None:
    if not isinstance(r, bytes) or len(r) != RANDOMNESS_BYTES:
        raise ValueError(f"randomness must be exactly {RANDOMNESS_BYTES} bytes")


def commit(payload: Payload, r: bytes) -> bytes:
    """Commit to a payload under randomness r.

    Returns the 32-byte digest SHA256(tag || r || body). Total and
    deterministic: identical inputs always produce identical digests.
    """
    _check_randomness(r)
    h = hashlib.sha256()
    h.update(bytes([payload.tag]))
    h.update(r)
    h.update(payload.body)
    return h.digest()


def open_commitment(c: bytes, payload: Payload, r: bytes) -> int:
    """Open commitment c against (payload, r).

    Returns 1 iff recomputing the commitment reproduces c. The digest
    comparison is constant-time.
    """
    if not isinstance(c, bytes) or len(c) != DIGEST_BYTES:
        return 0
    return 1 if hmac.compare_digest(commit(payload, r), c) else 0


def sample_randomness(rng: np.random.Generator) -> bytes:
    """Draw 32 bytes of commitment randomness from a seeded generator."""
    return rng.bytes(RANDOMNESS_BYTES)

"""Public verifiability by cut-and-choose over a hash-derived challenge.

A challenge bit vector e, derived by hashing the verification key, splits
the committed trigger set in half. The owner publishes the half where e=1
(inputs, labels, and randomness), which anyone can check against the
commitments and the ground-truth oracle; honest keys survive, while a key
stuffed with truthfully labeled inputs is caught with probability
1 - 2^-m for m planted elements. The unopened half stays secret and is
judged through a pluggable argument backend; the default backend is a
designated verifier that receives the secret half over a private channel
and evaluates the predicate directly.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from wmark.commitments import TAG_LABEL, TAG_TRIGGER_INPUT, Payload, open_commitment
from wmark.data import GroundTruthOracle
from wmark.nn import Model, classify_batch, model_param_bytes
from wmark.watermark import (
    MarkingKey,
    VerificationKey,
    VerifyPolicy,
    VerifyResult,
    keygen,
)

_VK_SER_HEADER = b"wmark/vk/v1"
_STATEMENT_HEADER = b"wmark/circuit-statement/v1"


class BackendError(RuntimeError):
    """Argument backend could not run; distinct from a 0 verdict."""


@dataclass(frozen=True)
class Challenge:
    """Bit vector selecting which committed indices get opened."""

    bits: np.ndarray  # (ell,) uint8 of 0/1

    def __post_init__(self) -> None:
        object.__setattr__(self, "bits", np.ascontiguousarray(self.bits, dtype=np.uint8))
        if self.bits.ndim != 1 or not np.all((self.bits == 0) | (self.bits == 1)):
            raise ValueError("challenge bits must be a flat 0/1 vector")

    @property
    def ell(self) -> int:
        return len(self.bits)

    def indices_where(self, bit: int) -> np.ndarray:
        return np.flatnonzero(self.bits == bit)

    def __eq__(self, other) -> bool:
        if isinstance(other, Challenge):
            return self.bits.shape == other.bits.shape and bool(np.all(self.bits == other.bits))
        return NotImplemented


@dataclass
class SubMarkingKey:
    """Marking-key entries at a recorded subset of indices."""

    indices: np.ndarray  # (n,) int64, original positions, ascending
    trigger_inputs: np.ndarray  # (n, d) uint8
    trigger_labels: np.ndarray  # (n,) int64
    rand_t: list[bytes]
    rand_L: list[bytes]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class SubVerificationKey:
    """Verification-key entries at a recorded subset of indices."""

    indices: np.ndarray
    commits_t: list[bytes]
    commits_L: list[bytes]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class PublicMarkingKey:
    mk: MarkingKey
    challenge: Challenge


@dataclass
class PublicVerificationKey:
    vk: VerificationKey
    opened: SubMarkingKey  # the half where the challenge bit is 1


def select(key, e: Challenge, bit: int):
    """Entries of a marking or verification key where e equals bit.

    Original indices are preserved, so selections with bit 0 and bit 1
    partition the key.
    """
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    if not isinstance(key, (MarkingKey, VerificationKey)):
        raise TypeError(f"cannot select from {type(key).__name__}")
    if key.ell != e.ell:
        raise ValueError("challenge length does not match key length")
    idx = e.indices_where(bit)
    if isinstance(key, MarkingKey):
        bd = key.backdoor
        return SubMarkingKey(
            indices=idx.astype(np.int64),
            trigger_inputs=bd.trigger_inputs[idx],
            trigger_labels=bd.trigger_labels[idx],
            rand_t=[key.rand_t[i] for i in idx],
            rand_L=[key.rand_L[i] for i in idx],
        )
    return SubVerificationKey(
        indices=idx.astype(np.int64),
        commits_t=[key.commits_t[i] for i in idx],
        commits_L=[key.commits_L[i] for i in idx],
    )


def serialize_vk(vk: VerificationKey) -> bytes:
    """Canonical vk bytes used for challenge derivation.

    Length-prefixed digests in index order with tag separation. The creation
    timestamp is deliberately excluded so re-serialization never shifts the
    challenge.
    """
    parts = [_VK_SER_HEADER, struct.pack(">I", vk.ell)]
    for i in range(vk.ell):
        parts.append(bytes([TAG_TRIGGER_INPUT]))
        parts.append(struct.pack(">I", len(vk.commits_t[i])))
        parts.append(vk.commits_t[i])
        parts.append(bytes([TAG_LABEL]))
        parts.append(struct.pack(">I", len(vk.commits_L[i])))
        parts.append(vk.commits_L[i])
    return b"".join(parts)


def derive_challenge(vk: VerificationKey) -> Challenge:
    """First ell bits of the counter-mode hash stream over the canonical vk."""
    ser = serialize_vk(vk)
    ell = vk.ell
    bits = np.empty(ell, dtype=np.uint8)
    produced = 0
    ctr = 0
    while produced < ell:
        block = hashlib.sha256(ser + struct.pack(">I", ctr)).digest()
        ctr += 1
        for byte in block:
            for j in range(7, -1, -1):
                bits[produced] = (byte >> j) & 1
                produced += 1
                if produced == ell:
                    return Challenge(bits=bits)
    return Challenge(bits=bits)


def ell_for_security(n_sec: int) -> int:
    """Committed-set size for a 2^-n_sec cut-and-choose soundness target."""
    if n_sec < 1:
        raise ValueError("n_sec must be positive")
    return 4 * n_sec


def pkeygen(
    ell: int,
    d: int,
    num_labels: int,
    oracle: GroundTruthOracle,
    rng,
) -> tuple[PublicMarkingKey, PublicVerificationKey]:
    """Key generation for public verification.

    Runs plain keygen, derives the challenge from the verification key, and
    packages the opened half alongside vk. ell must be a multiple of 4 (the
    soundness analysis uses ell = 4 * n_sec).
    """
    if ell < 4 or ell % 4 != 0:
        raise ValueError("ell must be a positive multiple of 4")
    mk, vk = keygen(ell, d, num_labels, oracle, rng)
    e = derive_challenge(vk)
    mk_p = PublicMarkingKey(mk=mk, challenge=e)
    vk_p = PublicVerificationKey(vk=vk, opened=select(mk, e, 1))
    return mk_p, vk_p


def check_opened(vk_p: PublicVerificationKey, oracle: GroundTruthOracle) -> VerifyResult:
    """Audit the published half: commitments open and labels are wrong.

    Every opened element must open both its commitments and carry a label
    that differs from the oracle's answer (an undefined answer differs from
    everything). The first failing index is reported.
    """
    opened = vk_p.opened
    vk = vk_p.vk
    if len(opened) and (opened.indices.min() < 0 or opened.indices.max() >= vk.ell):
        return VerifyResult(0, step=2, reason="opened indices out of range")
    feats = opened.trigger_inputs.astype(np.float64) / 255.0
    answers = oracle.label_batch(feats) if len(opened) else np.empty(0, dtype=np.int64)
    for j, i in enumerate(opened.indices):
        ok_t = open_commitment(
            vk.commits_t[i],
            Payload(TAG_TRIGGER_INPUT, opened.trigger_inputs[j].tobytes()),
            opened.rand_t[j],
        )
        ok_L = open_commitment(
            vk.commits_L[i],
            Payload(TAG_LABEL, bytes([int(opened.trigger_labels[j])])),
            opened.rand_L[j],
        )
        if not (ok_t and ok_L):
            return VerifyResult(
                0, step=2, index=int(i), reason=f"opened commitment at index {int(i)} failed to open"
            )
        if answers[j] != -1 and answers[j] == opened.trigger_labels[j]:
            return VerifyResult(
                0, step=2, index=int(i), reason=f"opened label at index {int(i)} matches the oracle"
            )
    return VerifyResult(1)


@dataclass
class CircuitStatement:
    """Public inputs of the unopened-half predicate.

    The predicate: all unopened commitments open under the prover's secret
    half, and the model reproduces the hidden trigger labels on at least
    required_matches of them.
    """

    indices: np.ndarray
    commits_t: list[bytes]
    commits_L: list[bytes]
    required_matches: int
    model: Model

    def serialize(self) -> bytes:
        """Length-prefixed binary form; bit-exact for transcript binding."""
        parts = [_STATEMENT_HEADER, struct.pack(">I", len(self.indices))]
        for i in self.indices:
            parts.append(struct.pack(">I", int(i)))
        for c in self.commits_t:
            parts.append(struct.pack(">I", len(c)))
            parts.append(c)
        for c in self.commits_L:
            parts.append(struct.pack(">I", len(c)))
            parts.append(c)
        parts.append(struct.pack(">I", self.required_matches))
        blob = model_param_bytes(self.model)
        parts.append(struct.pack(">I", len(blob)))
        parts.append(blob)
        return b"".join(parts)


class DesignatedVerifierBackend:
    """Evaluates the unopened-half predicate directly from the secret witness.

    Stands in for a zero-knowledge argument: the prover hands the unopened
    sub-marking-key to a trusted verifier over a private channel. The
    interface (statement bytes in, bit out) is what a real argument system
    would implement.
    """

    name = "designated-verifier"

    def __init__(self, witness: SubMarkingKey):
        self.witness = witness

    def evaluate(self, statement: CircuitStatement) -> int:
        w = self.witness
        if len(w) != len(statement.indices) or not np.array_equal(
            np.asarray(w.indices), np.asarray(statement.indices)
        ):
            raise BackendError("witness indices do not match the statement")
        for j in range(len(w)):
            ok_t = open_commitment(
                statement.commits_t[j],
                Payload(TAG_TRIGGER_INPUT, w.trigger_inputs[j].tobytes()),
                w.rand_t[j],
            )
            ok_L = open_commitment(
                statement.commits_L[j],
                Payload(TAG_LABEL, bytes([int(w.trigger_labels[j])])),
                w.rand_L[j],
            )
            if not (ok_t and ok_L):
                return 0
        if len(w) == 0:
            return 1
        feats = (w.trigger_inputs.astype(np.float32) / 255.0).astype(np.float32)
        preds = classify_batch(statement.model, feats)
        matches = int(np.sum(preds == w.trigger_labels))
        return 1 if matches >= statement.required_matches else 0


def pverify(
    vk_p: PublicVerificationKey,
    m: Model,
    oracle: GroundTruthOracle,
    policy: VerifyPolicy,
    backend,
) -> VerifyResult:
    """Public verification against a published key.

    Step 1 recomputes the challenge from vk and rejects if the opened
    indices disagree. Step 2 audits the opened half. Steps 3 and 4 hand the
    unopened half's predicate to the argument backend. Backend failures
    raise BackendError instead of returning a verdict.
    """
    e = derive_challenge(vk_p.vk)
    expect = e.indices_where(1)
    got = np.asarray(vk_p.opened.indices)
    if len(expect) != len(got) or not np.array_equal(expect, got):
        return VerifyResult(
            0, step=1, reason="opened indices do not match the challenge recomputed from vk"
        )

    audit = check_opened(vk_p, oracle)
    if not audit:
        return audit

    unopened = select(vk_p.vk, e, 0)
    n0 = len(unopened)
    allowed = math.floor(policy.epsilon * n0 + 1e-9)
    statement = CircuitStatement(
        indices=unopened.indices,
        commits_t=unopened.commits_t,
        commits_L=unopened.commits_L,
        required_matches=n0 - allowed,
        model=m,
    )
    try:
        ok = backend.evaluate(statement)
    except BackendError:
        raise
    except Exception as exc:
        raise BackendError(f"argument backend failed: {exc}") from exc
    if not ok:
        return VerifyResult(
            0, step=3, reason="unopened-half predicate rejected by the argument backend"
        )
    return VerifyResult(1)

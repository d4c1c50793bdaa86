"""Commitment scheme: layout vectors, exhaustive tamper rejection, properties.

The digest layout SHA256(tag || r || body) is checked against an independent
SHA-256 implementation written from the FIPS 180-4 recurrence, plus frozen
hex vectors, so a silent change to either the hash or the concatenation
order fails loudly.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wmark.commitments import (
    DIGEST_BYTES,
    RANDOMNESS_BYTES,
    TAG_LABEL,
    TAG_TRIGGER_INPUT,
    Payload,
    commit,
    open_commitment,
    sample_randomness,
)
from wmark.seeding import rng_for

_K = [
    0x428A2F98, 0x71374491, 0xB5C0FBCF, 0xE9B5DBA5, 0x3956C25B, 0x59F111F1,
    0x923F82A4, 0xAB1C5ED5, 0xD807AA98, 0x12835B01, 0x243185BE, 0x550C7DC3,
    0x72BE5D74, 0x80DEB1FE, 0x9BDC06A7, 0xC19BF174, 0xE49B69C1, 0xEFBE4786,
    0x0FC19DC6, 0x240CA1CC, 0x2DE92C6F, 0x4A7484AA, 0x5CB0A9DC, 0x76F988DA,
    0x983E5152, 0xA831C66D, 0xB00327C8, 0xBF597FC7, 0xC6E00BF3, 0xD5A79147,
    0x06CA6351, 0x14292967, 0x27B70A85, 0x2E1B2138, 0x4D2C6DFC, 0x53380D13,
    0x650A7354, 0x766A0ABB, 0x81C2C92E, 0x92722C85, 0xA2BFE8A1, 0xA81A664B,
    0xC24B8B70, 0xC76C51A3, 0xD192E819, 0xD6990624, 0xF40E3585, 0x106AA070,
    0x19A4C116, 0x1E376C08, 0x2748774C, 0x34B0BCB5, 0x391C0CB3, 0x4ED8AA4A,
    0x5B9CCA4F, 0x682E6FF3, 0x748F82EE, 0x78A5636F, 0x84C87814, 0x8CC70208,
    0x90BEFFFA, 0xA4506CEB, 0xBEF9A3F7, 0xC67178F2,
]

_H0 = [
    0x6A09E667, 0xBB67AE85, 0x3C6EF372, 0xA54FF53A,
    0x510E527F, 0x9B05688C, 0x1F83D9AB, 0x5BE0CD19,
]


def _rotr(x: int, n: int) -> int:
    return ((x >> n) | (x << (32 - n))) & 0xFFFFFFFF


def _sha256_ref(msg: bytes) -> bytes:
    """Independent SHA-256 straight from the FIPS 180-4 recurrence."""
    length = len(msg) * 8
    msg = msg + b"\x80"
    msg += b"\x00" * ((56 - len(msg) % 64) % 64)
    msg += length.to_bytes(8, "big")
    h = list(_H0)
    for off in range(0, len(msg), 64):
        w = [int.from_bytes(msg[off + 4 * i : off + 4 * i + 4], "big") for i in range(16)]
        for i in range(16, 64):
            s0 = _rotr(w[i - 15], 7) ^ _rotr(w[i - 15], 18) ^ (w[i - 15] >> 3)
            s1 = _rotr(w[i - 2], 17) ^ _rotr(w[i - 2], 19) ^ (w[i - 2] >> 10)
            w.append((w[i - 16] + s0 + w[i - 7] + s1) & 0xFFFFFFFF)
        a, b, c, d, e, f, g, hh = h
        for i in range(64):
            s1 = _rotr(e, 6) ^ _rotr(e, 11) ^ _rotr(e, 25)
            ch = (e & f) ^ (~e & g)
            t1 = (hh + s1 + ch + _K[i] + w[i]) & 0xFFFFFFFF
            s0 = _rotr(a, 2) ^ _rotr(a, 13) ^ _rotr(a, 22)
            maj = (a & b) ^ (a & c) ^ (b & c)
            t2 = (s0 + maj) & 0xFFFFFFFF
            hh, g, f, e, d, c, b, a = g, f, e, (d + t1) & 0xFFFFFFFF, c, b, a, (t1 + t2) & 0xFFFFFFFF
        h = [(v + n) & 0xFFFFFFFF for v, n in zip(h, (a, b, c, d, e, f, g, hh))]
    return b"".join(v.to_bytes(4, "big") for v in h)


def test_reference_sha256_matches_fips_vectors():
    """The in-test reference reproduces the classic published digests."""
    assert _sha256_ref(b"").hex() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert _sha256_ref(b"abc").hex() == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )
    assert _sha256_ref(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq").hex() == (
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
    )


def test_commit_layout_pinned_vectors():
    """Frozen digests for the tag || r || body concatenation order."""
    v1 = commit(Payload(TAG_TRIGGER_INPUT, bytes([0xAB])), bytes(32))
    assert v1.hex() == "128bcbb4fd83817dfe6c3ecf8c8683cbce317dc312ee178dfc45d7231d138a46"
    v2 = commit(Payload(TAG_LABEL, bytes([0x03])), bytes(range(32)))
    assert v2.hex() == "c3b794f418d92ca0e93adecfdd11115e6332f5b2670c1f9092b9d8ae69a131d4"
    v3 = commit(Payload(TAG_TRIGGER_INPUT, bytes.fromhex("0011223344556677")), bytes(range(32)))
    assert v3.hex() == "deac485e1a7677624d9c8b736cadfd77641d6b676822fba4e8e74a5f16414e5c"


@given(
    tag=st.sampled_from([TAG_TRIGGER_INPUT, TAG_LABEL]),
    body=st.binary(min_size=1, max_size=200),
    r=st.binary(min_size=RANDOMNESS_BYTES, max_size=RANDOMNESS_BYTES),
)
def test_commit_agrees_with_reference(tag, body, r):
    """Product digest equals the reference digest of tag || r || body."""
    assert commit(Payload(tag, body), r) == _sha256_ref(bytes([tag]) + r + body)


@given(
    tag=st.sampled_from([TAG_TRIGGER_INPUT, TAG_LABEL]),
    body=st.binary(min_size=1, max_size=200),
    r=st.binary(min_size=RANDOMNESS_BYTES, max_size=RANDOMNESS_BYTES),
)
def test_open_roundtrip(tag, body, r):
    """Whatever was committed opens."""
    c = commit(Payload(tag, body), r)
    assert len(c) == DIGEST_BYTES
    assert open_commitment(c, Payload(tag, body), r) == 1


@given(
    body=st.binary(min_size=1, max_size=64),
    r=st.binary(min_size=RANDOMNESS_BYTES, max_size=RANDOMNESS_BYTES),
)
def test_tag_separation(body, r):
    """A digest under one tag never opens under the other."""
    c = commit(Payload(TAG_TRIGGER_INPUT, body), r)
    assert open_commitment(c, Payload(TAG_LABEL, body), r) == 0


@given(
    body=st.binary(min_size=1, max_size=64),
    r1=st.binary(min_size=RANDOMNESS_BYTES, max_size=RANDOMNESS_BYTES),
    r2=st.binary(min_size=RANDOMNESS_BYTES, max_size=RANDOMNESS_BYTES),
)
def test_wrong_randomness_rejected(body, r1, r2):
    if r1 == r2:
        return
    c = commit(Payload(TAG_LABEL, body), r1)
    assert open_commitment(c, Payload(TAG_LABEL, body), r2) == 0


def test_bulk_roundtrip_ten_thousand():
    """10^4 random payloads of mixed sizes all open."""
    rng = np.random.default_rng(2024)
    for i in range(10_000):
        tag = TAG_TRIGGER_INPUT if i % 2 == 0 else TAG_LABEL
        body = rng.bytes(1 + int(rng.integers(0, 128)))
        r = rng.bytes(RANDOMNESS_BYTES)
        assert open_commitment(commit(Payload(tag, body), r), Payload(tag, body), r) == 1


def test_single_bit_tamper_exhaustive():
    """Every single-bit flip in body, randomness, or digest is rejected."""
    rng = np.random.default_rng(5)
    body = rng.bytes(64)
    r = rng.bytes(RANDOMNESS_BYTES)
    payload = Payload(TAG_TRIGGER_INPUT, body)
    c = commit(payload, r)

    for byte_i in range(len(body)):
        for bit in range(8):
            bad = bytearray(body)
            bad[byte_i] ^= 1 << bit
            assert open_commitment(c, Payload(TAG_TRIGGER_INPUT, bytes(bad)), r) == 0
    for byte_i in range(len(r)):
        for bit in range(8):
            bad = bytearray(r)
            bad[byte_i] ^= 1 << bit
            assert open_commitment(c, payload, bytes(bad)) == 0
    for byte_i in range(len(c)):
        for bit in range(8):
            bad = bytearray(c)
            bad[byte_i] ^= 1 << bit
            assert open_commitment(bytes(bad), payload, r) == 0


@given(c=st.binary(min_size=0, max_size=64))
@settings(max_examples=50)
def test_wrong_length_digest_returns_zero(c):
    """Malformed digests yield verdict 0, never an exception."""
    if len(c) == DIGEST_BYTES:
        return
    assert open_commitment(c, Payload(TAG_LABEL, b"x"), bytes(32)) == 0


def test_payload_validation():
    with pytest.raises(ValueError):
        Payload(0x03, b"x")
    with pytest.raises(ValueError):
        Payload(TAG_LABEL, b"")
    with pytest.raises(ValueError):
        Payload(TAG_LABEL, "not bytes")


def test_randomness_validation():
    with pytest.raises(ValueError):
        commit(Payload(TAG_LABEL, b"x"), b"short")
    with pytest.raises(ValueError):
        commit(Payload(TAG_LABEL, b"x"), bytes(33))


def test_sample_randomness_deterministic_and_sized():
    a = sample_randomness(rng_for(9, "commit_randomness"))
    b = sample_randomness(rng_for(9, "commit_randomness"))
    c = sample_randomness(rng_for(10, "commit_randomness"))
    assert a == b and len(a) == RANDOMNESS_BYTES
    assert a != c


def test_sample_randomness_byte_histogram():
    """Chi-squared over 256 bins stays under the 99.99% quantile."""
    rng = rng_for(0, "commit_randomness")
    data = b"".join(sample_randomness(rng) for _ in range(10_000))
    counts = np.bincount(np.frombuffer(data, dtype=np.uint8), minlength=256)
    expected = len(data) / 256.0
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    # df=255: mean 255, sd ~22.6; 367 is ~5 sigma out
    assert chi2 < 367.0, f"chi2={chi2:.1f} suggests non-uniform commitment randomness"

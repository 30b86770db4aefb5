"""Hash primitive, PRF, and chain-step behavior."""

import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otpwallet.hashing import (
    DomainError,
    chain_extend,
    chain_step,
    enc32,
    prf,
    truncated_hash,
)

# Published SHA3-256 test vector for the empty string, truncated to 128 bits.
SHA3_256_EMPTY = "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"

K1 = bytes(range(16))
K2 = bytes(range(1, 17))


def test_truncated_hash_empty_matches_published_vector():
    assert truncated_hash(b"").hex() == SHA3_256_EMPTY[:32]


def test_truncated_hash_deterministic():
    assert truncated_hash(b"x") == truncated_hash(b"x")


def test_truncated_hash_distinct_single_bytes():
    assert truncated_hash(b"\x00") != truncated_hash(b"\x01")


def test_truncated_hash_output_length_follows_nbytes():
    for nbytes in (16, 20, 24, 28, 32):
        assert len(truncated_hash(b"abc", nbytes)) == nbytes


def test_truncated_hash_base_is_substitutable():
    out = truncated_hash(b"abc", 16, base=lambda d: hashlib.sha256(d).digest())
    assert out == hashlib.sha256(b"abc").digest()[:16]


def test_prf_is_keyed_truncated_hash_of_enc32():
    assert prf(K1, 7) == truncated_hash(K1 + enc32(7))


def test_prf_distinct_inputs_and_seeds():
    assert prf(K1, 0) != prf(K1, 1)
    assert prf(K1, 5) == prf(K1, 5)
    assert prf(K1, 5) != prf(K2, 5)


def test_prf_rejects_out_of_range():
    with pytest.raises(DomainError):
        prf(K1, 2**32)
    with pytest.raises(DomainError):
        prf(K1, -1)
    with pytest.raises(DomainError):
        prf(b"short", 0)


def test_chain_step_tags_target_position():
    d = prf(K1, 0)
    assert chain_step(d, 3) == truncated_hash(enc32(3) + d)


def test_chain_step_rejects_position_zero():
    with pytest.raises(DomainError):
        chain_step(prf(K1, 0), 0)


def test_chain_step_distinct_tags_distinct_outputs():
    d = prf(K1, 9)
    assert chain_step(d, 1) != chain_step(d, 2)


def test_chain_extend_composes_with_chain_step():
    d = prf(K1, 2)
    assert chain_extend(d, 0, 2) == chain_step(chain_step(d, 1), 2)


def test_chain_extend_zero_length_is_identity():
    d = prf(K1, 3)
    assert chain_extend(d, 4, 4) == d


def test_chain_extend_rejects_reversed_interval():
    with pytest.raises(DomainError):
        chain_extend(prf(K1, 0), 3, 2)


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6),
       st.binary(min_size=16, max_size=16))
def test_chain_extend_composition(a, b, c, d):
    lo, mid, hi = sorted((a, b, c))
    assert chain_extend(chain_extend(d, lo, mid), mid, hi) == \
        chain_extend(d, lo, hi)


@settings(max_examples=50)
@given(st.binary(min_size=16, max_size=16), st.integers(0, 2**32 - 1))
def test_outputs_are_always_digest_sized(k, x):
    assert len(prf(k, x)) == 16
    assert len(truncated_hash(k)) == 16


def test_no_prf_collisions_over_sampled_pairs():
    rng = random.Random(1234)
    seen = set()
    for _ in range(100):
        k = bytes(rng.getrandbits(8) for _ in range(16))
        for x in range(100):
            seen.add(prf(k, x))
    assert len(seen) == 10_000

"""Security bounds for the chain/tree construction and sizing guidance.

Probabilities are exact rationals where feasible, with log2 views through
mpmath for astronomically small values; nothing here ever underflows at
S >= 128.
"""

from __future__ import annotations

from fractions import Fraction
from math import ceil, log2

import mpmath

mpmath.mp.dps = 80


def adv_chain(Q: int, P: int, S: int) -> Fraction:
    """Upper bound on inverting one domain-separated chain:
    (2Q + 2P + 1) / 2^S, capped at 1."""
    if Q < 0 or P < 0 or S <= 0:
        raise ValueError("Q, P must be nonnegative and S positive")
    return min(Fraction(2 * Q + 2 * P + 1, 2 ** S), Fraction(1))


def adv_chain_log2(Q: int, P: int, S: int) -> float:
    """log2 of the chain bound, safe for huge Q and S."""
    x = adv_chain(Q, P, S)
    return float(mpmath.log(mpmath.mpf(x.numerator), 2)
                 - mpmath.log(mpmath.mpf(x.denominator), 2))


def scheme_secure_lower_bound(Q: int, P: int, S: int, leaves: int) -> Fraction:
    """1 - leaves * (2Q + 2P + 1) / 2^S, floored at 0."""
    if leaves < 1:
        raise ValueError("leaves must be >= 1")
    return max(Fraction(0), 1 - leaves * adv_chain(Q, P, S))


def scheme_secure_product(Q: int, P: int, S: int, leaves: int) -> mpmath.mpf:
    """The exact product form (1 - x)^leaves, evaluated in high precision."""
    if leaves < 1:
        raise ValueError("leaves must be >= 1")
    x = adv_chain(Q, P, S)
    xf = mpmath.mpf(x.numerator) / mpmath.mpf(x.denominator)
    if xf >= 1:
        return mpmath.mpf(0)
    return mpmath.exp(leaves * mpmath.log1p(-xf))


def required_bits(lambda_bits: int, leaves: int) -> tuple[int, int]:
    """(S, mnemonic word count) for lambda-bit security with that many
    per-window chains: S = lambda + 2 + ceil(log2(leaves)); an OTP of S
    bits travels as ceil(S / 11) words."""
    if lambda_bits < 1 or leaves < 1:
        raise ValueError("lambda and leaves must be positive")
    extra = 0 if leaves == 1 else ceil(log2(leaves))
    S = lambda_bits + 2 + extra
    return S, ceil(S / 11)


def report(lambda_bits: int, leaves: int, Q: int | None = None,
           P: int = 1) -> list[str]:
    """Aligned key=value lines for the CLI."""
    S, words = required_bits(lambda_bits, leaves)
    q = Q if Q is not None else 2 ** lambda_bits
    bound = scheme_secure_lower_bound(q, P, S, leaves)
    lines = [
        f"lambda  = {lambda_bits}",
        f"leaves  = {leaves}",
        f"S       = {S}",
        f"words   = {words}",
        f"Q       = 2^{lambda_bits}" if Q is None else f"Q       = {Q}",
        f"P       = {P}",
        f"adv_chain_log2        = {adv_chain_log2(q, P, S):.4f}",
        f"secure_lower_bound    = {float(bound):.6f}",
    ]
    return lines

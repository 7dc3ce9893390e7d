"""Bit-exact word encodings: tuple words, naturals, signed rationals, decode-and-clamp.

Words are plain Python strings over the alphabet {'0', '1'}; the empty
string is a valid word.  All encoders are injective on their stated
domains and every decoder is the exact inverse on the encoder's image.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import List

Word = str

MAX_WORD_BITS = 1 << 20
MAX_PART_BITS = 1 << 18
MAX_TUPLE_PARTS = 64
MAX_NAT = (1 << 63) - 1


class EncodingOverflow(ValueError):
    """Input exceeds the encoder's declared size bounds."""


class DecodeError(ValueError):
    """Word is not in the decoder's image.  `offset` is the first bad bit."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (bit offset {offset})")
        self.offset = offset


def check_word(w: Word) -> Word:
    if len(w) > MAX_WORD_BITS:
        raise EncodingOverflow(f"word of {len(w)} bits exceeds {MAX_WORD_BITS}")
    if w.strip("01"):
        raise ValueError(f"word contains non-bit characters: {w[:32]!r}")
    return w


def chev_encode(parts: List[Word]) -> Word:
    """Tuple encoding: double every bit of every part, append '01' after each part."""
    if len(parts) > MAX_TUPLE_PARTS:
        raise EncodingOverflow(f"{len(parts)} tuple parts exceeds {MAX_TUPLE_PARTS}")
    out = []
    for part in parts:
        if len(part) > MAX_PART_BITS:
            raise EncodingOverflow(f"tuple part of {len(part)} bits exceeds {MAX_PART_BITS}")
        check_word(part)
        for b in part:
            out.append(b)
            out.append(b)
        out.append("01")
    encoded = "".join(out)
    if len(encoded) > MAX_WORD_BITS:
        raise EncodingOverflow("encoded tuple exceeds maximum word length")
    return encoded


def chev_decode(w: Word) -> List[Word]:
    """Exact inverse of chev_encode; rejects anything outside its image."""
    parts: List[Word] = []
    current: List[str] = []
    i = 0
    n = len(w)
    while i < n:
        if i + 1 >= n:
            raise DecodeError("dangling single bit at end of tuple word", i)
        pair = w[i : i + 2]
        if pair == "01":
            parts.append("".join(current))
            current = []
        elif pair == "00":
            current.append("0")
        elif pair == "11":
            current.append("1")
        else:  # "10"
            raise DecodeError("invalid bit pair '10' inside tuple word", i)
        i += 2
    if current:
        raise DecodeError("unterminated tuple part (missing '01' separator)", n)
    return parts


def encode_nat(n: int) -> Word:
    """Minimal binary representation, most-significant bit first; 0 encodes as '0'."""
    if n < 0:
        raise ValueError("naturals only")
    if n > MAX_NAT:
        raise EncodingOverflow(f"{n} exceeds {MAX_NAT}")
    return format(n, "b")


def decode_nat(w: Word) -> int:
    if not w:
        raise DecodeError("empty word is not a natural encoding", 0)
    if w.strip("01"):
        raise DecodeError("non-bit character in natural encoding", 0)
    if len(w) > 1 and w[0] == "0":
        raise DecodeError("leading zero in multi-bit natural encoding", 0)
    if len(w) > 63:
        raise DecodeError("natural encoding longer than 63 bits", 63)
    return int(w, 2)


def encode_rat(q: Fraction) -> Word:
    """Signed rational: <nat(|num|), nat(den), sign> with sign '0' = nonnegative."""
    q = Fraction(q)
    sign = "1" if q < 0 else "0"
    return chev_encode([encode_nat(abs(q.numerator)), encode_nat(q.denominator), sign])


def decode_rat(w: Word) -> Fraction:
    parts = chev_decode(w)
    if len(parts) != 3:
        raise DecodeError(f"rational encoding must have 3 parts, got {len(parts)}", 0)
    num_w, den_w, sign_w = parts
    num = decode_nat(num_w)
    den = decode_nat(den_w)
    if den == 0:
        raise DecodeError("zero denominator", 0)
    if sign_w not in ("0", "1"):
        raise DecodeError("sign part must be a single bit", 0)
    if sign_w == "1" and num == 0:
        raise DecodeError("negative zero is not in the image", 0)
    if math.gcd(num, den) != 1:
        raise DecodeError("fraction not in lowest terms", 0)
    value = Fraction(num, den)
    return -value if sign_w == "1" else value


def decode_clamped(w: Word, bound_M: Fraction) -> Fraction:
    """Total decode: rationals clamp to [-M, M], anything else maps to 0."""
    bound_M = Fraction(bound_M)
    if bound_M < 0:
        raise ValueError("clamp bound must be nonnegative")
    try:
        t = decode_rat(w)
    except (DecodeError, ValueError):
        return Fraction(0)
    return max(min(t, bound_M), -bound_M)

"""Float <-> bit conversion for tape I/O.

``passthrough64`` hands the raw IEEE-754 bits (big-endian) to the machine.
``mantissa-exponent`` is the greedy word [sigma, b_0..b_{n-1}, a_0..a_m]
with |x| = (sum_i a_i 2^-i) * 2^(sum_j b_j 2^j). The exponent is
nonnegative, so this mode covers 0 and 1 <= |x| < 2^(2^n).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class CodecError(ValueError):
    pass


def heaviside(t: float, eps: float | None = None) -> float:
    """H(t) = [t >= 0]; with eps, the ramp psi_eps(t + eps)."""
    if eps is None:
        return 1.0 if t >= 0 else 0.0
    u = t + eps
    return 0.0 if u <= 0 else (u / eps if u < eps else 1.0)


def to_symbols(bits: Iterable[int]) -> np.ndarray:
    return np.array([1 if b else -1 for b in bits], dtype=np.int8)


def to_bits(symbols: Iterable[float]) -> list[int]:
    return [1 if s > 0 else 0 for s in symbols]


@dataclass(frozen=True)
class FloatCodec:
    mode: str = "passthrough64"
    m_q: int = 10   # mantissa digits after the leading one
    n_q: int = 4    # exponent bits

    def __post_init__(self):
        if self.mode not in ("passthrough64", "mantissa-exponent"):
            raise CodecError(f"unknown codec mode {self.mode!r}")
        if self.m_q < 0 or self.n_q < 1:
            raise CodecError("need m_q >= 0 and n_q >= 1")

    @property
    def word(self) -> int:
        if self.mode == "passthrough64":
            return 64
        return 1 + self.n_q + self.m_q + 1

    @property
    def max_abs(self) -> float:
        """Exclusive upper bound of |x| in mantissa-exponent mode."""
        return 2.0 * 2.0 ** (2 ** self.n_q - 1)

    def representable(self, x: float) -> bool:
        if self.mode == "passthrough64":
            return math.isfinite(x)
        if x == 0:
            return True
        ax = abs(x)
        if not 1.0 <= ax < self.max_abs:
            return False
        mant, _ = math.frexp(ax)  # ax = mant * 2^E, mant in [0.5, 1)
        scaled = mant * 2.0 ** (self.m_q + 1)
        return scaled == math.floor(scaled)

    # -- bits ------------------------------------------------------------

    def encode(self, x: float, eps: float | None = None) -> list[int]:
        x = float(x)
        if not math.isfinite(x):
            raise CodecError(f"cannot encode non-finite value {x}")
        if self.mode == "passthrough64":
            (n,) = struct.unpack(">Q", struct.pack(">d", x))
            return [(n >> (63 - i)) & 1 for i in range(64)]
        if x == 0:
            return [0] * self.word
        ax = abs(x)
        if not 1.0 <= ax < self.max_abs:
            raise CodecError(f"|x| = {ax} outside [1, {self.max_abs}) for n_q={self.n_q}")
        sigma = 0 if x > 0 else 1
        b = None
        for E in range(2 ** self.n_q):
            e = 2.0 ** E
            if heaviside(ax - e, eps) == 1.0 and heaviside(ax - 2 * e, eps) == 0.0:
                b, scale = E, e
                break
        # greedy digits with fractional weights 2^-i e
        a, r = [], ax
        for i in range(self.m_q + 1):
            w = scale * 2.0 ** -i
            bit = int(heaviside(r - w, eps))
            a.append(bit)
            r -= bit * w
        return [sigma] + [(b >> j) & 1 for j in range(self.n_q)] + a

    def decode(self, bits: Sequence[int]) -> float:
        bits = [int(v) for v in bits]
        if len(bits) != self.word:
            raise CodecError(f"word of length {len(bits)}, expected {self.word}")
        if self.mode == "passthrough64":
            n = 0
            for v in bits:
                n = (n << 1) | (v & 1)
            return struct.unpack(">d", struct.pack(">Q", n))[0]
        sigma, b, a = bits[0], bits[1:1 + self.n_q], bits[1 + self.n_q:]
        E = sum(v << j for j, v in enumerate(b))
        mant = sum(v * 2.0 ** -i for i, v in enumerate(a))
        return (-1.0) ** sigma * mant * 2.0 ** E

    # -- tape symbols ----------------------------------------------------

    def quantize(self, x: float, eps: float | None = None) -> np.ndarray:
        return to_symbols(self.encode(x, eps))

    def dequantize(self, symbols: Sequence[float]) -> float:
        return self.decode(to_bits(symbols))

    def encode_array(self, xs: Iterable[float]) -> list[int]:
        out = []
        for x in np.ravel(np.asarray(xs, dtype=float)):
            out += self.encode(float(x))
        return out

    def decode_array(self, bits: Sequence[int], count: int) -> np.ndarray:
        w = self.word
        if len(bits) < w * count:
            raise CodecError(f"need {w * count} bits, got {len(bits)}")
        return np.array([self.decode(bits[i * w:(i + 1) * w]) for i in range(count)])

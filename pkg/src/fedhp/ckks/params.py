"""Parameter sets for the RNS variant of CKKS.

Every ciphertext at level ``l`` carries the canonical scale ``scales[l]``:
the top scale is ``2**scale_bits`` and ``scales[l-1] = scales[l]**2 / q_l``.
Rescale primes are chosen greedily as the NTT-friendly prime closest to the
running scale, so canonical scales stay within a few ppm of the nominal one
and a rescale after any product of two canonical operands lands exactly on
the next canonical scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

from sympy import isprime

from ..errors import InputError

# HE standard, ternary secrets: max log2(QP) per ring dimension for 128/192/256-bit.
HE_STANDARD_LOGQ = {
    1024: (27, 19, 14),
    2048: (54, 37, 29),
    4096: (109, 75, 58),
    8192: (218, 152, 118),
    16384: (438, 305, 237),
    32768: (881, 611, 476),
}

# Modular products use a float64 quotient estimate; it is exact below 2**50.
MAX_MODULUS_BITS = 50


def security_level(ring_dim: int, log_qp: float) -> int:
    """Security in bits by table lookup (0 when below 128-bit)."""
    bounds = HE_STANDARD_LOGQ.get(ring_dim)
    if bounds is None:
        return 0
    for lam, bound in zip((256, 192, 128), reversed(bounds)):
        if log_qp <= bound:
            return lam
    return 0


def _is_ntt_prime(p: int, ring_dim: int) -> bool:
    return p % (2 * ring_dim) == 1 and isprime(p)


def largest_ntt_prime_below(bound: int, ring_dim: int, exclude=()) -> int:
    step = 2 * ring_dim
    p = ((bound - 1) // step) * step + 1
    while p > step:
        if p not in exclude and isprime(p):
            return p
        p -= step
    raise ValueError(f"no NTT-friendly prime below {bound} for N={ring_dim}")


def nearest_ntt_prime(target: float, ring_dim: int, exclude=()) -> int:
    step = 2 * ring_dim
    k0 = round((target - 1) / step)
    best = None
    for offset in range(0, 1 << 20):
        for k in {k0 + offset, k0 - offset}:
            p = k * step + 1
            if p > step and p not in exclude and isprime(p):
                if best is None or abs(p - target) < abs(best - target):
                    best = p
        # a hit at offset o bounds the search: nothing further can be closer
        if best is not None and abs(best - target) <= (offset + 0.5) * step:
            return best
    raise ValueError(f"no NTT-friendly prime near {target}")


@dataclass(frozen=True)
class CkksParams:
    name: str
    ring_dim: int
    moduli_chain: tuple[int, ...]
    special_prime: int
    scale: float
    sigma: float = 3.2
    security_lambda: int = field(default=0)

    def __post_init__(self):
        n = self.ring_dim
        if n < 4 or n & (n - 1):
            raise ValueError("ring_dim must be a power of two >= 4")
        mods = list(self.moduli_chain) + [self.special_prime]
        if len(set(mods)) != len(mods):
            raise ValueError("moduli must be distinct")
        for q in mods:
            if q.bit_length() > MAX_MODULUS_BITS:
                raise ValueError(f"modulus {q} exceeds {MAX_MODULUS_BITS} bits")
            if not _is_ntt_prime(q, n):
                raise ValueError(f"{q} is not a prime = 1 mod 2N")

    @property
    def level_budget(self) -> int:
        return len(self.moduli_chain) - 1

    @property
    def slots(self) -> int:
        return self.ring_dim // 2

    @property
    def log_q(self) -> float:
        return sum(math.log2(q) for q in self.moduli_chain)

    @property
    def log_qp(self) -> float:
        return self.log_q + math.log2(self.special_prime)

    @property
    def scales(self) -> tuple[float, ...]:
        return _canonical_scales(self.moduli_chain, self.scale)

    def scale_at(self, level: int) -> float:
        return self.scales[level]


@lru_cache(maxsize=None)
def _canonical_scales(chain: tuple[int, ...], top: float) -> tuple[float, ...]:
    levels = len(chain) - 1
    scales = [0.0] * (levels + 1)
    scales[levels] = float(top)
    for lvl in range(levels, 0, -1):
        scales[lvl - 1] = scales[lvl] * (scales[lvl] / chain[lvl])
    return tuple(scales)


def make_params(
    name: str,
    ring_dim: int,
    levels: int,
    scale_bits: int = 40,
    base_bits: int = 49,
    special_bits: int = 49,
    sigma: float = 3.2,
) -> CkksParams:
    """Build a chain ``q_0 .. q_levels`` plus one special key-switching prime."""
    q0 = largest_ntt_prime_below(1 << base_bits, ring_dim)
    special = largest_ntt_prime_below(1 << special_bits, ring_dim, exclude={q0})
    used = {q0, special}
    chain = [0] * (levels + 1)
    chain[0] = q0
    scale = float(1 << scale_bits)
    for lvl in range(levels, 0, -1):
        q = nearest_ntt_prime(scale, ring_dim, exclude=used)
        used.add(q)
        chain[lvl] = q
        scale = scale * (scale / q)
    log_qp = sum(math.log2(q) for q in chain) + math.log2(special)
    return CkksParams(
        name=name,
        ring_dim=ring_dim,
        moduli_chain=tuple(chain),
        special_prime=special,
        scale=float(1 << scale_bits),
        sigma=sigma,
        security_lambda=security_level(ring_dim, log_qp),
    )


PRESET_SPECS = {
    # desk-scale: fast, not 128-bit secure (log QP ~ 498 > 218)
    "test": dict(ring_dim=1 << 13, levels=10, scale_bits=40, base_bits=49, special_bits=49),
    # log QP ~ 437 <= 438
    "n14": dict(ring_dim=1 << 14, levels=10, scale_bits=35, base_bits=44, special_bits=43),
    # log QP ~ 818 <= 881
    "n15": dict(ring_dim=1 << 15, levels=18, scale_bits=40, base_bits=49, special_bits=49),
}


@lru_cache(maxsize=None)
def preset(name: str) -> CkksParams:
    try:
        spec = PRESET_SPECS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESET_SPECS)}") from None
    return make_params(name, **spec)

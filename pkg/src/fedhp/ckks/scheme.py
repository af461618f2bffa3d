"""Keys, plaintexts, ciphertexts, encryption and decryption.

Decryption convention: ``c0 + c1*s`` recovers ``m + e``.  All ring elements
are stored in the NTT domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import LevelExhaustedError
from . import encoding
from .context import CkksContext

# multiplier turning a per-slot standard deviation into a max-over-slots bound
SLOT_BOUND_SIGMAS = 8.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Plaintext:
    poly: np.ndarray
    level: int
    scale: float
    slots: int
    max_abs: float = 1.0

    def __post_init__(self):
        _frozen(self.poly)


@dataclass(frozen=True)
class Ciphertext:
    c0: np.ndarray
    c1: np.ndarray
    level: int
    scale: float
    noise: float = 0.0  # estimated max-abs slot error, assuming |slot| <= 1

    def __post_init__(self):
        _frozen(self.c0)
        _frozen(self.c1)

    @property
    def noise_bits(self) -> float:
        return math.log2(self.noise) if self.noise > 0 else float("-inf")


@dataclass(frozen=True)
class SecretKey:
    coeffs: np.ndarray  # small signed integers
    poly: np.ndarray  # NTT over q_0..q_L and the special prime
    variance: float  # per-coefficient variance, drives the noise model

    def __post_init__(self):
        _frozen(self.coeffs)
        _frozen(self.poly)


@dataclass(frozen=True)
class PublicKey:
    b: np.ndarray
    a: np.ndarray
    noise_variance: float
    secret_variance: float
    parties: int = 1


@dataclass(frozen=True)
class RelinKey:
    """Key-switching key for ``s**2 -> s`` with one gadget digit per RNS limb.

    ``b[j] + a[j]*s = P * g_j * s**2 + e_j`` over ``P*Q_L``, where ``g_j`` is
    the CRT idempotent of limb ``j``.
    """

    b: np.ndarray  # (L+1, L+2, N)
    a: np.ndarray
    noise_variance: float
    secret_variance: float


# -- sampling -----------------------------------------------------------------


def sample_ternary_hw(rng: np.random.Generator, n: int, weight: int | None = None) -> np.ndarray:
    """Ternary vector with exactly ``weight`` non-zeros (default N/2)."""
    weight = n // 2 if weight is None else weight
    out = np.zeros(n, dtype=np.int64)
    pos = rng.choice(n, size=weight, replace=False)
    out[pos] = rng.choice(np.array([-1, 1], dtype=np.int64), size=weight)
    return out


def sample_ternary(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def sample_gaussian(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    return np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)


def sample_uniform(rng: np.random.Generator, ctx: CkksContext, rows: np.ndarray) -> np.ndarray:
    return np.stack([rng.integers(0, int(ctx.moduli[r]), size=ctx.n, dtype=np.int64) for r in rows])


# -- noise model --------------------------------------------------------------


def slot_error(ctx: CkksContext, coeff_variance: float, scale: float) -> float:
    """Max-abs slot error implied by i.i.d. coefficient noise of given variance."""
    return SLOT_BOUND_SIGMAS * math.sqrt(coeff_variance * ctx.n / 2) / scale


def fresh_noise(ctx: CkksContext, pk: PublicKey, scale: float, encryptions: int = 1) -> float:
    """Error bound for the sum of ``encryptions`` fresh encryptions under ``pk``."""
    n = ctx.n
    sigma2 = ctx.params.sigma**2
    one = (2 / 3) * n * pk.noise_variance + sigma2 + n * pk.secret_variance * sigma2 + 1 / 12
    return slot_error(ctx, one * encryptions, scale)


def rounding_noise(ctx: CkksContext, secret_variance: float, scale: float) -> float:
    return slot_error(ctx, (1 + ctx.n * secret_variance) / 12, scale)


# -- encoding -----------------------------------------------------------------


def encode(ctx: CkksContext, values, level: int | None = None, scale: float | None = None) -> Plaintext:
    level = ctx.max_level if level is None else level
    scale = ctx.params.scale_at(level) if scale is None else scale
    values = np.asarray(values, dtype=np.float64).ravel()
    coeffs = encoding.scale_round(values, ctx.n, scale)
    poly = ctx.from_signed(coeffs, ctx.rows(level))
    max_abs = float(np.max(np.abs(values), initial=0.0))
    return Plaintext(poly, level, scale, values.size, max_abs)


def decode(ctx: CkksContext, pt: Plaintext, slots: int | None = None) -> np.ndarray:
    coeffs = ctx.to_float_coeffs(pt.poly, pt.level) / pt.scale
    values = encoding.embed(coeffs)
    return values if slots is None else values[:slots]


# -- key generation -----------------------------------------------------------


class KeyGenerator:
    """Single-key generation; the multiparty variants live in ``fedhp.mhe``."""

    def __init__(self, ctx: CkksContext, rng: np.random.Generator):
        self.ctx = ctx
        self.rng = rng

    def secret_key(self) -> SecretKey:
        ctx = self.ctx
        coeffs = sample_ternary_hw(self.rng, ctx.n)
        poly = ctx.from_signed(coeffs, ctx.rows(ctx.max_level, special=True))
        return SecretKey(coeffs, poly, variance=0.5)

    def public_key(self, sk: SecretKey) -> PublicKey:
        ctx = self.ctx
        rows = ctx.rows(ctx.max_level)
        a = sample_uniform(self.rng, ctx, rows)
        e = ctx.from_signed(sample_gaussian(self.rng, ctx.n, ctx.params.sigma), rows)
        b = ctx.sub(e, ctx.mul(a, sk.poly[rows], rows), rows)
        return PublicKey(b, a, ctx.params.sigma**2, sk.variance, parties=1)

    def relin_key(self, sk: SecretKey) -> RelinKey:
        ctx = self.ctx
        L = ctx.max_level
        ext = ctx.rows(L, special=True)
        s = sk.poly
        s2 = ctx.mul(s[: L + 1], s[: L + 1], ctx.rows(L))
        bs, as_ = [], []
        for j in range(L + 1):
            a = sample_uniform(self.rng, ctx, ext)
            e = ctx.from_signed(sample_gaussian(self.rng, ctx.n, ctx.params.sigma), ext)
            b = ctx.sub(e, ctx.mul(a, s, ext), ext)
            gadget = ctx.mul_scalar(s2[j : j + 1], [ctx.special_mod_q[j]], ctx.rows(j)[j:])
            b[j] = ctx.add(b[j : j + 1], gadget, ctx.rows(j)[j:])[0]
            bs.append(b)
            as_.append(a)
        return RelinKey(np.stack(bs), np.stack(as_), ctx.params.sigma**2, sk.variance)


# -- encryption / decryption --------------------------------------------------


def encrypt(ctx: CkksContext, pk: PublicKey, pt: Plaintext, rng: np.random.Generator) -> Ciphertext:
    if pt.level < 0 or pt.level > ctx.max_level:
        raise LevelExhaustedError(f"cannot encrypt at level {pt.level}")
    rows = ctx.rows(pt.level)
    n = ctx.n
    sigma = ctx.params.sigma
    v = ctx.from_signed(sample_ternary(rng, n), rows)
    e0 = ctx.from_signed(sample_gaussian(rng, n, sigma), rows)
    e1 = ctx.from_signed(sample_gaussian(rng, n, sigma), rows)
    b = pk.b[rows]
    a = pk.a[rows]
    c0 = ctx.add(ctx.add(ctx.mul(v, b, rows), e0, rows), pt.poly, rows)
    c1 = ctx.add(ctx.mul(v, a, rows), e1, rows)
    noise = fresh_noise(ctx, pk, pt.scale) + rounding_noise(ctx, 0.0, pt.scale)
    return Ciphertext(c0, c1, pt.level, pt.scale, noise)


def zero_ciphertext(ctx: CkksContext, level: int, scale: float) -> Ciphertext:
    """Trivial (noiseless, insecure) encryption of zero; the additive identity."""
    z = np.zeros((level + 1, ctx.n), dtype=np.int64)
    return Ciphertext(z, z.copy(), level, scale, 0.0)


def is_trivial_zero(ct: Ciphertext) -> bool:
    """True for the exact all-zero pair (e.g. ``c - c``)."""
    return ct.noise == 0.0 and not ct.c0.any() and not ct.c1.any()


def decrypt(ctx: CkksContext, sk: SecretKey, ct: Ciphertext) -> Plaintext:
    rows = ctx.rows(ct.level)
    m = ctx.add(ct.c0, ctx.mul(ct.c1, sk.poly[rows], rows), rows)
    return Plaintext(m, ct.level, ct.scale, ctx.params.slots)


def decrypt_values(ctx: CkksContext, sk: SecretKey, ct: Ciphertext, slots: int | None = None) -> np.ndarray:
    return decode(ctx, decrypt(ctx, sk, ct), slots)

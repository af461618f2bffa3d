"""Multiparty CKKS with an N-of-N additively shared secret key.

The collective secret is ``s = sum_i s_i``.  Parties derive the public key
from a common reference polynomial, build the relinearization key in two
rounds, decrypt jointly by publishing smudged partial decryptions, and
refresh ciphertexts by opening a masked copy and re-encrypting it at the
top level against a fresh common reference polynomial.

Each function here is the local computation of one party or the public
aggregation step; :mod:`fedhp.protocols` moves the resulting messages.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ckks import scheme as S
from .ckks.context import CkksContext
from .ckks.evaluator import Evaluator
from .ckks.scheme import Ciphertext, PublicKey, RelinKey, SecretKey
from .errors import MissingContributionError, MissingShareError

log = logging.getLogger(__name__)

# Aggregate smudging magnitude above the estimated coefficient noise, in bits.
DEFAULT_SMUDGE_BITS = 1.0

# Mask magnitude for distributed bootstrapping (slot units) by source level.
# Level 0 has a single ~49-bit limb, which leaves little room above the scale.
MASK_BOUND_BITS = 16
MASK_BOUND_BITS_LEVEL0 = 2


@dataclass(frozen=True)
class SecretKeyShare:
    party_id: int
    key: SecretKey


@dataclass(frozen=True)
class CommonReference:
    """Uniform ring elements expanded from a public session seed."""

    ctx: CkksContext
    seed: int

    @cached_property
    def pk_a(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 0])
        return S.sample_uniform(rng, self.ctx, self.ctx.rows(self.ctx.max_level))

    @cached_property
    def rlk_a(self) -> np.ndarray:
        ctx = self.ctx
        rng = np.random.default_rng([self.seed, 1])
        ext = ctx.rows(ctx.max_level, special=True)
        return np.stack([S.sample_uniform(rng, ctx, ext) for _ in range(ctx.max_level + 1)])

    def refresh_a(self, nonce: int) -> np.ndarray:
        """Fresh top-level polynomial for refresh instance ``nonce``."""
        rng = np.random.default_rng([self.seed, 2, nonce])
        return S.sample_uniform(rng, self.ctx, self.ctx.rows(self.ctx.max_level))


@dataclass(frozen=True)
class RlkRound1Share:
    h0: np.ndarray  # (L+1, L+2, N)
    h1: np.ndarray


@dataclass(frozen=True)
class RlkRound2Share:
    h0: np.ndarray
    h1: np.ndarray


@dataclass(frozen=True)
class EvalKeySet:
    relin: RelinKey


# -- key generation -----------------------------------------------------------


def sec_key_gen(ctx: CkksContext, party_id: int, rng: np.random.Generator) -> SecretKeyShare:
    return SecretKeyShare(party_id, S.KeyGenerator(ctx, rng).secret_key())


def _gauss(ctx: CkksContext, rng, rows, count: int = 1) -> np.ndarray:
    e = np.stack([S.sample_gaussian(rng, ctx.n, ctx.params.sigma) for _ in range(count)])
    return ctx.ntt(np.mod(e[:, None, :], ctx.moduli[rows][None, :, None]), rows)


def pk_share(ctx: CkksContext, share: SecretKeyShare, crs: CommonReference,
             rng: np.random.Generator) -> np.ndarray:
    """``-s_i * a + e_i`` over the full ciphertext modulus."""
    rows = ctx.rows(ctx.max_level)
    e = _gauss(ctx, rng, rows)[0]
    return ctx.sub(e, ctx.mul(crs.pk_a, share.key.poly[rows], rows), rows)


def aggregate_pk(ctx: CkksContext, shares: list[np.ndarray], crs: CommonReference,
                 parties: int) -> PublicKey:
    _require(len(shares), parties, MissingContributionError, "public-key share")
    rows = ctx.rows(ctx.max_level)
    b = _sum(ctx, shares, rows)
    sigma2 = ctx.params.sigma**2
    return PublicKey(b, crs.pk_a, parties * sigma2, parties * 0.5, parties=parties)


def _gadget_rows(ctx: CkksContext, poly: np.ndarray) -> np.ndarray:
    """``P * g_j * poly`` for every digit j, shape (L+1, L+2, N)."""
    L = ctx.max_level
    out = np.zeros((L + 1, L + 2, ctx.n), dtype=np.int64)
    for j in range(L + 1):
        r = ctx.rows(j)[j:]
        out[j, j] = ctx.mul_scalar(poly[j : j + 1], [ctx.special_mod_q[j]], r)[0]
    return out


def rlk_round1(ctx: CkksContext, share: SecretKeyShare, crs: CommonReference,
               rng: np.random.Generator) -> tuple[RlkRound1Share, SecretKey]:
    """First round; returns the public share and the party's ephemeral secret."""
    L = ctx.max_level
    ext = ctx.rows(L, special=True)
    u = S.KeyGenerator(ctx, rng).secret_key()
    s = share.key.poly
    a = crs.rlk_a
    e0 = _gauss(ctx, rng, ext, L + 1)
    e1 = _gauss(ctx, rng, ext, L + 1)
    ua = np.stack([ctx.mul(a[j], u.poly, ext) for j in range(L + 1)])
    h0 = ctx.add(ctx.sub(e0, ua, ext), _gadget_rows(ctx, s), ext)
    h1 = ctx.add(np.stack([ctx.mul(a[j], s, ext) for j in range(L + 1)]), e1, ext)
    return RlkRound1Share(h0, h1), u


def aggregate_rlk_round1(ctx: CkksContext, shares: list[RlkRound1Share], parties: int) -> RlkRound1Share:
    _require(len(shares), parties, MissingContributionError, "relinearization round-1 share")
    ext = ctx.rows(ctx.max_level, special=True)
    return RlkRound1Share(_sum(ctx, [s.h0 for s in shares], ext), _sum(ctx, [s.h1 for s in shares], ext))


def rlk_round2(ctx: CkksContext, share: SecretKeyShare, ephemeral: SecretKey,
               agg1: RlkRound1Share, rng: np.random.Generator) -> RlkRound2Share:
    L = ctx.max_level
    ext = ctx.rows(L, special=True)
    s = share.key.poly
    u_minus_s = ctx.sub(ephemeral.poly, s, ext)
    e2 = _gauss(ctx, rng, ext, L + 1)
    e3 = _gauss(ctx, rng, ext, L + 1)
    h0 = ctx.add(np.stack([ctx.mul(agg1.h0[j], s, ext) for j in range(L + 1)]), e2, ext)
    h1 = ctx.add(np.stack([ctx.mul(agg1.h1[j], u_minus_s, ext) for j in range(L + 1)]), e3, ext)
    return RlkRound2Share(h0, h1)


def aggregate_rlk(ctx: CkksContext, agg1: RlkRound1Share, shares: list[RlkRound2Share],
                  parties: int) -> RelinKey:
    """``b = sum(h0') + sum(h1')``, ``a = sum(h1)`` so that ``b + a*s = P*g*s**2 + e``."""
    _require(len(shares), parties, MissingContributionError, "relinearization round-2 share")
    ext = ctx.rows(ctx.max_level, special=True)
    b = ctx.add(_sum(ctx, [s.h0 for s in shares], ext), _sum(ctx, [s.h1 for s in shares], ext), ext)
    n = ctx.n
    sigma2 = ctx.params.sigma**2
    # s*e0 + u*e1 + e2 + e3 with s, u sums of per-party ternary secrets
    var = n * (parties * 0.5) * (parties * sigma2) * 2 + 2 * parties * sigma2
    return RelinKey(b, agg1.h1, var, parties * 0.5)


def d_key_gen(ctx: CkksContext, shares: list[SecretKeyShare], crs: CommonReference,
              rngs: list[np.random.Generator]) -> tuple[PublicKey, EvalKeySet]:
    """Run both key-generation protocols in-process (no transcript)."""
    n = len(shares)
    pk = aggregate_pk(ctx, [pk_share(ctx, sh, crs, r) for sh, r in zip(shares, rngs)], crs, n)
    r1 = [rlk_round1(ctx, sh, crs, r) for sh, r in zip(shares, rngs)]
    agg1 = aggregate_rlk_round1(ctx, [x[0] for x in r1], n)
    r2 = [rlk_round2(ctx, sh, u, agg1, r) for sh, (_, u), r in zip(shares, r1, rngs)]
    return pk, EvalKeySet(aggregate_rlk(ctx, agg1, r2, n))


def collective_evaluator(ctx: CkksContext, keys: EvalKeySet) -> Evaluator:
    return Evaluator(ctx, keys.relin)


# -- distributed decryption ---------------------------------------------------


def smudging_bound(ctx: CkksContext, ct: Ciphertext, parties: int,
                   smudge_bits: float = DEFAULT_SMUDGE_BITS) -> int:
    """Per-party bound of the uniform smudging noise for ``ct``.

    The slot-error estimate is converted back to a coefficient standard
    deviation and raised by ``smudge_bits``; the bound is split across parties
    so the aggregate smudging stays at that level regardless of party count.
    """
    coeff_std = ct.noise * ct.scale / (S.SLOT_BOUND_SIGMAS * math.sqrt(ctx.n / 2))
    return max(1, int(round(coeff_std * 2.0**smudge_bits / math.sqrt(parties))))


def decryption_share(ctx: CkksContext, share: SecretKeyShare, ct: Ciphertext,
                     rng: np.random.Generator, parties: int,
                     smudge_bits: float = DEFAULT_SMUDGE_BITS) -> np.ndarray:
    """``s_i * c1 + e_smudge`` at the ciphertext's level."""
    rows = ctx.rows(ct.level)
    bound = smudging_bound(ctx, ct, parties, smudge_bits)
    e = rng.integers(-bound, bound + 1, size=ctx.n, dtype=np.int64)
    return ctx.add(ctx.mul(ct.c1, share.key.poly[rows], rows), ctx.from_signed(e, rows), rows)


def combine_decryption(ctx: CkksContext, ct: Ciphertext, dshares: list[np.ndarray],
                       parties: int, slots: int | None = None) -> np.ndarray:
    """Sum every party's share with ``c0`` and decode.  All N shares are required."""
    _require(len(dshares), parties, MissingShareError, "decryption share")
    rows = ctx.rows(ct.level)
    m = ctx.add(ct.c0, _sum(ctx, dshares, rows), rows)
    return S.decode(ctx, S.Plaintext(m, ct.level, ct.scale, ctx.params.slots), slots)


def d_decrypt(ctx: CkksContext, ct: Ciphertext, shares: list[SecretKeyShare],
              rngs: list[np.random.Generator], parties: int | None = None,
              slots: int | None = None, smudge_bits: float = DEFAULT_SMUDGE_BITS) -> np.ndarray:
    parties = len(shares) if parties is None else parties
    ds = [decryption_share(ctx, sh, ct, r, parties, smudge_bits) for sh, r in zip(shares, rngs)]
    return combine_decryption(ctx, ct, ds, parties, slots)


def smudged_noise(ctx: CkksContext, ct: Ciphertext, parties: int,
                  smudge_bits: float = DEFAULT_SMUDGE_BITS) -> float:
    """Slot-error estimate of a distributed decryption of ``ct``."""
    bound = smudging_bound(ctx, ct, parties, smudge_bits)
    return ct.noise + S.slot_error(ctx, parties * bound**2 / 3, ct.scale)


# -- distributed bootstrapping ------------------------------------------------


@dataclass(frozen=True)
class RefreshShare:
    """One party's refresh message.

    ``low = s_i*c1 + M_i + e_smudge`` at the source level and
    ``top = -s_i*a + (-M_i) + e_i`` at the top level, where ``M_i`` is the
    encoding of a uniform slot mask and ``a`` a fresh common reference
    polynomial for this refresh instance.
    """

    low: np.ndarray
    top: np.ndarray


def mask_bound(level: int) -> float:
    return float(1 << (MASK_BOUND_BITS if level >= 1 else MASK_BOUND_BITS_LEVEL0))


def refresh_share(ctx: CkksContext, share: SecretKeyShare, ct: Ciphertext, crs: CommonReference,
                  nonce: int, rng: np.random.Generator, parties: int,
                  smudge_bits: float = DEFAULT_SMUDGE_BITS) -> RefreshShare:
    top = ctx.max_level
    bound = mask_bound(ct.level)
    mask = rng.uniform(-bound, bound, size=ctx.params.slots)
    low_rows, top_rows = ctx.rows(ct.level), ctx.rows(top)
    m_low = S.encode(ctx, mask, ct.level, ct.scale).poly
    m_top = S.encode(ctx, mask, top).poly
    low = ctx.add(decryption_share(ctx, share, ct, rng, parties, smudge_bits), m_low, low_rows)
    a = crs.refresh_a(nonce)
    e = _gauss(ctx, rng, top_rows)[0]
    high = ctx.sub(ctx.sub(e, ctx.mul(a, share.key.poly[top_rows], top_rows), top_rows), m_top, top_rows)
    return RefreshShare(low, high)


def combine_refresh(ctx: CkksContext, pk: PublicKey, ct: Ciphertext, shares: list[RefreshShare],
                    crs: CommonReference, nonce: int, parties: int) -> Ciphertext:
    """Open the masked value, re-encode it at the top level and strip the masks."""
    _require(len(shares), parties, MissingShareError, "refresh share")
    top = ctx.max_level
    opened = combine_decryption(ctx, ct, [s.low for s in shares], parties)
    rows = ctx.rows(top)
    pt = S.encode(ctx, opened, top)
    c0 = ctx.add(pt.poly, _sum(ctx, [s.top for s in shares], rows), rows)
    return Ciphertext(c0, crs.refresh_a(nonce), top, pt.scale, collective_fresh_noise(ctx, pk))


def collective_fresh_noise(ctx: CkksContext, pk: PublicKey) -> float:
    """Fresh-encryption noise estimate at the top level under the collective key."""
    return S.fresh_noise(ctx, pk, ctx.params.scale)


def d_bootstrap(ctx: CkksContext, pk: PublicKey, ct: Ciphertext, shares: list[SecretKeyShare],
                crs: CommonReference, nonce: int, rngs: list[np.random.Generator],
                parties: int | None = None, smudge_bits: float = DEFAULT_SMUDGE_BITS) -> Ciphertext:
    """Refresh ``ct`` to the top level, in-process (no transcript).

    ``nonce`` selects the common reference polynomial and must differ
    between refreshes of one session.
    """
    parties = len(shares) if parties is None else parties
    rs = [refresh_share(ctx, sh, ct, crs, nonce, r, parties, smudge_bits) for sh, r in zip(shares, rngs)]
    return combine_refresh(ctx, pk, ct, rs, crs, nonce, parties)


# -- helpers ------------------------------------------------------------------


def _require(got: int, want: int, exc, what: str) -> None:
    if got != want:
        raise exc(f"expected {want} {what}s, received {got}")


def _sum(ctx: CkksContext, arrays, rows) -> np.ndarray:
    arrays = list(arrays)
    out = arrays[0]
    for a in arrays[1:]:
        out = ctx.add(out, a, rows)
    return out

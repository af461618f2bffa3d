"""Homomorphic arithmetic on ciphertexts.

Every ciphertext produced here sits on the canonical scale of its level, so
operands at equal levels always agree on scale.  Multiplications rescale by
default; constants are encoded at whatever scale makes the rescaled result
land back on the canonical scale.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..errors import LevelExhaustedError, ScaleMismatchError
from . import _kernels as K
from . import encoding
from .context import CkksContext
from .scheme import (Ciphertext, Plaintext, RelinKey, is_trivial_zero, rounding_noise,
                     slot_error, zero_ciphertext)

_SCALE_RTOL = 1e-9


def power_depth(k: int) -> int:
    """Levels needed for ``x**k`` by repeated squaring and products."""
    return 0 if k <= 1 else math.ceil(math.log2(k))


@lru_cache(maxsize=None)
def _term_plan(k: int) -> tuple[int, int]:
    """Depth of ``c * x**k`` and the split ``a`` used: ``(c*x**a) * x**(k-a)``.

    ``a == k`` means a single constant multiplication of ``x**k``.
    """
    best = (power_depth(k) + 1, k)
    for a in range(1, k):
        d = max(_term_plan(a)[0], power_depth(k - a)) + 1
        if d < best[0]:
            best = (d, a)
    return best


def term_depth(k: int) -> int:
    return 0 if k == 0 else _term_plan(k)[0]


@lru_cache(maxsize=64)
def _lipschitz(coeffs: tuple[float, ...]) -> float:
    deriv = np.polynomial.polynomial.polyder(np.array(coeffs, dtype=np.float64))
    if deriv.size == 0:
        return 0.0
    grid = np.linspace(-1.0, 1.0, 4097)
    return 1.01 * float(np.max(np.abs(np.polynomial.polynomial.polyval(grid, deriv))))


def lipschitz_constant(coeffs) -> float:
    """Bound on ``|p'(x)|`` over [-1, 1] (1% margin over a dense grid)."""
    return _lipschitz(tuple(float(c) for c in coeffs))


def poly_depth(coeffs) -> int:
    """Levels consumed by :meth:`Evaluator.poly_eval` for these coefficients."""
    return max((term_depth(k) for k, c in enumerate(coeffs) if c != 0), default=0)


class Evaluator:
    """Stateless operations; holds the context and (optionally) a relin key."""

    def __init__(self, ctx: CkksContext, relin_key: RelinKey | None = None,
                 secret_variance: float | None = None):
        self.ctx = ctx
        self.relin_key = relin_key
        if secret_variance is None:
            secret_variance = relin_key.secret_variance if relin_key is not None else 0.5
        self.secret_variance = secret_variance

    # -- helpers --------------------------------------------------------------

    def scale_at(self, level: int) -> float:
        return self.ctx.params.scale_at(level)

    def _check_pair(self, a: Ciphertext, b: Ciphertext) -> None:
        if a.level != b.level:
            raise ScaleMismatchError(f"level mismatch: {a.level} vs {b.level}")
        if abs(a.scale - b.scale) > _SCALE_RTOL * a.scale:
            raise ScaleMismatchError(f"scale mismatch: {a.scale} vs {b.scale}")

    def _need_level(self, ct: Ciphertext, levels: int = 1) -> None:
        if ct.level < levels:
            raise LevelExhaustedError(
                f"operation needs {levels} level(s), ciphertext is at level {ct.level}"
            )

    def _rescale_noise(self, scale: float) -> float:
        return rounding_noise(self.ctx, self.secret_variance, scale)

    # -- additive -------------------------------------------------------------

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        rows = self.ctx.rows(a.level)
        return Ciphertext(self.ctx.add(a.c0, b.c0, rows), self.ctx.add(a.c1, b.c1, rows),
                          a.level, a.scale, a.noise + b.noise)

    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._check_pair(a, b)
        rows = self.ctx.rows(a.level)
        # subtracting a ciphertext from itself cancels exactly
        noise = 0.0 if a is b else a.noise + b.noise
        return Ciphertext(self.ctx.sub(a.c0, b.c0, rows), self.ctx.sub(a.c1, b.c1, rows),
                          a.level, a.scale, noise)

    def neg(self, a: Ciphertext) -> Ciphertext:
        rows = self.ctx.rows(a.level)
        return Ciphertext(self.ctx.neg(a.c0, rows), self.ctx.neg(a.c1, rows),
                          a.level, a.scale, a.noise)

    def add_many(self, cts) -> Ciphertext:
        cts = list(cts)
        out = cts[0]
        for ct in cts[1:]:
            out = self.add(out, ct)
        return out

    def _constant_poly(self, values, level: int, scale: float) -> tuple[np.ndarray, float]:
        """NTT-domain plaintext for a scalar or slot vector, plus its encoding error."""
        ctx = self.ctx
        rows = ctx.rows(level)
        if np.ndim(values) == 0:
            # a constant polynomial has a constant NTT
            coeff = int(round(float(values) * scale))
            residues = np.array([coeff % int(ctx.moduli[r]) for r in rows], dtype=np.int64)
            return np.repeat(residues[:, None], ctx.n, axis=1), 0.5 / scale
        coeffs = encoding.scale_round(values, ctx.n, scale)
        return ctx.from_signed(coeffs, rows), slot_error(ctx, 1 / 12, scale)

    def add_plain(self, ct: Ciphertext, values) -> Ciphertext:
        """Add a public scalar, slot vector or matching :class:`Plaintext`."""
        rows = self.ctx.rows(ct.level)
        if isinstance(values, Plaintext):
            if values.level != ct.level or abs(values.scale - ct.scale) > _SCALE_RTOL * ct.scale:
                raise ScaleMismatchError("plaintext level/scale does not match ciphertext")
            poly, err = values.poly, slot_error(self.ctx, 1 / 12, ct.scale)
        else:
            poly, err = self._constant_poly(values, ct.level, ct.scale)
        return Ciphertext(self.ctx.add(ct.c0, poly, rows), ct.c1, ct.level, ct.scale, ct.noise + err)

    add_const = add_plain

    def sub_plain(self, ct: Ciphertext, values) -> Ciphertext:
        return self.add_plain(ct, -np.asarray(values, dtype=np.float64))

    # -- multiplicative -------------------------------------------------------

    def mul_plain(self, ct: Ciphertext, values, rescale: bool = True) -> Ciphertext:
        """Multiply by a public scalar or slot vector.

        With ``rescale`` the constant is encoded so the result carries the
        canonical scale of ``level - 1``.  Without it the constant is encoded at
        the canonical scale of ``ct.level`` and the caller must rescale.
        """
        self._need_level(ct)
        ctx = self.ctx
        lvl = ct.level
        rows = ctx.rows(lvl)
        if rescale:
            pt_scale = self.scale_at(lvl - 1) * float(ctx.moduli[lvl]) / ct.scale
        else:
            pt_scale = self.scale_at(lvl)
        poly, enc_err = self._constant_poly(values, lvl, pt_scale)
        mag = float(np.max(np.abs(values), initial=0.0))
        out = Ciphertext(ctx.mul(ct.c0, poly, rows), ctx.mul(ct.c1, poly, rows), lvl,
                         ct.scale * pt_scale, ct.noise * mag + enc_err)
        return self.rescale(out) if rescale else out

    mul_const = mul_plain

    def mul(self, a: Ciphertext, b: Ciphertext, rescale: bool = True) -> Ciphertext:
        """Ciphertext product with relinearization (and rescale by default)."""
        self._check_pair(a, b)
        self._need_level(a)
        if self.relin_key is None:
            raise ValueError("ciphertext multiplication needs a relinearization key")
        ctx = self.ctx
        rows = ctx.rows(a.level)
        d0 = ctx.mul(a.c0, b.c0, rows)
        d1 = ctx.add(ctx.mul(a.c0, b.c1, rows), ctx.mul(a.c1, b.c0, rows), rows)
        d2 = ctx.mul(a.c1, b.c1, rows)
        ks0, ks1, ks_var = self._key_switch(d2, a.level)
        scale = a.scale * b.scale
        noise = a.noise + b.noise + a.noise * b.noise + slot_error(ctx, ks_var, scale)
        out = Ciphertext(ctx.add(d0, ks0, rows), ctx.add(d1, ks1, rows), a.level, scale, noise)
        return self.rescale(out) if rescale else out

    def square(self, a: Ciphertext, rescale: bool = True) -> Ciphertext:
        return self.mul(a, a, rescale=rescale)

    def _key_switch(self, d2: np.ndarray, level: int):
        """Switch ``d2`` (under s**2) to a pair under s; returns its coefficient variance too."""
        ctx = self.ctx
        rk = self.relin_key
        rows = ctx.rows(level)
        ext = ctx.rows(level, special=True)
        q = ctx.moduli[rows]
        coef = ctx.center(ctx.intt(d2, rows), q[:, None])
        digits = np.mod(coef[:, None, :], ctx.moduli[ext][None, :, None])
        digits = ctx.ntt(digits, ext)
        acc0 = _dot(ctx, digits, rk.b[: level + 1][:, ext], ext)
        acc1 = _dot(ctx, digits, rk.a[: level + 1][:, ext], ext)
        out = self._divide_last(np.stack([acc0, acc1]), rows, ctx.special_index, ctx.special_inv)
        p = float(ctx.params.special_prime)
        n = ctx.n
        digit_var = sum(float(qi) ** 2 / 12 for qi in q) * n * rk.noise_variance / p**2
        var = digit_var + (1 + n * self.secret_variance) / 12
        return out[0], out[1], var

    def _divide_last(self, polys: np.ndarray, keep: np.ndarray, last_idx: int, inv: np.ndarray):
        """Exact division by the last limb's modulus with rounding (RNS)."""
        ctx = self.ctx
        q_last = int(ctx.moduli[last_idx])
        last = ctx.intt(polys[:, -1], np.array([last_idx]))
        last = ctx.center(last, q_last)
        k = len(keep)
        lifted = ctx.ntt(np.mod(last[:, None, :], ctx.moduli[keep][None, :, None]), keep)
        diff = ctx.sub(polys[:, :k], lifted, keep)
        scal = np.asarray(inv[:k], dtype=np.int64)
        return np.stack([ctx.mul_scalar(d, scal, keep) for d in diff])

    def rescale(self, ct: Ciphertext) -> Ciphertext:
        self._need_level(ct)
        ctx = self.ctx
        lvl = ct.level
        keep = ctx.rows(lvl - 1)
        out = self._divide_last(np.stack([ct.c0, ct.c1]), keep, lvl, ctx.rescale_inv[lvl])
        scale = ct.scale / float(ctx.moduli[lvl])
        return Ciphertext(out[0], out[1], lvl - 1, scale, ct.noise + self._rescale_noise(scale))

    def drop_to_level(self, ct: Ciphertext, level: int) -> Ciphertext:
        """Lower a ciphertext to ``level`` while keeping the canonical scale."""
        if level > ct.level:
            raise ValueError(f"cannot raise level {ct.level} to {level}")
        while ct.level > level:
            ct = self.mul_plain(ct, 1.0)
        return ct

    def align(self, *cts: Ciphertext) -> list[Ciphertext]:
        low = min(ct.level for ct in cts)
        return [self.drop_to_level(ct, low) for ct in cts]

    # -- polynomials ----------------------------------------------------------

    def poly_eval(self, ct: Ciphertext, coeffs) -> Ciphertext:
        """Evaluate ``sum_k coeffs[k] * x**k`` slot-wise.

        Each monomial is built as a product tree over powers of two with its
        coefficient folded into the shallowest factor, so the whole polynomial
        costs :func:`poly_depth` levels.

        The noise estimate assumes slots in [-1, 1]: input error propagates
        through the polynomial's Lipschitz constant there, and every internal
        product adds its own rounding error.
        """
        coeffs = [float(c) for c in coeffs]
        depth = poly_depth(coeffs)
        self._need_level(ct, depth)
        if is_trivial_zero(ct):
            out = zero_ciphertext(self.ctx, ct.level - depth, self.scale_at(ct.level - depth))
            return self.add_plain(out, coeffs[0]) if coeffs and coeffs[0] != 0 else out
        powers: dict[int, Ciphertext] = {1: ct}

        def power(m: int) -> Ciphertext:
            if m not in powers:
                if m & (m - 1) == 0:
                    half = power(m // 2)
                    powers[m] = self.mul(half, half)
                else:
                    hi = 1 << (m.bit_length() - 1)
                    x, y = self.align(power(hi), power(m - hi))
                    powers[m] = self.mul(x, y)
            return powers[m]

        def term(k: int, c: float) -> Ciphertext:
            _, a = _term_plan(k)
            if a == k:
                return self.mul_plain(power(k), c)
            x, y = self.align(term(a, c), power(k - a))
            return self.mul(x, y)

        terms = [term(k, c) for k, c in enumerate(coeffs) if k > 0 and c != 0]
        if not terms:
            out = self.drop_to_level(self.mul_plain(ct, 0.0), ct.level - max(depth, 1))
        else:
            out = self.add_many(self.align(*terms))
        if coeffs and coeffs[0] != 0:
            out = self.add_plain(out, coeffs[0])
        products = len(powers) - 1 + len(terms) * depth
        weight = max(1.0, sum(abs(c) for c in coeffs[1:]))
        fresh = products * weight * (self._rescale_noise(out.scale) + 0.5 / out.scale)
        noise = lipschitz_constant(coeffs) * ct.noise + fresh
        return Ciphertext(out.c0, out.c1, out.level, out.scale, min(noise, out.noise))


def _dot(ctx: CkksContext, digits: np.ndarray, keys: np.ndarray, ext: np.ndarray) -> np.ndarray:
    return K.dot_digits(np.ascontiguousarray(digits), np.ascontiguousarray(keys), ext,
                        ctx.moduli, ctx.moduli_inv)

"""RNS ring arithmetic over ``Z_Q[X]/(X^N + 1)``.

A polynomial is an int64 array of shape ``(limbs, N)``.  Limb ``i`` of a
polynomial at level ``l`` is reduced modulo ``q_i`` for ``i <= l``; the
key-switching basis appends the special prime, which has modulus index
``L + 1``.  Unless stated otherwise polynomials are kept in the NTT domain.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import _kernels as K
from .params import CkksParams, preset


def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _primitive_2n_root(q: int, n: int) -> int:
    """A primitive 2N-th root of unity: psi**n == -1 mod q."""
    exp = (q - 1) // (2 * n)
    for g in range(2, q):
        psi = pow(g, exp, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ValueError(f"no primitive 2N-th root modulo {q}")


def _powers(base: int, n: int, q: int) -> np.ndarray:
    out = np.empty(n, dtype=object)
    out[0] = 1
    acc = 1
    for i in range(1, n):
        acc = acc * base % q
        out[i] = acc
    return out.astype(np.int64)


class CkksContext:
    """Parameters plus precomputed NTT tables and RNS constants."""

    def __init__(self, params: CkksParams):
        self.params = params
        n = params.ring_dim
        self.n = n
        self.max_level = params.level_budget
        self.special_index = self.max_level + 1
        mods = list(params.moduli_chain) + [params.special_prime]
        self.moduli = np.array(mods, dtype=np.int64)
        self.moduli_inv = 1.0 / self.moduli.astype(np.float64)
        rev = _bitrev(n)
        psi_rev = np.empty((len(mods), n), dtype=np.int64)
        psi_inv_rev = np.empty((len(mods), n), dtype=np.int64)
        n_inv = np.empty(len(mods), dtype=np.int64)
        for i, q in enumerate(mods):
            psi = _primitive_2n_root(q, n)
            psi_rev[i] = _powers(psi, n, q)[rev]
            psi_inv_rev[i] = _powers(pow(psi, -1, q), n, q)[rev]
            n_inv[i] = pow(n, -1, q)
        self.psi_rev = psi_rev
        self.psi_rev_f = psi_rev.astype(np.float64) / self.moduli[:, None].astype(np.float64)
        self.psi_inv_rev = psi_inv_rev
        self.psi_inv_rev_f = psi_inv_rev.astype(np.float64) / self.moduli[:, None].astype(np.float64)
        self.n_inv = n_inv
        self.n_inv_f = n_inv.astype(np.float64) / self.moduli.astype(np.float64)

        # q_l^{-1} mod q_i (rescale) and P^{-1} mod q_i (mod-down)
        self.rescale_inv = np.zeros((self.max_level + 1, self.max_level + 1), dtype=np.int64)
        for lvl in range(1, self.max_level + 1):
            for i in range(lvl):
                self.rescale_inv[lvl, i] = pow(mods[lvl], -1, mods[i])
        self.special_inv = np.array(
            [pow(params.special_prime, -1, q) for q in params.moduli_chain], dtype=np.int64
        )
        self.special_mod_q = np.array(
            [params.special_prime % q for q in params.moduli_chain], dtype=np.int64
        )
        if self.max_level >= 1:
            q0, q1 = mods[0], mods[1]
            self.garner_q0_inv = pow(q0, -1, q1)

    # -- index helpers --------------------------------------------------------

    def rows(self, level: int, special: bool = False) -> np.ndarray:
        r = list(range(level + 1))
        if special:
            r.append(self.special_index)
        return np.array(r, dtype=np.int64)

    def col_moduli(self, rows: np.ndarray) -> np.ndarray:
        return self.moduli[rows][:, None]

    # -- transforms -----------------------------------------------------------

    def ntt(self, a: np.ndarray, rows: np.ndarray) -> np.ndarray:
        out = np.ascontiguousarray(a, dtype=np.int64).copy()
        flat = out.reshape(-1, self.n)
        idx = np.broadcast_to(rows, out.shape[:-1]).reshape(-1).astype(np.int64)
        K.ntt_forward(flat, idx, self.moduli, self.psi_rev, self.psi_rev_f)
        return out

    def intt(self, a: np.ndarray, rows: np.ndarray) -> np.ndarray:
        out = np.ascontiguousarray(a, dtype=np.int64).copy()
        flat = out.reshape(-1, self.n)
        idx = np.broadcast_to(rows, out.shape[:-1]).reshape(-1).astype(np.int64)
        K.ntt_inverse(
            flat, idx, self.moduli, self.psi_inv_rev, self.psi_inv_rev_f, self.n_inv, self.n_inv_f
        )
        return out

    # -- elementwise ----------------------------------------------------------

    def add(self, a, b, rows):
        q = self.col_moduli(rows)
        r = a + b
        r -= q
        r += (r >> 63) & q
        return r

    def sub(self, a, b, rows):
        q = self.col_moduli(rows)
        r = a - b
        r += (r >> 63) & q
        return r

    def neg(self, a, rows):
        q = self.col_moduli(rows)
        return np.where(a == 0, 0, q - a)

    def mul(self, a, b, rows):
        return K.mul_rows(
            np.ascontiguousarray(a), np.ascontiguousarray(b), rows, self.moduli, self.moduli_inv
        )

    def mul_scalar(self, a, scalars, rows):
        """Multiply row ``i`` by the integer ``scalars[i]`` (already reduced)."""
        return K.mul_scalar_rows(
            np.ascontiguousarray(a), np.asarray(scalars, dtype=np.int64), rows,
            self.moduli, self.moduli_inv,
        )

    def mul_int(self, a, value: int, rows):
        """Multiply by an arbitrary (possibly huge or negative) integer."""
        scalars = [int(value) % int(self.moduli[r]) for r in rows]
        return self.mul_scalar(a, scalars, rows)

    # -- lifting small integer polynomials ------------------------------------

    def reduce_signed(self, coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Reduce a signed int64 coefficient vector modulo each row's prime."""
        return np.mod(coeffs[None, :].astype(np.int64), self.col_moduli(rows))

    def from_signed(self, coeffs: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Signed coefficients -> NTT-domain RNS polynomial."""
        return self.ntt(self.reduce_signed(coeffs, rows), rows)

    @staticmethod
    def center(residues: np.ndarray, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.int64)
        half = q >> 1
        return np.where(residues > half, residues - q, residues)

    # -- coefficient recovery -------------------------------------------------

    def to_float_coeffs(self, poly_ntt: np.ndarray, level: int) -> np.ndarray:
        """Centered integer coefficients as float64.

        Uses limb 0 alone at level 0 and Garner's two-limb reconstruction
        otherwise, so values up to ``q0*q1/2`` are recovered with float64
        relative precision.
        """
        use = 1 if level == 0 else 2
        rows = self.rows(use - 1)
        coef = self.intt(poly_ntt[:use], rows)
        q0 = int(self.moduli[0])
        if use == 1:
            return self.center(coef[0], q0).astype(np.float64)
        q1 = int(self.moduli[1])
        x0 = coef[0]
        x1 = coef[1]
        diff = np.mod(x1 - np.mod(x0, q1), q1)
        t = K.mul_scalar_rows(
            diff[None, :], np.array([self.garner_q0_inv], dtype=np.int64),
            np.array([1], dtype=np.int64), self.moduli, self.moduli_inv,
        )[0]
        t = self.center(t, q1)
        return x0.astype(np.float64) + float(q0) * t.astype(np.float64)


@lru_cache(maxsize=None)
def context_for(name: str) -> CkksContext:
    """Shared context for a named preset (tables are expensive to build)."""
    return CkksContext(preset(name))

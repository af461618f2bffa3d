"""Compiled inner loops for RNS polynomial arithmetic.

All residues are int64 in ``[0, q)`` with ``q < 2**50``.  Products are
reduced with a float64 estimate of the quotient; the estimate is off by at
most one, so a single conditional correction restores the canonical range.
Operands are non-negative, so truncating the estimate is the same as flooring it.
Rows of a batched array carry their own modulus through ``mod_idx``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _mulmod(a, b, q, qinv):
    quot = np.int64(np.float64(a) * np.float64(b) * qinv)
    r = a * b - quot * q
    if r < 0:
        r += q
    elif r >= q:
        r -= q
    return r


@njit(cache=True)
def ntt_forward(a, mod_idx, moduli, psi_rev, psi_rev_f):
    """In-place negacyclic NTT (Cooley-Tukey, bit-reversed output)."""
    rows, n = a.shape
    for b in range(rows):
        r = mod_idx[b]
        q = moduli[r]
        m = 1
        t = n
        while m < n:
            t >>= 1
            for i in range(m):
                w = psi_rev[r, m + i]
                wf = psi_rev_f[r, m + i]
                j1 = 2 * i * t
                for j in range(j1, j1 + t):
                    u = a[b, j]
                    x = a[b, j + t]
                    quot = np.int64(np.float64(x) * wf)
                    v = x * w - quot * q
                    if v < 0:
                        v += q
                    elif v >= q:
                        v -= q
                    s = u + v
                    if s >= q:
                        s -= q
                    d = u - v
                    if d < 0:
                        d += q
                    a[b, j] = s
                    a[b, j + t] = d
            m <<= 1


@njit(cache=True)
def ntt_inverse(a, mod_idx, moduli, psi_inv_rev, psi_inv_rev_f, n_inv, n_inv_f):
    """In-place inverse of :func:`ntt_forward` (Gentleman-Sande), including 1/N."""
    rows, n = a.shape
    for b in range(rows):
        r = mod_idx[b]
        q = moduli[r]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            j1 = 0
            for i in range(h):
                w = psi_inv_rev[r, h + i]
                wf = psi_inv_rev_f[r, h + i]
                for j in range(j1, j1 + t):
                    u = a[b, j]
                    v = a[b, j + t]
                    s = u + v
                    if s >= q:
                        s -= q
                    d = u - v
                    if d < 0:
                        d += q
                    quot = np.int64(np.float64(d) * wf)
                    d = d * w - quot * q
                    if d < 0:
                        d += q
                    elif d >= q:
                        d -= q
                    a[b, j] = s
                    a[b, j + t] = d
                j1 += 2 * t
            t <<= 1
            m = h
        ni = n_inv[r]
        nif = n_inv_f[r]
        for j in range(n):
            x = a[b, j]
            quot = np.int64(np.float64(x) * nif)
            v = x * ni - quot * q
            if v < 0:
                v += q
            elif v >= q:
                v -= q
            a[b, j] = v


@njit(cache=True)
def mul_rows(a, b, mod_idx, moduli, moduli_inv):
    """Pointwise ``a * b mod q_row``."""
    rows, n = a.shape
    out = np.empty_like(a)
    for i in range(rows):
        q = moduli[mod_idx[i]]
        qinv = moduli_inv[mod_idx[i]]
        for j in range(n):
            out[i, j] = _mulmod(a[i, j], b[i, j], q, qinv)
    return out


@njit(cache=True)
def mul_scalar_rows(a, scalars, mod_idx, moduli, moduli_inv):
    """``a[i] * scalars[i] mod q_row`` with one reduced scalar per row."""
    rows, n = a.shape
    out = np.empty_like(a)
    for i in range(rows):
        q = moduli[mod_idx[i]]
        qinv = moduli_inv[mod_idx[i]]
        s = scalars[i]
        for j in range(n):
            out[i, j] = _mulmod(a[i, j], s, q, qinv)
    return out


@njit(cache=True)
def dot_digits(digits, keys, mod_idx, moduli, moduli_inv):
    """``sum_j digits[j] * keys[j] mod q_row`` over the gadget digits.

    ``digits`` has shape (dnum, rows, N); ``keys`` has shape (dnum, rows, N).
    """
    dnum, rows, n = digits.shape
    out = np.zeros((rows, n), dtype=np.int64)
    for i in range(rows):
        q = moduli[mod_idx[i]]
        qinv = moduli_inv[mod_idx[i]]
        for d in range(dnum):
            for j in range(n):
                s = out[i, j] + _mulmod(digits[d, i, j], keys[d, i, j], q, qinv)
                if s >= q:
                    s -= q
                out[i, j] = s
    return out

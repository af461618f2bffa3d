"""Canonical-embedding encoder for real slot vectors.

Slot ``j`` is the evaluation of the plaintext polynomial at the root
``zeta**(2j+1)`` with ``zeta = exp(i*pi/N)``; its conjugate partner sits at
``zeta**(2(N-1-j)+1)``.  No slot rotations are needed, so this ordering
(rather than the usual powers-of-five one) keeps both directions a single
length-N FFT.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import SlotOverflowError

# int64 coefficients must stay clear of overflow after scaling
_MAX_COEFF = float(2**62)


@lru_cache(maxsize=8)
def _twist(n: int) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) / n)


def embed_inverse(values, n: int) -> np.ndarray:
    """Real slot vector (length <= N/2) -> real polynomial coefficients."""
    values = np.asarray(values, dtype=np.float64).ravel()
    slots = n // 2
    if values.size > slots:
        raise SlotOverflowError(f"{values.size} values exceed {slots} slots")
    evals = np.zeros(n, dtype=np.complex128)
    evals[: values.size] = values
    evals[n - 1 - np.arange(values.size)] = values
    coeffs = np.fft.fft(evals) / n * np.conj(_twist(n))
    return coeffs.real


def embed(coeffs: np.ndarray) -> np.ndarray:
    """Real polynomial coefficients -> the N/2 real slot values."""
    n = coeffs.size
    evals = np.fft.ifft(coeffs * _twist(n)) * n
    return evals[: n // 2].real


def scale_round(values, n: int, scale: float) -> np.ndarray:
    """Encode to signed integer coefficients at ``scale``."""
    coeffs = np.rint(embed_inverse(values, n) * scale)
    if np.max(np.abs(coeffs), initial=0.0) >= _MAX_COEFF:
        raise SlotOverflowError("encoded coefficients exceed 2**62; reduce value or scale")
    return coeffs.astype(np.int64)

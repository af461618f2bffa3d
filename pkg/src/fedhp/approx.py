"""Polynomial stand-ins for division and comparison on encrypted slots.

Division is Goldschmidt's iteration started from the minimax linear seed for
``1/d`` on the public divisor range.  Comparison composes the odd polynomials
``g`` then ``f`` of the composite sign approximation of Cheon et al.

Each function has a plaintext shadow (``*_plain``) computing exactly the same
arithmetic on floats; tests and the plaintext protocol reference use it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .ckks.evaluator import Evaluator, poly_depth
from .ckks.scheme import Ciphertext, is_trivial_zero, zero_ciphertext
from .errors import InputError, LevelExhaustedError

Refresh = Callable[[Ciphertext], Ciphertext]

# Odd polynomial families, coefficients in increasing degree.  The f_n push
# values already near +-1 towards +-1; the g_n are steeper near zero and
# widen the gap quickly.  Key: polynomial degree.
F_POLYS: dict[int, tuple[float, ...]] = {
    3: (0.0, 3 / 2, 0.0, -1 / 2),
    5: (0.0, 15 / 8, 0.0, -10 / 8, 0.0, 3 / 8),
    7: (0.0, 35 / 16, 0.0, -35 / 16, 0.0, 21 / 16, 0.0, -5 / 16),
}
G_POLYS: dict[int, tuple[float, ...]] = {
    3: (0.0, 2126 / 1024, 0.0, -1359 / 1024),
    5: (0.0, 3334 / 1024, 0.0, -6108 / 1024, 0.0, 3796 / 1024),
    7: (0.0, 4589 / 1024, 0.0, -16577 / 1024, 0.0, 25614 / 1024, 0.0, -12860 / 1024),
}


@dataclass(frozen=True)
class DivideConfig:
    iterations: int = 6
    input_range: tuple[float, float] = (1.0, 50.0)

    def __post_init__(self):
        lo, hi = self.input_range
        if self.iterations < 1:
            raise InputError("divide iterations must be >= 1")
        if not (0 < lo <= hi):
            raise InputError(f"divisor range must satisfy 0 < a_min <= a_max, got {self.input_range}")

    @property
    def seed(self) -> tuple[float, float]:
        """``(c1, c2)`` with ``y0 = c1 - c2*d`` minimizing ``max |1 - d*y0|``."""
        lo, hi = self.input_range
        mid, half = (lo + hi) / 2, (hi - lo) / 2
        ratio = (half / mid) ** 2
        eps = ratio / (2 - ratio)
        k = (1 + eps) / mid**2
        return 2 * k * mid, k

    @property
    def seed_error(self) -> float:
        """Worst-case ``|1 - d*y0|`` over the range."""
        lo, hi = self.input_range
        ratio = ((hi - lo) / (hi + lo)) ** 2
        return ratio / (2 - ratio)

    @property
    def error_bound(self) -> float:
        """Relative error of the quotient after all iterations."""
        return self.seed_error ** (2**self.iterations)

    @property
    def depth(self) -> int:
        return 2 + self.iterations

    @classmethod
    def for_range(cls, lo: float, hi: float, rel_tol: float = 1e-5, min_iterations: int = 1) -> "DivideConfig":
        """Fewest iterations (at least ``min_iterations``) meeting ``rel_tol``."""
        cfg = cls(min_iterations, (lo, hi))
        r = cfg.seed_error
        if r == 0:
            return cfg
        need = math.ceil(math.log2(math.log(rel_tol) / math.log(r))) if r < 1 else min_iterations
        return cls(max(min_iterations, need), (lo, hi))


@dataclass(frozen=True)
class CompareConfig:
    df: int = 3
    dg: int = 3
    f_degree: int = 3
    g_degree: int = 5

    def __post_init__(self):
        if self.df < 1 or self.dg < 1:
            raise InputError("df and dg must be >= 1")
        if self.f_degree not in F_POLYS or self.g_degree not in G_POLYS:
            raise InputError(f"supported degrees: f {sorted(F_POLYS)}, g {sorted(G_POLYS)}")

    @property
    def f(self) -> tuple[float, ...]:
        return F_POLYS[self.f_degree]

    @property
    def g(self) -> tuple[float, ...]:
        return G_POLYS[self.g_degree]

    @property
    def steps(self) -> list[tuple[float, ...]]:
        return [self.g] * self.dg + [self.f] * self.df

    @property
    def depth(self) -> int:
        return sum(poly_depth(p) for p in self.steps)


# -- plaintext shadows --------------------------------------------------------


def divide_plain(num, den, cfg: DivideConfig) -> np.ndarray:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    c1, c2 = cfg.seed
    y0 = c1 - c2 * den
    r = 1.0 - den * y0
    x = num * y0
    for i in range(cfg.iterations):
        x = x * (1.0 + r)
        r = r * r
    return x


def compare_plain(a, b, cfg: CompareConfig) -> np.ndarray:
    x = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    for p in cfg.steps:
        x = _horner(p, x)
    return x


def _horner(coeffs, x):
    out = np.zeros_like(x)
    for c in reversed(coeffs):
        out = out * x + c
    return out


# -- encrypted ----------------------------------------------------------------


def _ensure(ev: Evaluator, ct: Ciphertext, depth: int, refresh: Optional[Refresh],
            reserve: int) -> Ciphertext:
    """Refresh ``ct`` if fewer than ``depth`` levels (plus reserve) remain."""
    floor = reserve if refresh is not None else 0
    if ct.level - depth >= floor:
        return ct
    if is_trivial_zero(ct):
        # a structural zero needs no refresh; rebuild it at the top level
        top = ev.ctx.max_level
        return zero_ciphertext(ev.ctx, top, ev.scale_at(top))
    if refresh is None:
        raise LevelExhaustedError(f"need {depth} levels, ciphertext has {ct.level}")
    out = refresh(ct)
    if out.level - depth < 0:
        raise LevelExhaustedError(f"a single step needs {depth} levels, more than the parameter set has")
    return out


def divide(ev: Evaluator, num: Ciphertext, den: Ciphertext, cfg: DivideConfig,
           refresh: Optional[Refresh] = None, reserve: int = 1) -> Ciphertext:
    """Slot-wise ``num / den`` for ``den`` inside ``cfg.input_range``.

    ``refresh`` (typically a distributed bootstrap) is called whenever the
    next step would leave fewer than ``reserve`` levels; without it running
    out of levels raises :class:`LevelExhaustedError`.
    """
    c1, c2 = cfg.seed
    floor = reserve if refresh is not None else 0
    num, den = ev.align(num, den)
    if num.level - 2 < floor:
        num, den = _ensure(ev, num, 2, refresh, reserve), _ensure(ev, den, 2, refresh, reserve)
    y0 = ev.add_plain(ev.mul_plain(den, -c2), c1)
    d, n = ev.align(den, y0)[0], ev.align(num, y0)[0]
    r = ev.add_plain(ev.neg(ev.mul(d, y0)), 1.0)
    x = ev.mul(n, y0)
    for i in range(cfg.iterations):
        if x.level - 1 < floor:
            x, r = _ensure(ev, x, 1, refresh, reserve), _ensure(ev, r, 1, refresh, reserve)
        x_next = ev.mul(x, ev.add_plain(r, 1.0))
        if i < cfg.iterations - 1:
            r = ev.square(r)
        x = x_next
    return x


def compare(ev: Evaluator, a: Ciphertext, b, cfg: CompareConfig,
            refresh: Optional[Refresh] = None, reserve: int = 1) -> Ciphertext:
    """Approximate ``sign(a - b)`` for slots in [0, 1]; ``b`` is a ciphertext or public value."""
    if isinstance(b, Ciphertext):
        a, b = ev.align(a, b)
        x = ev.sub(a, b)
    else:
        x = ev.sub_plain(a, b)
    return sign(ev, x, cfg, refresh, reserve)


def sign(ev: Evaluator, x: Ciphertext, cfg: CompareConfig,
         refresh: Optional[Refresh] = None, reserve: int = 1) -> Ciphertext:
    """Composite odd-polynomial sign approximation for slots in [-1, 1]."""
    for p in cfg.steps:
        x = _ensure(ev, x, poly_depth(p), refresh, reserve)
        x = ev.poly_eval(x, p)
    return x

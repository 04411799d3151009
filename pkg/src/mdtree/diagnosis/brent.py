"""Bounded Brent minimisation (golden section + parabolic interpolation).

Same iteration as the classic Forsythe-Malcolm-Moler ``fmin``, except that the
first interior point can be supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

_GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
_SQRT_EPS = math.sqrt(2.2e-16)


@dataclass
class BrentResult:
    x: float
    fun: float
    nfev: int
    evaluations: list = field(default_factory=list)  # (x, f(x)) in call order


def bounded_brent(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    x0: Optional[float] = None,
    xatol: float = 1e-5,
    maxiter: int = 500,
) -> BrentResult:
    if not lower < upper:
        raise ValueError(f"invalid bounds [{lower}, {upper}]")
    a, b = float(lower), float(upper)
    if x0 is not None and a < x0 < b:
        x = float(x0)
    else:
        x = a + _GOLDEN * (b - a)
    fx = func(x)
    evals = [(x, fx)]
    v = w = x
    fv = fw = fx
    d = e = 0.0
    for _ in range(maxiter):
        xm = 0.5 * (a + b)
        tol1 = _SQRT_EPS * abs(x) + xatol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        take_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            r, e = e, d
            if abs(p) < abs(0.5 * q * r) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = math.copysign(tol1, xm - x)
                take_golden = False
        if take_golden:
            e = (b - x) if x < xm else (a - x)
            d = _GOLDEN * e
        u = x + (d if abs(d) >= tol1 else math.copysign(tol1, d if d != 0 else 1.0))
        fu = func(u)
        evals.append((u, fu))
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return BrentResult(x, fx, len(evals), evals)

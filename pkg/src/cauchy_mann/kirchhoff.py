"""Diffusion coefficients q(t) and the Kirchhoff map Q(t) = int_0^t q(s) ds.

With ``U = Q(u)`` the quasilinear operator ``-div(q(u) grad u)`` becomes
``-Laplace(U)`` and conormal fluxes are preserved, ``U_nu = q(u) u_nu``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .fem import GridFunction


@dataclass(frozen=True)
class Coefficient:
    """Scalar diffusion coefficient with declared bounds ``q_min <= q <= q_max``."""

    q: Callable
    q_prime: Callable
    q_min: float
    q_max: float
    name: str = "custom"
    Q_closed: Optional[Callable] = None
    Q_inv_closed: Optional[Callable] = None

    def __post_init__(self):
        if not (0 < self.q_min <= self.q_max):
            raise ValueError(f"need 0 < q_min <= q_max, got {self.q_min}, {self.q_max}")

    def __call__(self, t):
        return self.q(t)


def constant_coefficient(c: float = 1.0) -> Coefficient:
    c = float(c)
    return Coefficient(
        q=lambda t: np.full_like(np.asarray(t, dtype=float), c),
        q_prime=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        q_min=c,
        q_max=c,
        name=f"const({c:g})",
        Q_closed=lambda t: c * np.asarray(t, dtype=float),
        Q_inv_closed=lambda y: np.asarray(y, dtype=float) / c,
    )


def _cubic_inverse(y):
    # real root of t^3 + 3t - 3y = 0; for A = cbrt(3y/2 + sqrt(9y^2/4 + 1)) the root is A - 1/A
    y = np.asarray(y, dtype=float)
    s = np.sign(y)
    a = np.abs(y)
    A = np.cbrt(1.5 * a + np.sqrt(2.25 * a * a + 1.0))
    t = A - 1.0 / A
    # one Newton polish against round-off in the difference above
    t = t - (t + t**3 / 3.0 - a) / (1.0 + t * t)
    return s * t


def quadratic_coefficient(solution_bound: float = 10.0) -> Coefficient:
    """``q(t) = 1 + t^2``.

    Unbounded above, so ``q_max`` is declared over ``|t| <= solution_bound``.
    """
    return Coefficient(
        q=lambda t: 1.0 + np.asarray(t, dtype=float) ** 2,
        q_prime=lambda t: 2.0 * np.asarray(t, dtype=float),
        q_min=1.0,
        q_max=1.0 + solution_bound**2,
        name="1+t^2",
        Q_closed=lambda t: np.asarray(t, dtype=float) + np.asarray(t, dtype=float) ** 3 / 3.0,
        Q_inv_closed=_cubic_inverse,
    )


def sine_coefficient() -> Coefficient:
    """``q(t) = 2 + sin t`` with ``Q(t) = 2t + 1 - cos t``; inverse by Newton."""
    return Coefficient(
        q=lambda t: 2.0 + np.sin(t),
        q_prime=lambda t: np.cos(t),
        q_min=1.0,
        q_max=3.0,
        name="2+sin(t)",
        Q_closed=lambda t: 2.0 * np.asarray(t, dtype=float) + 1.0 - np.cos(t),
    )


class KirchhoffMap:
    """Q and its inverse for a given coefficient.

    Closed forms registered on the coefficient are used when present;
    otherwise Q is integrated numerically and inverted by safeguarded Newton.
    """

    def __init__(self, coefficient: Coefficient, quad_tol: float = 1e-13):
        self.coefficient = coefficient
        self.quad_tol = quad_tol

    def Q(self, t):
        c = self.coefficient
        if c.Q_closed is not None:
            return c.Q_closed(t)
        t = np.asarray(t, dtype=float)

        def one(s):
            val, _ = integrate.quad(lambda r: float(c.q(r)), 0.0, s,
                                    epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
            return val

        out = np.vectorize(one, otypes=[float])(t)
        return out if out.ndim else float(out)

    def Q_inv(self, y, tol: float = 1e-12, max_iter: int = 100):
        c = self.coefficient
        if c.Q_inv_closed is not None:
            return c.Q_inv_closed(y)
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        # Q is bi-Lipschitz: the root lies between y/q_max and y/q_min
        lo = np.minimum(y / c.q_max, y / c.q_min)
        hi = np.maximum(y / c.q_max, y / c.q_min)
        t = y / c.q_min if c.q_min == c.q_max else 0.5 * (lo + hi)
        thresh = tol * np.maximum(1.0, np.abs(y))
        for _ in range(max_iter):
            F = np.asarray(self.Q(t)) - y
            done = np.abs(F) <= thresh
            if done.all():
                break
            lo = np.where(F < 0, np.maximum(lo, t), lo)
            hi = np.where(F > 0, np.minimum(hi, t), hi)
            step = t - F / c.q(t)
            outside = (step <= lo) | (step >= hi)
            t = np.where(done, t, np.where(outside, 0.5 * (lo + hi), step))
        return float(t[0]) if scalar else t

    def transform_field(self, u: GridFunction) -> GridFunction:
        return GridFunction(u.mesh, np.asarray(self.Q(u.values), dtype=float))

    def inverse_field(self, U: GridFunction) -> GridFunction:
        return GridFunction(U.mesh, np.asarray(self.Q_inv(U.values), dtype=float))

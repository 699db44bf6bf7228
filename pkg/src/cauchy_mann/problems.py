"""Manufactured Cauchy problems on ``(0, 1) x (0, 1/2)`` and noise injection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .fem import NewtonParams, TraceFunction, l2_norm_segment
from .kirchhoff import Coefficient, quadratic_coefficient, sine_coefficient
from .mesh import Mesh, SegmentId, build_rect_mesh
from .operators import ProblemSpec

G1, G2, G3, G4 = SegmentId.GAMMA1, SegmentId.GAMMA2, SegmentId.GAMMA3, SegmentId.GAMMA4

WIDTH, HEIGHT = 1.0, 0.5


@dataclass(frozen=True)
class ManufacturedProblem:
    """Closed-form solution ``u_exact`` and all data derived from it.

    ``g`` and ``g2`` are outward conormal fluxes on Gamma1 and Gamma2;
    ``phi_d`` is the Dirichlet trace on Gamma2 to be reconstructed.
    ``initial_value`` is the constant first guess, pinned at the ends.
    """

    name: str
    coefficient: Coefficient
    u_exact: Callable
    grad_exact: Callable
    h: Callable
    f: Callable
    g: Callable
    phi_d: Callable
    g2: Callable
    initial_value: float

    def pins(self):
        return float(self.u_exact(0.0, HEIGHT)), float(self.u_exact(WIDTH, HEIGHT))

    def initial_guess(self, mesh: Mesh, value: Optional[float] = None) -> TraceFunction:
        t = TraceFunction.zeros(mesh, G2)
        t.values[:] = self.initial_value if value is None else value
        t.values[0], t.values[-1] = self.pins()
        return t

    def truth_dirichlet(self, mesh: Mesh) -> TraceFunction:
        return TraceFunction.interpolate(mesh, G2, self.phi_d)

    def truth_neumann(self, mesh: Mesh) -> TraceFunction:
        return TraceFunction.interpolate(mesh, G2, self.g2)

    def pde_residual(self, x, y, step: float = 3e-4):
        """``-div(q(u) grad u) - h`` at points, flux divergence by fourth-order central differences."""
        q = self.coefficient.q

        def flux(px, py):
            gx, gy = self.grad_exact(px, py)
            qu = q(self.u_exact(px, py))
            return qu * gx, qu * gy

        def d4(f):
            return (-f(2) + 8 * f(1) - 8 * f(-1) + f(-2)) / (12 * step)

        div = d4(lambda k: flux(x + k * step, y)[0]) + d4(lambda k: flux(x, y + k * step)[1])
        return -div - self.h(x, y)

    def spec(self, mesh: Mesh, f: Optional[TraceFunction] = None,
             g: Optional[TraceFunction] = None,
             newton: Optional[NewtonParams] = None) -> ProblemSpec:
        return ProblemSpec(
            mesh=mesh,
            coefficient=self.coefficient,
            h=self.h,
            cauchy_f=f if f is not None else TraceFunction.interpolate(mesh, G1, self.f),
            cauchy_g=g if g is not None else TraceFunction.interpolate(mesh, G1, self.g),
            extra_bc={
                G3: TraceFunction.interpolate(mesh, G3, self.u_exact),
                G4: TraceFunction.interpolate(mesh, G4, self.u_exact),
            },
            newton=newton or NewtonParams(),
        )


def rect_mesh(nx: int, ny: Optional[int] = None) -> Mesh:
    """Mesh of the experiment domain; default ``ny`` keeps square cells."""
    if ny is None:
        ny = (nx - 1) // 2 + 1
    return build_rect_mesh(WIDTH, HEIGHT, nx, ny)


def problem_harmonic() -> ManufacturedProblem:
    """``q = 1 + t^2`` with the harmonic ``u = x^2 - y^2 + 5x + 2y - 3xy``."""

    def u(x, y):
        return x**2 - y**2 + 5 * x + 2 * y - 3 * x * y

    def grad(x, y):
        return 2 * x + 5 - 3 * y, -2 * y + 2 - 3 * x

    def h(x, y):
        gx, gy = grad(x, y)
        return -2 * u(x, y) * (gx**2 + gy**2)

    def f(x, y=0.0):
        return x**2 + 5 * x

    def g(x, y=0.0):
        return (1 + (x**2 + 5 * x) ** 2) * (3 * x - 2)

    def phi_d(x, y=HEIGHT):
        return x**2 + 3.5 * x + 0.75

    def g2(x, y=HEIGHT):
        return (1 + phi_d(x) ** 2) * (1 - 3 * x)

    return ManufacturedProblem("harmonic", quadratic_coefficient(), u, grad, h, f, g,
                               phi_d, g2, initial_value=0.0)


def problem_nonharmonic() -> ManufacturedProblem:
    """``q = 2 + sin t`` with ``u = cos(pi x) exp(y)``."""
    pi = np.pi

    def u(x, y):
        return np.cos(pi * x) * np.exp(y)

    def grad(x, y):
        return -pi * np.sin(pi * x) * np.exp(y), np.cos(pi * x) * np.exp(y)

    def h(x, y):
        uu = u(x, y)
        gx, gy = grad(x, y)
        return (2 + np.sin(uu)) * (pi**2 - 1) * uu - np.cos(uu) * (gx**2 + gy**2)

    def f(x, y=0.0):
        return np.cos(pi * x)

    def g(x, y=0.0):
        return -(2 + np.sin(np.cos(pi * x))) * np.cos(pi * x)

    def phi_d(x, y=HEIGHT):
        return np.cos(pi * x) * np.exp(HEIGHT)

    def g2(x, y=HEIGHT):
        val = phi_d(x)
        return (2 + np.sin(val)) * val

    return ManufacturedProblem("nonharmonic", sine_coefficient(), u, grad, h, f, g,
                               phi_d, g2, initial_value=4.0)


@dataclass(frozen=True)
class NoiseModel:
    level: float
    seed: int = 0
    target: str = "both"

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be non-negative")
        if self.target not in ("f", "g", "both"):
            raise ValueError("noise target must be 'f', 'g' or 'both'")


def add_noise(t: TraceFunction, model: NoiseModel, rng: Optional[np.random.Generator] = None) -> TraceFunction:
    """Add seeded uniform noise rescaled to ``level * ||t||`` in L2, zero at both ends."""
    if model.level == 0:
        return t.copy()
    rng = rng if rng is not None else np.random.default_rng(model.seed)
    e = TraceFunction(t.mesh, t.segment, rng.uniform(-1.0, 1.0, size=t.values.shape))
    e.values[0] = e.values[-1] = 0.0
    ne = l2_norm_segment(e)
    return t + e * (model.level * l2_norm_segment(t) / ne)


def noisy_cauchy_data(problem: ManufacturedProblem, mesh: Mesh, model: NoiseModel):
    """Perturbed ``(f, g)`` on Gamma1; ``f`` and ``g`` draw from one seeded stream, in that order."""
    f = TraceFunction.interpolate(mesh, G1, problem.f)
    g = TraceFunction.interpolate(mesh, G1, problem.g)
    if model.level == 0:
        return f, g
    rng = np.random.default_rng(model.seed)
    f_noise = add_noise(f, model, rng)
    g_noise = add_noise(g, model, rng)
    return (f_noise if model.target in ("f", "both") else f,
            g_noise if model.target in ("g", "both") else g)

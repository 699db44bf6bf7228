"""Fixed-point operators whose fixed point is the missing boundary trace.

Nonlinear route (no transformation):

* ``Ln``: Neumann trace on Gamma2 -> Dirichlet trace on Gamma2, solving the
  quasilinear problem with ``u = f`` on Gamma1 and flux ``phi`` on Gamma2;
* ``Ld``: Dirichlet trace on Gamma2 -> Neumann trace on Gamma2, solving with
  flux ``g`` on Gamma1 and ``u = psi`` on Gamma2;
* ``T = Ld o Ln`` acts on fluxes, ``S = Ln o Ld`` on Dirichlet traces, and
  the normalised ``Tbar``/``Sbar`` never increase the L2(Gamma2) norm.

Linear route: the same compositions for ``-Laplace U = h`` with Dirichlet
data pushed through the Kirchhoff map; these are affine in the trace.

Any extra Dirichlet data on Gamma3/Gamma4 is imposed in every solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fem import (
    BoundarySpec,
    Dirichlet,
    GridFunction,
    NewtonParams,
    Neumann,
    TraceFunction,
    dirichlet_trace,
    l2_norm_segment,
    neumann_trace,
    solve_linear_mixed,
    solve_nonlinear_mixed,
)
from .kirchhoff import Coefficient, KirchhoffMap
from .mesh import Mesh, SegmentId

G1, G2, G3, G4 = SegmentId.GAMMA1, SegmentId.GAMMA2, SegmentId.GAMMA3, SegmentId.GAMMA4


@dataclass
class ProblemSpec:
    """Cauchy data ``(f, g)`` on Gamma1, source ``h`` and optional side data.

    ``cauchy_g`` is the outward conormal flux ``q(u) u_nu`` on Gamma1.
    ``extra_bc`` maps Gamma3/Gamma4 to Dirichlet traces.
    """

    mesh: Mesh
    coefficient: Coefficient
    h: Optional[Callable]
    cauchy_f: TraceFunction
    cauchy_g: TraceFunction
    extra_bc: dict = field(default_factory=dict)
    newton: NewtonParams = field(default_factory=NewtonParams)

    def __post_init__(self):
        for name, t in (("cauchy_f", self.cauchy_f), ("cauchy_g", self.cauchy_g)):
            if t.segment != G1:
                raise ValueError(f"{name} must live on GAMMA1, got {t.segment.name}")
        for seg, t in self.extra_bc.items():
            if seg not in (G3, G4) or t.segment != seg:
                raise ValueError("extra boundary data must be traces on GAMMA3/GAMMA4")

    @property
    def kirchhoff(self) -> KirchhoffMap:
        return KirchhoffMap(self.coefficient)

    def _sides(self, transform=None) -> dict:
        out = {}
        for seg in (G3, G4):
            if seg in self.extra_bc:
                t = self.extra_bc[seg]
                vals = t.values if transform is None else transform(t.values)
                out[seg] = Dirichlet(TraceFunction(self.mesh, seg, vals))
            else:
                out[seg] = Neumann(0.0)
        return out

    def pin(self, psi: TraceFunction) -> TraceFunction:
        """Overwrite the end values of a Gamma2 trace with the side data at the top corners."""
        out = psi.copy()
        if G3 in self.extra_bc:
            out.values[0] = self.extra_bc[G3].values[-1]
        if G4 in self.extra_bc:
            out.values[-1] = self.extra_bc[G4].values[-1]
        return out

    def zero_trace(self) -> TraceFunction:
        return TraceFunction.zeros(self.mesh, G2)


def _normalized(y: TraceFunction, ref_norm: float) -> TraceFunction:
    ny = l2_norm_segment(y)
    if ny <= ref_norm:
        return y
    if ref_norm == 0.0:
        return y * 0.0
    return y * (ref_norm / ny)


class NonlinearOperators:
    """Quasilinear route.  Keeps the last solution of each subproblem as a Newton warm start."""

    def __init__(self, spec: ProblemSpec, warm_start: bool = True):
        self.spec = spec
        self.warm_start = warm_start
        self._w: Optional[GridFunction] = None
        self._v: Optional[GridFunction] = None

    def solve_n(self, phi: TraceFunction) -> GridFunction:
        s = self.spec
        bc = BoundarySpec({G1: Dirichlet(s.cauchy_f), G2: Neumann(phi), **s._sides()})
        w = solve_nonlinear_mixed(s.mesh, s.coefficient, bc, s.h, s.newton,
                                  initial=self._w if self.warm_start else None)
        self._w = w
        return w

    def solve_d(self, psi: TraceFunction) -> GridFunction:
        s = self.spec
        bc = BoundarySpec({G1: Neumann(s.cauchy_g), G2: Dirichlet(psi), **s._sides()})
        v = solve_nonlinear_mixed(s.mesh, s.coefficient, bc, s.h, s.newton,
                                  initial=self._v if self.warm_start else None)
        self._v = v
        return v

    def Ln(self, phi: TraceFunction) -> TraceFunction:
        return dirichlet_trace(self.solve_n(phi), G2)

    def Ld(self, psi: TraceFunction) -> TraceFunction:
        s = self.spec
        v = self.solve_d(psi)
        bc = BoundarySpec({G1: Neumann(s.cauchy_g), G2: Dirichlet(psi), **s._sides()})
        return neumann_trace(s.mesh, v, s.coefficient, s.h, bc, G2)

    def T(self, phi: TraceFunction) -> TraceFunction:
        return self.Ld(self.Ln(phi))

    def S(self, psi: TraceFunction) -> TraceFunction:
        return self.Ln(self.Ld(self.spec.pin(psi)))

    def Tbar(self, phi: TraceFunction) -> TraceFunction:
        return _normalized(self.T(phi), l2_norm_segment(phi))

    def Sbar(self, psi: TraceFunction) -> TraceFunction:
        return _normalized(self.S(psi), l2_norm_segment(psi))


class LinearOperators:
    """Kirchhoff-transformed route; traces here are in the transformed variable ``U = Q(u)``.

    ``z`` is an optional additive perturbation of the flux output, used to
    emulate noisy data ``z_eps`` directly.  With ``warm_start`` the CG
    solves start from the previous solution, so repeated evaluations agree
    only to solver tolerance; cold starts make evaluations reproducible.
    """

    def __init__(self, spec: ProblemSpec, z: Optional[TraceFunction] = None,
                 warm_start: bool = True):
        self.spec = spec
        self.kmap = spec.kirchhoff
        self.z = z
        self.warm_start = warm_start
        self._Qf = TraceFunction(spec.mesh, G1, self.kmap.Q(spec.cauchy_f.values))
        self._sides = spec._sides(transform=self.kmap.Q)
        self._w: Optional[GridFunction] = None
        self._v: Optional[GridFunction] = None

    def solve_n(self, phi: TraceFunction) -> GridFunction:
        s = self.spec
        bc = BoundarySpec({G1: Dirichlet(self._Qf), G2: Neumann(phi), **self._sides})
        self._w = solve_linear_mixed(s.mesh, bc, s.h, initial=self._w if self.warm_start else None)
        return self._w

    def Ln(self, phi: TraceFunction) -> TraceFunction:
        return dirichlet_trace(self.solve_n(phi), G2)

    def Ld(self, Psi: TraceFunction) -> TraceFunction:
        s = self.spec
        bc = BoundarySpec({G1: Neumann(s.cauchy_g), G2: Dirichlet(Psi), **self._sides})
        self._v = solve_linear_mixed(s.mesh, bc, s.h, initial=self._v if self.warm_start else None)
        return neumann_trace(s.mesh, self._v, None, s.h, bc, G2)

    def T(self, phi: TraceFunction) -> TraceFunction:
        out = self.Ld(self.Ln(phi))
        return out if self.z is None else out + self.z

    def S(self, Psi: TraceFunction) -> TraceFunction:
        return self.Ln(self.Ld(Psi))

    def dirichlet_from_flux(self, phi: TraceFunction) -> TraceFunction:
        """Untransformed Dirichlet trace ``Q^-1(Ln(phi))`` on Gamma2."""
        W = self.Ln(phi)
        return TraceFunction(W.mesh, G2, self.kmap.Q_inv(W.values))


@dataclass
class AffineSplit:
    """``T(phi) = apply_linear(phi) + offset`` for the affine operator of the linear route."""

    apply_linear: Callable
    offset: TraceFunction

    def residual(self, z_eps: TraceFunction, phi: TraceFunction) -> float:
        """``|| z_eps - (I - T_l) phi ||``."""
        return l2_norm_segment(z_eps - phi + self.apply_linear(phi))


def affine_split(spec: ProblemSpec) -> AffineSplit:
    # cold solves keep apply_linear(0) exactly zero
    ops = LinearOperators(spec, warm_start=False)
    offset = ops.T(spec.zero_trace())

    def apply_linear(phi: TraceFunction) -> TraceFunction:
        return ops.T(phi) - offset

    return AffineSplit(apply_linear, offset)


# one-shot functional forms (cold Newton starts)

def op_Ln(spec: ProblemSpec, phi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec, warm_start=False).Ln(phi)


def op_Ld(spec: ProblemSpec, psi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec, warm_start=False).Ld(psi)


def op_T(spec: ProblemSpec, phi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec).T(phi)


def op_S(spec: ProblemSpec, psi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec).S(psi)


def op_Tbar(spec: ProblemSpec, phi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec).Tbar(phi)


def op_Sbar(spec: ProblemSpec, psi: TraceFunction) -> TraceFunction:
    return NonlinearOperators(spec).Sbar(psi)


def lin_Ln(spec: ProblemSpec, phi: TraceFunction) -> TraceFunction:
    return LinearOperators(spec).Ln(phi)


def lin_Ld(spec: ProblemSpec, Psi: TraceFunction) -> TraceFunction:
    return LinearOperators(spec).Ld(Psi)


def lin_T(spec: ProblemSpec, phi: TraceFunction) -> TraceFunction:
    return LinearOperators(spec).T(phi)

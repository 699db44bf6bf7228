"""P1 finite elements for linear and quasilinear mixed boundary value problems.

Solves ``-div(a grad u) = h`` on a :class:`~cauchy_mann.mesh.Mesh` with, on
each of the four boundary segments, either a Dirichlet value or a conormal
flux ``a u_nu``.  In the quasilinear case ``a = q(u)``; ``q(u)`` is
represented by its nodal interpolant, so on each triangle the mid-edge rule
reduces to the mean of the three nodal values.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, SegmentId


class SolverError(RuntimeError):
    """A linear or nonlinear solve did not reach its tolerance."""


class NewtonDivergence(SolverError):
    pass


class NonPositiveWeightError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GridFunction:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise ValueError(f"expected {self.mesh.n_nodes} nodal values, got {self.values.shape}")

    @classmethod
    def interpolate(cls, mesh: Mesh, func: Callable) -> "GridFunction":
        x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
        return cls(mesh, np.broadcast_to(func(x, y), x.shape).astype(float))


@dataclass(eq=False)
class TraceFunction:
    """Nodal P1 function on the node chain of one boundary segment."""

    mesh: Mesh
    segment: SegmentId
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        n = len(self.mesh.segment_nodes[self.segment])
        if self.values.shape != (n,):
            raise ValueError(f"{self.segment.name} trace needs {n} values, got {self.values.shape}")

    @classmethod
    def interpolate(cls, mesh: Mesh, seg: SegmentId, func: Callable) -> "TraceFunction":
        xy = mesh.nodes[mesh.segment_nodes[seg]]
        vals = np.broadcast_to(func(xy[:, 0], xy[:, 1]), xy[:, 0].shape)
        return cls(mesh, seg, vals)

    @classmethod
    def zeros(cls, mesh: Mesh, seg: SegmentId) -> "TraceFunction":
        return cls(mesh, seg, np.zeros(len(mesh.segment_nodes[seg])))

    @property
    def coordinate(self) -> np.ndarray:
        return self.mesh.segment_coordinate(self.segment)

    def copy(self) -> "TraceFunction":
        return TraceFunction(self.mesh, self.segment, self.values.copy())

    def _check(self, other: "TraceFunction"):
        if other.mesh is not self.mesh or other.segment != self.segment:
            raise ValueError("trace functions live on different segments or meshes")

    def __add__(self, other):
        self._check(other)
        return TraceFunction(self.mesh, self.segment, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return TraceFunction(self.mesh, self.segment, self.values - other.values)

    def __mul__(self, c):
        return TraceFunction(self.mesh, self.segment, float(c) * self.values)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return TraceFunction(self.mesh, self.segment, self.values / float(c))

    def __neg__(self):
        return TraceFunction(self.mesh, self.segment, -self.values)

    def norm(self) -> float:
        return l2_norm_segment(self)


# ---------------------------------------------------------------------------
# boundary conditions
# ---------------------------------------------------------------------------

BoundaryData = Union[TraceFunction, np.ndarray, Callable, Real]


@dataclass
class Dirichlet:
    data: BoundaryData


@dataclass
class Neumann:
    """Conormal flux ``a u_nu`` with outward normal."""

    data: BoundaryData


class BoundarySpec(dict):
    """Map ``SegmentId -> Dirichlet | Neumann`` covering all four segments."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        missing = [s.name for s in SegmentId if s not in self]
        if missing:
            raise ValueError(f"no boundary condition for {', '.join(missing)}")
        for seg, cond in self.items():
            if not isinstance(cond, (Dirichlet, Neumann)):
                raise TypeError(f"{seg.name}: expected Dirichlet or Neumann, got {type(cond).__name__}")

    def dirichlet_segments(self):
        return [s for s in SegmentId if isinstance(self[s], Dirichlet)]

    def neumann_segments(self):
        return [s for s in SegmentId if isinstance(self[s], Neumann)]


def _chain_values(mesh: Mesh, seg: SegmentId, data: BoundaryData) -> np.ndarray:
    chain = mesh.segment_nodes[seg]
    if isinstance(data, TraceFunction):
        if data.segment != seg or data.mesh is not mesh:
            raise ValueError(f"trace on {data.segment.name} given for {seg.name}")
        return data.values
    if callable(data):
        xy = mesh.nodes[chain]
        return np.broadcast_to(data(xy[:, 0], xy[:, 1]), (len(chain),)).astype(float)
    if np.ndim(data) == 0:
        return np.full(len(chain), float(data))
    arr = np.asarray(data, dtype=float)
    if arr.shape != (len(chain),):
        raise ValueError(f"{seg.name}: expected {len(chain)} values, got {arr.shape}")
    return arr


def dirichlet_nodes(mesh: Mesh, bc: BoundarySpec):
    """Mask and values of constrained nodes.

    Horizontal segments are written first so that at a corner shared by two
    Dirichlet segments the vertical one (Gamma3/Gamma4) wins.
    """
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    vals = np.zeros(mesh.n_nodes)
    order = [SegmentId.GAMMA1, SegmentId.GAMMA2, SegmentId.GAMMA3, SegmentId.GAMMA4]
    for seg in order:
        cond = bc[seg]
        if isinstance(cond, Dirichlet):
            chain = mesh.segment_nodes[seg]
            vals[chain] = _chain_values(mesh, seg, cond.data)
            mask[chain] = True
    return mask, vals


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))

# degree-5 seven-point rule (barycentric coordinates, weights sum to one)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_DUNAVANT5 = (
    np.array([[1 / 3, 1 / 3, 1 / 3],
              [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
              [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]]),
    np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
)


class _Assembly:
    """Per-mesh geometric data and the fixed CSR sparsity pattern."""

    def __init__(self, mesh: Mesh):
        if np.any(mesh.signed_areas <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        self.mesh = mesh
        tri = mesh.triangles
        n = mesh.n_nodes
        g = mesh.shape_gradients
        self.unit_stiffness = mesh.signed_areas[:, None, None] * np.einsum("mad,mbd->mab", g, g)
        rows = np.repeat(tri[:, :, None], 3, axis=2).ravel()
        cols = np.repeat(tri[:, None, :], 3, axis=1).ravel()
        keys, self.perm = np.unique(rows.astype(np.int64) * n + cols, return_inverse=True)
        self.indices = (keys % n).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(keys // n, minlength=n))]).astype(np.int32)
        self.nnz = len(keys)

    def csr(self, element_data: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.perm, weights=element_data.ravel(), minlength=self.nnz)
        n = self.mesh.n_nodes
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(n, n))

    def scatter(self, element_vectors: np.ndarray) -> np.ndarray:
        return np.bincount(self.mesh.triangles.ravel(), weights=element_vectors.ravel(),
                           minlength=self.mesh.n_nodes)


def _assembly(mesh: Mesh) -> _Assembly:
    cache = mesh.__dict__.get("_fem_assembly")
    if cache is None:
        cache = _Assembly(mesh)
        mesh.__dict__["_fem_assembly"] = cache
    return cache


def _triangle_weights(mesh: Mesh, weight: GridFunction) -> np.ndarray:
    w = np.asarray(weight.values if isinstance(weight, GridFunction) else weight, dtype=float)
    wt = w[mesh.triangles].mean(axis=1)
    if not np.all(np.isfinite(wt)) or np.any(wt <= 0):
        raise NonPositiveWeightError("diffusion weight must be finite and strictly positive")
    return wt


def assemble_weighted_stiffness(mesh: Mesh, weight) -> sp.csr_matrix:
    """Matrix of ``int a grad(phi_i) . grad(phi_j)`` with ``a`` the P1 interpolant of ``weight``."""
    asm = _assembly(mesh)
    wt = _triangle_weights(mesh, weight)
    return asm.csr(wt[:, None, None] * asm.unit_stiffness)


def _domain_load(mesh: Mesh, h) -> np.ndarray:
    if h is None:
        return np.zeros(mesh.n_nodes)
    tri = mesh.triangles
    area = mesh.signed_areas
    if np.ndim(h) == 0 and not callable(h):
        return _assembly(mesh).scatter(np.repeat((float(h) * area / 3.0)[:, None], 3, axis=1))
    p = mesh.nodes[tri]
    # mid-edge rule: m[:, a] is the midpoint of the edge opposite vertex a
    mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])
    hm = np.broadcast_to(h(mids[..., 0], mids[..., 1]), mids.shape[:2])
    # vertex a is 1/2 at the two midpoints of edges touching it (all but its opposite)
    contrib = (area / 3.0)[:, None] * 0.5 * (hm.sum(axis=1)[:, None] - hm)
    return _assembly(mesh).scatter(contrib)


def segment_edge_lengths(mesh: Mesh, seg: SegmentId) -> np.ndarray:
    e = mesh.segment_edges[seg]
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def segment_mass_matrix(mesh: Mesh, seg: SegmentId) -> np.ndarray:
    """Consistent P1 mass matrix on the chain of ``seg`` (dense, tridiagonal)."""
    s = segment_edge_lengths(mesh, seg)
    n = len(s) + 1
    M = np.zeros((n, n))
    i = np.arange(n - 1)
    M[i, i] += s / 3.0
    M[i + 1, i + 1] += s / 3.0
    M[i, i + 1] += s / 6.0
    M[i + 1, i] += s / 6.0
    return M


def _boundary_load(mesh: Mesh, seg: SegmentId, data: BoundaryData) -> np.ndarray:
    """Local vector ``int_seg flux phi_i`` on the chain of ``seg``."""
    if callable(data) and not isinstance(data, TraceFunction):
        e = mesh.segment_edges[seg]
        s = segment_edge_lengths(mesh, seg)
        a, b = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
        out = np.zeros(len(s) + 1)
        for xi in _GAUSS2:
            pt = (1 - xi) * a + xi * b
            f = np.broadcast_to(data(pt[:, 0], pt[:, 1]), s.shape)
            out[:-1] += 0.5 * s * f * (1 - xi)
            out[1:] += 0.5 * s * f * xi
        return out
    return segment_mass_matrix(mesh, seg) @ _chain_values(mesh, seg, data)


def assemble_load(mesh: Mesh, h, neumann_terms: Optional[dict] = None) -> np.ndarray:
    """``b_i = int h phi_i + sum_seg int_seg flux phi_i``.

    ``neumann_terms`` maps segment ids to flux data (trace, nodal array,
    callable ``(x, y)`` or scalar).
    """
    b = _domain_load(mesh, h)
    for seg, data in (neumann_terms or {}).items():
        b[mesh.segment_nodes[seg]] += _boundary_load(mesh, seg, data)
    return b


def _neumann_terms(bc: BoundarySpec, exclude=()) -> dict:
    return {s: bc[s].data for s in bc.neumann_segments() if s not in exclude}


def dump_matrix(A, path) -> None:
    """Coordinate text format, one ``row col value`` triple per line."""
    C = sp.coo_matrix(A)
    lines = [f"% {C.shape[0]} {C.shape[1]} {C.nnz}"]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(C.row, C.col, C.data)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def cg_solve(A, b, tol: float = 1e-12, max_iter: Optional[int] = None, x0=None,
             return_iterations: bool = False):
    """Jacobi-preconditioned conjugate gradients; stops at ``|r| <= tol |b|``."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = max(10 * n, 100)
    diag = A.diagonal() if sp.issparse(A) else np.diag(A)
    if np.any(diag <= 0):
        raise SolverError("matrix has non-positive diagonal; not SPD")
    minv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        out = np.zeros(n)
        return (out, 0) if return_iterations else out
    r = b - A @ x
    target = tol * bnorm
    if np.linalg.norm(r) <= target:
        return (x, 0) if return_iterations else x
    z = minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverError("CG breakdown: matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= target:
            return (x, it) if return_iterations else x
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach relative residual {tol:g} in {max_iter} iterations")


def solve_linear_mixed(mesh: Mesh, bc: BoundarySpec, h, tol: float = 1e-12,
                       initial: Optional[GridFunction] = None) -> GridFunction:
    """Galerkin solution of ``-Laplace U = h`` with mixed boundary conditions."""
    mask, dvals = dirichlet_nodes(mesh, bc)
    if not mask.any():
        raise ValueError("all-Neumann problem: at least one segment must be Dirichlet")
    K = assemble_weighted_stiffness(mesh, np.ones(mesh.n_nodes))
    b = assemble_load(mesh, h, _neumann_terms(bc))
    free = ~mask
    u = dvals.copy()
    if free.any():
        Kff = K[free][:, free]
        rhs = b[free] - K[free][:, mask] @ dvals[mask]
        x0 = None if initial is None else initial.values[free]
        u[free] = cg_solve(Kff, rhs, tol=tol, x0=x0)
    return GridFunction(mesh, u)


@dataclass
class NewtonParams:
    max_iterations: int = 25
    residual_tol: float = 1e-10
    max_halvings: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")


def _nonlinear_residual(asm: _Assembly, q, u: np.ndarray, b: np.ndarray):
    tri = asm.mesh.triangles
    ut = u[tri]
    qt = q.q(ut)
    a = qt.mean(axis=1)
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise NonPositiveWeightError("q(u) must be finite and strictly positive")
    ku = np.einsum("mab,mb->ma", asm.unit_stiffness, ut)
    return asm.scatter(a[:, None] * ku) - b, a, ku, ut


def solve_nonlinear_mixed(mesh: Mesh, q, bc: BoundarySpec, h,
                          params: Optional[NewtonParams] = None,
                          initial: Optional[GridFunction] = None,
                          return_history: bool = False):
    """Damped Newton for ``-div(q(u) grad u) = h`` with mixed boundary conditions.

    The Jacobian is the exact derivative of the discrete residual,
    ``int q(u) grad(d).grad(v) + int q'(u) d grad(u).grad(v)`` in its
    interpolated form.  ``initial`` warm-starts the iteration; otherwise the
    iteration starts from the harmonic lift of the Dirichlet data.
    """
    params = params or NewtonParams()
    asm = _assembly(mesh)
    mask, dvals = dirichlet_nodes(mesh, bc)
    if not mask.any():
        raise ValueError("all-Neumann problem: at least one segment must be Dirichlet")
    free = ~mask
    b = assemble_load(mesh, h, _neumann_terms(bc))
    if initial is None:
        lift = BoundarySpec({s: (c if isinstance(c, Dirichlet) else Neumann(0.0)) for s, c in bc.items()})
        u = solve_linear_mixed(mesh, lift, None).values
    else:
        u = np.array(initial.values, dtype=float)
    u[mask] = dvals[mask]

    history = []
    R, a, ku, ut = _nonlinear_residual(asm, q, u, b)
    rnorm = np.linalg.norm(R[free])
    history.append(rnorm)
    for _ in range(params.max_iterations):
        if rnorm <= params.residual_tol or not free.any():
            break
        dq = q.q_prime(ut) / 3.0
        Je = a[:, None, None] * asm.unit_stiffness + ku[:, :, None] * dq[:, None, :]
        J = asm.csr(Je)[free][:, free].tocsc()
        delta = np.zeros(mesh.n_nodes)
        delta[free] = spla.spsolve(J, -R[free])
        if not np.all(np.isfinite(delta)):
            raise NewtonDivergence("Newton direction is not finite")
        scale = 1.0 + np.abs(u).max()
        alpha = 1.0
        for _ in range(params.max_halvings + 1):
            trial = u + alpha * delta
            try:
                Rt, at, kut, utt = _nonlinear_residual(asm, q, trial, b)
                rt = np.linalg.norm(Rt[free])
            except NonPositiveWeightError:
                rt = np.inf
            if rt < (1.0 - 1e-4 * alpha) * rnorm:
                break
            alpha *= 0.5
        else:
            if np.abs(delta).max() <= 1e-10 * scale:
                # residual sits at round-off level; the step cannot reduce it further
                break
            raise NewtonDivergence(f"line search failed at residual {rnorm:.3e}")
        u, R, a, ku, ut, rnorm = trial, Rt, at, kut, utt, rt
        history.append(rnorm)
        if alpha == 1.0 and np.abs(delta).max() <= 1e-14 * scale:
            break
    else:
        if rnorm > params.residual_tol:
            raise NewtonDivergence(
                f"Newton residual {rnorm:.3e} above {params.residual_tol:g} "
                f"after {params.max_iterations} iterations")
    out = GridFunction(mesh, u)
    return (out, history) if return_history else out


# ---------------------------------------------------------------------------
# traces and norms
# ---------------------------------------------------------------------------

def dirichlet_trace(u: GridFunction, seg: SegmentId) -> TraceFunction:
    return TraceFunction(u.mesh, seg, u.values[u.mesh.segment_nodes[seg]])


def neumann_trace(mesh: Mesh, u: GridFunction, q, h, bc: Optional[BoundarySpec],
                  seg: SegmentId) -> TraceFunction:
    """Variationally consistent conormal flux ``q(u) u_nu`` on a Dirichlet segment.

    Interior chain nodes satisfy ``M_seg lam = r`` with ``r`` the Galerkin
    residual of ``u`` tested against their basis functions.  Corner nodes
    also touch the neighbouring segment, so their values are closed by
    quadratic extrapolation from the three nearest chain nodes (constant
    extrapolation on chains shorter than five nodes).  ``q=None`` means
    the constant coefficient one.
    """
    asm = _assembly(mesh)
    vals = u.values
    if q is None:
        a = np.ones(mesh.n_triangles)
    else:
        a = q.q(vals[mesh.triangles]).mean(axis=1)
    ku = np.einsum("mab,mb->ma", asm.unit_stiffness, vals[mesh.triangles])
    r = asm.scatter(a[:, None] * ku) - _domain_load(mesh, h)
    if bc is not None:
        for s, data in _neumann_terms(bc, exclude=(seg,)).items():
            r[mesh.segment_nodes[s]] -= _boundary_load(mesh, s, data)
    rr = r[mesh.segment_nodes[seg]]

    M = segment_mass_matrix(mesh, seg)
    n = len(rr)
    if n <= 2:
        lam = np.linalg.solve(M, rr)
        return TraceFunction(mesh, seg, lam)
    A = M.copy()
    rhs = rr.copy()
    x = mesh.segment_coordinate(seg)
    s0, s1 = x[1] - x[0], x[-1] - x[-2]
    A[0] = 0.0
    A[-1] = 0.0
    rhs[0] = rhs[-1] = 0.0
    if n < 5:
        A[0, 0], A[0, 1] = s0, -s0
        A[-1, -1], A[-1, -2] = s1, -s1
    else:
        # quadratic extrapolation through the three nearest interior nodes
        for row, nb in ((0, (1, 2, 3)), (n - 1, (n - 2, n - 3, n - 4))):
            xs = x[list(nb)]
            sc = s0 if row == 0 else s1
            A[row, row] = sc
            for k, j in enumerate(nb):
                others = [xs[i] for i in range(3) if i != k]
                A[row, j] = -sc * np.prod([(x[row] - o) / (xs[k] - o) for o in others])
    try:
        lam = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular boundary mass system on {seg.name}") from exc
    return TraceFunction(mesh, seg, lam)


def l2_norm_segment(t: TraceFunction) -> float:
    s = segment_edge_lengths(t.mesh, t.segment)
    v = t.values
    a, b = v[:-1], v[1:]
    return float(np.sqrt(max(np.sum(s / 3.0 * (a * a + a * b + b * b)), 0.0)))


def l2_dist_segment(a: TraceFunction, b: TraceFunction) -> float:
    if a.segment != b.segment or a.mesh is not b.mesh:
        raise ValueError("segment mismatch")
    return l2_norm_segment(a - b)


def l2_norm_domain(u: GridFunction) -> float:
    """Norm induced by the consistent P1 mass matrix."""
    ut = u.values[u.mesh.triangles]
    area = u.mesh.signed_areas
    sq = (ut**2).sum(axis=1) + ut.sum(axis=1) ** 2
    return float(np.sqrt(np.sum(area / 12.0 * sq)))


def l2_error_domain(u: GridFunction, exact: Callable) -> float:
    """``||u_h - exact||_{L2}`` with a degree-5 triangle rule."""
    mesh = u.mesh
    bary, w = _DUNAVANT5
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qa,mad->mqd", bary, p)
    uh = np.einsum("qa,ma->mq", bary, u.values[mesh.triangles])
    ex = exact(pts[..., 0], pts[..., 1])
    err = (uh - ex) ** 2 @ w
    return float(np.sqrt(np.sum(mesh.signed_areas * err)))

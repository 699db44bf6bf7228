"""Segmenting Mann (mean-value) iterations.

For a lower-triangular averaging matrix ``A`` the Mann process is

    v_k     = sum_j a_kj x_j
    x_{k+1} = T(v_k)

and when ``A`` is segmenting, i.e. ``a_{i+1,j} = (1 - a_{i+1,i+1}) a_ij``,
it collapses to ``v_{k+1} = (1 - d_k) v_k + d_k T(v_k)`` with
``d_k = a_{k+1,k+1}``.  Iterates are any vector-like objects supporting
``+``, ``-`` and scalar ``*``; norms come from ``norm`` (default: the
object's own ``norm()`` method, else the Euclidean norm).
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .fem import SolverError


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentingSchedule:
    """Diagonal ``d_k`` (k >= 1) of a segmenting matrix.

    ``exact`` optionally returns ``d_k`` as a :class:`~fractions.Fraction`.
    """

    d: Callable[[int], float]
    name: str = "custom"
    exact: Optional[Callable[[int], Fraction]] = None

    def __call__(self, k: int) -> float:
        dk = float(self.d(k))
        if not 0.0 <= dk <= 1.0:
            raise ValueError(f"schedule value d_{k}={dk} outside [0, 1]")
        return dk


def cesaro_schedule() -> SegmentingSchedule:
    """Row ``k`` of the matrix is ``(1/k, ..., 1/k)``."""
    return SegmentingSchedule(lambda k: 1.0 / (k + 1), "cesaro", lambda k: Fraction(1, k + 1))


def constant_schedule(d: float) -> SegmentingSchedule:
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"d must lie in [0, 1], got {d}")
    d = float(d)
    return SegmentingSchedule(lambda k: d, f"constant({d:g})", lambda k: Fraction(d))


def picard_schedule() -> SegmentingSchedule:
    """``A = I``: plain fixed-point iteration."""
    return SegmentingSchedule(lambda k: 1.0, "picard", lambda k: Fraction(1))


def reconstruct_matrix_rows(s: SegmentingSchedule, n: int, exact: bool = False):
    """First ``n`` rows of the segmenting matrix, built from ``a_11 = 1`` by the recursion.

    Returns an ``(n, n)`` float array, or nested lists of Fractions when
    ``exact`` is set (requires ``s.exact``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if exact:
        if s.exact is None:
            raise ValueError(f"schedule {s.name!r} has no exact form")
        rows = [[Fraction(1)]]
        for i in range(1, n):
            di = s.exact(i)
            rows.append([(1 - di) * a for a in rows[-1]] + [di])
        return rows
    A = np.zeros((n, n))
    A[0, 0] = 1.0
    for i in range(1, n):
        di = s(i)
        A[i, :i] = (1.0 - di) * A[i - 1, :i]
        A[i, i] = di
    return A


# ---------------------------------------------------------------------------
# stopping rules
# ---------------------------------------------------------------------------

class StopReason(str, enum.Enum):
    STEP_TOL = "step_tol"
    DISCREPANCY = "discrepancy"
    MAX_ITER = "max_iter"
    OPERATOR_FAILURE = "operator_failure"


@dataclass(frozen=True)
class StepChange:
    """Stop once ``||v_k - v_{k-1}|| <= tol``."""

    tol: float

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("step tolerance must be positive")


@dataclass(frozen=True)
class MaxIter:
    """Stop after ``n`` operator evaluations."""

    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("max iterations must be >= 0")


@dataclass(frozen=True)
class Discrepancy:
    """Discrepancy principle: stop at the first ``k`` with ``||z_eps - (I - T_l) v_k|| <= mu * eps``.

    ``split`` must provide ``residual(z_eps, v)``
    (see :class:`cauchy_mann.operators.AffineSplit`).
    """

    split: object
    z_eps: object
    mu: float
    eps: float

    def __post_init__(self):
        if not self.mu > 1:
            raise ValueError("discrepancy factor mu must exceed 1")
        if not self.eps > 0:
            raise ValueError("noise level eps must be positive")

    @property
    def threshold(self) -> float:
        return self.mu * self.eps

    def residual(self, v) -> float:
        return float(self.split.residual(self.z_eps, v))


StoppingRule = Union[StepChange, MaxIter, Discrepancy, Sequence]


def discrepancy_stop(split, z_eps, mu: float = 2.5, eps: float = 1e-2) -> Discrepancy:
    return Discrepancy(split, z_eps, mu, eps)


def _rules(stop) -> list:
    rules = list(stop) if isinstance(stop, (list, tuple)) else [stop]
    if not any(isinstance(r, MaxIter) for r in rules):
        rules.append(MaxIter(5000))
    return rules


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass
class IterationStep:
    k: int
    x_norm: float
    v_norm: float
    step_change: Optional[float]
    residual: Optional[float] = None
    error: Optional[float] = None


@dataclass
class IterationRecord:
    history: List[IterationStep]
    final_v: object
    final_x: object
    stop_reason: StopReason
    n_evaluations: int
    restart_marks: List[int] = field(default_factory=list)
    k_eps: Optional[int] = None
    failure: Optional[str] = None
    x_iterates: Optional[list] = None
    v_iterates: Optional[list] = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([np.nan if s.error is None else s.error for s in self.history])

    def to_csv(self, path) -> None:
        """Columns ``k,step_change,l2_error,residual,restart``."""
        marks = set(self.restart_marks)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "step_change", "l2_error", "residual", "restart"])
            for s in self.history:
                w.writerow([s.k, _fmt(s.step_change), _fmt(s.error), _fmt(s.residual),
                            int(s.k in marks)])


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _default_norm(x) -> float:
    if hasattr(x, "norm"):
        return float(x.norm())
    return float(np.linalg.norm(x))


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def mann_step(v, d_k: float, op: Callable, image=None):
    """One segmenting step; returns ``(v_next, x_next)`` with ``x_next = op(v)``."""
    if not 0.0 <= d_k <= 1.0:
        raise ValueError(f"d_k={d_k} outside [0, 1]")
    x_next = op(v) if image is None else image
    if d_k == 1.0:
        return x_next, x_next
    if d_k == 0.0:
        return v, x_next
    return v * (1.0 - d_k) + x_next * d_k, x_next


def run_mann(x1, schedule: SegmentingSchedule, op: Callable, stop: StoppingRule,
             norm: Callable = _default_norm, error_fn: Optional[Callable] = None,
             keep_iterates: bool = False, first_image=None, k_offset: int = 0) -> IterationRecord:
    """Run ``M(x1, A, op)`` until the first stopping rule fires.

    ``error_fn(v)`` is recorded per step (e.g. distance to a known
    solution).  ``first_image`` is a precomputed ``op(x1)`` and counts as
    the first evaluation.  Operator failures end the run with reason
    ``operator_failure`` and the partial history.
    """
    rules = _rules(stop)
    max_iter = min(r.n for r in rules if isinstance(r, MaxIter))
    step_tols = [r.tol for r in rules if isinstance(r, StepChange)]
    disc = next((r for r in rules if isinstance(r, Discrepancy)), None)

    v = x1
    x = x1
    xs = [x1] if keep_iterates else None
    vs = [x1] if keep_iterates else None
    res = disc.residual(v) if disc else None
    history = [IterationStep(1 + k_offset, norm(x), norm(v), None, res,
                             error_fn(v) if error_fn else None)]
    if disc and res <= disc.threshold:
        return IterationRecord(history, v, x, StopReason.DISCREPANCY, 0, k_eps=1 + k_offset,
                               x_iterates=xs, v_iterates=vs)

    reason = StopReason.MAX_ITER
    failure = None
    k_eps = None
    n_eval = 0
    k = 1
    while n_eval < max_iter:
        try:
            v_new, x = mann_step(v, schedule(k), op, image=first_image if k == 1 else None)
        except (SolverError, FloatingPointError, ValueError) as exc:
            reason, failure = StopReason.OPERATOR_FAILURE, f"{type(exc).__name__}: {exc}"
            break
        n_eval += 1
        k += 1
        change = norm(v_new - v)
        v = v_new
        if keep_iterates:
            xs.append(x)
            vs.append(v)
        res = disc.residual(v) if disc else None
        history.append(IterationStep(k + k_offset, norm(x), norm(v), change, res,
                                     error_fn(v) if error_fn else None))
        if disc and res <= disc.threshold:
            reason, k_eps = StopReason.DISCREPANCY, k + k_offset
            break
        if any(change <= t for t in step_tols):
            reason = StopReason.STEP_TOL
            break
    return IterationRecord(history, v, x, reason, n_eval, k_eps=k_eps, failure=failure,
                           x_iterates=xs, v_iterates=vs)


def run_restarted(x1, schedule: SegmentingSchedule, op: Callable, *,
                  period: Optional[int] = None, eps_prime: Optional[float] = None,
                  outer_tol: float = 0.0, max_restarts: int = 100,
                  max_evaluations: int = 5000, inner_max: int = 5000,
                  norm: Callable = _default_norm,
                  error_fn: Optional[Callable] = None) -> IterationRecord:
    """Mann iteration restarted from the current mean iterate.

    Each cycle first evaluates ``op(v)``; the cycle is skipped and the run
    ends if ``||op(v) - v|| <= outer_tol``, otherwise that evaluation is the
    cycle's first step.  A cycle ends after ``period`` evaluations or when
    the mean iterate changes by at most ``eps_prime``.  The schedule index
    restarts at 1 in every cycle.  ``restart_marks`` holds the global index
    of each cycle's starting iterate after the first.
    """
    if (period is None) == (eps_prime is None):
        raise ValueError("give exactly one of period or eps_prime")
    if period is not None and period < 1:
        raise ValueError("period must be >= 1")
    if eps_prime is not None and not eps_prime > 0:
        raise ValueError("eps_prime must be positive")

    v = x1
    history: List[IterationStep] = []
    marks: List[int] = []
    n_eval = 0
    reason = StopReason.MAX_ITER
    failure = None
    last_x = x1
    for cycle in range(max_restarts + 1):
        if n_eval >= max_evaluations:
            break
        try:
            image = op(v)
        except (SolverError, FloatingPointError, ValueError) as exc:
            reason, failure = StopReason.OPERATOR_FAILURE, f"{type(exc).__name__}: {exc}"
            break
        if norm(image - v) <= outer_tol:
            if not history:
                history.append(IterationStep(1, norm(v), norm(v), None,
                                             error=error_fn(v) if error_fn else None))
            n_eval += 1
            reason = StopReason.STEP_TOL
            break
        budget = min(period if period is not None else inner_max, max_evaluations - n_eval)
        rules = [MaxIter(budget)]
        if eps_prime is not None:
            rules.append(StepChange(eps_prime))
        offset = history[-1].k - 1 if history else 0
        rec = run_mann(v, schedule, op, rules, norm=norm, error_fn=error_fn,
                       first_image=image, k_offset=offset)
        if history:
            marks.append(offset + 1)
            history.extend(rec.history[1:])
        else:
            history.extend(rec.history)
        n_eval += rec.n_evaluations
        v, last_x = rec.final_v, rec.final_x
        if rec.stop_reason == StopReason.OPERATOR_FAILURE:
            reason, failure = rec.stop_reason, rec.failure
            break
    return IterationRecord(history, v, last_x, reason, n_eval, restart_marks=marks, failure=failure)


def discrepancy_index(record: IterationRecord) -> Optional[int]:
    return record.k_eps


# ---------------------------------------------------------------------------
# uniform convexity
# ---------------------------------------------------------------------------

def hilbert_modulus(t):
    """Modulus of convexity of a Hilbert space, ``1 - sqrt(1 - t^2 / 4)``."""
    t = np.clip(t, 0.0, 2.0)
    return 1.0 - np.sqrt(1.0 - t * t / 4.0)


def check_convexity_lemma(phi, psi, lam: float, d: float, eps: float,
                          modulus: Callable = hilbert_modulus, rtol: float = 1e-12) -> bool:
    """Check ``||(1-lam) phi + lam psi|| <= ||phi|| (1 - 2 delta(eps/d) min(lam, 1-lam))``.

    Preconditions ``||psi|| <= ||phi|| <= d`` and ``||phi - psi|| >= eps``
    are enforced (ValueError).  ``rtol`` absorbs round-off in equality cases.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    n_phi, n_psi = np.linalg.norm(phi), np.linalg.norm(psi)
    slack = rtol * max(1.0, d)
    if not (0.0 <= lam <= 1.0) or not eps > 0 or not d > 0:
        raise ValueError("need lam in [0, 1], eps > 0, d > 0")
    if n_psi > n_phi + slack or n_phi > d + slack:
        raise ValueError("precondition ||psi|| <= ||phi|| <= d violated")
    if np.linalg.norm(phi - psi) < eps - slack:
        raise ValueError("precondition ||phi - psi|| >= eps violated")
    lhs = np.linalg.norm((1 - lam) * phi + lam * psi)
    rhs = n_phi * (1.0 - 2.0 * modulus(eps / d) * min(lam, 1.0 - lam))
    return bool(lhs <= rhs + slack)

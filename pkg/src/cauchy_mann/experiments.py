"""Reproducible runs of the Mann iteration on the manufactured problems.

A run builds the problem and mesh from a :class:`~cauchy_mann.config.RunConfig`,
perturbs the Cauchy data if requested, iterates the chosen fixed-point
operator and writes a report bundle:

* ``run.csv``: iteration history, columns ``k,step_change,l2_error,residual,restart``;
* ``trace_final.csv``: columns ``x,psi_final,phi_final,phi_true`` with the
  final mean iterate, the final image and the exact Dirichlet trace on Gamma2;
* ``config.json``: the validated configuration.

The S route iterates Dirichlet traces and measures the error against the
exact Dirichlet trace.  The T routes iterate conormal fluxes, so their
``l2_error`` column is the distance to the exact flux; ``trace_final.csv``
always holds Dirichlet traces (fluxes are mapped through ``Ln``).
"""
from __future__ import annotations

import csv
import importlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ConstantConfig, NoRestart, PeriodRestart, PicardConfig, RunConfig
from .fem import SolverError, TraceFunction, l2_dist_segment, l2_norm_segment
from .mann import (
    Discrepancy,
    IterationRecord,
    MaxIter,
    SegmentingSchedule,
    StepChange,
    StopReason,
    cesaro_schedule,
    constant_schedule,
    picard_schedule,
    run_mann,
    run_restarted,
)
from .mesh import SegmentId
from .operators import LinearOperators, NonlinearOperators, affine_split
from .problems import (
    ManufacturedProblem,
    NoiseModel,
    noisy_cauchy_data,
    problem_harmonic,
    problem_nonharmonic,
    rect_mesh,
)

log = logging.getLogger(__name__)

G2 = SegmentId.GAMMA2

EXIT_OK, EXIT_FAILURE, EXIT_MAX_ITER = 0, 1, 2


def exit_code(reason: StopReason) -> int:
    if reason in (StopReason.STEP_TOL, StopReason.DISCREPANCY):
        return EXIT_OK
    if reason == StopReason.MAX_ITER:
        return EXIT_MAX_ITER
    return EXIT_FAILURE


def build_problem(cfg: RunConfig) -> ManufacturedProblem:
    if cfg.problem in ("harmonic", "noisy-harmonic"):
        return problem_harmonic()
    if cfg.problem == "nonharmonic":
        return problem_nonharmonic()
    module, _, attr = cfg.custom.factory.partition(":")
    obj = importlib.import_module(module)
    for part in attr.split("."):
        obj = getattr(obj, part)
    problem = obj()
    if not isinstance(problem, ManufacturedProblem):
        raise TypeError(f"{cfg.custom.factory} did not return a ManufacturedProblem")
    return problem


def build_schedule(cfg: RunConfig) -> SegmentingSchedule:
    s = cfg.schedule
    if isinstance(s, PicardConfig):
        return picard_schedule()
    if isinstance(s, ConstantConfig):
        return constant_schedule(s.d)
    return cesaro_schedule()


def synthetic_perturbation(template: TraceFunction, eps: float, seed: int) -> TraceFunction:
    """Seeded uniform direction on the trace's nodes, scaled to L2 norm ``eps``."""
    rng = np.random.default_rng(seed)
    e = TraceFunction(template.mesh, template.segment,
                      rng.uniform(-1.0, 1.0, size=template.values.shape))
    return e * (eps / l2_norm_segment(e))


@dataclass
class ExperimentReport:
    config: RunConfig
    record: IterationRecord
    x: np.ndarray
    psi_final: np.ndarray
    phi_final: np.ndarray
    phi_true: Optional[np.ndarray]
    fixed_point_defect: Optional[float]

    @property
    def exit_code(self) -> int:
        return exit_code(self.record.stop_reason)

    @property
    def final_error(self) -> Optional[float]:
        return self.record.history[-1].error

    def write(self, out_dir=None) -> Path:
        out = Path(out_dir if out_dir is not None else self.config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.record.to_csv(out / "run.csv")
        with open(out / "trace_final.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "psi_final", "phi_final", "phi_true"])
            truth = self.phi_true if self.phi_true is not None else [None] * len(self.x)
            for row in zip(self.x, self.psi_final, self.phi_final, truth):
                w.writerow(["" if v is None else repr(float(v)) for v in row])
        (out / "config.json").write_text(self.config.to_json() + "\n")
        return out


class _Route:
    """Operator, start, truth and Dirichlet read-out for one approach."""

    def __init__(self, cfg: RunConfig, problem: ManufacturedProblem, mesh, spec):
        self.cfg = cfg
        self.problem = problem
        self.spec = spec
        self.split = None
        self.z_eps = None
        approach = cfg.approach
        if approach == "nonlinear-S":
            ops = NonlinearOperators(spec)
            self.op = ops.Sbar if cfg.normalize else ops.S
            self.x1 = problem.initial_guess(mesh, cfg.initial_value)
            self.truth = problem.truth_dirichlet(mesh)
            self.to_dirichlet = lambda t: t
        elif approach == "nonlinear-T":
            ops = NonlinearOperators(spec)
            self.op = ops.Tbar if cfg.normalize else ops.T
            self.x1 = self._flux_start(mesh)
            self.truth = problem.truth_neumann(mesh)
            readout = NonlinearOperators(spec)
            self.to_dirichlet = readout.Ln
        else:
            disc = cfg.stop.discrepancy
            noise = None
            if disc is not None:
                self.split = affine_split(spec)
                noise = synthetic_perturbation(spec.zero_trace(), disc.eps, cfg.noise_model.seed)
                self.z_eps = self.split.offset + noise
            self.op = LinearOperators(spec, z=noise).T
            self.x1 = self._flux_start(mesh)
            self.truth = problem.truth_neumann(mesh)
            self.to_dirichlet = LinearOperators(spec).dirichlet_from_flux

    def _flux_start(self, mesh) -> TraceFunction:
        t = TraceFunction.zeros(mesh, G2)
        if self.cfg.initial_value is not None:
            t.values[:] = self.cfg.initial_value
        return t

    def defect(self) -> Optional[float]:
        """``||op(truth) - truth||`` for the unperturbed fixed-point map."""
        cfg, spec = self.cfg, self.spec
        try:
            if cfg.approach == "nonlinear-S":
                y = NonlinearOperators(spec).S(self.truth)
            elif cfg.approach == "nonlinear-T":
                y = NonlinearOperators(spec).T(self.truth)
            else:
                y = LinearOperators(spec).T(self.truth)
        except SolverError as exc:
            log.warning("fixed-point defect unavailable: %s", exc)
            return None
        return l2_dist_segment(y, self.truth)


def run_experiment(cfg: RunConfig, write: bool = True, defect: bool = False) -> ExperimentReport:
    """Run one configuration; operator failures end the run with a partial report."""
    problem = build_problem(cfg)
    mesh = rect_mesh(cfg.mesh.nx, cfg.mesh.ny)
    nm = cfg.noise_model
    f, g = noisy_cauchy_data(problem, mesh, NoiseModel(nm.level, nm.seed, nm.target))
    spec = problem.spec(mesh, f=f, g=g)
    route = _Route(cfg, problem, mesh, spec)

    def error_fn(v):
        return l2_dist_segment(v, route.truth)

    schedule = build_schedule(cfg)
    stop = cfg.stop

    if isinstance(cfg.restart, NoRestart):
        rules = [MaxIter(stop.max_iter)]
        if stop.step_tol is not None:
            rules.append(StepChange(stop.step_tol))
        if stop.discrepancy is not None:
            rules.append(Discrepancy(route.split, route.z_eps, stop.discrepancy.mu,
                                     stop.discrepancy.eps))
        record = run_mann(route.x1, schedule, route.op, rules, error_fn=error_fn)
    else:
        r = cfg.restart
        period = r.n if isinstance(r, PeriodRestart) else None
        eps_prime = None if isinstance(r, PeriodRestart) else r.value
        record = run_restarted(route.x1, schedule, route.op, period=period, eps_prime=eps_prime,
                               outer_tol=r.outer_tol, max_restarts=r.max_restarts,
                               max_evaluations=stop.max_iter, error_fn=error_fn)
    if record.failure:
        log.error("operator failure: %s", record.failure)

    psi, phi = _dirichlet_pair(route, record)
    truth_d = problem.truth_dirichlet(mesh).values
    report = ExperimentReport(
        config=cfg,
        record=record,
        x=mesh.segment_coordinate(G2),
        psi_final=psi,
        phi_final=phi,
        phi_true=truth_d,
        fixed_point_defect=route.defect() if defect else None,
    )
    if write:
        report.write()
    return report


def _dirichlet_pair(route: _Route, record: IterationRecord):
    nan = np.full(route.x1.values.shape, np.nan)
    out = []
    for t in (record.final_v, record.final_x):
        try:
            out.append(route.to_dirichlet(t).values.copy())
        except SolverError as exc:
            log.warning("Dirichlet read-out failed: %s", exc)
            out.append(nan)
    return out[0], out[1]

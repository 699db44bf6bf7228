"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (a summary block is printed at the end of the session) or
directly with ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import sys
import time
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from cauchy_mann.config import parse_config
from cauchy_mann.experiments import run_experiment
from cauchy_mann.fem import (
    BoundarySpec,
    Dirichlet,
    TraceFunction,
    l2_dist_segment,
    l2_error_domain,
    l2_norm_segment,
    solve_nonlinear_mixed,
)
from cauchy_mann.mann import (
    MaxIter,
    StopReason,
    cesaro_schedule,
    check_convexity_lemma,
    picard_schedule,
    reconstruct_matrix_rows,
    run_mann,
    run_restarted,
)
from cauchy_mann.mesh import SegmentId
from cauchy_mann.operators import LinearOperators, NonlinearOperators
from cauchy_mann.problems import (
    NoiseModel,
    noisy_cauchy_data,
    problem_harmonic,
    problem_nonharmonic,
    rect_mesh,
)

G2 = SegmentId.GAMMA2
RESULTS: dict = {}


def report(cid: str, title: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}"
    RESULTS[cid] = line
    print(line)
    return line


@lru_cache(maxsize=None)
def harmonic_run(nx: int, start: float, steps: int, noise: float = 0.0, seed: int = 0):
    """Plain Cesaro run of S on example 1 from a pinned constant start."""
    p = problem_harmonic()
    m = rect_mesh(nx)
    f, g = noisy_cauchy_data(p, m, NoiseModel(noise, seed))
    truth = p.truth_dirichlet(m)
    return run_mann(p.initial_guess(m, start), cesaro_schedule(), NonlinearOperators(p.spec(m, f, g)).S,
                    MaxIter(steps), error_fn=lambda v: l2_dist_segment(v, truth))


@lru_cache(maxsize=None)
def s_defect(nx: int) -> float:
    p = problem_harmonic()
    m = rect_mesh(nx)
    phi = p.truth_dirichlet(m)
    return l2_dist_segment(NonlinearOperators(p.spec(m)).S(phi), phi)


def check_c1():
    t0 = time.perf_counter()
    p = problem_harmonic()
    errs = []
    for nx in (17, 33, 65):
        m = rect_mesh(nx)
        bc = BoundarySpec({s: Dirichlet(p.u_exact) for s in SegmentId})
        errs.append(l2_error_domain(solve_nonlinear_mixed(m, p.coefficient, bc, p.h), p.u_exact))
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    dt = time.perf_counter() - t0
    ok = all(3.4 <= r <= 4.6 for r in ratios) and dt < 30
    return ok, f"L2 errors {', '.join(f'{e:.3e}' for e in errs)}; ratios {ratios[0]:.3f}, {ratios[1]:.3f} " \
               f"(band [3.4, 4.6]); {dt:.1f}s"


def check_c2():
    t0 = time.perf_counter()
    parts, ok = [], True
    for p in (problem_harmonic(), problem_nonharmonic()):
        diffs = []
        for nx in (33, 65):
            m = rect_mesh(nx)
            spec = p.spec(m)
            u = NonlinearOperators(spec, warm_start=False).solve_n(p.truth_neumann(m))
            U = LinearOperators(spec, warm_start=False).solve_n(p.truth_neumann(m))
            diffs.append(np.abs(u.values - spec.kirchhoff.Q_inv(U.values)).max())
        umax = np.abs(p.u_exact(m.nodes[:, 0], m.nodes[:, 1])).max()
        bound = 1e-2 * umax
        ok &= diffs[0] <= bound and diffs[0] / diffs[1] >= 2.5
        parts.append(f"{p.coefficient.name}: {diffs[0]:.2e} (<= {bound:.2e}), x{diffs[0] / diffs[1]:.2f}")
    dt = time.perf_counter() - t0
    return ok and dt < 30, "; ".join(parts) + f"; {dt:.1f}s"


def check_c3():
    t0 = time.perf_counter()
    p = problem_harmonic()
    d_t = []
    for nx in (33, 65):
        m = rect_mesh(nx)
        g2 = p.truth_neumann(m)
        d_t.append(l2_dist_segment(NonlinearOperators(p.spec(m)).T(g2), g2))
    d_s = [s_defect(33), s_defect(65)]
    dt = time.perf_counter() - t0
    ok = (max(d_s[0], d_t[0]) <= 5e-2 and d_s[0] / d_s[1] >= 2 and d_t[0] / d_t[1] >= 2 and dt < 60)
    return ok, (f"S defect {d_s[0]:.2e} -> {d_s[1]:.2e} (x{d_s[0] / d_s[1]:.2f}); "
                f"T defect {d_t[0]:.2e} -> {d_t[1]:.2e} (x{d_t[0] / d_t[1]:.2f}); {dt:.1f}s")


def check_c4():
    t0 = time.perf_counter()
    rec = harmonic_run(33, 0.0, 200)
    e = rec.errors
    dt = time.perf_counter() - t0
    ratio = e[200] / e[0]
    mono = bool(np.all(np.diff(e[:21]) <= 1e-6))
    ok = ratio < 0.5 and mono and rec.stop_reason == StopReason.MAX_ITER and dt < 300
    return ok, (f"error {e[0]:.4f} -> {e[200]:.4f} at step 200 (ratio {ratio:.3f}, need < 0.5); "
                f"nonincreasing over first 20 steps: {mono}; {dt:.1f}s")


def check_c5():
    t0 = time.perf_counter()
    p = problem_harmonic()
    m = rect_mesh(33)
    truth = p.truth_dirichlet(m)
    plain = harmonic_run(33, 0.0, 200).errors[-1]
    rec = run_restarted(p.initial_guess(m), cesaro_schedule(), NonlinearOperators(p.spec(m)).S,
                        period=50, max_evaluations=200,
                        error_fn=lambda v: l2_dist_segment(v, truth))
    dt = time.perf_counter() - t0
    final = rec.errors[-1]
    gain = 1 - final / plain
    ok = rec.n_evaluations == 200 and gain >= 0.10 and dt < 600
    return ok, (f"restart-50 error {final:.4f} vs plain {plain:.4f} after {rec.n_evaluations} evaluations "
                f"({100 * gain:.1f}% lower, need >= 10%); {dt:.1f}s")


def check_c6():
    p = problem_harmonic()
    m = rect_mesh(33)
    spec = p.spec(m)
    ops = NonlinearOperators(spec)
    rng = np.random.default_rng(2024)
    x = m.segment_coordinate(G2)
    worst = -np.inf
    for _ in range(100):
        c = rng.standard_normal(5) * rng.choice([0.1, 1.0, 3.0])
        phi = TraceFunction(m, G2, c[0] + c[1] * x + c[2] * np.sin(np.pi * x)
                            + c[3] * np.cos(2 * np.pi * x) + c[4] * x**2)
        worst = max(worst, l2_norm_segment(ops.Tbar(phi)) - l2_norm_segment(phi))
    violations = 0
    runs = [
        (p.initial_guess(m), NonlinearOperators(spec).Sbar),
        (p.initial_guess(m, 2.0), NonlinearOperators(spec).Sbar),
        (p.truth_neumann(m) * 0.5, NonlinearOperators(spec).Tbar),
    ]
    steps = 0
    for x1, op in runs:
        rec = run_mann(x1, cesaro_schedule(), op, MaxIter(40), keep_iterates=True)
        n1 = l2_norm_segment(rec.x_iterates[0])
        for k in range(1, len(rec.x_iterates)):
            nx_ = l2_norm_segment(rec.x_iterates[k])
            nv = l2_norm_segment(rec.v_iterates[k - 1])
            violations += (nx_ > nv + 1e-10) + (nv > n1 + 1e-10)
            steps += 1
    ok = worst <= 1e-10 and violations == 0
    return ok, (f"max(||Tbar phi|| - ||phi||) over 100 probes = {worst:.2e}; "
                f"chain violations {violations} over {steps} recorded steps")


def check_c7():
    s = cesaro_schedule()
    rows = reconstruct_matrix_rows(s, 200, exact=True)
    cesaro_ok = all(rows[k - 1] == [Fraction(1, k)] * k for k in range(1, 201))
    A = reconstruct_matrix_rows(s, 200)
    iv_res = max(abs(A[i, j] - (1 - A[i, i]) * A[i - 1, j]) for i in range(1, 200) for j in range(i))
    rng = np.random.default_rng(7)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    B = Q @ np.diag(np.linspace(0.2, 0.999, 8)) @ Q.T
    c = rng.standard_normal(8)
    rec = run_mann(np.ones(8), s, lambda v: B @ v + c, MaxIter(200), keep_iterates=True)
    mat_err = np.abs(A @ np.array(rec.x_iterates[:-1]) - np.array(rec.v_iterates[:-1])).max()
    pic = run_mann(np.ones(8), picard_schedule(), lambda v: B @ v + c, MaxIter(50), keep_iterates=True)
    x = np.ones(8)
    picard_ok = True
    for k in range(50):
        x = B @ x + c
        picard_ok &= bool(np.array_equal(pic.x_iterates[k + 1], x) and np.array_equal(pic.v_iterates[k + 1], x))
    ok = cesaro_ok and iv_res <= 1e-14 and mat_err <= 1e-12 and picard_ok
    return ok, (f"Cesaro rows exact: {cesaro_ok}; condition iv residual {iv_res:.1e}; "
                f"matrix vs recursion {mat_err:.1e}; Picard exact: {picard_ok}")


def check_c8():
    rng = np.random.default_rng(8)
    violations, draws = 0, 0
    for dim in (2, 33):
        for i in range(10_000):
            phi, psi = rng.standard_normal(dim), rng.standard_normal(dim)
            if i % 3 == 0:
                psi *= rng.uniform(0, 1) * np.linalg.norm(phi) / np.linalg.norm(psi)
            if np.linalg.norm(psi) > np.linalg.norm(phi):
                phi, psi = psi, phi
            tight = i % 2 == 0
            d = np.linalg.norm(phi) * (1.0 if tight else rng.uniform(1.0, 3.0))
            eps = np.linalg.norm(phi - psi) * (1.0 if tight else rng.uniform(0.01, 1.0))
            lam = rng.uniform()
            violations += not check_convexity_lemma(phi, psi, lam, d, eps)
            draws += 1
    return violations == 0, f"{violations} violations in {draws} draws (dims 2 and 33)"


def check_c9():
    t0 = time.perf_counter()
    rows = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        cfg = parse_config({
            "mesh": {"nx": 33, "ny": 17},
            "approach": "linear-kirchhoff",
            "schedule": {"kind": "constant", "d": 0.5},
            "stop": {"step_tol": None, "max_iter": 5000, "discrepancy": {"mu": 2.5, "eps": eps}},
        })
        rec = run_experiment(cfg, write=False).record
        rows.append((eps, rec.k_eps, rec.history[-1].residual))
    ks = [k for _, k, _ in rows]
    ok = all(k is not None and r <= 2.5 * e for e, k, r in rows)
    ok = ok and ks == sorted(ks)
    dt = time.perf_counter() - t0
    detail = "; ".join(f"eps={e:g}: k_eps={k}, residual {r:.2e} (<= {2.5 * e:.2e})" for e, k, r in rows)
    return ok and dt < 600, detail + f"; {dt:.1f}s"


def check_c10():
    exact = harmonic_run(33, 0.0, 200)
    noisy = harmonic_run(33, 0.0, 200, 0.01, 0)
    zero = harmonic_run(33, 0.0, 200, 0.0, 123)
    completed = noisy.stop_reason == StopReason.MAX_ITER and noisy.failure is None
    floor = float(np.nanmin(noisy.errors))
    at_same = float(exact.errors[len(noisy.errors) - 1])
    identical = all(a == b for a, b in zip(zero.errors, exact.errors)) and \
        np.array_equal(zero.final_v.values, exact.final_v.values)
    ok = completed and floor > at_same and identical
    return ok, (f"completed without solver failure: {completed}; noisy floor {floor:.4f} vs exact "
                f"{at_same:.4f} at step {len(noisy.errors) - 1}; level-0 bit-identical: {identical}")


def check_c11():
    a = harmonic_run(33, 0.0, 200)
    b = harmonic_run(33, 2.0, 200)
    # the two runs built equal meshes separately; compare on one of them
    dist = l2_norm_segment(TraceFunction(a.final_v.mesh, G2, a.final_v.values - b.final_v.values))
    bound = 2 * s_defect(33)
    return dist <= bound, f"final distance {dist:.4f} vs bound {bound:.2e} (2 x S defect) after 200 steps"


CRITERIA = [
    ("C1", "manufactured-solution convergence", check_c1),
    ("C2", "Kirchhoff oracle equivalence", check_c2),
    ("C3", "fixed-point defect", check_c3),
    ("C4", "Cesaro reproduction, example 1", check_c4),
    ("C5", "restart superiority", check_c5),
    ("C6", "normalized-operator norm property", check_c6),
    ("C7", "segmenting algebra", check_c7),
    ("C8", "convexity lemma", check_c8),
    ("C9", "discrepancy principle", check_c9),
    ("C10", "noise study", check_c10),
    ("C11", "uniqueness surrogate", check_c11),
]


@pytest.mark.slow
@pytest.mark.parametrize("cid,title,check", CRITERIA, ids=[c[0] for c in CRITERIA])
def test_acceptance(cid, title, check):
    ok, detail = check()
    line = report(cid, title, ok, detail)
    assert ok, line


def main() -> int:
    failed = 0
    for cid, title, check in CRITERIA:
        ok, detail = check()
        report(cid, title, ok, detail)
        failed += not ok
    print(f"{len(CRITERIA) - failed}/{len(CRITERIA)} criteria passed")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

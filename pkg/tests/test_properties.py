"""Property-based checks of the invariants."""
import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cauchy_mann.fem import TraceFunction, assemble_weighted_stiffness, l2_norm_segment
from cauchy_mann.kirchhoff import KirchhoffMap, quadratic_coefficient, sine_coefficient
from cauchy_mann.mann import (
    MaxIter,
    SegmentingSchedule,
    check_convexity_lemma,
    constant_schedule,
    reconstruct_matrix_rows,
    run_mann,
)
from cauchy_mann.mesh import SegmentId
from cauchy_mann.operators import NonlinearOperators
from cauchy_mann.problems import NoiseModel, add_noise, problem_harmonic, rect_mesh

G2 = SegmentId.GAMMA2
MESH9 = rect_mesh(9)
finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40))
def test_segmenting_rows_are_stochastic(ds):
    s = SegmentingSchedule(lambda k: ds[(k - 1) % len(ds)])
    A = reconstruct_matrix_rows(s, len(ds) + 1)
    assert np.all(A >= 0)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-14)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=30), st.integers(0, 2**32 - 1))
def test_matrix_form_matches_recursion(ds, seed):
    s = SegmentingSchedule(lambda k: ds[(k - 1) % len(ds)])
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((4, 4)) / 4
    c = rng.standard_normal(4)
    rec = run_mann(rng.standard_normal(4), s, lambda x: B @ x + c, MaxIter(len(ds)), keep_iterates=True)
    X = np.array(rec.x_iterates[:-1])
    V = reconstruct_matrix_rows(s, len(ds)) @ X
    np.testing.assert_allclose(V, np.array(rec.v_iterates[:-1]), atol=1e-12)


@st.composite
def lemma_inputs(draw):
    dim = draw(st.sampled_from([2, 33]))
    phi = draw(arrays(float, dim, elements=st.floats(-10, 10)))
    psi = draw(arrays(float, dim, elements=st.floats(-10, 10)))
    if np.linalg.norm(psi) > np.linalg.norm(phi):
        phi, psi = psi, phi
    dist = np.linalg.norm(phi - psi)
    assume(np.linalg.norm(phi) > 1e-6 and dist > 1e-6)
    d = np.linalg.norm(phi) * draw(st.floats(1.0, 3.0))
    eps = dist * draw(st.floats(0.01, 1.0))
    lam = draw(st.floats(0.0, 1.0))
    return phi, psi, lam, d, eps


@given(lemma_inputs())
def test_convexity_lemma_holds(args):
    assert check_convexity_lemma(*args)


@pytest.mark.parametrize("coef", [quadratic_coefficient(), sine_coefficient()], ids=lambda c: c.name)
@given(y=st.floats(-1e4, 1e4))
def test_kirchhoff_round_trip(coef, y):
    k = KirchhoffMap(coef)
    assert abs(k.Q(k.Q_inv(y)) - y) <= 1e-10 * max(1.0, abs(y))


@given(arrays(float, 9, elements=finite), arrays(float, 9, elements=finite), finite)
def test_trace_norm_is_a_norm(a, b, c):
    ta, tb = TraceFunction(MESH9, G2, a), TraceFunction(MESH9, G2, b)
    na, nb = l2_norm_segment(ta), l2_norm_segment(tb)
    assert l2_norm_segment(ta + tb) <= na + nb + 1e-9 * (1 + na + nb)
    assert l2_norm_segment(ta * c) == pytest.approx(abs(c) * na, rel=1e-12, abs=1e-12)


@given(st.floats(0.0, 0.5), st.integers(0, 10**6))
def test_noise_level_exact(level, seed):
    t = TraceFunction.interpolate(MESH9, G2, lambda x, y: 1 + x**2)
    out = add_noise(t, NoiseModel(level, seed))
    assert l2_norm_segment(out - t) == pytest.approx(level * l2_norm_segment(t), abs=1e-12)


@given(arrays(float, MESH9.n_nodes, elements=st.floats(0.1, 100.0)))
def test_stiffness_symmetric_singular(w):
    K = assemble_weighted_stiffness(MESH9, w)
    assert abs(K - K.T).max() == 0.0
    np.testing.assert_allclose(K @ np.ones(MESH9.n_nodes), 0.0, atol=1e-10 * w.max())
    assert np.all(K.diagonal() > 0)


_PROBLEM = problem_harmonic()
_OPS = NonlinearOperators(_PROBLEM.spec(MESH9))


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(arrays(float, 4, elements=st.floats(-20, 20)))
def test_tbar_never_increases_norm(c):
    phi = TraceFunction.interpolate(
        MESH9, G2, lambda x, y: c[0] + c[1] * x + c[2] * np.sin(np.pi * x) + c[3] * np.cos(3 * np.pi * x))
    assert l2_norm_segment(_OPS.Tbar(phi)) <= l2_norm_segment(phi) + 1e-10


@given(st.floats(0.0, 1.0))
def test_constant_schedule_in_range(d):
    s = constant_schedule(d)
    assert s(1) == d and s(1000) == d

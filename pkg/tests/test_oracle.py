import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from mrkf.cyclic import CyclicGain, monodromy, spectral_radius
from mrkf.errors import DimensionMismatch, NoConvergence
from mrkf.model import MultirateModel
from mrkf.oracle import cross_validate, dare_fixed_point, periodic_riccati, riccati_step


def test_dare_zero_process_noise():
    P, K, L = dare_fixed_point(0.5, 1.0, 0.0, 1.0)
    assert abs(P[0, 0]) < 1e-10 and abs(K[0, 0]) < 1e-10 and abs(L[0, 0]) < 1e-10


def test_dare_golden_ratio():
    P, K, L = dare_fixed_point(1.0, 1.0, 1.0, 1.0)
    assert P[0, 0] == pytest.approx((1 + np.sqrt(5)) / 2, abs=1e-9)
    assert K[0, 0] == pytest.approx(P[0, 0] / (P[0, 0] + 1), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_dare_matches_scipy(make_model, seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng, N=1, full=True, stable=True)
    A, C, Q, R = m.sys.A, m.sys.C, m.noise.Q, m.noise.R
    P, _, _ = dare_fixed_point(A, C, Q, R)
    ref = sla.solve_discrete_are(A.T, C.T, Q, R)
    assert np.linalg.norm(P - ref) <= 1e-8 * (1 + np.linalg.norm(ref))


def test_single_phase_equals_dare(auto):
    m = auto.with_schedule([[1.0, 1.0]])
    ora = periodic_riccati(m)
    P, _, L = dare_fixed_point(m.sys.A, m.sys.C, m.noise.Q, m.noise.R)
    assert np.max(np.abs(ora.P[0] - P)) < 1e-8
    assert np.max(np.abs(ora.L[0] - L)) < 1e-8


def test_step_without_sensors_is_prediction(auto):
    P = np.diag([1.0, 2.0, 3.0])
    Pn, L = riccati_step(auto.sys.A, auto.sys.C, auto.noise.Q, auto.noise.R, P, np.array([], dtype=int))
    np.testing.assert_array_equal(Pn, 0.5 * ((auto.sys.A @ P @ auto.sys.A.T + auto.noise.Q)
                                             + (auto.sys.A @ P @ auto.sys.A.T + auto.noise.Q).T))
    assert not L.any()


def test_all_active_reduction_is_standard_update(auto):
    A, C, Q, R = auto.sys.A, auto.sys.C, auto.noise.Q, auto.noise.R
    P = np.diag([1.0, 2.0, 3.0])
    Pn, L = riccati_step(A, C, Q, R, P, np.arange(2))
    K = np.linalg.solve(C @ P @ C.T + R, C @ P).T
    ref = A @ (P - K @ C @ P) @ A.T + Q
    np.testing.assert_array_equal(Pn, 0.5 * (ref + ref.T))
    np.testing.assert_array_equal(L, A @ K)


def test_inactive_columns_zero(auto_oracle):
    for k in range(1, 10):
        assert not auto_oracle.L[k][:, 0].any()
    assert auto_oracle.L[0][:, 0].any()


@pytest.mark.parametrize("P0", [np.eye(3), 10 * np.eye(3), np.diag([0.01, 0.1, 0.5])])
def test_initialization_invariance(auto, auto_oracle, P0):
    ora = periodic_riccati(auto, P0=P0)
    for a, b in zip(ora.L, auto_oracle.L):
        assert np.max(np.abs(a - b)) < 1e-9


def test_oracle_monodromy_stable(auto, auto_oracle):
    rho = spectral_radius(monodromy(auto, auto_oracle.gains()))
    assert rho < 1
    assert rho ** 0.1 == pytest.approx(0.9673, abs=5e-4)


def test_oracle_trace(auto_oracle):
    assert auto_oracle.trace == pytest.approx(18.0711, abs=1e-3)


def test_cross_validate_design(auto, auto_design, auto_oracle):
    rep = cross_validate(auto, auto_design, oracle=auto_oracle)
    assert rep.max_gap < 1e-4 and rep.passed()
    assert rep.covariance_bound_ok
    assert rep.oracle_trace == pytest.approx(auto_design.trace_W, rel=1e-6)


def test_cross_validate_detects_perturbation(auto, auto_oracle):
    gains = [g.copy() for g in auto_oracle.L]
    gains[3][1, 1] += 0.1
    rep = cross_validate(auto, CyclicGain.from_periodic(gains), oracle=auto_oracle)
    assert rep.gaps[3] == pytest.approx(0.1, abs=1e-12)
    assert not rep.passed()


def test_cross_validate_period_mismatch(auto, auto_oracle):
    with pytest.raises(DimensionMismatch):
        cross_validate(auto, CyclicGain.from_periodic(auto_oracle.L[:5]), oracle=auto_oracle)


def test_no_convergence():
    m = MultirateModel.from_arrays([[2.0]], [[1.0]], [[0.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(NoConvergence):
        periodic_riccati(m)
    with pytest.raises(NoConvergence):
        dare_fixed_point(1.0, 1.0, 1.0, 1.0, max_iters=3)


def test_bad_initial_covariance(auto):
    with pytest.raises(DimensionMismatch):
        periodic_riccati(auto, P0=np.eye(2))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_periodic_fixed_point(make_model, seed):
    rng = np.random.default_rng(seed)
    m = make_model(rng, stable=True)
    ora = periodic_riccati(m)
    A, C, Q, R = m.sys.A, m.sys.C, m.noise.Q, m.noise.R
    for k in range(m.N):
        Pn, L = riccati_step(A, C, Q, R, ora.P[k], m.schedule.active(k))
        assert np.linalg.norm(Pn - ora.P[(k + 1) % m.N]) <= 1e-9 * (1 + np.linalg.norm(Pn))
        np.testing.assert_allclose(L, ora.L[k], atol=1e-9)

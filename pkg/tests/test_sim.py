import numpy as np
import pytest
from scipy import stats

from mrkf.cyclic import CyclicGain
from mrkf.design import DesignSpec, design
from mrkf.errors import DimensionMismatch, InsufficientData
from mrkf.sim import (
    InputSignal,
    ScenarioConfig,
    automotive_scenario,
    box_muller,
    default_warmup,
    empirical_covariance,
    make_generator,
    monte_carlo,
    read_csv,
    rmse,
    simulate,
    simulate_cyclic,
    update_gains,
    write_csv,
)


@pytest.fixture(scope="module")
def mc_runs(auto, auto_design):
    return monte_carlo(auto, auto_design.gains, automotive_scenario(seed=0), runs=100)


def test_noise_free_matched_start(auto, auto_design):
    cfg = ScenarioConfig(T=200, x0=(0.0, 5.0, 0.0), input=InputSignal("sinusoid", amplitude=0.5, frequency=0.05),
                         process_noise=False, measurement_noise=False)
    run = simulate(auto, auto_design.gains, cfg)
    assert np.max(np.abs(run.e)) < 1e-12
    assert np.max(np.abs(run.e_filt)) < 1e-12


def test_deterministic(auto, auto_design):
    cfg = automotive_scenario(seed=7, T=60)
    a = simulate(auto, auto_design.gains, cfg, run=3)
    b = simulate(auto, auto_design.gains, cfg, run=3)
    np.testing.assert_array_equal(a.x_true, b.x_true)
    np.testing.assert_array_equal(a.x_hat, b.x_hat)
    c = simulate(auto, auto_design.gains, cfg, run=4)
    assert not np.array_equal(a.x_true, c.x_true)


def test_measurement_pattern(auto, auto_design):
    run = simulate(auto, auto_design.gains, automotive_scenario(T=40))
    gps = ~np.isnan(run.y[:, 0])
    np.testing.assert_array_equal(np.flatnonzero(gps), [0, 10, 20, 30])
    assert not np.isnan(run.y[:, 1]).any()
    np.testing.assert_array_equal(run.phase, np.arange(40) % 10)


def test_matches_cyclic_estimator(auto, auto_design):
    cfg = automotive_scenario(seed=3, T=100)
    a = simulate(auto, auto_design.gains, cfg)
    b = simulate_cyclic(auto, auto_design.gains, cfg)
    assert np.max(np.abs(a.x_hat - b.x_hat)) < 1e-9


def test_error_decay_within_pole_envelope(auto, pole_sweep):
    d = pole_sweep[0.9]
    cfg = ScenarioConfig(T=100, x0=(0.0, 5.0, 0.0), xhat0=(1.0, 4.0, 0.5),
                         process_noise=False, measurement_noise=False)
    e = np.linalg.norm(simulate(auto, d.gains, cfg).e, axis=1)
    # the Lyapunov certificate bounds the decay up to cond(X)^(1/2)
    X = d.X
    kappa = np.sqrt(np.linalg.cond(X))
    for k in range(10, 100, 10):
        assert e[k] <= kappa * 0.9 ** k * e[0] + 1e-12
    assert e[-1] < 1e-3 * e[0]


def test_rmse_trivial():
    from mrkf.sim import SimulationRun
    k = np.arange(50)
    x = np.zeros((50, 2))
    e = np.ones((50, 2)) * [3.0, -4.0]
    run = SimulationRun(k, x, np.zeros((50, 1)), x - e, e, 5)
    np.testing.assert_allclose(rmse(run), [3.0, 4.0])
    run.e[:10] = 1e6
    np.testing.assert_allclose(run.rmse(warmup=default_warmup(5)), [3.0, 4.0])
    with pytest.raises(ValueError):
        rmse(run, warmup=50)
    run.e[:] = 0.0
    assert not rmse(run).any()


def test_default_warmup():
    assert default_warmup(10) == 20 and default_warmup(1) == 2


def test_covariance_matches_riccati(mc_runs, auto_oracle):
    for k in (0, 1, 5, 9):
        cov = empirical_covariance(mc_runs, k, warmup=20)
        P = auto_oracle.P[k]
        np.testing.assert_allclose(np.diag(cov), np.diag(P), rtol=0.2)


def test_covariance_grows_between_fixes(mc_runs):
    # updated-estimate position variance is largest just before the next GPS fix
    pos = [empirical_covariance(mc_runs, k, filtered=True)[0, 0] for k in range(10)]
    assert pos[9] > pos[0]
    assert int(np.argmax(pos)) == 9 and int(np.argmin(pos)) == 0


def test_prediction_covariance_peaks_at_fix(mc_runs):
    # the one-step prediction entering phase 0 has not seen that fix yet
    pos = [empirical_covariance(mc_runs, k)[0, 0] for k in range(10)]
    assert int(np.argmin(pos)) == 1
    assert min(pos[0], pos[9]) > 1.15 * pos[1]


def test_covariance_below_lmi_bound(mc_runs, auto_design):
    Xi = np.linalg.inv(auto_design.X)
    for k in range(10):
        cov = empirical_covariance(mc_runs, k)
        bound = Xi[k * 3:(k + 1) * 3, k * 3:(k + 1) * 3]
        # about 3 sigma of sampling error for a pool of 1800 correlated samples
        assert np.linalg.eigvalsh(1.2 * bound - cov)[0] >= 0


def test_covariance_noise_free_is_zero(auto, auto_design):
    cfg = ScenarioConfig(T=60, x0=(0.0, 1.0, 0.0), process_noise=False, measurement_noise=False)
    runs = monte_carlo(auto, auto_design.gains, cfg, runs=3)
    assert np.max(np.abs(empirical_covariance(runs, 0))) < 1e-20


def test_covariance_insufficient(auto, auto_design, mc_runs):
    with pytest.raises(InsufficientData):
        empirical_covariance(mc_runs[:1], 0)
    with pytest.raises(InsufficientData):
        empirical_covariance(mc_runs[:2], 0, warmup=200)


def test_updated_estimate_rmse_bands(mc_runs):
    r = np.mean([run.rmse(warmup=20, filtered=True) for run in mc_runs], axis=0)
    assert 0.45 <= r[0] <= 0.62
    assert 0.23 <= r[1] <= 0.31
    assert 0.90 <= r[2] <= 1.20


def test_update_gains(auto, auto_design):
    K = update_gains(auto, auto_design.gains)
    for Kk, Lk in zip(K, auto_design.gains.periodic):
        np.testing.assert_allclose(auto.sys.A @ Kk, Lk, atol=1e-14)
    from mrkf.model import MultirateModel
    sing = MultirateModel.from_arrays(np.zeros((1, 1)), [[1.0]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
    assert update_gains(sing, CyclicGain.from_periodic([np.zeros((1, 1))])) is None


def test_csv_round_trip(auto, auto_design, tmp_path):
    run = simulate(auto, auto_design.gains, automotive_scenario(T=25))
    p = tmp_path / "run.csv"
    write_csv(run, p)
    text = p.read_text().splitlines()
    assert text[0].startswith("k,phase,x_true_0")
    assert text[2].split(",")[5] == ""
    back = read_csv(p)
    assert back.N == 10
    for a, b in [(run.x_true, back.x_true), (run.x_hat, back.x_hat), (run.e, back.e), (run.e_filt, back.e_filt)]:
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(np.isnan(run.y), np.isnan(back.y))


def test_dimension_checks(auto, auto_design):
    with pytest.raises(DimensionMismatch):
        simulate(auto, CyclicGain.from_periodic(auto_design.gains.periodic[:5]), automotive_scenario(T=10))
    with pytest.raises(DimensionMismatch):
        simulate(auto, auto_design.gains, ScenarioConfig(T=10, x0=(0.0, 1.0)))
    with pytest.raises(DimensionMismatch):
        InputSignal("sequence", sequence=((1.0, 2.0),)).samples(5, 1)


def test_input_signals():
    np.testing.assert_allclose(InputSignal("sinusoid", amplitude=0.5, frequency=0.05).samples(4, 1)[:, 0],
                               0.5 * np.sin(0.05 * np.arange(4)))
    np.testing.assert_array_equal(InputSignal("sequence", sequence=(1.0, 2.0)).samples(4, 1)[:, 0], [1, 2, 0, 0])
    np.testing.assert_array_equal(InputSignal("constant", value=0.1).samples(3, 2), np.full((3, 2), 0.1))
    with pytest.raises(ValueError):
        InputSignal("chirp")


def test_box_muller_normal():
    z = box_muller(make_generator(0, 0), 20001)
    assert z.size == 20001
    assert abs(z.mean()) < 0.03 and abs(z.std() - 1) < 0.02
    assert stats.kstest(z, "norm").pvalue > 1e-3


def test_generator_streams_independent():
    a = make_generator(1, 0).random(5)
    np.testing.assert_array_equal(a, make_generator(1, 0).random(5))
    assert not np.array_equal(a, make_generator(1, 1).random(5))
    assert not np.array_equal(a, make_generator(2, 0).random(5))


def test_blind_step_filter_is_prediction_only():
    from mrkf.model import MultirateModel
    A = np.array([[1.0, 0.2], [0.0, 0.9]])
    m = MultirateModel.from_arrays(A, [[0.0], [0.2]], [[1.0, 0.0]], np.diag([0.02, 0.05]), [[0.5]],
                                   [[1.0], [0.0], [0.0]])
    d = design(m, DesignSpec())
    cfg = ScenarioConfig(T=9, x0=(0.0, 0.0), input=InputSignal("constant", value=0.1))
    run = simulate(m, d.gains, cfg)
    for k in (1, 2, 4, 5):
        np.testing.assert_allclose(run.x_hat[k + 1], A @ run.x_hat[k] + [0.0, 0.02], atol=1e-14)
        np.testing.assert_array_equal(run.x_filt[k], run.x_hat[k])

import io
import math

import numpy as np
import pytest

from nelson_kepler import dynamics as dyn
from nelson_kepler import sim
from nelson_kepler.core import DomainError, params_new
from nelson_kepler.sim import SimConfig


@pytest.fixture
def p_eps():
    return params_new(e=0.5, epsilon=0.1)


def test_config_validation(p05):
    SimConfig()
    for kw in (dict(dt=0), dict(t_max=-1), dict(delta=0), dict(scheme="milstein"), dict(dimension=4), dict(ensemble_size=0)):
        with pytest.raises(DomainError):
            SimConfig(**kw)
    with pytest.raises(DomainError):
        sim.simulate_sde(p05, [2.0, 0.0], SimConfig(delta=2.0))
    with pytest.raises(DomainError):
        sim.simulate_sde(p05, [2.0, 0.0, 0.0], SimConfig())


def test_start_in_buffer_rejected(p_eps):
    with pytest.raises(DomainError):
        sim.simulate_sde(p_eps, [-0.5, 0.0], SimConfig(t_max=1.0))
    with pytest.raises(DomainError):
        sim.simulate_sde(p_eps, [0.0, 0.0], SimConfig(t_max=1.0))


def test_zero_noise_matches_rk4_within_dt(p05):
    T = dyn.period(p05)
    for dt in (2e-3, 1e-3):
        em = sim.simulate_sde(p05, [2.0, 0.0], SimConfig(dt=dt, t_max=T))
        rk = dyn.integrate_ode(p05, [2.0, 0.0], T, dt=dt)
        assert np.max(np.linalg.norm(em.states - rk.states, axis=1)) < 2 * dt


def test_strong_order_halving(p05):
    T = dyn.period(p05)
    errs = []
    for dt in (2e-3, 1e-3, 5e-4):
        em = sim.simulate_sde(p05, [2.0, 0.0], SimConfig(dt=dt, t_max=T), with_uv=False)
        rk = dyn.integrate_ode(p05, [2.0, 0.0], T, dt=dt, with_uv=False)
        errs.append(np.max(np.linalg.norm(em.states - rk.states, axis=1)))
    for a, b in zip(errs, errs[1:]):
        assert 0.3 <= b / a <= 0.8


def test_trajectory_invariants(p_eps):
    tr = sim.simulate_sde(p_eps, [2.0, 0.0], SimConfig(dt=0.01, t_max=1.005, record_every=1))
    dts = np.diff(tr.times)
    assert np.all(dts > 0)
    np.testing.assert_allclose(dts[:-1], 0.01, rtol=1e-9)
    assert dts[-1] == pytest.approx(0.005)
    assert tr.events == [(pytest.approx(1.005), "horizon")]


def test_sigma_hit_is_last_record(p_eps):
    tr = sim.simulate_sde(p_eps.with_epsilon(0.05), [-0.9, 0.1], SimConfig(t_max=10.0))
    assert tr.terminated == "sigma_hit"
    assert tr.events[-1][0] == tr.times[-1]
    assert len(tr.events) == 1


def test_same_seed_bit_identical(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=3.0, seed=7)
    bufs = []
    for _ in range(2):
        b = io.StringIO()
        sim.simulate_sde(p_eps, [2.0, 0.0], cfg).to_csv(b)
        bufs.append(b.getvalue())
    assert bufs[0] == bufs[1]
    c = io.StringIO()
    sim.simulate_sde(p_eps, [2.0, 0.0], SimConfig(dt=1e-3, t_max=3.0, seed=8)).to_csv(c)
    assert c.getvalue() != bufs[0]


def test_noise_follows_documented_stream(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=2.5, seed=11)
    tr = sim.simulate_sde(p_eps, [2.0, 0.0], cfg, keep_noise=True, path_index=3)
    n = len(tr.times) - 1
    xi = sim.path_generator(11, 3).standard_normal((n, 2))
    B = np.cumsum(math.sqrt(1e-3) * xi, axis=0)
    np.testing.assert_allclose(tr.noise[1:], B, rtol=1e-12, atol=1e-12)


def test_start_stream_key_is_exact():
    g = sim.path_generator(42, sim.START_STREAM)
    assert g.bit_generator.state["state"]["key"].tolist() == [42, 2**64 - 1]


def test_streams_uncorrelated():
    a = sim.path_generator(42, 0).standard_normal(10_000)
    b = sim.path_generator(42, 1).standard_normal(10_000)
    c = sim.path_generator(43, 0).standard_normal(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.05


def test_ensemble_of_one_is_single_path(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=2.0, seed=5)
    single = sim.simulate_sde(p_eps, [2.0, 0.0], cfg)
    ens = sim.simulate_ensemble(p_eps, [2.0, 0.0], cfg, keep_paths=True)
    np.testing.assert_array_equal(ens.final_states[0], single.final_state)
    np.testing.assert_array_equal(ens.trajectories[0].states, single.states)


def test_ensemble_paths_reproducible_individually(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=2.0, seed=5, ensemble_size=4)
    ens = sim.simulate_ensemble(p_eps, [2.0, 0.0], cfg)
    one = sim.simulate_sde(p_eps, [2.0, 0.0], SimConfig(dt=1e-3, t_max=2.0, seed=5), path_index=2)
    np.testing.assert_array_equal(ens.final_states[2], one.final_state)


def test_ensemble_start_distribution(p_eps):
    def draw(rng, m):
        return np.column_stack([rng.uniform(1.8, 2.2, m), rng.uniform(-0.1, 0.1, m)])

    cfg = SimConfig(dt=1e-2, t_max=0.1, seed=1, ensemble_size=6)
    r1 = sim.simulate_ensemble(p_eps, draw, cfg, box=(-3, 3, -3, 3))
    r2 = sim.simulate_ensemble(p_eps, draw, cfg, box=(-3, 3, -3, 3))
    np.testing.assert_array_equal(r1.final_states, r2.final_states)
    assert sum(c for *_, c in r1.histogram_rows()) == 6
    with pytest.raises(DomainError):
        sim.simulate_ensemble(p_eps, np.zeros((3, 2)) + 2, cfg)


@pytest.mark.slow
def test_ensemble_concentrates_near_ellipse(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=20.0, seed=42, ensemble_size=500)
    res = sim.simulate_ensemble(p_eps, [2.0, 0.0], cfg)
    x, y = res.modal_cell()
    from nelson_kepler.coords import from_cartesian

    u, _ = from_cartesian(p_eps, [x, y])
    assert abs(u - 0.5) < 0.1


@pytest.mark.slow
def test_final_points_near_ellipse(p_eps):
    cfg = SimConfig(dt=1e-3, t_max=100.0, seed=42, ensemble_size=100)
    res = sim.simulate_ensemble(p_eps, [2.0, 0.0], cfg)
    assert sim.fraction_near_ellipse(p_eps, res.final_states, 0.15) >= 0.9


def test_hitting_probability_t0(p_eps):
    h = sim.hitting_probability(p_eps, [2.0, 0.0], SimConfig(ensemble_size=10), t=0)
    assert h.estimate == 1.0 and h.ci_low == 1.0


@pytest.mark.slow
def test_hitting_probability_monotone_in_eps():
    ests = []
    for eps in (0.2, 0.1, 0.05):
        P = params_new(e=0.5, epsilon=eps)
        ests.append(sim.hitting_probability(P, [2.0, 0.0], SimConfig(dt=1e-3, t_max=20.0, seed=42, ensemble_size=200)))
    for a, b in zip(ests, ests[1:]):
        assert b.estimate >= a.estimate or b.ci_high >= a.ci_low
    assert ests[-1].estimate > 0.95
    assert all(h.survival_positive for h in ests)
    assert all(h.ci_low <= h.estimate <= h.ci_high for h in ests)


def test_hitting_probability_near_attractive_sigma():
    P = params_new(e=0.5, epsilon=0.05)
    h = sim.hitting_probability(P, [-0.9, 0.1], SimConfig(dt=1e-3, t_max=5.0, seed=42, ensemble_size=50))
    assert h.estimate < 0.5


def test_coupling_zero_eps_is_zero(p05):
    res = sim.coupling_convergence(p05, [2.0, 0.0], [0.0, 0.1], SimConfig(dt=1e-3, t_max=2.0, ensemble_size=5))
    assert np.all(res.sup_dist[0][res.retained[0]] == 0.0)
    assert res.slack == pytest.approx(1e-2)
    assert res.sup_b.shape == (2, 5)


def test_coupling_distances_decrease(p05):
    res = sim.coupling_convergence(p05, [2.0, 0.0], [0.2, 0.1, 0.05], SimConfig(dt=1e-3, t_max=5.0, ensemble_size=20))
    m = res.mean_sup_dist()
    assert m[0] > m[1] > m[2]
    assert np.all(res.excluded_fraction < 0.5)


def test_coupling_matches_separate_runs(p05):
    cfg = SimConfig(dt=1e-3, t_max=1.0, ensemble_size=3, seed=9)
    res = sim.coupling_convergence(p05, [2.0, 0.0], [0.1], cfg)
    one = SimConfig(dt=1e-3, t_max=1.0, seed=9)
    a = sim.simulate_sde(p05.with_epsilon(0.1), [2.0, 0.0], one, path_index=1, with_uv=False)
    b = sim.simulate_sde(p05, [2.0, 0.0], one, path_index=1, with_uv=False)
    d = np.max(np.linalg.norm(a.states - b.states, axis=1))
    assert res.sup_dist[0, 1] == pytest.approx(d, rel=1e-12)


def test_z_blip_high_eccentricity():
    rep = sim.z_blip_experiment(params_new(e=0.9), SimConfig(dimension=3), z0=0.05, n_periods=10)
    assert rep.deterministic.terminated is None
    assert rep.blip_every_period
    assert rep.peaks_decreasing


def test_z_blip_low_eccentricity_control():
    rep = sim.z_blip_experiment(params_new(e=0.5), SimConfig(dimension=3), z0=0.05, n_periods=10)
    assert not rep.any_blip
    z = np.abs(rep.deterministic.states[:, 2])
    assert z[-1] < z[0]


@pytest.mark.slow
def test_z_noisy_high_eccentricity_does_not_settle():
    P = params_new(e=0.99)
    b = P.a * P.sqrt1me2
    rep = sim.z_blip_experiment(
        P, SimConfig(dimension=3, seed=42), epsilon=0.05, start=[-P.a * P.e, b, 0.05], n_periods=10
    )
    assert rep.stochastic is not None
    assert not rep.stochastic_settles(0.01)
    assert rep.stochastic_bz.shape == rep.stochastic.times.shape
    assert set(np.unique(rep.stochastic_apb1_sign[np.isfinite(rep.stochastic_apb1_sign)])) <= {-1.0, 0.0, 1.0}


def test_exact_field_simulation():
    from nelson_kepler.core import quantum_params

    P = quantum_params(10, e=0.5)
    tr = sim.simulate_sde(P, [1.0, 0.5], SimConfig(dt=1e-3, t_max=0.5, seed=3), field="exact")
    assert np.all(np.isfinite(tr.states))
    with pytest.raises(DomainError):
        sim.simulate_sde(P, [1.0, 0.5], SimConfig(t_max=0.1), field="bogus")


def test_coupling_distance_is_linear_in_eps_with_constant_above_three(p05):
    # sup|X^eps - X^0| / (eps sup|B|) settles to an eps-independent profile as eps -> 0,
    # and its maximum over paths exceeds 3: phase drift along the neutral orbit direction
    cfg = SimConfig(dt=1e-3, t_max=20.0, ensemble_size=20, seed=42)
    res = sim.coupling_convergence(p05, [2.0, 0.0], [0.02, 0.01, 0.005], cfg)
    q = res.sup_dist / (np.asarray(res.eps_list)[:, None] * res.sup_b)
    med = np.nanmedian(q, axis=1)
    np.testing.assert_allclose(med, med[-1], rtol=0.15)
    assert np.all(np.nanmax(q, axis=1) > 3)

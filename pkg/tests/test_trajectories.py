import numpy as np
import pytest
import scipy.stats

from signalrho import (
    FeedbackSchedule,
    QuantumModel,
    coupled_generator,
    ensemble_observable,
    ensemble_resolved,
    linops,
    simulate,
    simulate_ensemble,
    steady_coupled,
)
from signalrho.errors import StepSizeError, ValidationError
from helpers import (
    ABSORPTION,
    EMISSION,
    LOWER,
    PROJ_E,
    SIGMA_X,
    gibbs_pe,
    gibbs_state,
    thermal_model,
)


def test_no_jumps_without_dissipation():
    # pure drive, no monitored channels: no events, near-unitary evolution
    m = QuantumModel(hamiltonian=0.5 * SIGMA_X, jumps={}, monitored=())
    rho0 = np.array([[1, 0], [0, 0]], dtype=complex)
    rec = simulate(m, rho0, tmax=2.0, dt=1e-4, seed=3,
                   observables={"pe": PROJ_E})
    assert rec.events == ()
    # Rabi oscillation P_e(t) = sin^2(lam t) for H = lam sigma_x
    expected = np.sin(0.5 * rec.sample_times) ** 2
    assert np.max(np.abs(rec.observables["pe"] - expected)) < 1e-3
    assert rec.final_signal[0] is None


def test_event_times_and_final_state_contract():
    m = thermal_model(1.0, 0.8)
    rec = simulate(m, gibbs_state(0.8), tmax=5.0, dt=1e-3, seed=10,
                   initial_channel=EMISSION)
    times = [t for t, _ in rec.events]
    assert all(0 < t <= 5.0 for t in times)
    assert all(t1 < t2 for t1, t2 in zip(times, times[1:]))
    assert all(k in (EMISSION, ABSORPTION) for _, k in rec.events)
    assert abs(np.trace(rec.final_state).real - 1.0) < 1e-8
    # final signal consistent with the event record
    k, tau = rec.final_signal
    if rec.events:
        t_last, k_last = rec.events[-1]
        assert k == k_last
        assert abs(tau - (5.0 - t_last)) < 1e-9


def test_same_seed_bitwise_identical():
    m = thermal_model(1.0, 0.5)
    runs = [simulate(m, gibbs_state(0.5), tmax=2.0, dt=1e-3, seed=123,
                     initial_channel=EMISSION, observables={"pe": PROJ_E})
            for _ in range(2)]
    assert runs[0].events == runs[1].events
    assert np.array_equal(runs[0].observables["pe"], runs[1].observables["pe"])
    assert np.array_equal(runs[0].final_state, runs[1].final_state)


def test_trajectory_streams_are_independent_and_stable():
    # trajectory i of an ensemble reproduces exactly under a different ntraj
    m = thermal_model(1.0, 0.5)
    small = simulate_ensemble(m, gibbs_state(0.5), 1.0, 1e-3, ntraj=2,
                              seed=5, initial_channel=EMISSION)
    large = simulate_ensemble(m, gibbs_state(0.5), 1.0, 1e-3, ntraj=4,
                              seed=5, initial_channel=EMISSION)
    for i in range(2):
        assert np.array_equal(small.final_states[i], large.final_states[i])


def test_decay_jump_times_are_exponential():
    # Kolmogorov-Smirnov at the 1% level against Exp(gamma)
    gamma = 1.0
    m = QuantumModel(hamiltonian=np.zeros((2, 2)),
                     jumps={-1: np.sqrt(gamma) * LOWER}, monitored=(-1,))
    res = simulate_ensemble(m, PROJ_E.copy(), tmax=12.0, dt=2e-3,
                            ntraj=10**4, seed=99, initial_channel=-1)
    first = {}
    order = np.argsort(res.event_time, kind="stable")
    for idx in order:
        tr = int(res.event_traj[idx])
        if tr not in first:
            first[tr] = res.event_time[idx]
    times = np.array(sorted(first.values()))
    assert len(times) > 9990  # censoring beyond T=12 is negligible
    stat, pvalue = scipy.stats.kstest(times, "expon", args=(0.0, 1.0 / gamma))
    assert pvalue > 0.01


def test_step_guard_rejects_large_probability():
    m = thermal_model(1.0, 5.0)
    with pytest.raises(StepSizeError):
        simulate(m, gibbs_state(5.0), tmax=0.5, dt=0.05, seed=1,
                 initial_channel=EMISSION)


def test_ensemble_resolved_single_record():
    m = thermal_model(1.0, 0.5)
    rec = simulate(m, gibbs_state(0.5), tmax=3.0, dt=1e-3, seed=8,
                   initial_channel=EMISSION)
    est = ensemble_resolved([rec])
    k, _ = rec.final_signal
    assert set(est.blocks) == {k}
    assert np.array_equal(est.blocks[k], rec.final_state)


def test_ensemble_resolved_matches_coupled_channel_weights():
    nbar = 1.0
    m = thermal_model(1.0, nbar)
    gen = coupled_generator({EMISSION: m, ABSORPTION: m})
    blocks = steady_coupled(gen)
    res = simulate_ensemble(m, gibbs_state(nbar), tmax=10.0, dt=1e-3,
                            ntraj=3000, seed=21, initial_channel=EMISSION)
    est = ensemble_resolved(res)
    assert abs(sum(np.trace(b).real for b in est.blocks.values()) - 1.0) < 1e-12
    for k in (EMISSION, ABSORPTION):
        target = np.trace(blocks[k]).real
        got = np.trace(est.blocks[k]).real
        assert abs(got - target) < 3 * est.trace_stderr[k] + 0.01


def test_ensemble_observable_identity_and_decay():
    gamma = 1.0
    m = QuantumModel(hamiltonian=np.zeros((2, 2)),
                     jumps={-1: np.sqrt(gamma) * LOWER}, monitored=(-1,))
    res = simulate_ensemble(
        m, PROJ_E.copy(), tmax=3.0, dt=1e-3, ntraj=2000, seed=31,
        initial_channel=-1,
        observables={"one": np.eye(2), "pe": PROJ_E}, sample_every=100,
    )
    times, mean_one, err_one = ensemble_observable(res, "one")
    assert np.max(np.abs(mean_one - 1.0)) < 1e-12
    assert np.max(err_one) < 1e-12
    times, mean_pe, err_pe = ensemble_observable(res, "pe")
    expected = np.exp(-gamma * times)
    assert np.all(np.abs(mean_pe - expected) < 3 * err_pe + 2e-3)


def test_ensemble_stderr_scales_as_sqrt_n():
    m = thermal_model(1.0, 0.5)
    rho0 = gibbs_state(0.5)

    def stderr_at(n, seed):
        res = simulate_ensemble(m, rho0, tmax=2.0, dt=2e-3, ntraj=n,
                                seed=seed, initial_channel=EMISSION,
                                observables={"pe": PROJ_E}, sample_every=1000)
        _, _, err = ensemble_observable(res, "pe")
        return err[-1]

    small = stderr_at(400, 17)
    big = stderr_at(1600, 18)
    assert abs(big / small - 0.5) < 0.2 * 0.5


def test_records_on_mismatched_grids_refuse_to_aggregate():
    m = thermal_model(1.0, 0.5)
    r1 = simulate(m, gibbs_state(0.5), 1.0, 1e-3, seed=1,
                  initial_channel=EMISSION, observables={"pe": PROJ_E})
    r2 = simulate(m, gibbs_state(0.5), 1.0, 1e-3, seed=2,
                  initial_channel=EMISSION, observables={"pe": PROJ_E},
                  sample_every=2)
    with pytest.raises(ValidationError, match="grid"):
        ensemble_observable([r1, r2], "pe")


def test_schedule_feedback_drives_inversion_in_trajectories():
    # with the drive-after-emission schedule the steady excited population
    # must exceed the no-feedback Gibbs value by a clear margin
    from signalrho.inversion import InversionParams, build_schedule, tau1_opt

    nbar, gamma, lam = 0.2, 1.0, 1.0
    params = InversionParams(gamma=gamma, nbar=nbar, lam=lam, tau0=0.2,
                             tau1=tau1_opt(gamma, lam))
    sched = build_schedule(params)
    res = simulate_ensemble(
        sched, gibbs_state(nbar), tmax=10.0, dt=1e-3, ntraj=500, seed=77,
        initial_channel=ABSORPTION,
        observables={"pe": PROJ_E}, sample_every=100,
    )
    window = res.sample_times >= 5.0
    pe = res.observables["pe"][:, window].mean()
    assert pe > gibbs_pe(nbar) + 0.15


def test_tau_grid_age_density_matches_trajectory_histogram():
    # the (channel, elapsed-time) histogram over trajectories follows the
    # deterministic steady age density within 3 sigma per bin
    from signalrho.engine_jump import combined_steady, waiting_time_stats

    nbar = 0.6
    m = thermal_model(1.0, nbar)
    sched = FeedbackSchedule.constant({EMISSION: m, ABSORPTION: m})
    boundary = combined_steady(sched)
    stats = waiting_time_stats(boundary, sched, points_per_segment=4000)

    ntraj = 4000
    res = simulate_ensemble(m, gibbs_state(nbar), tmax=12.0, dt=2e-3,
                            ntraj=ntraj, seed=13, initial_channel=EMISSION)
    edges = np.linspace(0.0, 3.0, 7)
    for ci, k in enumerate(res.labels):
        taus, w = stats.density[k]
        sel = res.final_tau[res.final_channel == ci]
        for lo, hi in zip(edges[:-1], edges[1:]):
            mask = (taus >= lo) & (taus < hi)
            p_exact = np.trapezoid(w[mask], taus[mask])
            count = np.sum((sel >= lo) & (sel < hi))
            p_mc = count / ntraj
            sigma = np.sqrt(max(p_exact * (1 - p_exact), 1e-12) / ntraj)
            assert abs(p_mc - p_exact) < 3 * sigma + 5e-3

import numpy as np
import pytest

from signalrho.errors import DomainError, ValidationError
from signalrho.inversion import (
    ABSORPTION,
    EMISSION,
    InversionParams,
    argmax_tau1,
    build_schedule,
    inversion_threshold,
    pe_analytic,
    pe_numeric,
    pe_zero_temp,
    richardson_zero_temp,
    sweep_figures,
    tau0_max,
    tau1_opt,
)
from helpers import gibbs_pe


def test_schedule_collapses_without_drive():
    for params in (
        InversionParams(gamma=1.0, nbar=0.5, lam=0.0, tau0=0.3, tau1=1.0),
        InversionParams(gamma=1.0, nbar=0.5, lam=1.0, tau0=0.3, tau1=0.0),
    ):
        sched = build_schedule(params)
        assert len(sched.channels[EMISSION]) == 1
        assert len(sched.channels[ABSORPTION]) == 1


def test_schedule_segment_counts():
    sched = build_schedule(
        InversionParams(gamma=1.0, nbar=0.5, lam=1.0, tau0=0.4, tau1=1.2))
    assert len(sched.channels[EMISSION]) == 3
    assert len(sched.channels[ABSORPTION]) == 1
    sched0 = build_schedule(
        InversionParams(gamma=1.0, nbar=0.5, lam=1.0, tau0=0.0, tau1=1.2))
    assert len(sched0.channels[EMISSION]) == 2


def test_pe_without_drive_is_gibbs():
    for nbar in (0.3, 1.0, 2.5):
        params = InversionParams(gamma=1.0, nbar=nbar, lam=0.0)
        assert abs(pe_analytic(params) - gibbs_pe(nbar)) < 1e-14
    assert abs(pe_analytic(InversionParams(gamma=1.0, nbar=1.0, lam=0.0))
               - 1.0 / 3.0) < 1e-14


def test_pe_numeric_matches_analytic():
    for (nbar, p, tau0) in [(0.1, 1.0, 0.0), (0.4, 2.2, 0.35), (1.0, 0.3, 0.8)]:
        t1 = tau1_opt(p, 1.0)
        params = InversionParams(gamma=p, nbar=nbar, lam=1.0, tau0=tau0, tau1=t1)
        assert abs(pe_numeric(params) - pe_analytic(params)) < 1e-8


def test_pe_numeric_substitutes_floor_below_nbar_zero():
    params = InversionParams(gamma=1.0, nbar=0.0, lam=1.0, tau0=0.0,
                             tau1=tau1_opt(1.0, 1.0))
    with pytest.warns(UserWarning, match="floor"):
        pe = pe_numeric(params)
    assert abs(pe - pe_zero_temp(1.0, 1.0, 0.0)) < 1e-4


def test_pe_analytic_complex_branch_is_real():
    # gamma < 4 lam: the internal frequency is imaginary; the result must
    # come out real regardless
    params = InversionParams(gamma=0.5, nbar=0.7, lam=1.0, tau0=0.1, tau1=0.9)
    pe = pe_analytic(params)
    assert 0.0 < pe < 1.0
    # and the hyperbolic branch too
    params = InversionParams(gamma=5.0, nbar=0.7, lam=1.0, tau0=0.1, tau1=0.9)
    assert 0.0 < pe_analytic(params) < 1.0


def test_pe_analytic_small_drive_limit():
    params = InversionParams(gamma=1.0, nbar=0.6, lam=1e-6, tau0=0.2, tau1=1.0)
    assert abs(pe_analytic(params) - gibbs_pe(0.6)) < 1e-9


def test_pe_analytic_rejects_zero_temperature_and_detuning():
    with pytest.raises(DomainError):
        pe_analytic(InversionParams(gamma=1.0, nbar=0.0, lam=1.0))
    with pytest.raises(DomainError):
        pe_analytic(InversionParams(gamma=1.0, nbar=0.5, lam=1.0, delta=0.3))


def test_tau1_opt_small_ratio_limit_is_pi_pulse():
    lam = 2.0
    assert abs(tau1_opt(1e-9, lam) - np.pi / (2 * lam)) < 1e-8


def test_tau1_opt_continuous_at_sqrt8():
    lam = 1.0
    eps = 1e-10
    left = tau1_opt(np.sqrt(8.0) - eps, lam)
    right = tau1_opt(np.sqrt(8.0) + eps, lam)
    assert abs(left - right) < 1e-9


def test_tau1_opt_diverges_at_ratio_four():
    with pytest.raises(DomainError):
        tau1_opt(4.0, 1.0)
    with pytest.raises(DomainError):
        tau1_opt(5.0, 1.0)


def test_tau1_opt_is_argmax_independent_of_bath_and_delay():
    for p in (0.5, 3.0):
        t_formula = tau1_opt(p, 1.0)
        t_search = argmax_tau1(p, 1.0, nbar=0.3, tau0=0.7)
        assert abs(t_formula - t_search) < 1e-6


def test_pe_zero_temp_strong_drive_limit():
    assert pe_zero_temp(1e-4, 1.0, 0.0) > 0.999
    # delay only ever hurts
    pes = [pe_zero_temp(1.0, 1.0, t0) for t0 in (0.0, 0.2, 0.5, 1.0)]
    assert all(a > b for a, b in zip(pes, pes[1:]))


def test_richardson_extrapolation_reaches_zero_temp():
    got = richardson_zero_temp(0.8, 1.0, 0.1)
    assert abs(got - pe_zero_temp(0.8, 1.0, 0.1)) < 1e-5


def test_tau0_max_restores_half_population():
    for p in (0.1, 0.5, 1.0):
        t0 = tau0_max(p, 1.0)
        assert t0 > 0
        assert abs(pe_zero_temp(p, 1.0, t0) - 0.5) < 1e-9


def test_tau0_max_vanishes_at_threshold_and_clamps():
    assert abs(tau0_max(1.145, 1.0)) <= 1e-3
    assert tau0_max(2.0, 1.0) == 0.0


def test_tau0_max_scaling_at_strong_drive():
    gamma = 0.01
    t0 = tau0_max(gamma, 1.0)
    assert 0.5 <= gamma * t0 <= 1.0


def test_inversion_threshold_value():
    assert abs(inversion_threshold() - 1.145) < 0.01


def test_sweep_panel_b():
    header, rows = sweep_figures("b")
    assert header[-1] == "pe"
    # the no-feedback reference rows are Gibbs
    for row in rows:
        if np.isinf(row[1]):
            assert abs(row[4] - gibbs_pe(row[2])) < 1e-12
    # every driven curve with ratio <= 1.145 achieves inversion at small
    # nbar (a critical occupation exists, possibly beyond the grid); past
    # the threshold the inversion is lost from the start
    by_ratio = {}
    for row in rows:
        if not np.isinf(row[1]):
            by_ratio.setdefault(row[1], []).append((row[2], row[4]))
    for ratio, pts in by_ratio.items():
        pts.sort()
        pes = [pe for _, pe in pts]
        if ratio <= 1.145:
            assert pes[0] >= 0.5 - 1e-6
        else:
            assert pes[0] < 0.5
    # near the threshold the crossing happens inside the grid
    pes_near = [pe for _, pe in sorted(by_ratio[1.0])]
    assert pes_near[0] > 0.5 > pes_near[-1]


def test_sweep_panel_c_columns():
    header, rows = sweep_figures("c")
    assert header == ["panel", "gamma_over_lambda", "gamma_tau0", "pe"]
    assert all(0 < row[-1] < 1 for row in rows)


def test_sweep_panel_d_monotone_duration():
    header, rows = sweep_figures("d")
    gt1 = [row[2] for row in rows]
    assert all(a < b for a, b in zip(gt1, gt1[1:]))
    # maximum delay column is clamped at zero past the threshold
    for row in rows:
        if row[1] > 1.15:
            assert row[3] == 0.0


def test_sweep_rejects_unknown_panel():
    with pytest.raises(ValidationError):
        sweep_figures("z")


def test_params_validation():
    with pytest.raises(ValidationError):
        InversionParams(gamma=-1.0, nbar=0.5, lam=1.0)
    with pytest.raises(ValidationError):
        InversionParams(gamma=1.0, nbar=-0.5, lam=1.0)
    with pytest.raises(ValidationError):
        InversionParams(gamma=1.0, nbar=0.5, lam=1.0, tau0=-0.1)

import numpy as np
import pytest

from signalrho import (
    ChargeWindow,
    QuantumModel,
    charge_resolved_generator,
    diffusion_feedback_generator,
    evolve_charge,
    linops,
    liouvillian,
    mean_charge,
    single_jump_feedback_generator,
)
from signalrho.limits import choi_matrix
from signalrho.model import dissipator, hamiltonian_superop
from signalrho.errors import ValidationError
from helpers import (
    ABSORPTION,
    EMISSION,
    LOWER,
    PROJ_E,
    SIGMA_X,
    SIGMA_Z,
    gibbs_state,
    random_density,
    thermal_model,
)

RNG = np.random.default_rng(31)


def random_hermitian(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def test_single_jump_identity_feedback_is_lindblad():
    m = thermal_model(1.0, 0.7, 0.4 * SIGMA_X)
    fb = {k: np.eye(4, dtype=complex) for k in m.monitored}
    gen = single_jump_feedback_generator(m, fb)
    assert np.max(np.abs(gen - liouvillian(m))) < 1e-12


def test_single_jump_flip_feedback_pins_excited_state():
    # decay-only feedback alone leaves |g><g| dark (populations frozen, a
    # two-fold degenerate fixed space the eigensolver must refuse); with a
    # thermal bath the flip-every-emission feedback funnels everything
    # into the excited state, which becomes the unique steady state.
    m_decay = QuantumModel(hamiltonian=np.zeros((2, 2)), jumps={-1: LOWER},
                           monitored=(-1,))
    flip = linops.sandwich(SIGMA_X, SIGMA_X)
    gen = single_jump_feedback_generator(m_decay, {-1: flip})
    assert np.max(np.abs(gen @ linops.vec(PROJ_E))) < 1e-14
    from signalrho.errors import DegenerateFixedPointError
    with pytest.raises(DegenerateFixedPointError):
        linops.eig_near(gen, 0.0, 1e-9)

    m = thermal_model(1.0, 0.5)
    gen = single_jump_feedback_generator(
        m, {EMISSION: flip, ABSORPTION: np.eye(4)})
    _, v = linops.eig_near(gen, 0.0, 1e-9)
    rho = linops.hermitize(linops.unvec(v))
    rho /= np.trace(rho).real
    assert np.max(np.abs(rho - PROJ_E)) < 1e-10


def test_single_jump_generator_annihilates_trace_dual():
    m = thermal_model(1.0, 0.5)
    flip = linops.sandwich(SIGMA_X, SIGMA_X)
    gen = single_jump_feedback_generator(m, {EMISSION: flip,
                                             ABSORPTION: np.eye(4)})
    dual = linops.trace_dual(2).conj()
    assert np.max(np.abs(dual @ gen)) < 1e-12


def test_single_jump_rejects_nonchannel_feedback():
    m = thermal_model(1.0, 0.5)
    bad = 2.0 * np.eye(4, dtype=complex)
    with pytest.raises(ValidationError, match="trace preserving"):
        single_jump_feedback_generator(m, {EMISSION: bad,
                                           ABSORPTION: np.eye(4)})


def test_single_jump_channel_feedback_keeps_complete_positivity():
    # feedback map = exp(GKSL generator) is a channel; the resulting
    # feedback master equation must generate CP dynamics
    m = thermal_model(1.0, 0.3)
    k_gen = dissipator(0.8 * SIGMA_X) + hamiltonian_superop(0.5 * SIGMA_Z)
    fb = {EMISSION: linops.expm(k_gen, 1.0), ABSORPTION: np.eye(4)}
    gen = single_jump_feedback_generator(m, fb)
    choi = choi_matrix(linops.expm(gen, 1e-3))
    assert linops.min_eigval(choi) >= -1e-8


def test_choi_matrix_detects_non_cp_map():
    # transpose map: trace preserving but not completely positive
    d = 2
    transpose = np.zeros((4, 4), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            transpose[:, j * d + i] = linops.vec(unit.T)
    assert linops.min_eigval(choi_matrix(transpose)) < -0.5


def test_diffusion_without_feedback_is_measurement_dissipator():
    H = 0.3 * SIGMA_Z
    A = random_hermitian(2, RNG)
    lam = 1.7
    gen = diffusion_feedback_generator(H, A, lam, np.zeros((2, 2)))
    direct = hamiltonian_superop(H) + dissipator(np.sqrt(lam) * A)
    assert np.max(np.abs(gen - direct)) < 1e-12


def test_diffusion_equivalence_identity():
    # -i[H + (sqrt(lam)/2)(AF + FA), .] + D[sqrt(lam) A - i F]
    for _ in range(20):
        H = random_hermitian(2, RNG)
        A = random_hermitian(2, RNG)
        F = random_hermitian(2, RNG)
        lam = float(RNG.uniform(0.2, 3.0))
        gen = diffusion_feedback_generator(H, A, lam, F)
        sq = np.sqrt(lam)
        direct = hamiltonian_superop(H + sq / 2 * (A @ F + F @ A)) + dissipator(
            sq * A - 1j * F)
        assert np.max(np.abs(gen - direct)) < 1e-12


def test_diffusion_trace_dual_and_hermiticity_validation():
    A = random_hermitian(2, RNG)
    F = random_hermitian(2, RNG)
    gen = diffusion_feedback_generator(0.2 * SIGMA_Z, A, 0.9, F)
    dual = linops.trace_dual(2).conj()
    assert np.max(np.abs(dual @ gen)) < 1e-12
    with pytest.raises(ValidationError):
        diffusion_feedback_generator(0.2 * SIGMA_Z, LOWER, 0.9, F)


def test_charge_marginal_obeys_plain_lindblad():
    # N-independent feedback: summing the charge blocks must reproduce the
    # unconditional Lindblad evolution exactly (reflecting boundary)
    m = thermal_model(1.0, 0.6, 0.5 * SIGMA_X)
    gen = charge_resolved_generator(
        m, weights={EMISSION: -1, ABSORPTION: +1},
        window=ChargeWindow(-3, 3),
    )
    rho0 = random_density(2, RNG)
    blocks = {0: rho0}
    t = 0.8
    out = evolve_charge(gen, blocks, t)
    marginal = sum(out.values())
    direct = linops.unvec(linops.expm(liouvillian(m), t) @ linops.vec(rho0))
    assert np.max(np.abs(marginal - direct)) < 1e-10


def test_charge_current_vanishes_at_gibbs():
    nbar = 0.8
    m = thermal_model(1.0, nbar)
    gen = charge_resolved_generator(
        m, weights={EMISSION: -1, ABSORPTION: +1},
        window=ChargeWindow(-15, 15),
    )
    blocks = {0: gibbs_state(nbar)}
    out = evolve_charge(gen, blocks, 2.0)
    assert abs(mean_charge(out)) < 1e-9


def test_decay_qubit_mean_charge_is_one_minus_exponential():
    gamma = 1.0
    m = QuantumModel(hamiltonian=np.zeros((2, 2)),
                     jumps={-1: np.sqrt(gamma) * LOWER}, monitored=(-1,))
    gen = charge_resolved_generator(
        m, weights={-1: +1}, window=ChargeWindow(0, 2),
    )
    for t in (0.3, 1.0, 2.5):
        out = evolve_charge(gen, {0: PROJ_E.copy()}, t)
        assert abs(mean_charge(out) - (1 - np.exp(-gamma * t))) < 1e-8


def test_charge_absorbing_window_reports_leakage():
    # total jump count (weight +1 on both channels) grows without bound,
    # so a small absorbing window must report the trace leak
    m = thermal_model(1.0, 1.5)
    gen = charge_resolved_generator(
        m, weights={EMISSION: +1, ABSORPTION: +1},
        window=ChargeWindow(0, 3, policy="absorbing"),
    )
    with pytest.raises(ValidationError, match="leak"):
        evolve_charge(gen, {0: gibbs_state(1.5)}, 5.0)


def test_charge_reflecting_window_flags_redirection():
    m = thermal_model(1.0, 1.0)
    gen = charge_resolved_generator(
        m, weights={EMISSION: -1, ABSORPTION: +1},
        window=ChargeWindow(-1, 1),
    )
    assert gen.redirected
    # trace preserved exactly despite the clamped couplings
    out = evolve_charge(gen, {0: gibbs_state(1.0)}, 3.0)
    assert abs(sum(np.trace(b).real for b in out.values()) - 1.0) < 1e-12


def test_charge_dependent_feedback_blocks():
    # drive only while the charge is negative; generator must use the
    # N-dependent Hamiltonian on each diagonal block
    def model_at(n):
        lam = 0.9 if n < 0 else 0.0
        return thermal_model(1.0, 0.4, lam * SIGMA_X)

    gen = charge_resolved_generator(
        model_at, weights={EMISSION: -1, ABSORPTION: +1},
        window=ChargeWindow(-2, 2),
    )
    d2 = 4
    i_neg = gen.values.index(-1)
    i_pos = gen.values.index(+1)
    from signalrho.model import nojump_generator
    blk = lambda i: gen.matrix[i * d2:(i + 1) * d2, i * d2:(i + 1) * d2]
    assert np.max(np.abs(blk(i_neg) - nojump_generator(model_at(-1)))) < 1e-14
    assert np.max(np.abs(blk(i_pos) - nojump_generator(model_at(+1)))) < 1e-14

"""Shared construction helpers for the test suite."""

import numpy as np

from signalrho import InstrumentSet, QuantumModel

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)   # |g><e|
RAISE = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)   # |e><g|
PROJ_G = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
PROJ_E = np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)

EMISSION = -1
ABSORPTION = +1


def thermal_jumps(gamma, nbar):
    return {
        EMISSION: np.sqrt(gamma * (nbar + 1)) * LOWER,
        ABSORPTION: np.sqrt(gamma * nbar) * RAISE,
    }


def thermal_model(gamma, nbar, hamiltonian=None):
    h = np.zeros((2, 2), dtype=complex) if hamiltonian is None else hamiltonian
    return QuantumModel(hamiltonian=h, jumps=thermal_jumps(gamma, nbar),
                        monitored=(EMISSION, ABSORPTION))


def gibbs_pe(nbar):
    return nbar / (2 * nbar + 1)


def gibbs_state(nbar):
    pe = gibbs_pe(nbar)
    return np.diag([1 - pe, pe]).astype(complex)


def paper_nojump_off(gamma, nbar):
    """The drive-off no-jump generator in the (gg, eg, ge, ee) ordering."""
    return np.diag([
        -nbar * gamma,
        -0.5 * (1 + 2 * nbar) * gamma,
        -0.5 * (1 + 2 * nbar) * gamma,
        -(1 + nbar) * gamma,
    ]).astype(complex)


def paper_nojump_on(gamma, nbar, lam):
    """Drive-on no-jump generator at resonance, same ordering."""
    drive = np.array([
        [0, -1j * lam, 1j * lam, 0],
        [-1j * lam, 0, 0, 1j * lam],
        [1j * lam, 0, 0, -1j * lam],
        [0, 1j * lam, -1j * lam, 0],
    ])
    return paper_nojump_off(gamma, nbar) + drive


def random_kraus_instrument(dim, n_outcomes, rng, outcomes=None):
    """Random instrument: Ginibre Kraus operators normalized to a channel."""
    raw = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
           for _ in range(n_outcomes)]
    total = sum(v.conj().T @ v for v in raw)
    vals, vecs = np.linalg.eigh(total)
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.conj().T
    kraus = [v @ inv_sqrt for v in raw]
    if outcomes is None:
        outcomes = tuple(range(n_outcomes))
    return InstrumentSet.from_kraus({x: [v] for x, v in zip(outcomes, kraus)})


def random_density(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real

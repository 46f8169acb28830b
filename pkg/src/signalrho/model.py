"""Quantum model objects: Hamiltonians, jump operators, instruments.

A :class:`QuantumModel` bundles a Hermitian Hamiltonian H with a labeled
set of jump operators L_k (rates absorbed, so L_k carries units of
sqrt(rate)) and the subset of jump labels that are monitored.  From it we
build the GKSL generator

    L rho = -i[H, rho] + sum_k ( L_k rho L_k^dag - {L_k^dag L_k, rho}/2 )

as a superoperator, the jump superoperators J_k rho = L_k rho L_k^dag,
and the no-jump generator L0 = L - sum_{k in monitored} J_k.

Instruments are labeled families of trace-nonincreasing maps whose sum is
trace preserving; the first-order decomposition of a monitored master
equation over a small step dt is {M_0 = 1 + dt L0, M_k = dt J_k}.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import linops
from .errors import StepSizeError, ValidationError


def _as_operator(m, dim=None, name="operator") -> np.ndarray:
    a = np.array(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ValidationError(
            f"{name} has dimension {a.shape[0]}, expected {dim}"
        )
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains NaN or Inf")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class QuantumModel:
    """Hamiltonian + labeled jump operators + monitored subset.

    Immutable after construction; all matrices are defensively copied and
    marked read-only.
    """

    hamiltonian: np.ndarray
    jumps: Mapping[Any, np.ndarray]
    monitored: tuple = ()

    def __post_init__(self):
        h = _as_operator(self.hamiltonian, name="hamiltonian")
        if not linops.is_hermitian(h, tol=1e-12):
            raise ValidationError("hamiltonian is not Hermitian within 1e-12")
        object.__setattr__(self, "hamiltonian", h)
        jumps = {
            k: _as_operator(L, dim=h.shape[0], name=f"jump operator {k!r}")
            for k, L in dict(self.jumps).items()
        }
        object.__setattr__(self, "jumps", jumps)
        mon = tuple(self.monitored)
        missing = [k for k in mon if k not in jumps]
        if missing:
            raise ValidationError(f"monitored labels not among jumps: {missing}")
        object.__setattr__(self, "monitored", mon)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


def jump_superop(L: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> L rho L^dag."""
    L = np.asarray(L, dtype=complex)
    return linops.sandwich(L, L.conj().T)


def dissipator(L: np.ndarray) -> np.ndarray:
    """Full GKSL dissipator D[L] = J_L - {L^dag L, .}/2 as a superoperator."""
    L = np.asarray(L, dtype=complex)
    LdL = L.conj().T @ L
    return jump_superop(L) - 0.5 * (linops.left_mul(LdL) + linops.right_mul(LdL))


def hamiltonian_superop(H: np.ndarray) -> np.ndarray:
    """Superoperator for rho -> -i[H, rho]."""
    return -1j * (linops.left_mul(H) - linops.right_mul(H))


def nojump_generator(model: QuantumModel) -> np.ndarray:
    """Generator of the conditional no-click evolution.

    The full Liouvillian minus the monitored jump superoperators; built
    directly (commutator + anticommutators + unmonitored dissipators) so
    that nojump_generator + sum of monitored jump superoperators equals
    liouvillian exactly, float for float.
    """
    gen = hamiltonian_superop(model.hamiltonian)
    for k, L in model.jumps.items():
        LdL = L.conj().T @ L
        gen = gen - 0.5 * (linops.left_mul(LdL) + linops.right_mul(LdL))
        if k not in model.monitored:
            gen = gen + jump_superop(L)
    return gen


def liouvillian(model: QuantumModel) -> np.ndarray:
    """Vectorized GKSL generator of the model's master equation."""
    gen = nojump_generator(model)
    for k in model.monitored:
        gen = gen + jump_superop(model.jumps[k])
    return gen


@dataclass
class InstrumentSet:
    """Labeled family of CP maps summing to a trace-preserving channel.

    Maps are stored as superoperators (possibly signal-dependent, i.e. a
    callable signal -> superoperator); Kraus decompositions, when known,
    are kept alongside for trajectory sampling.
    """

    dim: int
    outcomes: tuple
    maps: Mapping[Any, Any]  # outcome -> ndarray | callable(signal)->ndarray
    kraus: Mapping[Any, Any] | None = None
    signal_dependent: bool = False

    def superop(self, x, signal=None) -> np.ndarray:
        m = self.maps[x]
        if callable(m):
            try:
                return m(signal)
            except KeyError as exc:
                raise ValidationError(
                    f"instrument {x!r} undefined at signal {signal!r}"
                ) from exc
        return m

    def apply(self, x, rho: np.ndarray, signal=None) -> np.ndarray:
        return linops.unvec(self.superop(x, signal) @ linops.vec(rho))

    def total(self, signal=None) -> np.ndarray:
        return sum(self.superop(x, signal) for x in self.outcomes)

    @classmethod
    def from_kraus(cls, kraus: Mapping[Any, Sequence[np.ndarray]]) -> "InstrumentSet":
        kraus = {x: tuple(np.asarray(v, dtype=complex) for v in vs)
                 for x, vs in kraus.items()}
        for x, vs in kraus.items():
            for v in vs:
                if v.ndim != 2 or v.shape[0] != v.shape[1]:
                    raise ValidationError(
                        f"Kraus operator for outcome {x!r} must be a square "
                        f"matrix, got shape {v.shape}"
                    )
        dims = {v.shape[0] for vs in kraus.values() for v in vs}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent Kraus dimensions: {dims}")
        maps = {
            x: sum(jump_superop(v) for v in vs) for x, vs in kraus.items()
        }
        return cls(dim=dims.pop(), outcomes=tuple(kraus), maps=maps, kraus=kraus)

    @classmethod
    def from_superops(cls, maps: Mapping[Any, np.ndarray]) -> "InstrumentSet":
        maps = {x: np.asarray(m, dtype=complex) for x, m in maps.items()}
        dims = {int(round(np.sqrt(m.shape[0]))) for m in maps.values()}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent superoperator dimensions: {dims}")
        return cls(dim=dims.pop(), outcomes=tuple(maps), maps=maps)


@dataclass
class InstrumentReport:
    """Outcome of validate_instruments: pass flag plus worst violations."""

    passed: bool
    failures: list = field(default_factory=list)  # (check name, magnitude)
    worst: dict = field(default_factory=dict)     # check name -> magnitude

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [f"instrument validation: {status}"]
        for name, mag in sorted(self.worst.items()):
            lines.append(f"  {name}: worst {mag:.3e}")
        return "\n".join(lines)


def validate_instruments(
    instruments: InstrumentSet,
    trials: int = 20,
    tol: float = 1e-10,
    signal_values: Sequence = (None,),
    seed: int = 7,
) -> InstrumentReport:
    """Probe the instrument invariants on random states.

    Checks, for each probed signal value and random full-rank state rho:
    every outcome map leaves the trace in [-tol, Tr rho + tol], and the
    summed channel preserves the trace within tol.
    """
    if trials < 1:
        raise ValidationError("validate_instruments needs trials >= 1")
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}

    def note(name, magnitude):
        worst[name] = max(worst.get(name, 0.0), float(magnitude))

    for y in signal_values:
        for _ in range(trials):
            rho = linops.random_density(instruments.dim, rng)
            tr = np.trace(rho).real
            total = 0.0
            for x in instruments.outcomes:
                t = np.trace(instruments.apply(x, rho, y)).real
                note(f"trace-nonincreasing[{x!r}]", max(t - tr, 0.0))
                note(f"trace-nonnegative[{x!r}]", max(-t, 0.0))
                total += t
            note("sum-trace-preserving", abs(total - tr))

    failures = [(name, mag) for name, mag in worst.items() if mag > tol]
    return InstrumentReport(passed=not failures, failures=failures, worst=worst)


def jump_instruments(
    model: QuantumModel | Callable[[Any], QuantumModel],
    dt: float,
    probe_signals: Sequence | None = None,
    tol: float = 1e-10,
) -> InstrumentSet:
    """First-order instruments of a monitored master equation.

    Outcome 0 is the no-jump map 1 + dt*L0, outcome k (for each monitored
    label) is dt*J_k.  ``model`` may be a callable signal -> QuantumModel
    for signal-dependent feedback; ``probe_signals`` then supplies values
    at which the step-size validation runs.
    """
    if dt <= 0:
        raise ValidationError("jump_instruments needs dt > 0")

    if callable(model):
        if not probe_signals:
            raise ValidationError(
                "signal-dependent jump_instruments needs probe_signals"
            )
        probes = [model(y) for y in probe_signals]
    else:
        probes = [model]
        probe_signals = [None]

    ref = probes[0]
    labels = ref.monitored
    if not all(p.monitored == labels and p.dim == ref.dim for p in probes):
        raise ValidationError(
            "all signal-dependent models must share dim and monitored labels"
        )

    # First-order validity: dt * (total monitored rate) must stay below 1,
    # otherwise the no-jump map can produce negative traces.
    for y, m in zip(probe_signals, probes):
        rate_op = sum(
            m.jumps[k].conj().T @ m.jumps[k] for k in labels
        ) if labels else np.zeros((m.dim, m.dim))
        max_rate = np.linalg.eigvalsh(rate_op)[-1].real if labels else 0.0
        if dt * max_rate >= 1.0:
            raise StepSizeError(
                f"dt={dt:g} too large: dt * max jump rate = {dt * max_rate:.3g} "
                f">= 1 at signal {y!r}"
            )

    if callable(model):
        # models are pure functions of the signal; memoize per signal value
        model_at = functools.lru_cache(maxsize=None)(model)

        @functools.lru_cache(maxsize=None)
        def nojump_map(y):
            m = model_at(y)
            return np.eye(m.dim**2, dtype=complex) + dt * nojump_generator(m)

        maps: dict[Any, Any] = {0: nojump_map}
        for k in labels:
            maps[k] = (lambda kk: functools.lru_cache(maxsize=None)(
                lambda y: dt * jump_superop(model_at(y).jumps[kk])))(k)
        instr = InstrumentSet(
            dim=ref.dim, outcomes=(0, *labels), maps=maps, signal_dependent=True
        )
        report = validate_instruments(instr, trials=8, tol=tol,
                                      signal_values=probe_signals)
    else:
        maps = {0: np.eye(ref.dim**2, dtype=complex) + dt * nojump_generator(ref)}
        kraus = {0: (np.eye(ref.dim, dtype=complex)
                     - 1j * dt * effective_hamiltonian(ref),)}
        for k in labels:
            maps[k] = dt * jump_superop(ref.jumps[k])
            kraus[k] = (np.sqrt(dt) * ref.jumps[k],)
        instr = InstrumentSet(dim=ref.dim, outcomes=(0, *labels),
                              maps=maps, kraus=kraus)
        report = validate_instruments(instr, trials=8, tol=tol)

    if not report.passed:
        raise StepSizeError(
            f"instrument validation failed at dt={dt:g}:\n{report}"
        )
    return instr


def effective_hamiltonian(model: QuantumModel) -> np.ndarray:
    """H_eff = H - (i/2) sum_{k in monitored} L_k^dag L_k."""
    h = model.hamiltonian.astype(complex)
    for k in model.monitored:
        L = model.jumps[k]
        h = h - 0.5j * (L.conj().T @ L)
    return h


def gaussian_kraus(A: np.ndarray, lam: float, dt: float, x: float) -> np.ndarray:
    """Kraus operator of a weak Gaussian measurement of Hermitian A.

    K_x = (2 lam dt / pi)^{1/4} exp(-lam dt (x - A)^2), evaluated through
    the eigendecomposition of A.
    """
    A = np.asarray(A, dtype=complex)
    if not linops.is_hermitian(A, tol=1e-12):
        raise ValidationError("gaussian_kraus needs a Hermitian observable")
    if lam <= 0 or dt <= 0:
        raise ValidationError("gaussian_kraus needs lam > 0 and dt > 0")
    vals, vecs = np.linalg.eigh(A)
    weights = np.exp(-lam * dt * (x - vals) ** 2)
    return (2 * lam * dt / np.pi) ** 0.25 * (vecs * weights) @ vecs.conj().T

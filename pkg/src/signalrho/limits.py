"""Known deterministic feedback equations recovered as ready generators.

Three limits of the general signal-resolved evolution come packaged as
plain (block) superoperator generators:

* feedback that applies a quantum channel F(k) right after a jump in
  channel k (most-recent-detection feedback);
* feedback proportional to a weak continuous Gaussian measurement record
  of a Hermitian observable (diffusion feedback);
* feedback conditioned on an integrated charge N, giving a block
  generator on the charge lattice.

The continuous-diffusion limit is represented only at the generator
level; stochastic homodyne trajectories are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from . import linops
from .errors import ValidationError
from .model import (
    QuantumModel,
    dissipator,
    hamiltonian_superop,
    jump_superop,
    nojump_generator,
)


def single_jump_feedback_generator(
    model: QuantumModel, feedback: Mapping[Any, np.ndarray]
) -> np.ndarray:
    """Generator for channel-after-jump feedback.

    rho -> -i[H, rho] + sum_k ( F(k)[L_k rho L_k^dag] - {L_k^dag L_k, rho}/2 )

    with F(k) a trace-preserving superoperator applied on top of each
    monitored jump; unmonitored jumps keep their plain dissipators.
    """
    dual = linops.trace_dual(model.dim)
    gen = hamiltonian_superop(model.hamiltonian)
    for k, L in model.jumps.items():
        if k not in model.monitored:
            gen = gen + dissipator(L)
            continue
        f = np.asarray(feedback[k], dtype=complex)
        defect = np.max(np.abs(dual.conj() @ f - dual.conj()))
        if defect > 1e-9:
            raise ValidationError(
                f"feedback map for channel {k!r} is not trace preserving "
                f"(defect {defect:.3g})"
            )
        LdL = L.conj().T @ L
        gen = gen + f @ jump_superop(L) - 0.5 * (
            linops.left_mul(LdL) + linops.right_mul(LdL)
        )
    return gen


def diffusion_feedback_generator(
    H: np.ndarray, A: np.ndarray, lam: float, F: np.ndarray
) -> np.ndarray:
    """Generator for feedback on a weak Gaussian measurement record.

    rho -> -i[H,rho] + D[sqrt(lam) A]rho + D[F]rho
           - i[F, sqrt(lam)(A rho + rho A)]

    for Hermitian measured observable A (strength lam) and Hermitian
    feedback operator F.  Algebraically equal to the single-dissipator
    form -i[H + (sqrt(lam)/2)(AF + FA), .] + D[sqrt(lam) A - i F].
    """
    H = np.asarray(H, dtype=complex)
    A = np.asarray(A, dtype=complex)
    F = np.asarray(F, dtype=complex)
    for name, m in (("H", H), ("A", A), ("F", F)):
        if not linops.is_hermitian(m, tol=1e-12):
            raise ValidationError(f"diffusion feedback requires Hermitian {name}")
    if lam <= 0:
        raise ValidationError("diffusion feedback requires lam > 0")
    sq = np.sqrt(lam)
    gen = hamiltonian_superop(H) + dissipator(sq * A) + dissipator(F)
    # -i[F, sq*(A rho + rho A)] = -i*sq*(F A rho + F rho A - A rho F - rho A F)
    gen = gen - 1j * sq * (
        linops.left_mul(F @ A)
        + linops.sandwich(F, A)
        - linops.sandwich(A, F)
        - linops.right_mul(A @ F)
    )
    return gen


@dataclass(frozen=True)
class ChargeWindow:
    """Finite charge lattice [lo, hi] with a boundary policy.

    "reflecting" (default) redirects out-of-window transitions to the
    clamped boundary value, preserving trace; "absorbing" drops them, so
    probability leaks out of the window and must be accounted for.
    """

    lo: int
    hi: int
    policy: str = "reflecting"

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValidationError("charge window needs hi >= lo")
        if self.policy not in ("reflecting", "absorbing"):
            raise ValidationError(f"unknown boundary policy {self.policy!r}")

    def values(self) -> tuple:
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class ChargeGenerator:
    """Block generator on the charge lattice, plus bookkeeping."""

    values: tuple
    dim: int
    matrix: np.ndarray
    policy: str
    redirected: bool  # True when reflecting actually rerouted a coupling

    def stack(self, blocks: Mapping[int, np.ndarray]) -> np.ndarray:
        d2 = self.dim**2
        v = np.zeros(len(self.values) * d2, dtype=complex)
        for n, b in blocks.items():
            i = self.values.index(n)
            v[i * d2:(i + 1) * d2] = linops.vec(b)
        return v

    def unstack(self, v: np.ndarray) -> dict:
        d2 = self.dim**2
        return {
            n: linops.unvec(v[i * d2:(i + 1) * d2])
            for i, n in enumerate(self.values)
        }


def charge_resolved_generator(
    models: QuantumModel | Callable[[int], QuantumModel],
    weights: Mapping[Any, int],
    window: ChargeWindow,
) -> ChargeGenerator:
    """Block generator of charge-conditioned feedback.

    d/dt rho(N) = L0(N) rho(N) + sum_k J_k(N - nu_k) rho(N - nu_k)

    on the window's lattice.  ``models`` may depend on N (the feedback);
    ``weights`` maps each monitored jump label to its integer charge step.
    """
    model_at = models if callable(models) else (lambda n: models)
    values = window.values()
    ref = model_at(values[0])
    labels = tuple(ref.monitored)
    if set(weights) != set(labels):
        raise ValidationError(
            f"charge weights {sorted(weights, key=repr)} must cover exactly "
            f"the monitored labels {labels}"
        )
    d = ref.dim
    d2 = d * d
    nv = len(values)
    index = {n: i for i, n in enumerate(values)}
    mat = np.zeros((nv * d2, nv * d2), dtype=complex)
    redirected = False
    for n in values:
        m = model_at(n)
        if m.dim != d or tuple(m.monitored) != labels:
            raise ValidationError(
                "charge-dependent models must share dim and monitored labels"
            )
        j = index[n]
        mat[j * d2:(j + 1) * d2, j * d2:(j + 1) * d2] += nojump_generator(m)
        for k in labels:
            target = n + int(weights[k])
            if target not in index:
                if window.policy == "absorbing":
                    continue  # flux leaves the window; trace leaks
                target = min(max(target, window.lo), window.hi)
                redirected = True
            i = index[target]
            mat[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2] += (
                jump_superop(m.jumps[k])
            )
    return ChargeGenerator(
        values=values, dim=d, matrix=mat, policy=window.policy,
        redirected=redirected,
    )


def evolve_charge(
    gen: ChargeGenerator,
    blocks: Mapping[int, np.ndarray],
    t: float,
    leakage_tol: float = 1e-6,
) -> dict:
    """Propagate charge-resolved blocks by t; guard absorbing-window leakage."""
    v = linops.expm(gen.matrix, t) @ gen.stack(blocks)
    out = gen.unstack(v)
    if gen.policy == "absorbing":
        total = sum(np.trace(b).real for b in out.values())
        start = sum(np.trace(b).real for b in blocks.values())
        if start - total > leakage_tol:
            raise ValidationError(
                f"charge window too small: {start - total:.3g} of the trace "
                f"leaked through the absorbing boundary by t={t:g}"
            )
    return out


def mean_charge(blocks: Mapping[int, np.ndarray]) -> float:
    """Expectation of the charge, sum_N N Tr[rho(N)]."""
    return float(sum(n * np.trace(b).real for n, b in blocks.items()))


def choi_matrix(superop: np.ndarray) -> np.ndarray:
    """Choi matrix of a superoperator: sum_{ij} |i><j| (x) E(|i><j|).

    Positive semidefinite iff the map is completely positive.
    """
    d = int(round(np.sqrt(superop.shape[0])))
    choi = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[i, j] = 1.0
            out = linops.unvec(superop @ linops.vec(unit))
            choi[i * d:(i + 1) * d, j * d:(j + 1) * d] = out
    return choi

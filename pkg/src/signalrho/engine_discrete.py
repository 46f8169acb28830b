"""Deterministic propagation of signal-resolved states under instruments.

The central object is the signal-resolved state: a map from signal value
y to an unnormalized block rho(y) whose trace is the probability of
observing that signal.  One measurement step evolves it as

    rho_{n+1}(y) = sum_{x', y'} [y == f(x', y')] M_{x'}(y') rho_n(y'),

i.e. a sum over all one-step histories consistent with the new signal
value.  A brute-force enumeration over entire outcome sequences realizes
the defining ensemble average directly and serves as the oracle for the
step recursion; a block transfer-matrix eigensolve yields stationary
resolved states on finite signal spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import linops
from .errors import DegenerateFixedPointError, ValidationError
from .model import InstrumentSet
from .signals import SignalRule

PRUNE_TRACE = 1e-14


@dataclass
class ResolvedState:
    """Signal-resolved state: blocks[y] is the unnormalized block for y."""

    dim: int
    blocks: dict = field(default_factory=dict)
    n: int = 0

    def total_trace(self) -> float:
        return float(sum(np.trace(b).real for b in self.blocks.values()))

    def marginal(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for b in self.blocks.values():
            out += b
        return out

    @classmethod
    def pure_signal(cls, rho0: np.ndarray, y0) -> "ResolvedState":
        rho0 = np.asarray(rho0, dtype=complex)
        return cls(dim=rho0.shape[0], blocks={y0: rho0.copy()}, n=0)


def step(
    state: ResolvedState,
    instruments: InstrumentSet,
    rule: SignalRule,
    prune: float = PRUNE_TRACE,
) -> ResolvedState:
    """One deterministic measurement step of the resolved state.

    Contributions are accumulated over sorted source signals and the
    instrument's outcome order, so the result is independent of dict
    insertion history.
    """
    if instruments.dim != state.dim:
        raise ValidationError(
            f"instrument dimension {instruments.dim} != state dimension {state.dim}"
        )
    new_blocks: dict[Any, np.ndarray] = {}
    for y_src in sorted(state.blocks):
        v_src = linops.vec(state.blocks[y_src])
        for x in instruments.outcomes:
            y_dst = rule.step(x, y_src)
            contrib = instruments.superop(x, y_src) @ v_src
            if y_dst in new_blocks:
                new_blocks[y_dst] = new_blocks[y_dst] + linops.unvec(contrib)
            else:
                new_blocks[y_dst] = linops.unvec(contrib)
    if prune is not None:
        new_blocks = {
            y: b for y, b in new_blocks.items()
            if abs(np.trace(b)) > prune
        }
    return ResolvedState(dim=state.dim, blocks=new_blocks, n=state.n + 1)


def evolve_n(
    state: ResolvedState,
    instruments: InstrumentSet,
    rule: SignalRule,
    n: int,
    prune: float = PRUNE_TRACE,
) -> ResolvedState:
    """n-fold application of :func:`step`."""
    for _ in range(n):
        state = step(state, instruments, rule, prune=prune)
    return state


def brute_force_resolved(
    rho0: np.ndarray,
    instruments: InstrumentSet,
    rule: SignalRule,
    n: int,
    max_paths: int = 10**6,
) -> ResolvedState:
    """Oracle: explicit sum over all length-n outcome sequences.

    Realizes the definition of the resolved state as an ensemble average
    of unnormalized conditional states grouped by the final signal value.
    Exponential in n, guarded by ``max_paths``.
    """
    n_out = len(instruments.outcomes)
    if n_out**n > max_paths:
        raise ValidationError(
            f"brute force would enumerate {n_out}**{n} > {max_paths} paths"
        )
    rho0 = np.asarray(rho0, dtype=complex)
    blocks: dict[Any, np.ndarray] = {}

    def recurse(rho, y, depth):
        if depth == n:
            if y in blocks:
                blocks[y] = blocks[y] + rho
            else:
                blocks[y] = rho.copy()
            return
        for x in instruments.outcomes:
            rho_next = instruments.apply(x, rho, y)
            recurse(rho_next, rule.step(x, y), depth + 1)

    recurse(rho0, rule.initial, 0)
    return ResolvedState(dim=rho0.shape[0], blocks=blocks, n=n)


def signal_distribution(state: ResolvedState) -> dict:
    """Distribution of the signal, y -> Tr[rho(y)], renormalized.

    The raw total trace (1 up to accumulated numerical defect for valid
    instruments) is available as ``state.total_trace()``.
    """
    traces = {y: np.trace(b).real for y, b in state.blocks.items()}
    total = sum(traces.values())
    if total <= 0:
        raise ValidationError("resolved state carries no probability mass")
    return {y: t / total for y, t in traces.items()}


def marginal_state(state: ResolvedState) -> np.ndarray:
    """Unconditional state: sum of all blocks."""
    return state.marginal()


def stationary_resolved(
    instruments: InstrumentSet,
    rule: SignalRule,
    tol: float = 1e-8,
    prune: float = PRUNE_TRACE,
) -> ResolvedState:
    """Stationary resolved state on a finite signal space.

    Assembles the block transfer matrix whose (y, y') entry is
    sum_{x'} [y == f(x', y')] M_{x'}(y') and returns its unit-eigenvalue
    eigenvector, trace-normalized.  Degenerate fixed points are refused,
    never silently broken.
    """
    values = tuple(rule.space.enumerate())
    index = {y: i for i, y in enumerate(values)}
    d2 = instruments.dim**2
    nv = len(values)
    transfer = np.zeros((nv * d2, nv * d2), dtype=complex)
    for j, y_src in enumerate(values):
        for x in instruments.outcomes:
            y_dst = rule.step(x, y_src)
            i = index.get(y_dst)
            if i is None:
                raise ValidationError(
                    f"update maps {y_src!r} outside the signal space "
                    f"(to {y_dst!r})"
                )
            transfer[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2] += (
                instruments.superop(x, y_src)
            )
    _, vec_ss = linops.eig_near(transfer, 1.0, tol)
    blocks: dict[Any, np.ndarray] = {}
    for i, y in enumerate(values):
        block = linops.unvec(vec_ss[i * d2:(i + 1) * d2])
        if abs(np.trace(block)) > prune:
            blocks[y] = block
    total = sum(np.trace(b) for b in blocks.values())
    if abs(total) < 1e-12:
        raise DegenerateFixedPointError(1.0, [total])
    blocks = {y: linops.hermitize(b / total) for y, b in blocks.items()}
    return ResolvedState(dim=instruments.dim, blocks=blocks, n=0)

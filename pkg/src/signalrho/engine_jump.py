"""Jump-channel and elapsed-time feedback: the deterministic machinery.

Feedback conditioned on (channel of the last jump k, time tau since it)
is described by a piecewise-constant-in-tau schedule of quantum models
per channel.  This module provides:

* the no-jump propagator G(k, tau), an ordered product of segment
  exponentials (exact for piecewise-constant schedules);
* the coupled master equations for tau-independent feedback, as one block
  generator Pi over the channels, with steady state from its null space;
* the steady-state map Omega = sum_k int_0^inf G(k,tau) J_k dtau for
  feedback acting only on the no-jump part, assembled segment by segment
  in closed form (tail integrals need Hurwitz tail generators);
* a shift-and-propagate tau-grid integrator for the general transient
  recursion, including jump operators that depend on (k, tau);
* the channel-indexed steady-state eigenproblem for (k, tau)-dependent
  jumps, plus reconstruction of the tau-resolved steady state and the
  statistics of (last jump channel, elapsed time).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import linops
from .errors import DivergentTailError, ValidationError
from .model import QuantumModel, jump_superop, nojump_generator


@dataclass(frozen=True)
class Segment:
    """One piece of a feedback schedule: generators active for `duration`.

    duration None marks the tail segment extending to infinite tau.
    """

    duration: float | None
    model: QuantumModel


@dataclass(frozen=True)
class FeedbackSchedule:
    """Per-channel piecewise-constant schedules of (H, jump operators).

    Keys of ``channels`` are the monitored jump labels; each value is a
    tuple of Segments whose last entry is the tail (duration None).  Every
    segment model must monitor exactly the schedule's channel set.
    """

    channels: Mapping[Any, tuple]

    def __post_init__(self):
        channels = {k: tuple(segs) for k, segs in dict(self.channels).items()}
        if not channels:
            raise ValidationError("schedule needs at least one channel")
        labels = set(channels)
        dims = set()
        for k, segs in channels.items():
            if not segs or segs[-1].duration is not None:
                raise ValidationError(
                    f"channel {k!r}: last segment must be the tail (duration None)"
                )
            for seg in segs[:-1]:
                if seg.duration is None or seg.duration <= 0:
                    raise ValidationError(
                        f"channel {k!r}: non-tail segments need duration > 0"
                    )
            for seg in segs:
                dims.add(seg.model.dim)
                if set(seg.model.monitored) != labels:
                    raise ValidationError(
                        f"channel {k!r}: segment monitors "
                        f"{seg.model.monitored}, expected {sorted(labels, key=repr)}"
                    )
        if len(dims) != 1:
            raise ValidationError(f"inconsistent dimensions across schedule: {dims}")
        object.__setattr__(self, "channels", channels)

    @property
    def labels(self) -> tuple:
        return tuple(sorted(self.channels))

    @property
    def dim(self) -> int:
        first = next(iter(self.channels.values()))
        return first[0].model.dim

    def breakpoints(self, k) -> np.ndarray:
        """Cumulative segment end times for channel k (tail excluded)."""
        durs = [seg.duration for seg in self.channels[k][:-1]]
        return np.cumsum(durs) if durs else np.zeros(0)

    def segment_at(self, k, tau: float) -> Segment:
        """Segment active at elapsed time tau (half-open [s_{i-1}, s_i))."""
        idx = int(np.searchsorted(self.breakpoints(k), tau, side="right"))
        return self.channels[k][idx]

    @classmethod
    def constant(cls, models: Mapping[Any, QuantumModel]) -> "FeedbackSchedule":
        """Tau-independent feedback: one tail segment per channel."""
        return cls({k: (Segment(None, m),) for k, m in models.items()})


def nojump_propagator(schedule: FeedbackSchedule, k, tau: float) -> np.ndarray:
    """G(k, tau): ordered product of segment exponentials covering [0, tau]."""
    if tau < 0:
        raise ValidationError("nojump_propagator needs tau >= 0")
    d2 = schedule.dim**2
    prop = np.eye(d2, dtype=complex)
    remaining = float(tau)
    for seg in schedule.channels[k]:
        if remaining <= 0:
            break
        span = remaining if seg.duration is None else min(seg.duration, remaining)
        prop = linops.expm(nojump_generator(seg.model), span) @ prop
        remaining -= span
    return prop


def _tail_generator(schedule: FeedbackSchedule, k) -> np.ndarray:
    gen = nojump_generator(schedule.channels[k][-1].model)
    if not linops.is_hurwitz(gen):
        raise DivergentTailError(
            f"channel {k!r}: tail no-jump generator is not Hurwitz; "
            "the infinite-tau integral diverges"
        )
    return gen


def propagator_integral(schedule: FeedbackSchedule, k) -> np.ndarray:
    """int_0^inf G(k, tau) dtau, segment by segment in closed form.

    Finite segments contribute int_0^D exp(s L) ds stacked onto the
    accumulated propagator (evaluated via the augmented exponential, which
    tolerates singular segment generators); the Hurwitz tail contributes
    -L_tail^{-1} times the total propagator.
    """
    d2 = schedule.dim**2
    total = np.zeros((d2, d2), dtype=complex)
    prop = np.eye(d2, dtype=complex)
    for seg in schedule.channels[k][:-1]:
        gen = nojump_generator(seg.model)
        total += linops.expm_integral(gen, seg.duration) @ prop
        prop = linops.expm(gen, seg.duration) @ prop
    tail = _tail_generator(schedule, k)
    total += -linops.solve(tail, prop, role=f"tail no-jump generator ({k!r})")
    return total


def _uniform_jump_ops(schedule: FeedbackSchedule) -> dict:
    """Monitored jump operators, required identical across all segments."""
    labels = schedule.labels
    first = next(iter(schedule.channels.values()))[0].model
    ops = {k: first.jumps[k] for k in labels}
    for ch, segs in schedule.channels.items():
        for seg in segs:
            for k in labels:
                if not np.allclose(seg.model.jumps[k], ops[k],
                                   rtol=1e-12, atol=1e-14):
                    raise ValidationError(
                        "omega_map requires jump operators independent of the "
                        f"feedback signal; channel {ch!r} changes {k!r}"
                    )
    return ops


def omega_map(schedule: FeedbackSchedule) -> np.ndarray:
    """Steady-state map Omega = sum_k int_0^inf G(k,tau) J_k dtau.

    Valid when feedback acts only on the no-jump part (jump operators
    independent of the signal); trace-preserving whenever every tail is
    Hurwitz.
    """
    ops = _uniform_jump_ops(schedule)
    d2 = schedule.dim**2
    omega = np.zeros((d2, d2), dtype=complex)
    for k in schedule.labels:
        omega += propagator_integral(schedule, k) @ jump_superop(ops[k])
    return omega


def steady_unconditional(omega: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Fixed point of Omega: unit-eigenvalue eigenvector as a density matrix."""
    _, v = linops.eig_near(omega, 1.0, tol)
    rho = linops.hermitize(linops.unvec(v))
    return rho / np.trace(rho).real


def resolved_from_unconditional(
    rho_ss: np.ndarray, schedule: FeedbackSchedule, k, tau: float
) -> np.ndarray:
    """Steady-state resolved block G(k,tau) J_k rho_ss (density in tau)."""
    ops = _uniform_jump_ops(schedule)
    v = nojump_propagator(schedule, k, tau) @ jump_superop(ops[k]) @ linops.vec(rho_ss)
    return linops.unvec(v)


# ---------------------------------------------------------------------------
# Coupled master equations (tau-independent feedback)


@dataclass(frozen=True)
class CoupledGenerator:
    """Block generator Pi of the coupled per-channel master equations."""

    labels: tuple
    dim: int
    matrix: np.ndarray

    def stack(self, blocks: Mapping[Any, np.ndarray]) -> np.ndarray:
        return np.concatenate([linops.vec(blocks[k]) for k in self.labels])

    def unstack(self, v: np.ndarray) -> dict:
        d2 = self.dim**2
        return {
            k: linops.unvec(v[i * d2:(i + 1) * d2])
            for i, k in enumerate(self.labels)
        }


def coupled_generator(models: Mapping[Any, QuantumModel]) -> CoupledGenerator:
    """Assemble Pi for feedback on the channel of the last jump only.

    Block (k, k') carries the cross-channel feeding J_k evaluated with the
    jump operators of the k'-conditioned model; diagonal blocks carry the
    conditioned no-jump generators.  Column sums annihilate the trace by
    construction.
    """
    labels = tuple(sorted(models))
    label_set = set(labels)
    dims = {m.dim for m in models.values()}
    if len(dims) != 1:
        raise ValidationError(f"coupled models must share dimension, got {dims}")
    dim = dims.pop()
    for k, m in models.items():
        if set(m.monitored) != label_set:
            raise ValidationError(
                f"model for channel {k!r} monitors {m.monitored}, "
                f"expected exactly {labels}"
            )
    d2 = dim**2
    nc = len(labels)
    pi = np.zeros((nc * d2, nc * d2), dtype=complex)
    for j, k_src in enumerate(labels):
        src = models[k_src]
        pi[j * d2:(j + 1) * d2, j * d2:(j + 1) * d2] += nojump_generator(src)
        for i, k_dst in enumerate(labels):
            pi[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2] += (
                jump_superop(src.jumps[k_dst])
            )
    return CoupledGenerator(labels=labels, dim=dim, matrix=pi)


def steady_coupled(gen: CoupledGenerator, tol: float = 1e-8) -> dict:
    """Null vector of Pi as per-channel blocks, total trace normalized to 1."""
    _, v = linops.eig_near(gen.matrix, 0.0, tol)
    blocks = gen.unstack(v)
    total = sum(np.trace(b) for b in blocks.values())
    if abs(total) < 1e-12:
        raise ValidationError(
            "null vector of the coupled generator is traceless; "
            "no normalizable steady state"
        )
    return {k: linops.hermitize(b / total) for k, b in blocks.items()}


def evolve_coupled(
    gen: CoupledGenerator, blocks: Mapping[Any, np.ndarray], t: float
) -> dict:
    """Propagate the coupled blocks by time t via the block exponential."""
    if t < 0:
        raise ValidationError("evolve_coupled needs t >= 0")
    v = linops.expm(gen.matrix, t) @ gen.stack(blocks)
    return gen.unstack(v)


def coupled_marginal(blocks: Mapping[Any, np.ndarray]) -> np.ndarray:
    """Unconditional state: sum of the per-channel blocks."""
    return sum(blocks.values())


# ---------------------------------------------------------------------------
# tau-grid transient integrator (general Result-2 recursion)


@dataclass
class TauGridState:
    """State resolved in (channel, elapsed time) on a uniform tau grid.

    ``blocks[c, i]`` is the density-in-tau block at tau = i * dtau for
    channel ``labels[c]``; the normalization is
    sum_c sum_i dtau * Tr[blocks[c, i]] = 1 (up to O(dtau) stepping error).
    """

    labels: tuple
    dtau: float
    blocks: np.ndarray  # (nchannels, ntau, d, d)
    t: float = 0.0

    @property
    def taus(self) -> np.ndarray:
        return np.arange(self.blocks.shape[1]) * self.dtau

    def normalization(self) -> float:
        return float(
            self.dtau * np.trace(self.blocks, axis1=2, axis2=3).real.sum()
        )

    def marginal(self) -> np.ndarray:
        return self.dtau * self.blocks.sum(axis=(0, 1))

    def channel_trace(self, k) -> float:
        c = self.labels.index(k)
        return float(
            self.dtau * np.trace(self.blocks[c], axis1=1, axis2=2).real.sum()
        )


def tau_grid_initial(
    schedule: FeedbackSchedule, rho0: np.ndarray, initial_channel, dtau: float
) -> TauGridState:
    """All probability in cell (initial_channel, tau=0), as a tau density."""
    if dtau <= 0:
        raise ValidationError("tau_grid_initial needs dtau > 0")
    labels = schedule.labels
    if initial_channel not in labels:
        raise ValidationError(
            f"initial channel {initial_channel!r} not in schedule {labels}"
        )
    d = schedule.dim
    blocks = np.zeros((len(labels), 1, d, d), dtype=complex)
    blocks[labels.index(initial_channel), 0] = np.asarray(rho0, dtype=complex) / dtau
    return TauGridState(labels=labels, dtau=dtau, blocks=blocks, t=0.0)


def _vec_batch(blocks: np.ndarray) -> np.ndarray:
    # column-stacking vec applied along the leading axis
    m, d, _ = blocks.shape
    return blocks.transpose(0, 2, 1).reshape(m, d * d)


def _unvec_batch(v: np.ndarray, d: int) -> np.ndarray:
    m = v.shape[0]
    return v.reshape(m, d, d).transpose(0, 2, 1)


class _TauTables:
    """Per-(channel, segment) propagators and jump maps for grid stepping."""

    def __init__(self, schedule: FeedbackSchedule, dtau: float):
        self.labels = schedule.labels
        self.breaks = {k: schedule.breakpoints(k) for k in self.labels}
        self.props = {}   # (channel, segment index) -> expm(dtau * L0)
        self.jumps = {}   # (src channel, segment index, dst channel) -> superop
        for k in self.labels:
            for s, seg in enumerate(schedule.channels[k]):
                self.props[k, s] = linops.expm(nojump_generator(seg.model), dtau)
                for k_dst in self.labels:
                    self.jumps[k, s, k_dst] = jump_superop(seg.model.jumps[k_dst])

    def segment_indices(self, k, taus: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.breaks[k], taus, side="right")


def evolve_tau_grid(
    state: TauGridState,
    schedule: FeedbackSchedule,
    dt: float,
    _tables: _TauTables | None = None,
) -> TauGridState:
    """One grid-aligned step of the shift-and-propagate recursion.

    Each populated cell advances by its local no-jump propagator and
    shifts up one tau slot; the new tau=0 boundary collects the jump flux
    from every source cell by the rectangle rule, allowing jump operators
    that depend on (source channel, elapsed time).
    """
    if abs(dt - state.dtau) > 1e-12 * max(dt, state.dtau):
        raise ValidationError(
            f"grid-aligned stepping requires dt == dtau ({dt} != {state.dtau})"
        )
    if tuple(schedule.labels) != tuple(state.labels):
        raise ValidationError("schedule channels do not match the grid state")
    tables = _tables if _tables is not None else _TauTables(schedule, state.dtau)
    nc, ntau, d, _ = state.blocks.shape
    taus = state.taus
    new = np.zeros((nc, ntau + 1, d, d), dtype=complex)
    boundary_v = np.zeros((nc, d * d), dtype=complex)
    for ci, k in enumerate(state.labels):
        seg_idx = tables.segment_indices(k, taus)
        vecs = _vec_batch(state.blocks[ci])
        for s in np.unique(seg_idx):
            cells = np.nonzero(seg_idx == s)[0]
            shifted = vecs[cells] @ tables.props[k, s].T
            new[ci, cells + 1] = _unvec_batch(shifted, d)
            src_sum = state.dtau * vecs[cells].sum(axis=0)
            for cj, k_dst in enumerate(state.labels):
                boundary_v[cj] += tables.jumps[k, s, k_dst] @ src_sum
    new[:, 0] = _unvec_batch(boundary_v, d)
    return TauGridState(
        labels=state.labels, dtau=state.dtau, blocks=new, t=state.t + state.dtau
    )


def evolve_tau_grid_to(
    state: TauGridState, schedule: FeedbackSchedule, t: float
) -> TauGridState:
    """Step the tau grid until state.t reaches t (t must be grid-aligned)."""
    nsteps = int(round((t - state.t) / state.dtau))
    if abs(state.t + nsteps * state.dtau - t) > 1e-9 * max(abs(t), 1.0):
        raise ValidationError("target time is not aligned with the tau grid")
    tables = _TauTables(schedule, state.dtau)
    for _ in range(nsteps):
        state = evolve_tau_grid(state, schedule, state.dtau, _tables=tables)
    return state


# ---------------------------------------------------------------------------
# Steady state for (channel, tau)-dependent jumps


def combined_steady(schedule: FeedbackSchedule, tol: float = 1e-8) -> dict:
    """Steady boundary blocks rho_ss(k, 0) for the combined signal.

    Builds the channel-indexed matrix with blocks
    int_0^inf J_k(k', tau') G(k', tau') dtau' (segmentwise closed form)
    and extracts its unit-eigenvalue eigenvector, normalized so that the
    reconstructed full state has unit trace.
    """
    labels = schedule.labels
    d2 = schedule.dim**2
    nc = len(labels)
    lam = np.zeros((nc * d2, nc * d2), dtype=complex)
    for j, k_src in enumerate(labels):
        prop = np.eye(d2, dtype=complex)
        segs = schedule.channels[k_src]
        for seg in segs[:-1]:
            gen = nojump_generator(seg.model)
            g_int = linops.expm_integral(gen, seg.duration) @ prop
            for i, k_dst in enumerate(labels):
                lam[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2] += (
                    jump_superop(seg.model.jumps[k_dst]) @ g_int
                )
            prop = linops.expm(gen, seg.duration) @ prop
        tail = _tail_generator(schedule, k_src)
        g_int = -linops.solve(tail, prop, role=f"tail no-jump generator ({k_src!r})")
        for i, k_dst in enumerate(labels):
            lam[i * d2:(i + 1) * d2, j * d2:(j + 1) * d2] += (
                jump_superop(segs[-1].model.jumps[k_dst]) @ g_int
            )
    _, v = linops.eig_near(lam, 1.0, tol)
    boundary = {
        k: linops.unvec(v[i * d2:(i + 1) * d2]) for i, k in enumerate(labels)
    }
    dual = linops.trace_dual(schedule.dim)
    total = sum(
        np.vdot(dual, propagator_integral(schedule, k) @ linops.vec(b))
        for k, b in boundary.items()
    )
    if abs(total) < 1e-12:
        raise ValidationError("combined steady state carries no trace")
    return {k: linops.hermitize(b / total) for k, b in boundary.items()}


def channel_weights(schedule: FeedbackSchedule, boundary: Mapping) -> dict:
    """Steady probability that the last jump was k: Tr[int G(k) rho(k,0)]."""
    dual = linops.trace_dual(schedule.dim)
    return {
        k: float(np.vdot(dual, propagator_integral(schedule, k)
                         @ linops.vec(boundary[k])).real)
        for k in schedule.labels
    }


@dataclass
class WaitingTimeStats:
    """Steady-state joint density of (last jump channel, elapsed time).

    ``density[k]`` is (taus, w) with w normalized jointly across channels;
    moments refer to the elapsed-time marginal.  truncated_mass reports
    how much weight the finite tau grid cut off before renormalization.
    """

    density: dict
    channel_weights: dict
    mean: float
    variance: float
    truncated_mass: float


def waiting_time_stats(
    boundary: Mapping,
    schedule: FeedbackSchedule,
    tau_max: float | None = None,
    points_per_segment: int = 400,
) -> WaitingTimeStats:
    """Elapsed-time statistics of the steady state.

    w(k, tau) is proportional to Tr[G(k, tau) rho_ss(k, 0)], evaluated on
    per-channel grids aligned with the schedule breakpoints (so segment
    propagation is exact) and renormalized on the grid.
    """
    dual = linops.trace_dual(schedule.dim)
    if tau_max is None:
        gaps = []
        for k in schedule.labels:
            gen = _tail_generator(schedule, k)
            gaps.append(-np.max(np.linalg.eigvals(gen).real))
        horizon = max(
            (schedule.breakpoints(k)[-1] if len(schedule.breakpoints(k)) else 0.0)
            for k in schedule.labels
        )
        tau_max = horizon + 40.0 / min(gaps)

    density = {}
    raw_total = 0.0
    for k in schedule.labels:
        edges = [0.0, *schedule.breakpoints(k), tau_max]
        edges = [e for e in edges if e < tau_max] + [tau_max]
        taus_parts, w_parts = [], []
        v = linops.vec(boundary[k]).astype(complex)
        segs = schedule.channels[k]
        for si in range(len(edges) - 1):
            a, b = edges[si], edges[si + 1]
            # proportional allocation, but never starve a short segment
            n = max(65, int(round(points_per_segment * (b - a) / tau_max)))
            grid = np.linspace(a, b, n)
            gen = nojump_generator(segs[min(si, len(segs) - 1)].model)
            prop_step = linops.expm(gen, grid[1] - grid[0])
            w = np.empty(n)
            vv = v.copy()
            for i in range(n):
                w[i] = np.vdot(dual, vv).real
                if i < n - 1:
                    vv = prop_step @ vv
            taus_parts.append(grid)
            w_parts.append(w)
            v = linops.expm(gen, b - a) @ v
        taus = np.concatenate(taus_parts)
        w = np.concatenate(w_parts)
        density[k] = (taus, w)
        raw_total += np.trapezoid(w, taus)

    truncated = 1.0 - raw_total
    density = {k: (t, w / raw_total) for k, (t, w) in density.items()}
    mean = sum(np.trapezoid(t * w, t) for t, w in density.values())
    second = sum(np.trapezoid(t * t * w, t) for t, w in density.values())
    weights = {k: float(np.trapezoid(w, t)) for k, (t, w) in density.items()}
    return WaitingTimeStats(
        density=density,
        channel_weights=weights,
        mean=float(mean),
        variance=float(second - mean**2),
        truncated_mass=float(truncated),
    )

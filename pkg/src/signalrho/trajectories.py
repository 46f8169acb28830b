"""Stochastic quantum-jump trajectories: the independent Monte Carlo oracle.

Implements the conditional dynamics directly: at each step the jump
probabilities dt * Tr[J_k rho] are computed from the instruments active
for the current signal (channel of the last jump, elapsed time), one
outcome is drawn, the conditional state is updated with the corresponding
first-order map and renormalized, and the signal advances.  Feedback
schedules alter the generators exactly as the deterministic engines
assume, so ensemble averages of these trajectories estimate the same
signal-resolved states.

Trajectory i of an ensemble draws from an independent stream derived
deterministically from the master seed (numpy SeedSequence spawning), so
runs are bitwise reproducible and embarrassingly parallel over
trajectories; here they are executed vectorized in one process.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from . import linops
from .errors import NumericalError, StepSizeError, ValidationError
from .engine_jump import FeedbackSchedule
from .model import QuantumModel, nojump_generator

PROB_GUARD = 0.1


@dataclass
class TrajectoryRecord:
    """One realization: jump events, sampled observables, final data."""

    seed: int
    dt: float
    events: tuple                # ((time, channel label), ...)
    sample_times: np.ndarray
    observables: dict            # name -> ndarray over sample_times
    final_signal: tuple          # (channel label or None, elapsed tau)
    final_state: np.ndarray


@dataclass
class EnsembleResult:
    """Vectorized ensemble of trajectories sharing one master seed."""

    seed: int
    dt: float
    ntraj: int
    labels: tuple
    sample_times: np.ndarray
    observables: dict            # name -> (ntraj, nsamples)
    event_traj: np.ndarray
    event_time: np.ndarray
    event_channel: np.ndarray    # indices into labels
    final_states: np.ndarray     # (ntraj, d, d)
    final_channel: np.ndarray    # indices into labels (or -1 when no channels)
    final_tau: np.ndarray
    jump_counts: np.ndarray      # (ntraj, nchannels)

    def record(self, i: int) -> TrajectoryRecord:
        mask = self.event_traj == i
        events = tuple(
            (float(t), self.labels[c])
            for t, c in zip(self.event_time[mask], self.event_channel[mask])
        )
        k = self.labels[self.final_channel[i]] if self.labels else None
        return TrajectoryRecord(
            seed=self.seed,
            dt=self.dt,
            events=events,
            sample_times=self.sample_times.copy(),
            observables={n: o[i].copy() for n, o in self.observables.items()},
            final_signal=(k, float(self.final_tau[i])),
            final_state=self.final_states[i].copy(),
        )


class _Tables:
    """Per-(channel, segment) maps in vec space for batched stepping."""

    def __init__(self, schedule: FeedbackSchedule, dt: float):
        self.labels = schedule.labels
        self.dim = schedule.dim
        d2 = self.dim**2
        self.breaks = [np.asarray(schedule.breakpoints(k), dtype=float)
                       for k in self.labels]
        self.nseg = [len(schedule.channels[k]) for k in self.labels]
        self.nojump = {}    # (ci, si) -> (1 + dt L0), transposed for row vecs
        self.jump = {}      # (ci, si, j) -> J_j superop transposed
        self.rate_w = {}    # (ci, si) -> (nchan, d2) rate weight vectors
        for ci, k in enumerate(self.labels):
            for si, seg in enumerate(schedule.channels[k]):
                m = seg.model
                e0 = np.eye(d2, dtype=complex) + dt * nojump_generator(m)
                self.nojump[ci, si] = np.ascontiguousarray(e0.T)
                w = np.empty((len(self.labels), d2), dtype=complex)
                for j, kj in enumerate(self.labels):
                    L = m.jumps[kj]
                    w[j] = linops.vec((L.conj().T @ L).T)
                    self.jump[ci, si, j] = np.ascontiguousarray(
                        linops.sandwich(L, L.conj().T).T
                    )
                self.rate_w[ci, si] = w


def _as_schedule(system) -> tuple[FeedbackSchedule | None, QuantumModel | None]:
    if isinstance(system, FeedbackSchedule):
        return system, None
    if isinstance(system, QuantumModel):
        if system.monitored:
            sched = FeedbackSchedule.constant(
                {k: system for k in system.monitored}
            )
            return sched, None
        return None, system
    raise ValidationError(
        "simulate expects a QuantumModel or a FeedbackSchedule"
    )


def simulate_ensemble(
    system,
    rho0: np.ndarray,
    tmax: float,
    dt: float,
    ntraj: int,
    seed: int,
    initial_channel=None,
    observables: Mapping[str, np.ndarray] | None = None,
    sample_every: int = 1,
    guard: float = PROB_GUARD,
    step_chunk: int = 512,
) -> EnsembleResult:
    """Run ntraj trajectories, vectorized, from one master seed.

    ``observables`` maps names to Hermitian matrices sampled every
    ``sample_every`` steps (starting at t=0).  The total one-step jump
    probability is guarded below ``guard``; exceeding it raises
    StepSizeError rather than silently biasing the statistics.
    """
    if dt <= 0 or tmax < 0 or ntraj < 1:
        raise ValidationError("simulate needs dt > 0, tmax >= 0, ntraj >= 1")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    schedule, bare_model = _as_schedule(system)
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    d2 = d * d
    diag_idx = np.arange(d) * (d + 1)

    nsteps = int(round(tmax / dt))
    sample_steps = np.arange(0, nsteps + 1, sample_every)
    sample_times = sample_steps * dt
    obs = dict(observables or {})
    obs_w = {name: linops.vec(np.asarray(O, dtype=complex).T)
             for name, O in obs.items()}
    obs_out = {name: np.empty((ntraj, len(sample_steps))) for name in obs}

    rngs = [np.random.default_rng(c)
            for c in np.random.SeedSequence(seed).spawn(ntraj)]

    V = np.tile(linops.vec(rho0) / np.trace(rho0), (ntraj, 1))

    if schedule is not None:
        tables = _Tables(schedule, dt)
        labels = tables.labels
        if schedule.dim != d:
            raise ValidationError("initial state dimension does not match system")
        if initial_channel not in labels:
            raise ValidationError(
                f"initial_channel must be one of {labels}, got {initial_channel!r}"
            )
        k_idx = np.full(ntraj, labels.index(initial_channel), dtype=np.intp)
    else:
        if bare_model.dim != d:
            raise ValidationError("initial state dimension does not match system")
        labels = ()
        e0_plain = np.ascontiguousarray(
            (np.eye(d2, dtype=complex) + dt * nojump_generator(bare_model)).T
        )
        k_idx = np.full(ntraj, -1, dtype=np.intp)
    nchan = len(labels)
    tau = np.zeros(ntraj)

    ev_traj, ev_time, ev_chan = [], [], []
    jump_counts = np.zeros((ntraj, max(nchan, 1)), dtype=np.int64)

    def sample_row(ptr):
        for name, w in obs_w.items():
            obs_out[name][:, ptr] = (V @ w).real

    ptr = 0
    if len(sample_steps) and sample_steps[0] == 0:
        sample_row(0)
        ptr = 1

    step = 0
    while step < nsteps:
        clen = min(step_chunk, nsteps - step)
        if nchan:
            U = np.empty((ntraj, clen))
            for i, rng in enumerate(rngs):
                U[i] = rng.random(clen)
        for s in range(clen):
            if nchan:
                groups: dict[tuple, np.ndarray] = {}
                for ci in range(nchan):
                    rows = np.nonzero(k_idx == ci)[0]
                    if rows.size == 0:
                        continue
                    segs = np.searchsorted(tables.breaks[ci], tau[rows],
                                           side="right")
                    for si in np.unique(segs):
                        groups[ci, si] = rows[segs == si]

                probs = np.zeros((ntraj, nchan))
                for (ci, si), rows in sorted(groups.items()):
                    probs[rows] = dt * (V[rows] @ tables.rate_w[ci, si].T).real
                # the first-order no-jump map can leave tiny negative
                # populations; clamp the induced rates so thresholds stay
                # monotone and zero-support jumps cannot fire
                np.maximum(probs, 0.0, out=probs)
                ptot = probs.sum(axis=1)
                worst = ptot.max() if ntraj else 0.0
                if worst >= guard:
                    raise StepSizeError(
                        f"one-step jump probability {worst:.3g} exceeds the "
                        f"{guard:g} guard; reduce dt"
                    )
                u = U[:, s]
                outcome = (u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1)

                for (ci, si), rows in sorted(groups.items()):
                    out_rows = outcome[rows]
                    nj = rows[out_rows == nchan]
                    if nj.size:
                        V[nj] = V[nj] @ tables.nojump[ci, si]
                    for j in range(nchan):
                        jr = rows[out_rows == j]
                        if jr.size:
                            V[jr] = V[jr] @ tables.jump[ci, si, j]

                jumped = outcome < nchan
                if jumped.any():
                    rows = np.nonzero(jumped)[0]
                    t_event = (step + s + 1) * dt
                    ev_traj.append(rows.copy())
                    ev_time.append(np.full(rows.size, t_event))
                    ev_chan.append(outcome[rows].astype(np.intp))
                    jump_counts[rows, outcome[rows]] += 1
                    k_idx[rows] = outcome[rows]
                    tau[rows] = 0.0
                tau[~jumped] += dt
            else:
                V = V @ e0_plain
                tau += dt

            tr = V[:, diag_idx].sum(axis=1).real
            if np.any(tr <= 0):
                raise NumericalError(
                    "conditional state lost positivity of its trace; "
                    "reduce dt"
                )
            V /= tr[:, None]

            global_step = step + s + 1
            if ptr < len(sample_steps) and global_step == sample_steps[ptr]:
                sample_row(ptr)
                ptr += 1
        step += clen

    final_states = np.empty((ntraj, d, d), dtype=complex)
    for i in range(ntraj):
        final_states[i] = linops.unvec(V[i])

    return EnsembleResult(
        seed=seed,
        dt=dt,
        ntraj=ntraj,
        labels=labels,
        sample_times=sample_times,
        observables=obs_out,
        event_traj=(np.concatenate(ev_traj) if ev_traj
                    else np.zeros(0, dtype=np.intp)),
        event_time=(np.concatenate(ev_time) if ev_time else np.zeros(0)),
        event_channel=(np.concatenate(ev_chan) if ev_chan
                       else np.zeros(0, dtype=np.intp)),
        final_states=final_states,
        final_channel=k_idx,
        final_tau=tau,
        jump_counts=jump_counts[:, :nchan],
    )


def simulate(
    system,
    rho0: np.ndarray,
    tmax: float,
    dt: float,
    seed: int,
    initial_channel=None,
    observables: Mapping[str, np.ndarray] | None = None,
    sample_every: int = 1,
    guard: float = PROB_GUARD,
) -> TrajectoryRecord:
    """Single trajectory; identical stream to trajectory 0 of an ensemble."""
    result = simulate_ensemble(
        system, rho0, tmax, dt, ntraj=1, seed=seed,
        initial_channel=initial_channel, observables=observables,
        sample_every=sample_every, guard=guard,
    )
    return result.record(0)


# ---------------------------------------------------------------------------
# Ensemble estimators


@dataclass
class ResolvedEstimate:
    """Monte Carlo estimate of a signal-resolved state with standard errors.

    blocks[y] is the indicator-weighted mean of conditional states, so the
    block traces are the empirical signal probabilities and the total
    trace is exactly 1.
    """

    blocks: dict
    entry_stderr: dict     # y -> real ndarray, per-entry stderr (|.| combined)
    trace_stderr: dict     # y -> float
    nsamples: int


def _final_signals(result: EnsembleResult, tau_bins=None):
    if result.labels:
        keys = [result.labels[c] for c in result.final_channel]
        if tau_bins is not None:
            keys = [(k, tau_bins.quantize(t))
                    for k, t in zip(keys, result.final_tau)]
    else:
        keys = [None] * result.ntraj
    return keys


def ensemble_resolved(source, tau_bins=None) -> ResolvedEstimate:
    """Estimate the signal-resolved state from trajectories.

    ``source`` is an EnsembleResult or a sequence of TrajectoryRecords;
    the grouping signal is the channel of the last jump, refined by a
    binned elapsed time when ``tau_bins`` (a BinnedSpace) is given.
    """
    if isinstance(source, EnsembleResult):
        states = source.final_states
        keys = _final_signals(source, tau_bins)
    else:
        records = list(source)
        if len(records) < 1:
            raise ValidationError("ensemble_resolved needs at least one record")
        states = np.stack([r.final_state for r in records])
        keys = []
        for r in records:
            k, t = r.final_signal
            keys.append((k, tau_bins.quantize(t)) if tau_bins is not None else k)
    n = states.shape[0]
    keys = np.asarray(keys, dtype=object)

    blocks, entry_stderr, trace_stderr = {}, {}, {}
    for y in sorted(set(keys.tolist()), key=repr):
        mask = keys == y
        sub = states[mask]
        m = sub.shape[0]
        mean = sub.sum(axis=0) / n
        blocks[y] = mean
        if n > 1:
            # variance of rho_i * indicator over all n trajectories
            sq = (np.abs(sub) ** 2).sum(axis=0) / n
            var = sq - np.abs(mean) ** 2
            entry_stderr[y] = np.sqrt(np.maximum(var, 0.0) / (n - 1))
            p = m / n
            trace_stderr[y] = float(np.sqrt(max(p * (1 - p), 0.0) / (n - 1)))
        else:
            entry_stderr[y] = np.zeros_like(mean, dtype=float)
            trace_stderr[y] = 0.0
    return ResolvedEstimate(
        blocks=blocks, entry_stderr=entry_stderr,
        trace_stderr=trace_stderr, nsamples=n,
    )


def ensemble_observable(source, name: str):
    """Mean and standard error of a sampled observable over trajectories.

    Returns (times, mean, stderr).  For a list of TrajectoryRecords the
    sample grids must agree exactly.
    """
    if isinstance(source, EnsembleResult):
        times = source.sample_times
        data = source.observables[name]
    else:
        records = list(source)
        if len(records) < 2:
            raise ValidationError("ensemble_observable needs >= 2 records")
        times = records[0].sample_times
        for r in records[1:]:
            if (len(r.sample_times) != len(times)
                    or np.any(r.sample_times != times)):
                raise ValidationError(
                    "records sampled on different time grids cannot be merged"
                )
        data = np.stack([r.observables[name] for r in records])
    mean = data.mean(axis=0)
    if data.shape[0] > 1:
        stderr = data.std(axis=0, ddof=1) / np.sqrt(data.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return times, mean, stderr

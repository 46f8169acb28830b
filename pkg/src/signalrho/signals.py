"""Causal signal update rules y' = f(x, y) and their signal spaces.

Every signal the deterministic engines can resolve is generated by one of
the rules below: the latest outcome, a low-pass filtered outcome, an
integrated charge, the channel of the last jump, or the time elapsed since
the last jump.  Rules are pure functions; engines key resolved-state
blocks by the (quantized) signal values the rule produces, so spaces also
define the quantization applied after each update.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Callable, Mapping

from .errors import ValidationError


@dataclass(frozen=True)
class FiniteSpace:
    """An explicit finite set of signal values."""

    values: tuple

    def quantize(self, y):
        return y

    def enumerate(self):
        return self.values


@dataclass(frozen=True)
class LatticeSpace:
    """Integers in [lo, hi]; window enforcement is the engines' business."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValidationError("lattice window needs hi >= lo")

    def quantize(self, y):
        return int(round(y))

    def enumerate(self):
        return tuple(range(self.lo, self.hi + 1))


@dataclass(frozen=True)
class BinnedSpace:
    """Real interval [lo, hi] split into uniform bins, keyed by centers.

    Quantization is nearest-bin; values at or beyond the boundary round
    toward the interval interior.
    """

    lo: float
    hi: float
    nbins: int = 512

    def __post_init__(self):
        if not (self.hi > self.lo and self.nbins >= 1):
            raise ValidationError("binned space needs hi > lo and nbins >= 1")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.nbins

    def index(self, y) -> int:
        i = int(math.floor((y - self.lo) / self.width))
        return min(max(i, 0), self.nbins - 1)

    def center(self, i: int) -> float:
        return self.lo + (i + 0.5) * self.width

    def quantize(self, y):
        return self.center(self.index(y))

    def enumerate(self):
        return tuple(self.center(i) for i in range(self.nbins))


@dataclass(frozen=True)
class TimeLattice:
    """Nonnegative multiples of dt (the elapsed-time counting signal).

    Unbounded, so it cannot be enumerated; quantization snaps to the exact
    multiple m*dt so that repeated accumulation cannot drift dictionary
    keys apart.
    """

    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValidationError("time lattice needs dt > 0")

    def quantize(self, y):
        return round(y / self.dt) * self.dt

    def enumerate(self):
        raise ValidationError("elapsed-time signal space is unbounded")


@dataclass(frozen=True)
class ProductSpace:
    """Cartesian product of component spaces; signals are tuples."""

    parts: tuple

    def quantize(self, y):
        return tuple(p.quantize(v) for p, v in zip(self.parts, y))

    def enumerate(self):
        return tuple(itertools.product(*(p.enumerate() for p in self.parts)))


@dataclass(frozen=True)
class SignalRule:
    """Causal update y' = f(x, y) plus space descriptor and initial value."""

    update: Callable[[Any, Any], Any]
    space: Any
    initial: Any

    def step(self, x, y):
        """Apply the update and re-quantize into the signal space."""
        return self.space.quantize(self.update(x, y))

    def iterate(self, xs, y=None):
        """Fold the rule over an outcome sequence; returns the final signal."""
        if y is None:
            y = self.initial
        for x in xs:
            y = self.step(x, y)
        return y


def last_outcome_rule(outcomes, initial) -> SignalRule:
    """Memory-less signal: y' = x."""
    outcomes = tuple(outcomes)
    if not outcomes:
        raise ValidationError("last_outcome_rule needs a nonempty outcome set")
    return SignalRule(update=lambda x, y: x,
                      space=FiniteSpace(outcomes), initial=initial)


def low_pass_rule(
    bandwidth: float,
    dt: float,
    lo: float,
    hi: float,
    nbins: int = 512,
    initial: float = 0.0,
) -> SignalRule:
    """Exponentially filtered outcome: y' = g*dt*x + exp(-g*dt)*y.

    The continuous signal is kept on a uniform bin grid over [lo, hi];
    refining the grid must (and does, see tests) shrink the binning error.
    """
    if bandwidth <= 0 or dt <= 0:
        raise ValidationError("low_pass_rule needs bandwidth > 0 and dt > 0")
    alpha = bandwidth * dt
    p = math.exp(-bandwidth * dt)
    return SignalRule(
        update=lambda x, y: alpha * x + p * y,
        space=BinnedSpace(lo, hi, nbins),
        initial=initial,
    )


def charge_rule(weights: Mapping[Any, int], window, initial: int = 0) -> SignalRule:
    """Integrated charge: y' = y + nu_x (0 for outcomes without a weight).

    Weights must be integers on a common lattice; what happens when the
    charge leaves ``window`` is decided by the consuming engine's boundary
    policy, not here.
    """
    weights = dict(weights)
    for k, nu in weights.items():
        if nu != int(nu):
            raise ValidationError(
                f"charge weight for {k!r} must be an integer lattice step"
            )
    lo, hi = window
    return SignalRule(
        update=lambda x, y: y + int(weights.get(x, 0)),
        space=LatticeSpace(int(lo), int(hi)),
        initial=int(initial),
    )


def last_jump_rule(channels, initial) -> SignalRule:
    """Channel of the last jump: y' = x for x in channels, else y.

    The pre-first-jump value is not defined by the update alone, so the
    initial channel is a mandatory argument.
    """
    channels = tuple(channels)
    if not channels:
        raise ValidationError("last_jump_rule needs a nonempty channel set")
    if initial not in channels:
        raise ValidationError(
            f"initial channel {initial!r} is not one of {channels}"
        )
    chan = frozenset(channels)
    return SignalRule(
        update=lambda x, y: x if x in chan else y,
        space=FiniteSpace(channels),
        initial=initial,
    )


def counting_rule(dt: float, initial: float = 0.0) -> SignalRule:
    """Time since the last jump: y' = y + dt on no-jump (x == 0), else 0."""
    if dt <= 0:
        raise ValidationError("counting_rule needs dt > 0")
    return SignalRule(
        update=lambda x, y: (y + dt) if x == 0 else 0.0,
        space=TimeLattice(dt),
        initial=initial,
    )


def product_rule(a: SignalRule, b: SignalRule) -> SignalRule:
    """Joint signal (ya, yb) updated component-wise from the same outcome."""
    return SignalRule(
        update=lambda x, y: (a.update(x, y[0]), b.update(x, y[1])),
        space=ProductSpace((a.space, b.space)),
        initial=(a.initial, b.initial),
    )


def jump_time_rule(channels, dt: float, initial_channel) -> SignalRule:
    """Combined (last jump channel, elapsed time) signal of jump feedback."""
    return product_rule(
        last_jump_rule(channels, initial_channel), counting_rule(dt)
    )

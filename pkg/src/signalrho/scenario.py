"""Scenario files: JSON descriptions of a system, signal and run.

A scenario names its matrices once (nested [re, im] pairs) and wires them
into a model, an optional feedback schedule, a signal rule and a run
specification.  Parsing is eager: every referenced matrix must resolve
and every model-level validation runs before a scenario is accepted.

Schema (see README for a commented example)::

    {
      "name": str,
      "dim": int,
      "matrices": {name: [[[re, im], ...], ...]},
      "model": {"hamiltonian": name,
                "jumps": {label: name, ...},
                "monitored": [label, ...]},
      "schedule": {label: {"segments": [{"hamiltonian": name,
                                          "duration": float,
                                          "jumps": {label: name}?}, ...],
                            "tail": {"hamiltonian": name, "jumps": {...}?}},
                   ...},                                  # optional
      "signal": {"kind": "last_jump" | "charge" | "low_pass"
                          | "last_outcome", ...params},   # optional
      "initial_state": name,
      "observables": {column: name, ...},
      "run": {"route": "omega" | "coupled",
              "evolve_with": "coupled" | "tau_grid",
              "T": float, "dt": float, "dtau": float,
              "ntraj": int, "sample_every": int,
              "initial_channel": label}
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .engine_jump import FeedbackSchedule, Segment
from .errors import ValidationError
from .model import QuantumModel
from .signals import SignalRule, charge_rule, last_jump_rule, last_outcome_rule, low_pass_rule


@dataclass
class Scenario:
    """A parsed, validated scenario plus the raw document for hashing."""

    name: str
    dim: int
    matrices: dict
    model: QuantumModel
    schedule: FeedbackSchedule | None
    signal_spec: dict | None
    initial_state: np.ndarray
    observables: dict
    run: dict
    raw: dict = field(repr=False, default_factory=dict)
    path: str = ""

    def sha256(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def signal_rule(self, dt: float | None = None) -> SignalRule:
        """Build the scenario's signal rule (dt needed for low-pass)."""
        spec = self.signal_spec
        if spec is None:
            raise ValidationError("scenario defines no signal rule")
        kind = spec.get("kind")
        if kind == "last_jump":
            return last_jump_rule(self.model.monitored, spec["initial"])
        if kind == "last_outcome":
            outcomes = (0, *self.model.monitored)
            return last_outcome_rule(outcomes, spec.get("initial", 0))
        if kind == "charge":
            return charge_rule(
                {k: int(v) for k, v in spec["weights"].items()},
                window=(int(spec["window"][0]), int(spec["window"][1])),
                initial=int(spec.get("initial", 0)),
            )
        if kind == "low_pass":
            if dt is None:
                raise ValidationError("low-pass signal needs the run dt")
            return low_pass_rule(
                bandwidth=float(spec["bandwidth"]), dt=dt,
                lo=float(spec["lo"]), hi=float(spec["hi"]),
                nbins=int(spec.get("nbins", 512)),
                initial=float(spec.get("initial", 0.0)),
            )
        raise ValidationError(f"unknown signal kind {kind!r}")


def _parse_matrix(name: str, data, dim: int) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape != (dim, dim, 2):
        raise ValidationError(
            f"matrix {name!r} must be {dim}x{dim} of [re, im] pairs, "
            f"got shape {arr.shape}"
        )
    return arr[..., 0] + 1j * arr[..., 1]


def _lookup(matrices: dict, name: str, context: str) -> np.ndarray:
    if name not in matrices:
        raise ValidationError(
            f"{context} references undefined matrix {name!r}"
        )
    return matrices[name]


def _parse_segment_model(
    seg_spec: dict, matrices: dict, base: QuantumModel, context: str
) -> QuantumModel:
    h = _lookup(matrices, seg_spec["hamiltonian"], context)
    jumps = dict(base.jumps)
    for label, mname in seg_spec.get("jumps", {}).items():
        if label not in jumps:
            raise ValidationError(
                f"{context} overrides unknown jump label {label!r}"
            )
        jumps[label] = _lookup(matrices, mname, context)
    return QuantumModel(hamiltonian=h, jumps=jumps, monitored=base.monitored)


def parse_scenario(path) -> Scenario:
    """Load and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"scenario {path} is not valid JSON "
            f"(line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc

    try:
        dim = int(doc["dim"])
        matrices = {
            name: _parse_matrix(name, data, dim)
            for name, data in doc.get("matrices", {}).items()
        }
        mspec = doc["model"]
        jumps = {
            label: _lookup(matrices, name, f"model jump {label!r}")
            for label, name in mspec["jumps"].items()
        }
        model = QuantumModel(
            hamiltonian=_lookup(matrices, mspec["hamiltonian"], "model"),
            jumps=jumps,
            monitored=tuple(mspec.get("monitored", tuple(jumps))),
        )

        schedule = None
        if "schedule" in doc:
            channels = {}
            for label_str, cspec in doc["schedule"].items():
                if label_str not in model.jumps:
                    raise ValidationError(
                        f"schedule channel {label_str!r} is not a model jump"
                    )
                segs = []
                for i, seg_spec in enumerate(cspec.get("segments", [])):
                    ctx = f"schedule channel {label_str!r} segment {i}"
                    segs.append(Segment(
                        duration=float(seg_spec["duration"]),
                        model=_parse_segment_model(seg_spec, matrices, model, ctx),
                    ))
                tail_spec = cspec["tail"]
                segs.append(Segment(
                    duration=None,
                    model=_parse_segment_model(
                        tail_spec, matrices, model,
                        f"schedule channel {label_str!r} tail"),
                ))
                channels[label_str] = tuple(segs)
            schedule = FeedbackSchedule(channels)

        initial_state = None
        if "initial_state" in doc:
            initial_state = _lookup(matrices, doc["initial_state"],
                                    "initial_state")
            tr = np.trace(initial_state)
            if abs(tr - 1.0) > 1e-9:
                raise ValidationError(
                    f"initial state trace is {tr:.6g}, expected 1"
                )
        observables = {
            col: _lookup(matrices, name, f"observable {col!r}")
            for col, name in doc.get("observables", {}).items()
        }
        run = dict(doc.get("run", {}))
    except KeyError as exc:
        raise ValidationError(
            f"scenario {path} is missing required field {exc.args[0]!r}"
        ) from exc

    return Scenario(
        name=str(doc.get("name", path.stem)),
        dim=dim,
        matrices=matrices,
        model=model,
        schedule=schedule,
        signal_spec=doc.get("signal"),
        initial_state=(initial_state if initial_state is not None
                       else np.eye(dim, dtype=complex) / dim),
        observables=observables,
        run=run,
        raw=doc,
        path=str(path),
    )

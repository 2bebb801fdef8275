"""Fixed-step RK4 integration of the assembled plant with timed events.

Events snap to the nearest step boundary and take effect at the start of
that step. Row 0 of the captured series is the initial condition before any
t=0 event. A trajectory that leaves |x| <= 1e6 pu is truncated and flagged
diverged (an expected outcome for unstable scenarios, not a solver error);
a non-finite state truncates at the last valid sample and flags the run
aborted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .components import FaultSpec, RefInputs, SystemModel

DIVERGENCE_LIMIT = 1e6

STEP_CHANNELS = ("p_star", "v_turb_star", "q_star", "v_g_ref")

DERIVED_SIGNALS = ("p_pc", "q_pc", "p_g", "q_g", "p_sc", "q_sc", "v_c_mag", "v_pcc_mag")


@dataclass(frozen=True)
class Event:
    """A timed change: shunt fault on/off at a bus, or a reference step."""

    t: float
    kind: str
    bus: Optional[str] = None
    r_fault: Optional[float] = None
    channel: Optional[str] = None
    delta: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t >= 0.0):
            raise ValueError(f"event time must be >= 0, got {self.t}")
        if self.kind not in ("fault_on", "fault_off", "step_ref"):
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def fault_on(cls, t: float, bus: str, r_fault: float) -> "Event":
        FaultSpec(bus, r_fault)  # validates bus name and resistance
        return cls(t=t, kind="fault_on", bus=bus, r_fault=r_fault)

    @classmethod
    def fault_off(cls, t: float, bus: str) -> "Event":
        if bus not in ("pcc", "wt_mv"):
            raise ValueError(f"fault bus must be 'pcc' or 'wt_mv', got {bus!r}")
        return cls(t=t, kind="fault_off", bus=bus)

    @classmethod
    def step_ref(cls, t: float, channel: str, delta: float) -> "Event":
        if channel not in STEP_CHANNELS:
            raise ValueError(f"step channel must be one of {STEP_CHANNELS}, got {channel!r}")
        if not math.isfinite(delta):
            raise ValueError(f"step delta must be finite, got {delta}")
        return cls(t=t, kind="step_ref", channel=channel, delta=delta)

    def to_dict(self) -> dict:
        d = {"t": self.t, "kind": self.kind}
        if self.kind == "fault_on":
            d.update(bus=self.bus, r_fault=self.r_fault)
        elif self.kind == "fault_off":
            d.update(bus=self.bus)
        else:
            d.update(channel=self.channel, delta=self.delta)
        return d


@dataclass
class TimeSeries:
    """Uniformly sampled named signals."""

    t: np.ndarray
    columns: dict[str, np.ndarray]
    dt: float
    meta: str = ""
    diverged: bool = False
    aborted: bool = False
    note: str = ""

    def __post_init__(self) -> None:
        n = self.t.size
        for name, col in self.columns.items():
            if col.size != n:
                raise ValueError(f"column {name!r} length {col.size} != t length {n}")
        if n > 1:
            gaps = np.diff(self.t)
            if float(np.max(np.abs(gaps - self.dt))) >= 1e-12:
                raise ValueError("time vector is not uniformly spaced at dt")

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


def _rk4_step(model: SystemModel, x: np.ndarray, refs: RefInputs,
              fault: Optional[FaultSpec], dt: float) -> np.ndarray:
    k1 = model.rhs(x, refs, fault, dt)
    k2 = model.rhs(x + 0.5 * dt * k1, refs, fault, dt)
    k3 = model.rhs(x + 0.5 * dt * k2, refs, fault, dt)
    k4 = model.rhs(x + dt * k3, refs, fault, dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    model: SystemModel,
    x0: np.ndarray,
    refs: RefInputs,
    t_end: float,
    dt: float = 5e-5,
    events: Sequence[Event] = (),
    meta: str = "",
) -> TimeSeries:
    """Integrate the plant ODE from x0 with the given event schedule.

    Captures every state plus interface powers and bus voltage magnitudes at
    every step.
    """
    if not 1e-6 <= dt <= 1e-3:
        raise ValueError(f"dt must be in [1e-6, 1e-3] s, got {dt}")
    if not (math.isfinite(t_end) and t_end > 0.0):
        raise ValueError(f"t_end must be > 0, got {t_end}")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n,) or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite state vector of the model's dimension")

    n_steps = int(round(t_end / dt))
    schedule: dict[int, list[Event]] = {}
    for ev in sorted(events, key=lambda e: e.t):
        k = int(round(ev.t / dt))
        if k < n_steps:
            schedule.setdefault(k, []).append(ev)

    states = np.empty((n_steps + 1, model.n))
    derived = np.empty((n_steps + 1, len(DERIVED_SIGNALS)))
    states[0] = x0

    def capture(row: int, x: np.ndarray, r: RefInputs) -> None:
        m = model.measure(x, r)
        derived[row] = [m[name] for name in DERIVED_SIGNALS]

    cur_refs = refs
    fault: Optional[FaultSpec] = None
    capture(0, x0, cur_refs)

    diverged = False
    aborted = False
    note = ""
    last = n_steps
    for k in range(n_steps):
        for ev in schedule.get(k, ()):
            if ev.kind == "step_ref":
                cur_refs = replace(cur_refs, **{ev.channel: getattr(cur_refs, ev.channel) + ev.delta})
            elif ev.kind == "fault_on":
                if fault is not None:
                    raise ValueError(f"fault_on at t={ev.t} while a fault is already active")
                fault = FaultSpec(ev.bus, ev.r_fault)
            else:
                if fault is None or fault.bus != ev.bus:
                    raise ValueError(f"fault_off at t={ev.t} without a matching fault_on")
                fault = None
        x_new = _rk4_step(model, states[k], cur_refs, fault, dt)
        if not np.all(np.isfinite(x_new)):
            aborted = True
            note = f"non-finite state at t={(k + 1) * dt:.6g} s; series truncated"
            last = k
            break
        states[k + 1] = x_new
        capture(k + 1, x_new, cur_refs)
        if float(np.max(np.abs(x_new))) > DIVERGENCE_LIMIT:
            diverged = True
            note = f"state magnitude exceeded {DIVERGENCE_LIMIT:g} at t={(k + 1) * dt:.6g} s"
            last = k + 1
            break

    t = np.arange(last + 1) * dt
    columns: dict[str, np.ndarray] = {
        lab: states[: last + 1, i].copy() for i, lab in enumerate(model.labels)
    }
    for j, name in enumerate(DERIVED_SIGNALS):
        columns[name] = derived[: last + 1, j].copy()
    return TimeSeries(
        t=t, columns=columns, dt=dt, meta=meta, diverged=diverged, aborted=aborted, note=note
    )

"""Dynamic muscle-fatigue capacity model.

The remaining exploitable capacity F_cem decays under load according to

    dF_cem/dt = -k * (F_cem / MVC) * F_load,        F_load = f(t) * MVC

so with a constant relative load f the capacity is the exponential
``F_cem(t) = F0 * exp(-k f t)``.  Time is in minutes throughout this module
(k is a per-minute rate); load profiles arrive with second-based grids and
are converted at the boundary.  Recovery is not modeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DomainError, ParameterError
from .dynamics import LoadProfile
from .mocap import _fmt, _readonly

SECONDS_PER_MINUTE = 60.0


@dataclass(frozen=True)
class FatigueParams:
    """Capacity model parameters.

    ``mvc`` is the maximal exploitable force or torque (units must match the
    load source); ``k`` the fatigue rate per minute; ``initial_capacity``
    defaults to mvc.
    """

    mvc: float
    k: float = 1.0
    initial_capacity: float | None = None

    def __post_init__(self):
        if self.mvc <= 0:
            raise ParameterError(f"mvc must be positive, got {self.mvc}")
        if self.k <= 0:
            raise ParameterError(f"k must be positive, got {self.k}")
        if self.initial_capacity is None:
            object.__setattr__(self, "initial_capacity", float(self.mvc))
        if not 0 < self.initial_capacity <= self.mvc:
            raise ParameterError(
                f"initial capacity {self.initial_capacity} outside (0, mvc]"
            )


@dataclass(frozen=True)
class CapacityTrajectory:
    """Remaining capacity over time (minutes); normalized = capacity / mvc."""

    times_min: np.ndarray
    capacity: np.ndarray
    mvc: float
    k: float

    def __post_init__(self):
        if self.capacity.shape != self.times_min.shape:
            raise ParameterError("capacity and times_min must have equal length")
        for a in (self.times_min, self.capacity):
            _readonly(np.asarray(a))

    @property
    def normalized(self) -> np.ndarray:
        return self.capacity / self.mvc

    def __len__(self):
        return len(self.times_min)


def integrate_capacity(params: FatigueParams, load: LoadProfile,
                       dt: float | None = None) -> CapacityTrajectory:
    """Classical RK4 over the load profile; output on the load grid.

    ``dt`` is the integration step in minutes and must not exceed the load
    grid spacing (default: exactly the grid spacing).  The load is sampled
    by linear interpolation at stage times.  Each grid interval is covered
    by equal substeps of size <= dt so the integration lands exactly on the
    grid nodes.
    """
    if np.any(load.f < 0):
        raise DomainError("relative load must be non-negative")
    t_min = np.asarray(load.times, dtype=float) / SECONDS_PER_MINUTE
    if len(t_min) < 2:
        raise ParameterError("load profile needs at least two samples")
    spacing = float(np.min(np.diff(t_min)))
    if spacing <= 0:
        raise ParameterError("load grid must be strictly increasing")
    if dt is None:
        dt = spacing
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if dt > spacing * (1 + 1e-9):
        raise ParameterError(
            f"dt = {dt} min exceeds the load grid spacing {spacing:.6g} min"
        )

    k = params.k
    cap = np.empty(len(t_min))
    cap[0] = params.initial_capacity
    F = float(params.initial_capacity)
    for i in range(len(t_min) - 1):
        t_a, t_b = t_min[i], t_min[i + 1]
        f_a, f_b = load.f[i], load.f[i + 1]
        span = t_b - t_a
        n_sub = max(1, math.ceil(span / dt - 1e-9))
        h = span / n_sub

        def f_at(t):
            # linear interpolation of the load within the interval
            w = (t - t_a) / span
            return f_a + w * (f_b - f_a)

        for s in range(n_sub):
            t = t_a + s * h
            k1 = -k * f_at(t) * F
            k2 = -k * f_at(t + h / 2) * (F + h / 2 * k1)
            k3 = -k * f_at(t + h / 2) * (F + h / 2 * k2)
            k4 = -k * f_at(t + h) * (F + h * k3)
            F = F + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        cap[i + 1] = F
    return CapacityTrajectory(times_min=t_min, capacity=cap, mvc=params.mvc, k=params.k)


def capacity_closed_form(params: FatigueParams, f: float, t: float) -> float:
    """F0 * exp(-k f t) — exact solution for a constant relative load."""
    if f < 0:
        raise DomainError(f"relative load must be non-negative, got {f}")
    return params.initial_capacity * math.exp(-params.k * f * t)


def endurance_time(params: FatigueParams, f: float) -> float:
    """First time the remaining capacity equals the imposed load, minutes.

    For initial capacity MVC this is ln(1/f) / (k f); f = 1 gives 0.
    """
    if f <= 0:
        raise DomainError(
            "endurance_time: f_nonpositive — capacity never decays to a zero load"
        )
    if f > 1:
        raise DomainError(
            "endurance_time: f_over_one — demand exceeds capacity from the start"
        )
    t = math.log(params.initial_capacity / (f * params.mvc)) / (params.k * f)
    return max(0.0, t)


@dataclass(frozen=True)
class CapacitySummary:
    end_ratio: float
    min_ratio: float
    infeasibility_onset_min: float | None
    total_fatigue: float

    def to_dict(self) -> dict:
        return {
            "end_ratio": self.end_ratio,
            "min_ratio": self.min_ratio,
            "infeasibility_onset_min": self.infeasibility_onset_min,
            "total_fatigue": self.total_fatigue,
        }


def capacity_summary(traj: CapacityTrajectory, load: LoadProfile) -> CapacitySummary:
    """Reportable quantities of a capacity trajectory.

    Infeasibility onset is the first grid time at which the capacity no
    longer exceeds the demand f * MVC; total fatigue is the integral of
    k * (F_cem/MVC) * f over the run (trapezoid).
    """
    t_load = np.asarray(load.times, dtype=float) / SECONDS_PER_MINUTE
    if len(t_load) != len(traj) or not np.allclose(
        t_load, traj.times_min, rtol=0, atol=1e-9
    ):
        raise AlignmentError("capacity and load are not on the same grid")
    ratio = traj.normalized
    demand = load.f * traj.mvc
    onset_idx = np.flatnonzero((traj.capacity <= demand) & (load.f > 0))
    onset = float(traj.times_min[onset_idx[0]]) if len(onset_idx) else None
    rate = traj.k * ratio * load.f
    total = float(np.trapezoid(rate, traj.times_min))
    return CapacitySummary(
        end_ratio=float(ratio[-1]),
        min_ratio=float(ratio.min()),
        infeasibility_onset_min=onset,
        total_fatigue=total,
    )


def write_capacity_csv(traj: CapacityTrajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time_min,F_cem,F_cem_over_MVC\n")
        norm = traj.normalized
        for i in range(len(traj)):
            fh.write(f"{_fmt(traj.times_min[i])},{_fmt(traj.capacity[i])},{_fmt(norm[i])}\n")


def read_capacity_csv(path, mvc: float, k: float) -> CapacityTrajectory:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time_min", "F_cem", "F_cem_over_MVC"]:
            raise ParameterError(f"{path}: unexpected capacity header {header!r}")
        rows = [row for row in reader if row]
    times = np.array([float(r[0]) for r in rows])
    cap = np.array([float(r[1]) for r in rows])
    return CapacityTrajectory(times_min=times, capacity=cap, mvc=mvc, k=k)

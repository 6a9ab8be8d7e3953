"""Joint-torque estimation and the relative muscle-load profile.

Segments are point masses at configurable center-of-mass ratios plus a
payload at the wrist.  Static torques come from the Jacobian transpose of
the gravity forces; the optional inertial correction finite-differences the
point-mass positions along the trajectory.  Torque sign convention:
actuation torque, i.e. what the joints must exert to hold the pose.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import GridError, ParameterError
from .kinematics import ArmGeometry, JointTrajectory, _angles, forward_kinematics
from .mocap import _fmt, _readonly

ATTACH_POINTS = ("elbow", "wrist", "upper_com", "fore_com", "payload")

JACOBIAN_STEP = 1e-6  # rad, central-difference step


@dataclass(frozen=True)
class SegmentInertia:
    """Point-mass model of the arm segments and carried payload (kg)."""

    upper_arm_mass: float = 2.0
    forearm_mass: float = 1.5
    com_ratio_upper: float = 0.5
    com_ratio_fore: float = 0.5
    payload_mass: float = 0.0

    def __post_init__(self):
        if min(self.upper_arm_mass, self.forearm_mass, self.payload_mass) < 0:
            raise ParameterError("masses must be non-negative")
        for r in (self.com_ratio_upper, self.com_ratio_fore):
            if not 0.0 <= r <= 1.0:
                raise ParameterError(f"com ratio {r} outside [0, 1]")


def _check_uniform(times: np.ndarray) -> float:
    if len(times) < 3:
        raise GridError(f"need at least 3 samples for the stencil, have {len(times)}")
    dts = np.diff(times)
    dt = dts[0]
    if np.any(np.abs(dts - dt) > 1e-9):
        raise GridError("time grid is not uniform")
    return float(dt)


def differentiate(times, values, order: int = 1) -> np.ndarray:
    """Finite-difference derivative along axis 0 of a uniform series.

    Central differences on interior points, one-sided second-order stencils
    at the endpoints (exact on affine signals).  ``order=2`` applies the
    first-derivative stencil twice.
    """
    if order not in (1, 2):
        raise ParameterError(f"order must be 1 or 2, got {order}")
    times = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    dt = _check_uniform(times)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * dt)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dt)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * dt)
    if order == 2:
        return differentiate(times, out, order=1)
    return out


def com_positions(geom: ArmGeometry, inertia: SegmentInertia, q):
    """(upper_com, fore_com, payload_point) in the shoulder frame."""
    elbow, wrist, _ = forward_kinematics(geom, q)
    upper = inertia.com_ratio_upper * elbow
    fore = elbow + inertia.com_ratio_fore * (wrist - elbow)
    return upper, fore, wrist


def attach_point(geom: ArmGeometry, q, attach: str,
                 inertia: SegmentInertia | None = None) -> np.ndarray:
    if attach not in ATTACH_POINTS:
        raise ParameterError(f"attach must be one of {ATTACH_POINTS}, got {attach!r}")
    if attach in ("upper_com", "fore_com") and inertia is None:
        raise ParameterError(f"attach point {attach!r} needs segment inertia (com ratios)")
    if attach == "elbow":
        return forward_kinematics(geom, q)[0]
    if attach in ("wrist", "payload"):
        return forward_kinematics(geom, q)[1]
    upper, fore, _ = com_positions(geom, inertia, q)
    return upper if attach == "upper_com" else fore


def positional_jacobian(geom: ArmGeometry, q, attach: str,
                        inertia: SegmentInertia | None = None,
                        step: float = JACOBIAN_STEP) -> np.ndarray:
    """3x3 position Jacobian of an attached point by central differences."""
    a = _angles(q)
    J = np.empty((3, 3))
    for j in range(3):
        dq = np.zeros(3)
        dq[j] = step
        pp = attach_point(geom, a + dq, attach, inertia)
        pm = attach_point(geom, a - dq, attach, inertia)
        J[:, j] = (pp - pm) / (2 * step)
    return J


def _mass_points(inertia: SegmentInertia):
    return (
        ("upper_com", inertia.upper_arm_mass),
        ("fore_com", inertia.forearm_mass),
        ("payload", inertia.payload_mass),
    )


def static_torques(geom: ArmGeometry, inertia: SegmentInertia, q, gravity) -> np.ndarray:
    """Actuation torques holding the pose against gravity (N.m).

    tau = -sum_p J_p^T (m_p g) over upper-arm com, forearm com, payload.
    """
    g = np.asarray(gravity, dtype=float)
    tau = np.zeros(3)
    for attach, mass in _mass_points(inertia):
        if mass == 0.0:
            continue
        J = positional_jacobian(geom, q, attach, inertia)
        tau -= J.T @ (mass * g)
    return tau


def dynamic_torques(geom: ArmGeometry, inertia: SegmentInertia,
                    traj: JointTrajectory) -> np.ndarray:
    """Inertial actuation-torque series, (n, 3).

    Point accelerations are obtained by finite-differencing each mass
    point's position along the trajectory, then mapped through the Jacobian
    transpose.  A static trajectory contributes exactly zero.
    """
    _check_uniform(traj.times)
    n = len(traj)
    tau = np.zeros((n, 3))
    for attach, mass in _mass_points(inertia):
        if mass == 0.0:
            continue
        pts = np.array([attach_point(geom, traj.theta[i], attach, inertia)
                        for i in range(n)])
        acc = differentiate(traj.times, pts, order=2)
        for i in range(n):
            J = positional_jacobian(geom, traj.theta[i], attach, inertia)
            tau[i] += J.T @ (mass * acc[i])
    return tau


@dataclass(frozen=True)
class TorqueSeries:
    """Per-joint actuation torques on the trajectory grid (N.m)."""

    times: np.ndarray
    tau: np.ndarray  # (n, 3)

    def __post_init__(self):
        if self.tau.shape != (len(self.times), 3):
            raise ParameterError("tau must be (n, 3)")
        if not np.isfinite(self.tau).all():
            raise ParameterError("torque series contains non-finite values")
        for a in (self.times, self.tau):
            _readonly(np.asarray(a))

    def __len__(self):
        return len(self.times)


def torque_series(geom: ArmGeometry, inertia: SegmentInertia, traj: JointTrajectory,
                  gravity, include_inertial: bool = True) -> TorqueSeries:
    """Gravity torques along the trajectory, plus the inertial term."""
    tau = np.array([static_torques(geom, inertia, traj.theta[i], gravity)
                    for i in range(len(traj))])
    if include_inertial:
        tau = tau + dynamic_torques(geom, inertia, traj)
    return TorqueSeries(times=traj.times.copy(), tau=tau)


@dataclass(frozen=True)
class LoadProfile:
    """Relative muscle load f(t) = demand / capacity, dimensionless.

    Values above 1 are kept and flagged, never clamped.
    """

    times: np.ndarray  # seconds
    f: np.ndarray
    over_limit: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if self.f.shape != (n,) or self.over_limit.shape != (n,):
            raise ParameterError("f and over_limit must be (n,)")
        if np.any(self.f < 0):
            raise ParameterError("relative load must be non-negative")
        for a in (self.times, self.f, self.over_limit):
            _readonly(np.asarray(a))

    def __len__(self):
        return len(self.times)


def load_profile(torques: TorqueSeries, tau_max, joint: int) -> LoadProfile:
    """f(t) = |tau_joint(t)| / tau_max_joint for the selected joint (1..3)."""
    if joint not in (1, 2, 3):
        raise ParameterError(f"joint selector must be 1, 2 or 3, got {joint}")
    tau_max = np.asarray(tau_max, dtype=float)
    if tau_max.shape != (3,):
        raise ParameterError("tau_max must give one value per joint")
    limit = float(tau_max[joint - 1])
    if limit <= 0:
        raise ParameterError(f"tau_max for joint {joint} must be positive, got {limit}")
    f = np.abs(torques.tau[:, joint - 1]) / limit
    return LoadProfile(times=torques.times.copy(), f=f, over_limit=f > 1.0)


def direct_load_profile(times, force: float, mvc_force: float) -> LoadProfile:
    """Holding-task mode: constant f = payload force / MVC force."""
    if mvc_force <= 0:
        raise ParameterError(f"MVC force must be positive, got {mvc_force}")
    if force < 0:
        raise ParameterError(f"payload force must be non-negative, got {force}")
    times = np.asarray(times, dtype=float)
    f = np.full(len(times), force / mvc_force)
    return LoadProfile(times=times.copy(), f=f, over_limit=f > 1.0)


def write_torque_csv(series: TorqueSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,tau1,tau2,tau3\n")
        for i in range(len(series)):
            fh.write(",".join([_fmt(series.times[i])] +
                              [_fmt(v) for v in series.tau[i]]) + "\n")


def read_torque_csv(path) -> TorqueSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time", "tau1", "tau2", "tau3"]:
            raise ParameterError(f"{path}: unexpected torque header {header!r}")
        rows = [row for row in reader if row]
    times = np.array([float(r[0]) for r in rows])
    tau = np.array([[float(r[j]) for j in (1, 2, 3)] for r in rows])
    return TorqueSeries(times=times, tau=tau)


def write_load_csv(load: LoadProfile, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,f,over_limit\n")
        for i in range(len(load)):
            fh.write(f"{_fmt(load.times[i])},{_fmt(load.f[i])},{int(load.over_limit[i])}\n")


def read_load_csv(path) -> LoadProfile:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["time", "f", "over_limit"]:
            raise ParameterError(f"{path}: unexpected load header {header!r}")
        rows = [row for row in reader if row]
    times = np.array([float(r[0]) for r in rows])
    f = np.array([float(r[1]) for r in rows])
    over = np.array([bool(int(r[2])) for r in rows])
    return LoadProfile(times=times, f=f, over_limit=over)


__all__ = [
    "SegmentInertia", "TorqueSeries", "LoadProfile",
    "differentiate", "com_positions", "attach_point", "positional_jacobian",
    "static_torques", "dynamic_torques", "torque_series",
    "load_profile", "direct_load_profile",
    "write_torque_csv", "read_torque_csv", "write_load_csv", "read_load_csv",
]

"""3-DOF arm model: DH transforms, forward kinematics, calibration, and the
analytic inverse kinematics that recovers shoulder and elbow angles from
articulation positions.

The arm chain is four DH rows in the modified convention,
``Rot(x, alpha) . Trans(x, d) . Rot(z, theta) . Trans(z, r)``:

    j   alpha    d    theta   r
    1   +pi/2    0    q1      0
    2   -pi/2    0    q2      0
    3    0       d3   q3      0
    4    0       d4   0       0

Two shoulder DOFs (q1, q2), one elbow DOF (q3), fixed wrist.  The elbow
position in the shoulder frame has the closed form
``d3 * (c1 c2, s2, s1 c2)``, which the tests use to cross-check the matrix
chain.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DegenerateInputError,
    GeometryMismatchError,
    GridError,
    ParameterError,
)
from .mocap import ArticulationTrajectory, _fmt, _infer_rate, _readonly

# |cos(theta2)| below this leaves theta1 indeterminate from positions
SINGULARITY_EPS = 1e-6

# segment-length mismatch above this fraction is an error, below it the
# point is silently re-projected onto the calibrated radius
REPROJECTION_TOLERANCE = 0.05

DEFAULT_JOINT_LIMITS = (
    (-math.pi, math.pi),
    (-math.pi / 2, math.pi / 2),
    (0.0, 5 * math.pi / 6),
)

IDENTITY_AXIS_MAP = {"x": "x", "y": "y", "z": "z"}


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid transform: x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ParameterError("rotation must be 3x3 and translation length 3")
        if not np.allclose(R.T @ R, np.eye(3), rtol=0, atol=1e-12):
            raise ParameterError("rotation is not orthonormal to 1e-12")
        if abs(np.linalg.det(R) - 1.0) > 1e-12:
            raise ParameterError("rotation determinant must be +1 to 1e-12")
        object.__setattr__(self, "rotation", _readonly(R))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))


@dataclass(frozen=True)
class DHRow:
    """One DH row; ``theta is None`` marks the joint variable."""

    sigma: int     # 0 = revolute (all arm rows)
    alpha: float   # rad, rotation about previous x
    d: float       # m, offset along previous x
    theta: float | None
    r: float       # m, offset along joint z


def dh_transform(row: DHRow, theta: float | None = None) -> RigidTransform:
    """Rot(x, alpha) . Trans(x, d) . Rot(z, theta) . Trans(z, r)."""
    if theta is None:
        theta = row.theta
    if theta is None:
        raise ParameterError("row has a variable joint angle; theta is required")
    ca, sa = math.cos(row.alpha), math.sin(row.alpha)
    ct, st = math.cos(theta), math.sin(theta)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]])
    rz = np.array([[ct, -st, 0.0], [st, ct, 0.0], [0.0, 0.0, 1.0]])
    # translation (d, 0, r) expressed before the x-rotation
    t = rx @ np.array([row.d, 0.0, row.r])
    return RigidTransform(rx @ rz, t)


@dataclass(frozen=True)
class JointAngles:
    """One arm configuration (radians).

    ``singular`` marks configurations where theta1 is indeterminate from
    positions; ``out_of_limits`` marks solver outputs beyond the configured
    joint limits (values are never clamped).
    """

    theta1: float
    theta2: float
    theta3: float
    singular: bool = False
    out_of_limits: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.theta3])


def _angles(q) -> np.ndarray:
    if isinstance(q, JointAngles):
        return q.as_array()
    a = np.asarray(q, dtype=float)
    if a.shape != (3,):
        raise ParameterError(f"expected three joint angles, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class ArmGeometry:
    """Calibrated arm: segment lengths, lab-to-shoulder mapping, limits."""

    d3: float
    d4: float
    base_transform: RigidTransform = field(default_factory=RigidTransform.identity)
    joint_limits: tuple = DEFAULT_JOINT_LIMITS
    axis_map: dict = field(default_factory=lambda: dict(IDENTITY_AXIS_MAP))

    def __post_init__(self):
        if self.d3 <= 0 or self.d4 <= 0:
            raise ParameterError(f"segment lengths must be positive, got {self.d3}, {self.d4}")
        if len(self.joint_limits) != 3 or any(lo >= hi for lo, hi in self.joint_limits):
            raise ParameterError("joint_limits must be three (min, max) pairs with min < max")

    @property
    def dh_rows(self) -> tuple[DHRow, ...]:
        return (
            DHRow(0, math.pi / 2, 0.0, None, 0.0),
            DHRow(0, -math.pi / 2, 0.0, None, 0.0),
            DHRow(0, 0.0, self.d3, None, 0.0),
            DHRow(0, 0.0, self.d4, 0.0, 0.0),
        )

    def within_limits(self, q) -> bool:
        a = _angles(q)
        return all(lo <= v <= hi for v, (lo, hi) in zip(a, self.joint_limits))


def forward_kinematics(geom: ArmGeometry, q):
    """Compose the chain; returns (elbow, wrist, frames) in the shoulder frame.

    ``frames`` holds the four cumulative transforms; the elbow is the origin
    of frame 3 and the wrist the origin of frame 4.
    """
    a = _angles(q)
    thetas = (a[0], a[1], a[2], None)
    frames = []
    T = RigidTransform.identity()
    for row, theta in zip(geom.dh_rows, thetas):
        T = T.compose(dh_transform(row, theta))
        frames.append(T)
    return frames[2].translation.copy(), frames[3].translation.copy(), frames


def elbow_closed_form(geom: ArmGeometry, q) -> np.ndarray:
    """d3 * (c1 c2, s2, s1 c2); independent check of the matrix chain."""
    t1, t2, _ = _angles(q)
    c1, s1, c2, s2 = math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2)
    return geom.d3 * np.array([c1 * c2, s2, s1 * c2])


def axis_map_matrix(axis_map: dict) -> np.ndarray:
    """Signed-permutation rotation from a {model axis: lab axis} mapping.

    Example: ``{"x": "x", "y": "z", "z": "-y"}`` makes the model y-axis point
    along lab +z.  The mapping must be right-handed (determinant +1).
    """
    rows = []
    unit = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}
    for model_axis in ("x", "y", "z"):
        spec = str(axis_map.get(model_axis, model_axis)).strip().lower()
        sign = 1.0
        if spec.startswith(("+", "-")):
            sign = -1.0 if spec[0] == "-" else 1.0
            spec = spec[1:]
        if spec not in unit:
            raise ParameterError(f"bad axis mapping {model_axis!r} -> {spec!r}")
        rows.append(sign * np.array(unit[spec]))
    R = np.array(rows)
    if abs(np.linalg.det(R) - 1.0) > 1e-12:
        raise ParameterError("axis mapping must be a right-handed signed permutation")
    return R


def calibrate_geometry(
    traj: ArticulationTrajectory,
    axis_map: dict | None = None,
    joint_limits=DEFAULT_JOINT_LIMITS,
) -> ArmGeometry:
    """Estimate segment lengths (medians) and the lab-to-shoulder transform.

    The base transform rotates lab axes by the configured signed permutation
    and puts the origin at the mean shoulder position.
    """
    if len(traj) == 0:
        raise ParameterError("cannot calibrate from an empty trajectory")
    axis_map = dict(IDENTITY_AXIS_MAP if axis_map is None else axis_map)
    d3 = float(np.median(np.linalg.norm(traj.elbow - traj.shoulder, axis=1)))
    d4 = float(np.median(np.linalg.norm(traj.wrist - traj.elbow, axis=1)))
    if d3 < 1e-9 or d4 < 1e-9:
        raise DegenerateGeometryError(
            f"degenerate segment length (d3={d3:.3g} m, d4={d4:.3g} m)"
        )
    R = axis_map_matrix(axis_map)
    origin = traj.shoulder.mean(axis=0)
    base = RigidTransform(R, -(R @ origin))
    return ArmGeometry(d3=d3, d4=d4, base_transform=base,
                       joint_limits=tuple(tuple(p) for p in joint_limits),
                       axis_map=axis_map)


def _reproject(p: np.ndarray, length: float, what: str) -> np.ndarray:
    norm = float(np.linalg.norm(p))
    if norm < 1e-12:
        raise DegenerateInputError(f"{what} direction has zero norm")
    if abs(norm - length) > REPROJECTION_TOLERANCE * length:
        raise GeometryMismatchError(
            f"{what} length {norm:.4g} m differs from calibrated {length:.4g} m "
            f"by more than {REPROJECTION_TOLERANCE:.0%}"
        )
    return p * (length / norm)


def inverse_kinematics_frame(
    geom: ArmGeometry,
    p_elbow,
    p_wrist,
    theta1_hint: float | None = None,
) -> JointAngles:
    """Analytic IK for one frame; inputs in the shoulder base frame.

    Points are radially re-projected onto the calibrated segment lengths
    (mismatch above 5% is an error).  At the shoulder singularity
    (|cos theta2| < 1e-6) theta1 is indeterminate; ``theta1_hint`` supplies
    the value to hold, and the result is flagged singular.
    """
    p_elbow = np.asarray(p_elbow, dtype=float)
    p_wrist = np.asarray(p_wrist, dtype=float)
    pe = _reproject(p_elbow, geom.d3, "shoulder-elbow")
    vw = _reproject(p_wrist - p_elbow, geom.d4, "elbow-wrist")

    theta2 = math.asin(min(1.0, max(-1.0, pe[1] / geom.d3)))
    singular = abs(math.cos(theta2)) < SINGULARITY_EPS
    if singular and theta1_hint is not None:
        theta1 = float(theta1_hint)
    else:
        theta1 = math.atan2(pe[2], pe[0])

    # frame-2 z-axis from the composed chain at (theta1, theta2)
    rows = geom.dh_rows
    T12 = dh_transform(rows[0], theta1).compose(dh_transform(rows[1], theta2))
    z2 = T12.rotation[:, 2]
    u = pe / geom.d3
    v = vw / geom.d4
    theta3 = math.atan2(float(np.dot(np.cross(u, v), z2)), float(np.dot(u, v)))

    q = JointAngles(theta1, theta2, theta3, singular=singular)
    if not geom.within_limits(q):
        q = replace(q, out_of_limits=True)
    return q


def _wrap_pi(x: float) -> float:
    """Map to (-pi, pi]."""
    y = math.fmod(x + math.pi, 2 * math.pi)
    if y <= 0:
        y += 2 * math.pi
    return y - math.pi


@dataclass(frozen=True)
class JointTrajectory:
    """Solved joint angles on a uniform grid, with per-frame singular flags."""

    times: np.ndarray
    theta: np.ndarray     # (n, 3) radians
    singular: np.ndarray  # (n,) bool
    rate: float

    def __post_init__(self):
        n = len(self.times)
        if self.theta.shape != (n, 3) or self.singular.shape != (n,):
            raise ParameterError("theta must be (n, 3) and singular (n,)")
        for a in (self.times, self.theta, self.singular):
            _readonly(np.asarray(a))

    def __len__(self):
        return len(self.times)


def solve_trajectory(geom: ArmGeometry, traj: ArticulationTrajectory) -> JointTrajectory:
    """Per-frame IK in the shoulder frame with branch continuity.

    Each angle is unwrapped to within pi of its predecessor; theta1 holds
    its previous value across singular frames.  Frame-level degenerate
    inputs are re-raised with the frame index.
    """
    n = len(traj)
    if n >= 2:
        dts = np.diff(traj.times)
        if np.any(np.abs(dts - dts[0]) > 1e-9):
            raise GridError("articulation trajectory is not on a uniform grid")
    theta = np.empty((n, 3))
    singular = np.zeros(n, dtype=bool)
    prev: np.ndarray | None = None
    base = geom.base_transform
    for i in range(n):
        pe = base.apply(traj.elbow[i])
        pw = base.apply(traj.wrist[i])
        hint = float(prev[0]) if prev is not None else None
        try:
            q = inverse_kinematics_frame(geom, pe, pw, theta1_hint=hint)
        except (DegenerateInputError, GeometryMismatchError) as exc:
            raise type(exc)(f"frame {i}: {exc}") from exc
        raw = q.as_array()
        if prev is not None:
            raw = prev + np.array([_wrap_pi(v - p) for v, p in zip(raw, prev)])
            if q.singular:
                raw[0] = prev[0]
        theta[i] = raw
        singular[i] = q.singular
        prev = theta[i]
    return JointTrajectory(times=traj.times.copy(), theta=theta,
                           singular=singular, rate=traj.rate)


def write_joint_csv(traj: JointTrajectory, path) -> None:
    """Angle file: time, theta1..theta3 (radians), singular flag (0/1)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("time,theta1,theta2,theta3,singular\n")
        for i in range(len(traj)):
            cells = [_fmt(traj.times[i])] + [_fmt(v) for v in traj.theta[i]]
            cells.append(str(int(traj.singular[i])))
            fh.write(",".join(cells) + "\n")


def read_joint_csv(path) -> JointTrajectory:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header != ["time", "theta1", "theta2", "theta3", "singular"]:
            raise ParameterError(f"{path}: unexpected angle-file header {header!r}")
        rows = [row for row in reader if row]
    times = np.array([float(r[0]) for r in rows])
    theta = np.array([[float(r[j]) for j in (1, 2, 3)] for r in rows])
    singular = np.array([bool(int(r[4])) for r in rows])
    return JointTrajectory(times=times, theta=theta, singular=singular,
                           rate=_infer_rate(times))


def geometry_to_dict(geom: ArmGeometry) -> dict:
    return {
        "d3": geom.d3,
        "d4": geom.d4,
        "axis_map": dict(geom.axis_map),
        "joint_limits": [list(p) for p in geom.joint_limits],
    }


def write_geometry_json(geom: ArmGeometry, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(geometry_to_dict(geom), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_geometry_json(path) -> ArmGeometry:
    """Rebuild geometry from file.  The base origin is not persisted; the
    loaded transform carries the axis mapping only, which is all the
    downstream torque/replay stages need (they work in the shoulder frame).
    """
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    R = axis_map_matrix(d.get("axis_map", IDENTITY_AXIS_MAP))
    return ArmGeometry(
        d3=float(d["d3"]),
        d4=float(d["d4"]),
        base_transform=RigidTransform(R, np.zeros(3)),
        joint_limits=tuple(tuple(p) for p in d.get("joint_limits", DEFAULT_JOINT_LIMITS)),
        axis_map=dict(d.get("axis_map", IDENTITY_AXIS_MAP)),
    )

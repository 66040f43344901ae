"""Joint-estimation error metrics."""
import numpy as np

from ..errors import InvalidInputError
from ..scene import JointSpec

UNIT_TOL = 1e-6
PARALLEL_TOL = 1e-9


def _unit(v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,) or not np.all(np.isfinite(v)) or abs(np.linalg.norm(v) - 1) > UNIT_TOL:
        raise InvalidInputError(f"{name} must be a finite unit 3-vector")
    return v


def axis_error(u_est, u_gt) -> float:
    """Sign-agnostic angle between two axes, in degrees."""
    c = abs(float(_unit(u_est, "u_est") @ _unit(u_gt, "u_gt")))
    return float(np.degrees(np.arccos(min(1.0, c))))


def line_distance(q1, u1, q2, u2) -> float:
    """Closest-approach distance between two lines (meters)."""
    d = np.asarray(q2, dtype=np.float64) - np.asarray(q1, dtype=np.float64)
    n = np.cross(u1, u2)
    nn = np.linalg.norm(n)
    if nn < PARALLEL_TOL:
        return float(np.linalg.norm(d - (d @ u1) * np.asarray(u1)))
    return float(abs(d @ n) / nn)


def origin_error(est: JointSpec, q_gt, u_gt):
    """Line-to-line distance in centimeters; ``None`` for prismatic joints."""
    if not est.is_revolute:
        return None
    return 100.0 * line_distance(est.origin, _unit(est.axis, "axis"), q_gt, _unit(u_gt, "u_gt"))


def joint_errors(est: JointSpec, gt: JointSpec):
    return axis_error(est.axis, gt.axis), origin_error(est, gt.origin, gt.axis)

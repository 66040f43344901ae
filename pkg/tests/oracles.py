"""Independent reference implementations used by the tests.

Nothing here imports the code under test beyond plain data types, so the
oracles can disagree with the package.
"""
import numpy as np
from scipy.spatial.transform import Rotation

from artsplat.scene import Camera, Scene


def covariance(q_wxyz, scale):
    R = Rotation.from_quat(np.asarray(q_wxyz)[[1, 2, 3, 0]]).as_matrix()
    return R @ np.diag(np.asarray(scale) ** 2) @ R.T


def project_one(mean, q, scale, cam: Camera):
    """Pinhole projection of one Gaussian with an EWA covariance and 0.3 px dilation."""
    E = cam.extrinsics
    p = E[:3, :3] @ mean + E[:3, 3]
    x, y, z = p
    J = np.array([[cam.fx / z, 0.0, -cam.fx * x / z ** 2],
                  [0.0, cam.fy / z, -cam.fy * y / z ** 2]])
    JW = J @ E[:3, :3]
    cov = JW @ covariance(q, scale) @ JW.T + 0.3 * np.eye(2)
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy]), cov, z


def brute_force_render(scene: Scene, cam: Camera, alpha_min=1 / 255, t_stop=1e-4,
                       background=(0.0, 0.0, 0.0), near=0.01):
    """Per-pixel loop over every Gaussian, nearest first, with no footprint culling."""
    splats = []
    for i in range(len(scene)):
        m2, cov, z = project_one(scene.means[i], scene.rotations[i], scene.scales[i], cam)
        if z > near:
            splats.append((z, i, m2, np.linalg.inv(cov)))
    splats.sort(key=lambda s: (s[0], s[1]))
    rgb = np.zeros((cam.height, cam.width, 3))
    depth = np.zeros((cam.height, cam.width))
    alpha = np.zeros((cam.height, cam.width))
    for py in range(cam.height):
        for px in range(cam.width):
            c, dsum, T = np.zeros(3), 0.0, 1.0
            for z, i, m2, inv in splats:
                d = np.array([px, py], dtype=float) - m2
                a = scene.opacities[i] * np.exp(-0.5 * d @ inv @ d)
                if a < alpha_min:
                    continue
                c += scene.colors[i] * a * T
                dsum += z * a * T
                T *= 1 - a
                if T < t_stop:
                    break
            rgb[py, px] = c + T * np.asarray(background)
            alpha[py, px] = 1 - T
            depth[py, px] = dsum / (1 - T) if 1 - T > 1e-6 else 0.0
    return rgb, depth, alpha


def random_scene(rng, n, part_count=0, center=(0.0, 0.0, 2.0), spread=0.3):
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return Scene(rng.uniform(-spread, spread, (n, 3)) + np.asarray(center), q,
                 rng.uniform(0.02, 0.2, (n, 3)), rng.uniform(0.05, 1.0, n),
                 rng.uniform(0, 1, (n, 3)), rng.normal(size=(n, part_count + 1)), part_count)


def mdh_matrix(beta, a, d, theta):
    """Modified DH link as the product Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(beta)."""
    def rz(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])

    def rx(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])

    def tr(x, z):
        T = np.eye(4)
        T[0, 3], T[2, 3] = x, z
        return T

    return rz(theta) @ tr(0, d) @ tr(a, 0) @ rx(beta)


def line_distance_brute(q1, u1, q2, u2):
    from scipy.optimize import minimize
    f = lambda st: np.sum((q1 + st[0] * u1 - q2 - st[1] * u2) ** 2)  # noqa: E731
    best = min((minimize(f, x0, method="BFGS", options={"gtol": 1e-14}) for x0 in
                ([0, 0], [1, -1], [-1, 1])), key=lambda r: r.fun)
    return float(np.sqrt(best.fun))

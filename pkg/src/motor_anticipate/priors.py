"""Reference distributions and pseudo-ground-truth procedures.

Point annotations become truncated-and-renormalized isotropic Gaussians on an
attention grid; future trajectories are temporally resampled and rendered per
slice.  Camera motion is undone by composing inverse per-frame homographies;
homographies themselves can be fit with normalized-DLT RANSAC.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .types import AttentionVolume, HotspotMap, Trajectory


@dataclass
class PriorConfig:
    sigma: float = 1.0  # grid cells
    motor_grid: Tuple[int, int, int] = (4, 16, 16)
    hotspot_grid: Tuple[int, int] = (8, 8)
    fallback: str = "uniform"

    def validate(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if min(self.motor_grid) < 1 or min(self.hotspot_grid) < 1:
            raise ValueError("grid dims must be >= 1")


def _gaussian_grid(point: np.ndarray, grid: Tuple[int, int], sigma: float) -> np.ndarray:
    H, W = grid
    point = np.clip(np.asarray(point, dtype=np.float64), 0.0, 1.0)
    # cell-center coordinates, measured in cell units
    px = point[0] * W - 0.5
    py = point[1] * H - 0.5
    cx = np.arange(W, dtype=np.float64)
    cy = np.arange(H, dtype=np.float64)
    d2 = (cy[:, None] - py) ** 2 + (cx[None, :] - px) ** 2
    g = np.exp(-d2 / (2.0 * sigma * sigma))
    total = g.sum()
    if total <= 0 or not np.isfinite(total):
        # delta limit: all mass at the nearest cell
        g = np.zeros((H, W))
        iy = int(np.clip(round(py), 0, H - 1))
        ix = int(np.clip(round(px), 0, W - 1))
        g[iy, ix] = 1.0
        return g
    return g / total


def render_point_prior(point, grid: Tuple[int, int], sigma: float) -> HotspotMap:
    """Truncated, renormalized isotropic Gaussian centered on a 2D point."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return HotspotMap(probs=_gaussian_grid(point, grid, sigma))


def resample_trajectory(traj: Trajectory, n: int) -> np.ndarray:
    """Linear-in-time resampling of an (N, 2) trajectory to n points."""
    traj = np.asarray(traj, dtype=np.float64)
    if traj.ndim != 2 or len(traj) == 0:
        raise ValueError("empty trajectory")
    if len(traj) == 1:
        return np.repeat(traj, n, axis=0)
    src = np.linspace(0.0, 1.0, len(traj))
    dst = np.linspace(0.0, 1.0, n)
    return np.stack([np.interp(dst, src, traj[:, k]) for k in range(2)], axis=1)


def render_trajectory_prior(traj: Trajectory, motor_grid: Tuple[int, int, int],
                            sigma: float) -> AttentionVolume:
    """One normalized Gaussian slice per temporally resampled trajectory point."""
    T_m, H_m, W_m = motor_grid
    pts = resample_trajectory(traj, T_m)
    probs = np.stack([_gaussian_grid(p, (H_m, W_m), sigma) for p in pts])
    return AttentionVolume(psi=probs / probs.sum(), probs=probs)


def uniform_prior(grid):
    """Constant distribution on a (H, W) or (T, H, W) grid."""
    if len(grid) == 2:
        H, W = grid
        return HotspotMap(probs=np.full((H, W), 1.0 / (H * W)))
    T, H, W = grid
    probs = np.full((T, H, W), 1.0 / (H * W))
    return AttentionVolume(psi=probs / probs.sum(), probs=probs)


def project_trajectory(traj_per_frame: Sequence[np.ndarray],
                       homographies: Sequence[np.ndarray]) -> Trajectory:
    """Map future per-frame points into the last observable frame.

    ``homographies[k]`` maps coordinates of frame k (the last observable frame
    for k=0) to frame k+1; point k of the trajectory lives in frame k+1 and is
    pulled back by composing inverse transitions.
    """
    traj_per_frame = [np.asarray(p, dtype=np.float64) for p in traj_per_frame]
    if len(homographies) != len(traj_per_frame):
        raise ValueError("need one homography per frame transition")
    out = np.empty((len(traj_per_frame), 2))
    back = np.eye(3)
    for k, (p, H) in enumerate(zip(traj_per_frame, homographies)):
        H = np.asarray(H, dtype=np.float64)
        if abs(np.linalg.det(H)) < 1e-12:
            raise ValueError("non-invertible camera motion")
        back = back @ np.linalg.inv(H)
        homog = back @ np.array([p[0], p[1], 1.0])
        out[k] = homog[:2] / homog[2]
    return out


def interpolate_trajectory(fingertip, hotspot, n: int) -> Trajectory:
    """n equally spaced points from fingertip to hotspot, inclusive."""
    if n < 2:
        raise ValueError("n must be >= 2")
    a = np.asarray(fingertip, dtype=np.float64)
    b = np.asarray(hotspot, dtype=np.float64)
    t = np.linspace(0.0, 1.0, n)[:, None]
    return a + t * (b - a)


def _normalize_points(pts: np.ndarray):
    """Hartley preconditioning: zero centroid, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    scale = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([[scale, 0, -scale * centroid[0]],
                  [0, scale, -scale * centroid[1]],
                  [0, 0, 1.0]])
    return (pts - centroid) * scale, T


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    sn, Ts = _normalize_points(src)
    dn, Td = _normalize_points(dst)
    n = len(src)
    A = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = sn[i]
        xp, yp = dn[i]
        A[2 * i] = [-x, -y, -1, 0, 0, 0, x * xp, y * xp, xp]
        A[2 * i + 1] = [0, 0, 0, -x, -y, -1, x * yp, y * yp, yp]
    _, _, Vt = np.linalg.svd(A)
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H / H[2, 2]


def _reprojection_errors(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    homog = np.concatenate([src, np.ones((len(src), 1))], axis=1) @ H.T
    proj = homog[:, :2] / homog[:, 2:3]
    return np.linalg.norm(proj - dst, axis=1)


def estimate_homography(points_src, points_dst, ransac_iters: int = 500,
                        inlier_tol: float = 2.0,
                        seed: int = 0) -> np.ndarray:
    """RANSAC over 4-point DLT fits, refit by least squares on the inlier set."""
    src = np.asarray(points_src, dtype=np.float64)
    dst = np.asarray(points_dst, dtype=np.float64)
    if len(src) < 4 or len(dst) != len(src):
        raise ValueError("need at least 4 correspondences")
    rng = np.random.default_rng(seed)
    best_inliers = None
    for _ in range(ransac_iters):
        idx = rng.choice(len(src), 4, replace=False)
        try:
            H = _dlt(src[idx], dst[idx])
        except np.linalg.LinAlgError:
            continue
        errs = _reprojection_errors(H, src, dst)
        inliers = errs < inlier_tol
        if inliers.sum() >= 4 and (best_inliers is None
                                   or inliers.sum() > best_inliers.sum()):
            best_inliers = inliers
    if best_inliers is None:
        raise ValueError("no consensus set found")
    return _dlt(src[best_inliers], dst[best_inliers])

"""Classical trajectory forecasters and the center-prior hotspot baseline.

All forecasters consume observed hand positions in normalized coordinates of
the last observable frame and emit exactly n_future points.  Clips without an
observed hand must be excluded by the caller.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .priors import render_point_prior
from .types import HotspotMap, Trajectory

_KALMAN_F = np.array([[1.0, 1.0, 0.5],
                      [0.0, 1.0, 1.0],
                      [0.0, 0.0, 1.0]])
_KALMAN_H = np.array([[1.0, 0.0, 0.0]])


def kalman_forecast(observed: Trajectory, n_future: int,
                    process_noise: float = 1e-4,
                    measurement_noise: float = 1e-2) -> Trajectory:
    """Constant-acceleration Kalman filter rolled forward with no updates.

    The state (position, velocity, acceleration per axis) is initialized
    exactly from the first three points, so polynomial inputs up to degree 2
    are extrapolated exactly.
    """
    obs = np.asarray(observed, dtype=np.float64)
    if obs.ndim != 2 or len(obs) < 3:
        raise ValueError("need at least 3 observed points")
    if n_future == 0:
        return np.empty((0, 2))

    p0, p1, p2 = obs[0], obs[1], obs[2]
    accel = p2 - 2 * p1 + p0
    vel2 = 1.5 * p2 - 2 * p1 + 0.5 * p0
    x = np.stack([p2, vel2, accel])  # (3, 2)
    P = np.eye(3) * 1e-4
    Q = np.eye(3) * process_noise
    R = np.array([[measurement_noise]])

    for z in obs[3:]:
        x = _KALMAN_F @ x
        P = _KALMAN_F @ P @ _KALMAN_F.T + Q
        innov = z[None, :] - _KALMAN_H @ x
        S = _KALMAN_H @ P @ _KALMAN_H.T + R
        K = P @ _KALMAN_H.T / S[0, 0]
        x = x + K @ innov
        P = (np.eye(3) - K @ _KALMAN_H) @ P

    out = np.empty((n_future, 2))
    for k in range(n_future):
        x = _KALMAN_F @ x
        out[k] = x[0]
    return out


def _rbf_gram(t1: np.ndarray, t2: np.ndarray, length: float) -> np.ndarray:
    d = t1[:, None] - t2[None, :]
    return np.exp(-0.5 * (d / length) ** 2)


def _gp_log_marginal(y: np.ndarray, K: np.ndarray) -> float:
    L = np.linalg.cholesky(K)
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    return float(-0.5 * y @ alpha - np.log(np.diag(L)).sum()
                 - 0.5 * len(y) * np.log(2 * np.pi))


def gpr_forecast(observed: Trajectory, n_future: int,
                 length_grid=(1.0, 2.0, 4.0, 8.0, 16.0),
                 noise_var: float = 1e-6) -> Trajectory:
    """Iterative one-step-ahead GP regression of position on time.

    Per axis an RBF-plus-noise GP is fit around the empirical mean; the
    length scale is picked by marginal likelihood over a fixed grid.  Each
    predicted point is appended before predicting the next.
    """
    obs = np.asarray(observed, dtype=np.float64)
    if obs.ndim != 2 or len(obs) < 2:
        raise ValueError("need at least 2 observed points")
    if n_future == 0:
        return np.empty((0, 2))

    n = len(obs)
    t = np.arange(n, dtype=np.float64)
    if np.ptp(t) == 0:
        raise ValueError("degenerate timestamps")
    mean = obs.mean(axis=0)
    resid = obs - mean
    signal_var = max(float(resid.var()), 1e-10)

    best_len, best_ll = length_grid[0], -np.inf
    for length in length_grid:
        K = signal_var * _rbf_gram(t, t, length) + (noise_var + 1e-10) * np.eye(n)
        ll = sum(_gp_log_marginal(resid[:, k], K) for k in range(2))
        if ll > best_ll:
            best_ll, best_len = ll, length

    pts = list(obs)
    for _ in range(n_future):
        m = len(pts)
        tt = np.arange(m, dtype=np.float64)
        y = np.asarray(pts) - mean
        K = signal_var * _rbf_gram(tt, tt, best_len) + (noise_var + 1e-10) * np.eye(m)
        k_star = signal_var * _rbf_gram(np.array([float(m)]), tt, best_len)[0]
        L = np.linalg.cholesky(K)
        pred = np.empty(2)
        for axis in range(2):
            alpha = np.linalg.solve(L.T, np.linalg.solve(L, y[:, axis]))
            pred[axis] = mean[axis] + k_star @ alpha
        pts.append(pred)
    return np.asarray(pts[n:])


class TrajectoryLSTM(nn.Module):
    """Vanilla LSTM forecaster: encode observed deltas, decode autoregressively."""

    def __init__(self, hidden_size: int = 64, seed: int = 0):
        super().__init__()
        torch.manual_seed(seed)
        self.lstm = nn.LSTM(2, hidden_size, num_layers=1, batch_first=True)
        self.head = nn.Linear(hidden_size, 2)
        self.trained = False

    def forward(self, observed: torch.Tensor, n_future: int) -> torch.Tensor:
        """observed: (B, T, 2) positions -> (B, n_future, 2) positions."""
        deltas = observed[:, 1:] - observed[:, :-1]
        out, state = self.lstm(deltas)
        pos = observed[:, -1]
        last_delta = self.head(out[:, -1])
        preds = []
        for _ in range(n_future):
            pos = pos + last_delta
            preds.append(pos)
            out, state = self.lstm(last_delta.unsqueeze(1), state)
            last_delta = self.head(out[:, -1])
        if not preds:
            return torch.empty(observed.shape[0], 0, 2)
        return torch.stack(preds, dim=1)


def train_lstm_baseline(observed: np.ndarray, future: np.ndarray,
                        epochs: int = 200, hidden_size: int = 64,
                        lr: float = 1e-2, seed: int = 0) -> TrajectoryLSTM:
    """Fit the LSTM on (N, T, 2) observed / (N, F, 2) future position arrays."""
    model = TrajectoryLSTM(hidden_size=hidden_size, seed=seed)
    obs_t = torch.as_tensor(observed, dtype=torch.float32)
    fut_t = torch.as_tensor(future, dtype=torch.float32)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    n_future = fut_t.shape[1]
    for _ in range(epochs):
        opt.zero_grad()
        pred = model(obs_t, n_future)
        loss = torch.mean((pred - fut_t) ** 2)
        loss.backward()
        opt.step()
    model.trained = True
    return model


@torch.no_grad()
def lstm_forecast(observed: Trajectory, n_future: int,
                  model: TrajectoryLSTM) -> Trajectory:
    """Forecast with a trained LSTM; deterministic given weights and input."""
    if not getattr(model, "trained", False):
        raise ValueError("LSTM baseline weights are untrained")
    if n_future == 0:
        return np.empty((0, 2))
    obs = torch.as_tensor(np.asarray(observed), dtype=torch.float32).unsqueeze(0)
    return model(obs, n_future)[0].numpy().astype(np.float64)


def center_prior(grid, sigma: float = 1.0) -> HotspotMap:
    """Gaussian hotspot baseline centered in the image."""
    return render_point_prior(np.array([0.5, 0.5]), grid, sigma)

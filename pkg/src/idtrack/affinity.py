"""Sparse affinity/repulsion matrices over person detections.

Three n x n matrices drive the association:

* ``L``  appearance graph Laplacian over kNN exp-chi2 similarity edges,
* ``K``  normalized Laplacian over near-coincident detections (multi-camera
  duplicates of one physical person),
* ``S``  normalized spatial-locality repulsion: pairs a single person could not
  connect at feasible velocity.

All construction is deterministic: candidate scans use a frame-bucketed index and
edges are finalized in (row, col) order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import Observation, ObservationSet, TrackerConfig


@dataclass(frozen=True)
class AffinityGraphs:
    L: sp.csr_matrix
    K: sp.csr_matrix
    S: sp.csr_matrix
    stats: dict

    @property
    def n(self) -> int:
        return self.L.shape[0]


def seconds_to_frames(seconds: float, fps: float) -> int:
    """Convert a seconds-valued window to frames, rounding to nearest."""
    return int(round(seconds * fps))


def pair_velocity(i: Observation, j: Observation, delta_cm: float,
                  epsilon_sec: float, fps: float) -> float:
    """Minimum velocity (cm/s) needed to travel between two detections.

    Distances under ``delta_cm`` are attributed to localization error and clamp
    to zero; ``epsilon_sec`` guards the same-frame division.
    """
    gap = max(float(np.linalg.norm(i.position - j.position)) - delta_cm, 0.0)
    dt = abs(i.frame - j.frame) / fps
    return gap / (dt + epsilon_sec)


def _velocity_block(pos_a: np.ndarray, frames_a: np.ndarray, pos_b: np.ndarray,
                    frames_b: np.ndarray, delta_cm: float, epsilon_sec: float,
                    fps: float) -> np.ndarray:
    dist = np.sqrt(((pos_a[:, None, :] - pos_b[None, :, :]) ** 2).sum(axis=2))
    gap = np.maximum(dist - delta_cm, 0.0)
    dt = np.abs(frames_a[:, None] - frames_b[None, :]) / fps
    return gap / (dt + epsilon_sec)


def exp_chi2(x: np.ndarray, y: np.ndarray) -> float:
    """exp(-1/2 * chi-squared) histogram similarity in (0, 1]; empty bins skipped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"histogram length mismatch: {x.shape} vs {y.shape}")
    return float(_exp_chi2_block(x[None, :], y[None, :])[0, 0])


def _exp_chi2_block(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Rows of X against rows of Y; (a, b, d) broadcast. Bins with x+y == 0
    # contribute 0 (both entries are 0 for nonnegative histograms).
    num = (X[:, None, :] - Y[None, :, :]) ** 2
    den = X[:, None, :] + Y[None, :, :]
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.exp(-0.5 * terms.sum(axis=2))


def _exp_chi2_pairs(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    num = (X - Y) ** 2
    den = X + Y
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.exp(-0.5 * terms.sum(axis=1))


class _FrameIndex:
    """Frame-bucketed candidate lookup: obs ids sorted by (frame, obs_id)."""

    def __init__(self, frames: np.ndarray):
        self.order = np.lexsort((np.arange(len(frames)), frames))
        self.frames_sorted = frames[self.order]

    def window(self, lo_frame: int, hi_frame: int) -> np.ndarray:
        """Observation ids with frame in [lo_frame, hi_frame], ascending obs_id within frame."""
        lo = np.searchsorted(self.frames_sorted, lo_frame, side="left")
        hi = np.searchsorted(self.frames_sorted, hi_frame, side="right")
        return self.order[lo:hi]


def appearance_knn(obs_set: ObservationSet, cfg: TrackerConfig) -> list[np.ndarray]:
    """Per-observation appearance neighbor lists.

    A candidate j qualifies for i when it is velocity-reachable, within the
    appearance time window, strictly more similar than gamma, and j != i. Up to
    k candidates with the highest similarity are kept; ties break on smaller
    obs_id.
    """
    n = len(obs_set)
    neighbors: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * n
    if n == 0:
        return neighbors
    window = seconds_to_frames(cfg.T_appearance_sec, obs_set.fps)
    frames = obs_set.frames
    X = obs_set.histograms
    P = obs_set.positions
    index = _FrameIndex(frames)

    for frame in np.unique(frames):
        group = index.window(frame, frame)
        cand = index.window(frame - window, frame + window)
        sims = _exp_chi2_block(X[group], X[cand])
        vel = _velocity_block(P[group], frames[group], P[cand], frames[cand],
                              cfg.delta_cm, cfg.epsilon_sec, obs_set.fps)
        ok = (sims > cfg.gamma) & (vel <= cfg.V_cmps)
        for row, i in enumerate(group):
            mask = ok[row] & (cand != i)
            ids = cand[mask]
            if len(ids) == 0:
                continue
            s = sims[row][mask]
            if len(ids) > cfg.k:
                order = np.lexsort((ids, -s))[:cfg.k]
            else:
                order = np.lexsort((ids, -s))
            neighbors[i] = np.sort(ids[order])
    return neighbors


def appearance_laplacian(obs_set: ObservationSet, neighbors: list[np.ndarray]) -> sp.csr_matrix:
    """L = D - W with W the symmetrized kNN similarity matrix.

    The directed kNN weights are averaged with their transpose so L is symmetric
    PSD, which the solver's gradient assumes.
    """
    n = len(obs_set)
    rows = np.concatenate([np.full(len(ids), i, dtype=np.int64)
                           for i, ids in enumerate(neighbors)]) if n else np.empty(0, np.int64)
    cols = np.concatenate(neighbors) if n else np.empty(0, np.int64)
    if len(rows):
        data = _exp_chi2_pairs(obs_set.histograms[rows], obs_set.histograms[cols])
    else:
        data = np.empty(0)
    W = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    W = (W + W.T) * 0.5
    deg = np.asarray(W.sum(axis=1)).ravel()
    L = sp.diags(deg) - W
    L = L.tocsr()
    L.sort_indices()
    return L


def spatial_laplacian(obs_set: ObservationSet, cfg: TrackerConfig) -> sp.csr_matrix:
    """Normalized Laplacian over detections nearly coincident in space and time.

    Rows with no neighbor are left entirely zero so unconnected observations
    incur no loss.
    """
    n = len(obs_set)
    A = _binary_pair_matrix(obs_set, max_frame_gap=cfg.T_tilde_frames - 1,
                            predicate="near", cfg=cfg)
    deg = np.asarray(A.sum(axis=1)).ravel()
    inv_sqrt = np.zeros(n)
    connected = deg > 0
    inv_sqrt[connected] = 1.0 / np.sqrt(deg[connected])
    Dh = sp.diags(inv_sqrt)
    K = sp.diags(connected.astype(float)) - Dh @ A @ Dh
    K = K.tocsr()
    K.sort_indices()
    return K


def spatial_locality_matrix(obs_set: ObservationSet, cfg: TrackerConfig) -> sp.csr_matrix:
    """Normalized repulsion matrix over velocity-infeasible pairs.

    S_tilde marks pairs within the conflict window whose required velocity
    exceeds V; S is its symmetric degree normalization (zero-degree rows stay
    zero).
    """
    n = len(obs_set)
    St = _binary_pair_matrix(obs_set, max_frame_gap=cfg.slc_window_frames,
                             predicate="conflict", cfg=cfg)
    deg = np.asarray(St.sum(axis=1)).ravel()
    inv_sqrt = np.zeros(n)
    connected = deg > 0
    inv_sqrt[connected] = 1.0 / np.sqrt(deg[connected])
    Dp = sp.diags(inv_sqrt)
    S = (Dp @ St @ Dp).tocsr()
    S.sort_indices()
    return S


def _binary_pair_matrix(obs_set: ObservationSet, max_frame_gap: int,
                        predicate: str, cfg: TrackerConfig) -> sp.csr_matrix:
    """Symmetric 0/1 matrix over observation pairs with |frame gap| <= max_frame_gap
    passing the given geometric predicate."""
    n = len(obs_set)
    frames = obs_set.frames
    P = obs_set.positions
    index = _FrameIndex(frames)
    rows_acc, cols_acc = [], []
    for frame in np.unique(frames):
        group = index.window(frame, frame)
        cand = index.window(frame - max_frame_gap, frame + max_frame_gap)
        dist = np.sqrt(((P[group][:, None, :] - P[cand][None, :, :]) ** 2).sum(axis=2))
        if predicate == "near":
            ok = dist < cfg.delta_tilde_cm
        else:
            dt = np.abs(frames[group][:, None] - frames[cand][None, :]) / obs_set.fps
            vel = np.maximum(dist - cfg.delta_cm, 0.0) / (dt + cfg.epsilon_sec)
            ok = vel > cfg.V_cmps
        ok &= group[:, None] != cand[None, :]
        r, c = np.nonzero(ok)
        rows_acc.append(group[r])
        cols_acc.append(cand[c])
    rows = np.concatenate(rows_acc) if rows_acc else np.empty(0, np.int64)
    cols = np.concatenate(cols_acc) if cols_acc else np.empty(0, np.int64)
    A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    # Duplicate coordinates are impossible (one directed entry per pair), and the
    # predicates are symmetric, so A is already its own transpose.
    A.sort_indices()
    return A


def build_graphs(obs_set: ObservationSet, cfg: TrackerConfig) -> AffinityGraphs:
    """Construct L, K and S for one observation set."""
    neighbors = appearance_knn(obs_set, cfg)
    L = appearance_laplacian(obs_set, neighbors)
    K = spatial_laplacian(obs_set, cfg)
    S = spatial_locality_matrix(obs_set, cfg)
    stats = {
        "appearance_edges": int(sum(len(v) for v in neighbors)),
        "L_nnz": int(L.nnz),
        "K_nnz": int(K.nnz),
        "S_nnz": int(S.nnz),
    }
    return AffinityGraphs(L=L, K=K, S=S, stats=stats)


def write_matrix_coo(M: sp.spmatrix, path: str) -> None:
    """Debug dump: one 'i j value' line per nonzero, sorted by (i, j)."""
    coo = M.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{i} {j} {v!r}\n")

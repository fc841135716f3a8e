"""Kernel-weighted interaction graphs over pedestrian scenes.

Each observed frame gets a weighted adjacency matrix: a distance kernel
(inverse norm or exponential decay) gated by a neighborhood predicate
(field-of-view dot product, 5 m distance threshold, approach dynamics, or
the complete-graph baseline), then degree and normalized-Laplacian
matrices for the graph convolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import TrajectoryWindow


class Neighborhood(str, Enum):
    VIEW = "view"
    VIEW_THRESH = "view-thresh"
    APPROACH = "approach"
    VIEW_APPROACH = "view-approach"
    COMPLETE = "complete"


class Kernel(str, Enum):
    INVERSE_NORM = "inv"
    EXP_DECAY = "exp"


class ApproachSense(str, Enum):
    # prose semantics: connected when the pairwise distance is decreasing
    AS_PROSE = "prose"
    # the typeset inequality: connected when the distance is increasing
    AS_PRINTED = "printed"


class Normalization(str, Enum):
    PAPER_LAPLACIAN = "laplacian"  # D^{-1/2} (D - A) D^{-1/2}
    SYMMETRIC_ADJACENCY = "sym-adj"  # D^{-1/2} A D^{-1/2}


@dataclass
class GraphConfig:
    neighborhood: Neighborhood = Neighborhood.VIEW
    kernel: Kernel = Kernel.INVERSE_NORM
    epsilon: float = 5.0
    approach_sense: ApproachSense = ApproachSense.AS_PROSE
    self_loops: bool = False
    normalization: Normalization = Normalization.PAPER_LAPLACIAN
    # experimental: require mutual relative bearing within +-90 deg of each
    # heading instead of the heading dot product (not part of acceptance)
    bearing_gate: bool = False

    def __post_init__(self):
        self.neighborhood = Neighborhood(self.neighborhood)
        self.kernel = Kernel(self.kernel)
        self.approach_sense = ApproachSense(self.approach_sense)
        self.normalization = Normalization(self.normalization)
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def to_dict(self) -> dict:
        return {
            "neighborhood": self.neighborhood.value,
            "kernel": self.kernel.value,
            "epsilon": self.epsilon,
            "approach_sense": self.approach_sense.value,
            "self_loops": self.self_loops,
            "normalization": self.normalization.value,
            "bearing_gate": self.bearing_gate,
        }


@dataclass
class GraphSequence:
    adjacency: np.ndarray  # [T_obs, N, N]
    degree: np.ndarray  # [T_obs, N]
    normalized: np.ndarray  # [T_obs, N, N]


def social_stgcnn_baseline_config() -> GraphConfig:
    """Complete graph + inverse-norm kernel, self-loops, normalized adjacency."""
    return GraphConfig(
        neighborhood=Neighborhood.COMPLETE,
        kernel=Kernel.INVERSE_NORM,
        self_loops=True,
        normalization=Normalization.SYMMETRIC_ADJACENCY,
    )


def kernel_inverse_norm(p_i, p_j) -> float:
    dx = p_i[0] - p_j[0]
    dy = p_i[1] - p_j[1]
    d = np.sqrt(dx * dx + dy * dy)
    return 1.0 / d if d != 0.0 else 0.0


def kernel_exp_decay(p_i, p_j) -> float:
    dx = p_i[0] - p_j[0]
    dy = p_i[1] - p_j[1]
    d = np.sqrt(dx * dx + dy * dy)
    return np.exp(-d) if d != 0.0 else 0.0


def _approach_frames(t: int, t_obs: int) -> tuple[int, int]:
    """Frame pair (later, earlier) whose distances the approach gate compares.

    The last observed frame has no observable successor, so it falls back
    to the change from the previous frame.
    """
    if t + 1 <= t_obs - 1:
        return t + 1, t
    return t, t - 1


def neighborhood_weight(
    i: int, j: int, t: int, window: TrajectoryWindow, cfg: GraphConfig
) -> float:
    """Edge weight for one ordered pair at one observed frame (scalar path)."""
    if i == j:
        raise ValueError("self pairs carry no edge weight")
    pos = window.positions
    p_i, p_j = pos[i, t], pos[j, t]
    if cfg.kernel is Kernel.INVERSE_NORM:
        k = kernel_inverse_norm(p_i, p_j)
    else:
        k = kernel_exp_decay(p_i, p_j)

    nb = cfg.neighborhood
    if nb is Neighborhood.COMPLETE:
        return k

    if nb in (Neighborhood.VIEW, Neighborhood.VIEW_THRESH, Neighborhood.VIEW_APPROACH):
        if cfg.bearing_gate:
            v_i, v_j = window.displacements[i, t], window.displacements[j, t]
            if not (
                v_i[0] * (p_j[0] - p_i[0]) + v_i[1] * (p_j[1] - p_i[1]) > 0
                and v_j[0] * (p_i[0] - p_j[0]) + v_j[1] * (p_i[1] - p_j[1]) > 0
            ):
                return 0.0
        else:
            v_i, v_j = window.displacements[i, t], window.displacements[j, t]
            if not (v_i[0] * v_j[0] + v_i[1] * v_j[1] > 0):
                return 0.0

    if nb is Neighborhood.VIEW_THRESH:
        dx, dy = p_i[0] - p_j[0], p_i[1] - p_j[1]
        if not (np.sqrt(dx * dx + dy * dy) < cfg.epsilon):
            return 0.0

    if nb in (Neighborhood.APPROACH, Neighborhood.VIEW_APPROACH):
        t_later, t_earlier = _approach_frames(t, window.t_obs)
        d_later = np.sqrt(np.sum((pos[i, t_later] - pos[j, t_later]) ** 2))
        d_earlier = np.sqrt(np.sum((pos[i, t_earlier] - pos[j, t_earlier]) ** 2))
        if cfg.approach_sense is ApproachSense.AS_PROSE:
            if not (d_later < d_earlier):
                return 0.0
        else:
            if not (d_later > d_earlier):
                return 0.0

    return k


def adjacency_at_frame(
    window: TrajectoryWindow, t: int, cfg: GraphConfig
) -> np.ndarray:
    """Full [N, N] weighted adjacency at one observed frame (vectorized)."""
    pos = window.positions[:, t]  # [N, 2]
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])
    nonzero = dist != 0.0
    if cfg.kernel is Kernel.INVERSE_NORM:
        with np.errstate(divide="ignore"):
            weights = np.where(nonzero, 1.0 / dist, 0.0)
    else:
        weights = np.where(nonzero, np.exp(-dist), 0.0)

    n = pos.shape[0]
    gate = ~np.eye(n, dtype=bool)
    nb = cfg.neighborhood
    if nb in (Neighborhood.VIEW, Neighborhood.VIEW_THRESH, Neighborhood.VIEW_APPROACH):
        v = window.displacements[:, t]  # [N, 2]
        if cfg.bearing_gate:
            ahead = (
                v[:, None, 0] * (pos[None, :, 0] - pos[:, None, 0])
                + v[:, None, 1] * (pos[None, :, 1] - pos[:, None, 1])
            ) > 0
            gate &= ahead & ahead.T
        else:
            gate &= (v[:, None, 0] * v[None, :, 0] + v[:, None, 1] * v[None, :, 1]) > 0
    if nb is Neighborhood.VIEW_THRESH:
        gate &= dist < cfg.epsilon
    if nb in (Neighborhood.APPROACH, Neighborhood.VIEW_APPROACH):
        t_later, t_earlier = _approach_frames(t, window.t_obs)
        d_later = _pairwise_dist(window.positions[:, t_later])
        d_earlier = _pairwise_dist(window.positions[:, t_earlier])
        if cfg.approach_sense is ApproachSense.AS_PROSE:
            gate &= d_later < d_earlier
        else:
            gate &= d_later > d_earlier

    return np.where(gate, weights, 0.0)


def _pairwise_dist(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt(diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1])


def normalize_adjacency(adjacency: np.ndarray, cfg: GraphConfig):
    """Degree vector and normalized mixing matrix for one frame."""
    degree = adjacency.sum(axis=1)
    # zero-degree guard: isolated nodes keep their (zero or self-loop) row
    safe = np.where(degree > 0, degree, 1.0)
    d_inv_sqrt = 1.0 / np.sqrt(safe)
    if cfg.normalization is Normalization.PAPER_LAPLACIAN:
        lap = np.diag(degree) - adjacency
        normalized = d_inv_sqrt[:, None] * lap * d_inv_sqrt[None, :]
    else:
        normalized = d_inv_sqrt[:, None] * adjacency * d_inv_sqrt[None, :]
    return degree, normalized


def build_graph_sequence(window: TrajectoryWindow, cfg: GraphConfig) -> GraphSequence:
    n, t_obs = window.n_peds, window.t_obs
    adjacency = np.empty((t_obs, n, n))
    degree = np.empty((t_obs, n))
    normalized = np.empty((t_obs, n, n))
    eye = np.eye(n)
    for t in range(t_obs):
        a = adjacency_at_frame(window, t, cfg)
        if cfg.self_loops:
            a = a + eye
        adjacency[t] = a
        degree[t], normalized[t] = normalize_adjacency(a, cfg)
    return GraphSequence(adjacency=adjacency, degree=degree, normalized=normalized)

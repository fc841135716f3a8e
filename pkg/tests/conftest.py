import numpy as np
import pytest

from crowdgnn.data import TrajectoryWindow, compute_displacements


def random_window(
    rng: np.random.Generator,
    n_peds: int = 3,
    t_obs: int = 8,
    t_pred: int = 12,
    scene_id: str = "toy",
    box: float = 10.0,
    max_step: float = 0.5,
) -> TrajectoryWindow:
    """Random-walk window: uniform start positions, bounded random steps."""
    t_total = t_obs + t_pred
    start = rng.uniform(0, box, size=(n_peds, 1, 2))
    steps = rng.uniform(-max_step, max_step, size=(n_peds, t_total - 1, 2))
    pos = np.concatenate([start, start + np.cumsum(steps, axis=1)], axis=1)
    return TrajectoryWindow(
        scene_id=scene_id,
        start_frame=0,
        positions=pos,
        displacements=compute_displacements(pos),
        t_obs=t_obs,
        t_pred=t_pred,
    )


def crossing_window(t_obs: int = 8, t_pred: int = 12) -> TrajectoryWindow:
    """Two pedestrians crossing linearly, constant velocity."""
    t_total = t_obs + t_pred
    t = np.arange(t_total, dtype=np.float64)
    p0 = np.stack([0.3 * t, 0.1 * t], axis=-1)
    p1 = np.stack([6.0 - 0.3 * t, 0.1 * t + 0.5], axis=-1)
    pos = np.stack([p0, p1])
    return TrajectoryWindow(
        scene_id="cross",
        start_frame=0,
        positions=pos,
        displacements=compute_displacements(pos),
        t_obs=t_obs,
        t_pred=t_pred,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

# obsbuilder/assembly.py
from pathlib import Path

import numpy as np
import pandas as pd

from obsbuilder.models import (FRAME_LENGTH, HEIGHT_SAMPLES, TARGETS_LENGTH, EstimationTargets, HistoryBuffer,
                               ObservationFrame, PolicyInputs)


def push_and_flatten(buffer: HistoryBuffer, frame: ObservationFrame) -> np.ndarray:
    buffer.push(frame)
    return buffer.flatten()


def _targets(value, name):
    vector = value.vector() if isinstance(value, EstimationTargets) else np.asarray(value, dtype=float).reshape(-1)
    if vector.shape != (TARGETS_LENGTH,):
        raise ValueError(f"{name} must hold {TARGETS_LENGTH} values, got {vector.size}")
    return vector


def assemble_inputs(observation, estimated, privileged) -> PolicyInputs:
    """Actor input is the observation with the estimated variables, the critic's uses the true ones."""
    observation = np.asarray(observation, dtype=float).reshape(-1)
    if not len(observation) or len(observation) % FRAME_LENGTH:
        raise ValueError(f"observation length {len(observation)} is not a whole number of {FRAME_LENGTH}-value frames")
    estimated = _targets(estimated, 'estimated variables')
    privileged = _targets(privileged, 'privileged variables')
    return PolicyInputs(
        actor=np.concatenate([observation, estimated]),
        critic=np.concatenate([observation, privileged]),
        estimator_target=privileged,
    )


def frame_columns() -> list:
    return (['cmd_vx', 'cmd_vy', 'cmd_wz']
            + [f'q_{i}' for i in range(12)]
            + [f'dq_{i}' for i in range(12)]
            + ['gravity_x', 'gravity_y', 'gravity_z']
            + [f'h_{i:02d}' for i in range(HEIGHT_SAMPLES)])


def observations_to_csv(times, frames, path) -> Path:
    """One row per control tick with the frame pushed at that tick."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.array([frame.vector() for frame in frames]).reshape(-1, FRAME_LENGTH)
    table = pd.DataFrame(rows, columns=frame_columns())
    table.insert(0, 't', np.asarray(times, dtype=float))
    table.to_csv(path, index=False, float_format='%.9g')
    return path

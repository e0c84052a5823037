# scene/exports.py
from pathlib import Path

import numpy as np
import pandas as pd

from scene.models import Heightfield


def write_heightfield_csv(hf: Heightfield, path) -> Path:
    """Row-major grid, one row per x index, preceded by a ``#`` header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = (f"# resolution={hf.resolution!r},origin_x={hf.origin[0]!r},origin_y={hf.origin[1]!r},"
              f"cells_x={hf.cells_x},cells_y={hf.cells_y}\n")
    with open(path, 'w', newline='') as file:
        file.write(header)
        pd.DataFrame(hf.cells).to_csv(file, header=False, index=False, float_format='%.6f')
    return path


def read_heightfield_csv(path) -> Heightfield:
    with open(path) as file:
        header = file.readline().lstrip('#').strip()
        meta = dict(item.split('=') for item in header.split(','))
        cells = pd.read_csv(file, header=None).to_numpy(dtype=float)
    shape = (int(meta['cells_x']), int(meta['cells_y']))
    return Heightfield(
        resolution=float(meta['resolution']),
        origin=(float(meta['origin_x']), float(meta['origin_y'])),
        cells=np.reshape(cells, shape),
    )

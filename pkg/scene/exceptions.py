class SceneError(ValueError):
    """Invalid scene description or heightfield."""


class OutOfExtentError(ValueError):
    """Query outside the heightfield; there is no default height to fall back to."""

    def __init__(self, x, y, bounds):
        self.x, self.y, self.bounds = x, y, bounds
        super().__init__(f"({x:.4f}, {y:.4f}) is outside the heightfield extent {tuple(round(b, 4) for b in bounds)}")

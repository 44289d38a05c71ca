# snapshot_clock.py
import numpy as np


class SnapshotClock:
    """
    Fixed-interval snapshot scheduling for a time integrator.
    """
    def __init__(self, every: float, t_end: float, t0: float = 0.0):
        if every <= 0 or t_end <= t0:
            raise ValueError("SnapshotClock needs every > 0 and t_end > t0")
        self.every = float(every)
        self.t_end = float(t_end)
        self.t0 = float(t0)
        self.index = 0          # snapshots already taken after t0
        self._tiny = 1e-12 * max(1.0, abs(self.t_end))

    @property
    def next_time(self) -> float:
        return min(self.t0 + (self.index + 1) * self.every, self.t_end)

    def next_dt(self, t: float, dt: float) -> float:
        """Clip dt so the step lands exactly on the next snapshot time."""
        remaining = self.next_time - t
        return remaining if remaining <= dt + self._tiny else dt

    def step(self, t: float):
        """
        Report the time just reached. Returns (snapshot_due, run_over)
        """
        due = t >= self.next_time - self._tiny
        if due:
            self.index += 1
        return due, t >= self.t_end - self._tiny

    def count(self) -> int:
        """Snapshots the full run will produce after t0."""
        return max(1, int(np.ceil((self.t_end - self.t0) / self.every - 1e-9)))

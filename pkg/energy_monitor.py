# energy_monitor.py
from typing import Dict, List, Optional

from config import SOLVER_SLACK


class EnergyMonitor:
    """
    Accept/reject bookkeeping for a dissipative integrator.
    - update(t, energy) -> bool: True when the step keeps J nonincreasing within slack
    - reset(t, energy): restart the reference (e.g. after a restart from disk)
    Exposes:
      - history: List[dict(t, energy, change)] of accepted steps
      - rejections: number of refused steps
      - max_increase: largest accepted increase (<= slack)
    """

    def __init__(self, slack: float = SOLVER_SLACK):
        self.slack = float(slack)
        self.history: List[Dict[str, float]] = []
        self.rejections = 0
        self.max_increase = 0.0
        self._last: Optional[float] = None

    def reset(self, t: float, energy: float) -> None:
        self._last = float(energy)
        self.history.append({"t": float(t), "energy": float(energy), "change": 0.0})

    @property
    def last(self) -> Optional[float]:
        return self._last

    def tolerance(self) -> float:
        return self.slack * max(1.0, abs(self._last or 0.0))

    def update(self, t: float, energy: float) -> bool:
        if self._last is None:
            self.reset(t, energy)
            return True
        change = float(energy) - self._last
        if change != change or change > self.tolerance():      # NaN or increase
            self.rejections += 1
            return False
        self.max_increase = max(self.max_increase, change)
        self._last = float(energy)
        self.history.append({"t": float(t), "energy": float(energy), "change": change})
        return True

    def summary(self) -> Dict[str, float]:
        return {"accepted": len(self.history), "rejections": self.rejections,
                "max_increase": self.max_increase, "final_energy": self._last}

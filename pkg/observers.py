# observers.py
from typing import Dict, Iterable, List, Optional

import numpy as np
import pandas as pd


class ObserverLog:
    """
    Named scalar streams recorded once per snapshot.
    Streams are created on first use; a stream missing from a record is stored as NaN
    so every column stays aligned with `times`.
    """
    def __init__(self, names: Optional[Iterable[str]] = None):
        self.times: List[float] = []
        self.streams: Dict[str, List[float]] = {name: [] for name in (names or [])}

    def record(self, t: float, **values: float) -> None:
        for name in values:
            if name not in self.streams:
                self.streams[name] = [np.nan] * len(self.times)
        self.times.append(float(t))
        for name, col in self.streams.items():
            col.append(float(values.get(name, np.nan)))

    def add_vector(self, t: float, prefix: str, vec, **values: float) -> None:
        """Record a vector as prefix1..prefixN alongside other scalars."""
        named = {f"{prefix}{i + 1}": float(v) for i, v in enumerate(np.ravel(vec))}
        self.record(t, **named, **values)

    def get(self, name: str) -> np.ndarray:
        return np.asarray(self.streams.get(name, [np.nan] * len(self.times)), dtype=float)

    def last(self, name: str) -> float:
        col = self.streams.get(name)
        return float(col[-1]) if col else float("nan")

    def __len__(self) -> int:
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.times}
        data.update(self.streams)
        return pd.DataFrame(data)

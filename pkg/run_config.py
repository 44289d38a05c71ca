# run_config.py
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, List, Optional, Union

import numpy as np
import yaml

from config import HET_POINTS, NEWTON_TOL, PROJ_TOL
from errors import ConfigError
from potential import FAMILIES, Potential, build_potential

Number = Union[int, float]


@dataclass
class PotentialBlock:
    family: str = ""
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ChainBlock:
    minima: List[Any] = field(default_factory=list)        # minimum indices or coordinates, in chain order
    connections: Dict[str, str] = field(default_factory=dict)  # "i-j" -> connection .npz
    equivariant: bool = False


@dataclass
class NumericsBlock:
    eps: List[float] = field(default_factory=lambda: [0.05])
    rho: Optional[float] = None
    n: Optional[int] = None
    L: Optional[float] = None
    het_points: int = HET_POINTS
    newton_tol: float = NEWTON_TOL
    proj_tol: float = PROJ_TOL
    dt: Optional[float] = None


@dataclass
class ExperimentBlock:
    xi0: Optional[List[float]] = None
    gaps0: Optional[List[float]] = None
    t_end: float = 10.0
    snapshot_every: float = 0.5
    k: int = 2
    min_gap: float = 0.25
    rel_tol: float = 0.05
    perturbation: float = 0.0


@dataclass
class RunConfig:
    """
    Validated run description. Blocks: potential (required), chain, numerics, experiment; seed.
    - resolved(): plain dict with every default filled in
    - digest(): sha256 of the canonical JSON of resolved()
    """
    potential: PotentialBlock
    chain: ChainBlock = field(default_factory=ChainBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    seed: int = 0
    source: Optional[str] = field(default=None, compare=False)

    def resolved(self) -> Dict[str, Any]:
        d = asdict(self)
        d.pop("source", None)
        return d

    def digest(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def build_potential(self) -> Potential:
        return build_potential(self.potential.family, self.potential.params)

    def chain_points(self, pot: Potential) -> np.ndarray:
        """Chain minima as an (N, m) array; integer entries index pot.minima."""
        pts = []
        for entry in self.chain.minima:
            if isinstance(entry, bool):
                raise ConfigError("❌ chain.minima entries must be indices or coordinates", entry=entry)
            if isinstance(entry, int):
                if not 0 <= entry < len(pot.minima):
                    raise ConfigError(f"❌ chain minimum index {entry} out of range", minima=pot.minima.tolist())
                pts.append(pot.minima[entry])
            else:
                p = np.atleast_1d(np.asarray(entry, dtype=float))
                if p.size != pot.dim:
                    raise ConfigError(f"❌ chain minimum {entry} has wrong dimension (m={pot.dim})")
                pts.append(p)
        if len(pts) < 2:
            raise ConfigError("❌ chain.minima needs at least two entries")
        return np.asarray(pts)


_BLOCKS = {"potential": PotentialBlock, "chain": ChainBlock, "numerics": NumericsBlock,
           "experiment": ExperimentBlock}


def _coerce(cls, name: str, raw: Any):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"❌ Block '{name}' must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"❌ Unknown keys in '{name}': {', '.join(unknown)}", known=sorted(known))
    out = cls()
    for key, value in raw.items():
        default = getattr(out, key)
        try:
            setattr(out, key, _convert(default, value, key))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"❌ Bad value for {name}.{key}: {value!r}") from exc
    return out


def _convert(default: Any, value: Any, key: str) -> Any:
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(key)
        return value
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if key == "eps":
        vals = value if isinstance(value, list) else [value]
        return [float(v) for v in vals]
    if key in ("xi0", "gaps0"):
        return [float(v) for v in value]
    if key in ("rho", "L", "dt"):
        return float(value)
    if key == "n":
        return int(value)
    return value


def from_dict(raw: Dict[str, Any], source: Optional[str] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("❌ Run config must be a mapping at top level")
    unknown = sorted(set(raw) - set(_BLOCKS) - {"seed"})
    if unknown:
        raise ConfigError(f"❌ Unknown top-level keys: {', '.join(unknown)}", known=sorted(_BLOCKS) + ["seed"])
    if "potential" not in raw or not raw["potential"]:
        raise ConfigError("❌ Missing required block 'potential'")
    blocks = {name: _coerce(cls, name, raw.get(name)) for name, cls in _BLOCKS.items()}
    cfg = RunConfig(**blocks, seed=int(raw.get("seed", 0) or 0), source=source)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    fam = str(cfg.potential.family).strip().lower()
    if fam not in FAMILIES:
        raise ConfigError(f"❌ Unknown potential family '{cfg.potential.family}'", known=list(FAMILIES))
    cfg.potential.family = fam
    num, exp = cfg.numerics, cfg.experiment
    if not num.eps or any(e <= 0 or e >= 1 for e in num.eps):
        raise ConfigError("❌ numerics.eps must be a nonempty list of values in (0, 1)", eps=num.eps)
    if num.rho is not None and num.rho < 0:
        raise ConfigError("❌ numerics.rho must be nonnegative", rho=num.rho)
    if num.n is not None and num.n < 16:
        raise ConfigError("❌ numerics.n must be at least 16", n=num.n)
    if exp.t_end <= 0 or exp.snapshot_every <= 0:
        raise ConfigError("❌ experiment.t_end and experiment.snapshot_every must be positive")
    if exp.xi0 is not None and exp.gaps0 is not None:
        raise ConfigError("❌ Give experiment.xi0 or experiment.gaps0, not both")
    if exp.k < 1:
        raise ConfigError("❌ experiment.k must be at least 1", k=exp.k)


def load_run_config(path: str) -> RunConfig:
    """Reads YAML (or JSON, a YAML subset) and validates it."""
    if not path or not os.path.exists(path):
        raise ConfigError(f"❌ Config file not found: {path}", path=path)
    with open(path, "r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"❌ Config is not valid YAML/JSON: {exc}", path=path) from exc
    return from_dict(raw or {}, source=path)

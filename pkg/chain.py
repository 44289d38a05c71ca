# chain.py
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import H4_ANGLE_DEG, N_IMAGES
from errors import ConfigError, DomainError
from grid import GridFunction, check_resolution, default_points, stationary_residual
from heteroclinic import Heteroclinic, solve_connection
from potential import Potential, nearest_minimum

log = logging.getLogger(__name__)

_COS_H4 = float(np.cos(np.radians(H4_ANGLE_DEG)))


@dataclass(frozen=True)
class ChainConstants:
    """
    Per-minimum interface constants, index j = minimum a_j (0-based, cyclic):
      mu_minus[j]  decay of u_j leaving a_j        mu_plus[j]  decay of u_{j-1} arriving at a_j
      K_minus[j]   amplitude of u_j at a_j          K_plus[j]   amplitude of u_{j-1} at a_j
      varsigma[j]  z_j^- . z_j^+ (snapped to +-1 when within 5 degrees)
      k_minus/k_plus/k  couplings; q2[j] action of u_j
    """
    mu_minus: np.ndarray
    mu_plus: np.ndarray
    K_minus: np.ndarray
    K_plus: np.ndarray
    dots: np.ndarray
    varsigma: np.ndarray
    q2: np.ndarray
    h4: bool

    @property
    def N(self) -> int:
        return len(self.q2)

    @property
    def mu(self) -> np.ndarray:
        return 0.5 * (self.mu_minus + self.mu_plus)

    @property
    def k_minus(self) -> np.ndarray:
        return self.mu_minus * self.mu * self.K_minus * self.K_plus

    @property
    def k_plus(self) -> np.ndarray:
        return self.mu_plus * self.mu * self.K_minus * self.K_plus

    @property
    def k(self) -> np.ndarray:
        return self.mu ** 2 * self.K_minus * self.K_plus

    @property
    def q(self) -> np.ndarray:
        return np.sqrt(self.q2)

    def to_dict(self) -> Dict[str, Any]:
        out = {name: getattr(self, name).tolist()
               for name in ("mu_minus", "mu_plus", "mu", "K_minus", "K_plus", "dots", "varsigma",
                            "k_minus", "k_plus", "k", "q2")}
        out["h4"] = self.h4
        return out


def constants_from_connections(connections: Sequence[Heteroclinic]) -> ChainConstants:
    N = len(connections)
    mu_m, mu_p, K_m, K_p, dots = (np.empty(N) for _ in range(5))
    for j in range(N):
        out_, in_ = connections[j].tail("left"), connections[j - 1].tail("right")
        mu_m[j], K_m[j] = out_.mu, out_.amplitude
        mu_p[j], K_p[j] = in_.mu, in_.amplitude
        dots[j] = float(out_.direction @ in_.direction)
    snapped = np.abs(dots) > _COS_H4
    varsigma = np.where(snapped, np.sign(dots), dots)
    q2 = np.array([c.q2 for c in connections])
    return ChainConstants(mu_m, mu_p, K_m, K_p, dots, varsigma, q2, bool(np.all(snapped)))


class ChainModel:
    """
    Cyclic chain a_1 .. a_N, a_{N+1} = a_1, with connections u_j: a_j -> a_{j+1}.
    - constants: ChainConstants (wrap-around handled by cyclic indexing)
    - minima: (N, m) points; connections: list of Heteroclinic
    Immutable after construction.
    """

    def __init__(self, potential: Potential, minima, connections: Sequence[Heteroclinic]):
        self.potential = potential
        self.minima = np.asarray(minima, dtype=float).reshape(len(connections), potential.dim)
        self.connections = list(connections)
        N = len(self.connections)
        if N < 2:
            raise ConfigError("❌ A chain needs at least two interfaces", N=N)
        for j in range(N):
            a, b = self.minima[j], self.minima[(j + 1) % N]
            if np.allclose(a, b):
                raise ConfigError(f"❌ Consecutive minima {j} and {(j + 1) % N} coincide", a=a.tolist())
            c = self.connections[j]
            if not (np.allclose(c.a_minus, a, atol=1e-8) and np.allclose(c.a_plus, b, atol=1e-8)):
                raise ConfigError(f"❌ Connection {j} does not join {a.tolist()} -> {b.tolist()}")
        self.constants = constants_from_connections(self.connections)

    @property
    def N(self) -> int:
        return len(self.connections)

    @property
    def dim(self) -> int:
        return self.potential.dim

    def describe(self) -> Dict[str, Any]:
        return {"N": self.N, "minima": self.minima.tolist(), "constants": self.constants.to_dict(),
                "connections": [c.metadata() for c in self.connections]}

    def __repr__(self) -> str:
        return f"ChainModel(N={self.N}, minima={self.minima.tolist()}, h4={self.constants.h4})"


def rotation_power(pot: Potential, src: Tuple[int, int], dst: Tuple[int, int]) -> Optional[int]:
    if pot.rotation is None:
        return None
    R = np.eye(pot.dim)
    order = int(pot.params.get("K", 0)) or 12
    for r in range(1, order):
        R = pot.rotation @ R
        if (np.allclose(R @ pot.minima[src[0]], pot.minima[dst[0]], atol=1e-10)
                and np.allclose(R @ pot.minima[src[1]], pot.minima[dst[1]], atol=1e-10)):
            return r
    return None


def build_chain(pot: Potential, minima: Sequence, connections: Optional[Dict[Tuple[int, int], Heteroclinic]] = None,
                equivariant: bool = False, **solve_opts) -> ChainModel:
    """
    Resolve the minima, then reuse or derive each connection: precomputed, reversed
    from the opposite pair, rotated (equivariant chains) or freshly solved.
    """
    idx = [nearest_minimum(pot, p) for p in minima]
    cache: Dict[Tuple[int, int], Heteroclinic] = dict(connections or {})
    conns: List[Heteroclinic] = []
    N = len(idx)
    for j in range(N):
        pair = (idx[j], idx[(j + 1) % N])
        if pair[0] == pair[1]:
            raise ConfigError(f"❌ Consecutive minima {j} and {(j + 1) % N} coincide")
        het = cache.get(pair)
        if het is None and pair[::-1] in cache:
            het = cache[pair[::-1]].reversed()
        if het is None and equivariant:
            for src, base in list(cache.items()):
                r = rotation_power(pot, src, pair)
                if r is not None:
                    het = base.transformed(np.linalg.matrix_power(pot.rotation, r))
                    break
        if het is None:
            het = solve_connection(pot, pot.minima[pair[0]], pot.minima[pair[1]], **solve_opts)
        cache[pair] = het
        conns.append(het)
    return ChainModel(pot, pot.minima[idx], conns)


# ---------------- layer configurations ----------------
@dataclass(frozen=True)
class LayerConfig:
    """Interface positions 0 <= xi_1 < ... < xi_N < xi_1 + 1, with eps and the margin rho."""
    xi: np.ndarray
    eps: float
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float).ravel())

    @property
    def N(self) -> int:
        return len(self.xi)

    @property
    def gaps(self) -> np.ndarray:
        """gaps[j] = xi_j - xi_{j-1}, the width of plateau a_j; xi_{-1} = xi_{N-1} - 1."""
        prev = np.roll(self.xi, 1)
        prev[0] -= 1.0
        return self.xi - prev

    @classmethod
    def from_gaps(cls, gaps, eps: float, rho: float = 0.0, start: Optional[float] = None) -> "LayerConfig":
        g = np.asarray(gaps, dtype=float)
        g = g / np.sum(g)
        x0 = 0.5 * g[0] if start is None else float(start)
        xi = x0 + np.concatenate([[0.0], np.cumsum(g[1:])])
        return cls(xi, eps, rho).normalised()

    def normalised(self) -> "LayerConfig":
        shift = np.floor(self.xi[0])
        return LayerConfig(self.xi - shift, self.eps, self.rho)

    def shifted(self, s: float) -> "LayerConfig":
        return LayerConfig(self.xi + s, self.eps, self.rho).normalised()

    def with_eps(self, eps: float) -> "LayerConfig":
        return LayerConfig(self.xi.copy(), eps, self.rho)

    def boundary_distance(self, mu: np.ndarray) -> float:
        """min_j (gap_j - rho/mu_j); nonpositive on or outside the boundary of the admissible set."""
        return float(np.min(self.gaps - self.rho / np.asarray(mu)))


def default_rho(chain: ChainModel, min_gap_target: float = 0.1) -> float:
    return 0.1 * float(np.min(chain.constants.mu)) * min_gap_target


def validate_config(chain, cfg: LayerConfig) -> None:
    """Raises DomainError unless cfg lies in the admissible set for this chain."""
    const = getattr(chain, "constants", chain)
    if cfg.N != const.N:
        raise DomainError(f"❌ Configuration has {cfg.N} positions for {const.N} interfaces")
    if not np.all(np.isfinite(cfg.xi)):
        raise DomainError("❌ Non-finite layer positions", xi=cfg.xi.tolist())
    if not (0.0 <= cfg.xi[0] < 1.0):
        raise DomainError("❌ xi_1 must lie in [0, 1)", xi=cfg.xi.tolist())
    if cfg.boundary_distance(const.mu) <= 0.0:
        raise DomainError("❌ Layer configuration outside the admissible set",
                          gaps=cfg.gaps.tolist(), rho=cfg.rho, mu=const.mu.tolist())


def tail_products(chain, cfg: LayerConfig) -> Dict[str, np.ndarray]:
    """E_j^+- = exp(-mu_j^+- gap_j / eps) and E_j = sqrt(E_j^- E_j^+)."""
    const = getattr(chain, "constants", chain)
    validate_config(const, cfg)
    g = cfg.gaps / cfg.eps
    return {
        "E_minus": np.exp(-const.mu_minus * g),
        "E_plus": np.exp(-const.mu_plus * g),
        "E": np.exp(-const.mu * g),
    }


# ---------------- ansatz ----------------
@dataclass
class Ansatz:
    """u^xi on the grid with its analytic xi-derivatives, each of shape (N, n, m)."""
    u: GridFunction
    u_xi: np.ndarray
    u_xixi: np.ndarray
    cfg: LayerConfig = field(repr=False)

    def u_xi_fn(self, j: int) -> GridFunction:
        return GridFunction(self.u_xi[j], self.u.eps)

    def u_xi_norms(self) -> np.ndarray:
        return np.sqrt(self.u.h * np.sum(self.u_xi ** 2, axis=(1, 2)))


def _images() -> range:
    # one extra image on the left covers xi_N up to xi_1 + 1 < 2
    return range(-N_IMAGES - 1, N_IMAGES + 1)


def ansatz_data(chain: ChainModel, cfg: LayerConfig, n: Optional[int] = None,
                x: Optional[np.ndarray] = None) -> Ansatz:
    """Glued superposition of translated connections on the periodic cell, plus xi-derivatives."""
    validate_config(chain, cfg)
    n = default_points(cfg.eps) if n is None else int(n)
    x = np.arange(n) / n if x is None else np.asarray(x, dtype=float)
    eps, N, m = cfg.eps, chain.N, chain.dim

    half = np.exp(-chain.constants.mu * cfg.gaps / (2 * eps))
    if np.any(half >= 0.1):
        log.warning("⚠️ connection tails not decayed at half-gap scale (max %.3f)", float(np.max(half)))

    u = np.tile(chain.minima[0], (len(x), 1))
    u_xi = np.zeros((N, len(x), m))
    u_xixi = np.zeros((N, len(x), m))
    for j, het in enumerate(chain.connections):
        a_here, a_next = chain.minima[j], chain.minima[(j + 1) % N]
        for img in _images():
            s = (x - img - cfg.xi[j]) / eps
            u += het.evaluate(s, 0) - (a_next if img < 0 else a_here)
            u_xi[j] -= het.evaluate(s, 1) / eps
            u_xixi[j] += het.evaluate(s, 2) / eps ** 2
    return Ansatz(GridFunction(u, eps), u_xi, u_xixi, cfg)


def build_ansatz(chain: ChainModel, cfg: LayerConfig, n: Optional[int] = None) -> GridFunction:
    return ansatz_data(chain, cfg, n).u


def residual(chain: ChainModel, cfg: LayerConfig, u: Optional[GridFunction] = None,
             n: Optional[int] = None) -> Tuple[GridFunction, Dict[str, float]]:
    """F(u) = eps^2 u_xx - grad W(u) on the grid, with L2 and sup norms."""
    u = build_ansatz(chain, cfg, n) if u is None else u
    check_resolution(u.n, u.eps)
    F = stationary_residual(u, chain.potential)
    return F, {"l2": F.norm(), "linf": F.sup_norm(), "w12": F.w12_norm()}


def cbar(chain: ChainModel, cfg: LayerConfig, n: Optional[int] = None,
         data: Optional[Ansatz] = None) -> np.ndarray:
    """Projection of the residual on the normalised xi_j-derivatives of the ansatz."""
    data = ansatz_data(chain, cfg, n) if data is None else data
    F, _ = residual(chain, cfg, data.u)
    norms = data.u_xi_norms()
    return np.array([F.inner(data.u_xi_fn(j)) / norms[j] for j in range(chain.N)])


def c0(chain, cfg: LayerConfig) -> np.ndarray:
    """Leading-order bifurcation function (2 sqrt(eps)/q_j)(s_{j+1} k+_{j+1} E_{j+1} - s_j k-_j E_j)."""
    const = getattr(chain, "constants", chain)
    E = tail_products(const, cfg)["E"]
    if const.h4:
        inc = const.varsigma * const.k * E
        out = inc
    else:
        inc = const.varsigma * const.k_plus * E
        out = const.varsigma * const.k_minus * E
    return 2.0 * np.sqrt(cfg.eps) / const.q * (np.roll(inc, -1) - out)


def existence_condition(chain) -> Dict[str, Any]:
    """exists=True/False when H4 holds (all varsigma equal cyclically); None otherwise."""
    const = getattr(chain, "constants", chain)
    vs = const.varsigma.tolist()
    if not const.h4:
        return {"exists": None, "reason": "H4 fails: tail directions are not parallel at every minimum",
                "varsigma": vs, "dots": const.dots.tolist(), "h4": False}
    same = bool(np.all(const.varsigma == const.varsigma[0]))
    reason = "all varsigma equal" if same else "varsigma changes sign along the chain"
    return {"exists": same, "reason": reason, "varsigma": vs, "dots": const.dots.tolist(), "h4": True}


def leading_energy(chain, eps: float) -> float:
    const = getattr(chain, "constants", chain)
    return float(eps * np.sum(const.q2))

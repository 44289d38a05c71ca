# layer_ode.py
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from chain import LayerConfig, c0, tail_products, validate_config
from errors import DomainError, NumericalError, UnsupportedCaseError

log = logging.getLogger(__name__)

# ---------- Tunables ----------
RTOL = 1e-10
ATOL = 1e-12
N_OUT = 201


def _constants(chain):
    return getattr(chain, "constants", chain)


def rhs(chain, xi, eps: float, rho: float = 0.0, k_scale: float = 1.0) -> np.ndarray:
    """
    Leading-order layer velocities
      xi_j' = (2 eps / q_j^2)(s_{j+1} k+_{j+1} E_{j+1} - s_j k-_j E_j),
    i.e. (sqrt(eps)/q_j) c0_j. Remainder terms are not modelled.
    """
    const = _constants(chain)
    cfg = xi if isinstance(xi, LayerConfig) else LayerConfig(np.asarray(xi, dtype=float), eps, rho).normalised()
    return k_scale * np.sqrt(cfg.eps) / const.q * c0(const, cfg)


def reduced_energy(chain, xi, eps: float, rho: float = 0.0) -> float:
    """J0 = eps sum q_j^2 - 2 eps^2 sum s_h k_h E_h / mu_h (tail directions parallel only)."""
    const = _constants(chain)
    if not const.h4:
        raise UnsupportedCaseError("❌ Reduced energy is only defined when every tail pair is parallel",
                                   dots=const.dots.tolist())
    cfg = xi if isinstance(xi, LayerConfig) else LayerConfig(np.asarray(xi, dtype=float), eps, rho).normalised()
    E = tail_products(const, cfg)["E"]
    return float(cfg.eps * np.sum(const.q2)
                 - 2.0 * cfg.eps ** 2 * np.sum(const.varsigma * const.k * E / const.mu))


def reduced_energy_gradient(chain, xi, eps: float, rho: float = 0.0) -> np.ndarray:
    """Analytic dJ0/dxi_j = 2 eps (s_j k_j E_j - s_{j+1} k_{j+1} E_{j+1})."""
    const = _constants(chain)
    cfg = xi if isinstance(xi, LayerConfig) else LayerConfig(np.asarray(xi, dtype=float), eps, rho).normalised()
    a = const.varsigma * const.k * tail_products(const, cfg)["E"]
    return 2.0 * cfg.eps * (a - np.roll(a, -1))


@dataclass
class ReducedTrajectory:
    t: np.ndarray
    xi: np.ndarray            # (K, N), unwrapped (no renormalisation along the path)
    energy: np.ndarray        # J0, NaN when undefined
    eps: float
    rho: float
    collided: bool
    t_event: Optional[float]
    status: str

    @property
    def gaps(self) -> np.ndarray:
        prev = np.roll(self.xi, 1, axis=1)
        prev[:, 0] -= 1.0
        return self.xi - prev

    def summary(self) -> Dict[str, Any]:
        return {"t_end": float(self.t[-1]), "collided": self.collided, "t_event": self.t_event,
                "status": self.status, "eps": self.eps, "rho": self.rho,
                "xi_final": self.xi[-1].tolist(), "gaps_final": self.gaps[-1].tolist()}

    def to_frame(self) -> pd.DataFrame:
        N = self.xi.shape[1]
        cols: Dict[str, Any] = {"t": self.t}
        for j in range(N):
            cols[f"xi{j + 1}"] = self.xi[:, j]
        g = self.gaps
        for j in range(N):
            cols[f"gap{j + 1}"] = g[:, j]
        cols["J0"] = self.energy
        return pd.DataFrame(cols)


def integrate(chain, xi0, eps: float, t_end: float, rho: float = 0.0, t_eval: Optional[Sequence[float]] = None,
              n_out: int = N_OUT, k_scale: float = 1.0, rtol: float = RTOL, atol: float = ATOL) -> ReducedTrajectory:
    """
    Adaptive RK45 on the reduced field, stopped by a terminal event when a gap
    reaches rho/mu_j (boundary of the admissible set).
    """
    const = _constants(chain)
    cfg0 = xi0 if isinstance(xi0, LayerConfig) else LayerConfig(np.asarray(xi0, dtype=float), eps, rho)
    cfg0 = LayerConfig(cfg0.xi, eps, rho).normalised()
    validate_config(const, cfg0)
    if t_end <= 0:
        raise DomainError("❌ t_end must be positive", t_end=t_end)

    mu = const.mu
    pull = rho / mu

    def field(t, y):
        cfg = LayerConfig(y, eps, rho)
        if np.min(cfg.gaps - pull) <= 0:
            return np.zeros_like(y)
        return rhs(const, cfg.normalised(), eps, rho, k_scale)

    def boundary(t, y):
        return float(np.min(LayerConfig(y, eps, rho).gaps - pull))
    boundary.terminal = True
    boundary.direction = -1

    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, n_out)
    sol = solve_ivp(field, (0.0, float(t_end)), cfg0.xi, method="RK45", t_eval=np.asarray(t_eval, dtype=float),
                    events=boundary, rtol=rtol, atol=atol)
    if sol.status < 0:
        raise NumericalError(f"❌ Reduced ODE integration failed: {sol.message}")

    t, Y = sol.t, sol.y.T
    collided = sol.status == 1 and len(sol.t_events[0]) > 0
    t_event = float(sol.t_events[0][0]) if collided else None
    if collided:
        t = np.append(t, t_event)
        Y = np.vstack([Y, sol.y_events[0][0]])
        log.info("⏹ reduced ODE reached the boundary of the admissible set at t=%.6g", t_event)

    energy = np.full(len(t), np.nan)
    if const.h4:
        for i, y in enumerate(Y):
            cfg = LayerConfig(y, eps, 0.0)
            if np.all(cfg.gaps > 0):
                energy[i] = reduced_energy(const, cfg.normalised(), eps)
    return ReducedTrajectory(t=t, xi=Y, energy=energy, eps=eps, rho=rho, collided=collided,
                             t_event=t_event, status="boundary" if collided else "t_end")

# potential.py
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from config import GAP_TOL, TOL_MIN
from errors import ConfigError, DomainError, H2ViolationError

log = logging.getLogger(__name__)

FAMILIES = ("double_well", "triple_well", "skewed_double_well", "dihedral", "polynomial")

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MinimumData:
    """Spectral data of W_uu at one minimum: eigenvalues mu_h^2 ascending, eigenvectors as columns."""
    point: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues)


class Potential:
    """
    Smooth nonnegative multi-well potential on R^m.
    - value(u) / grad(u) / hess(u): u of shape (m,) or (..., m), vectorised
    - eval_all(u) -> (W, grad, hess) at one point, finite-checked
    - minima: (k, m) array, the zero set A
    - rotation: m x m generator of the symmetry group (dihedral family only)
    Immutable after construction.
    """

    def __init__(self, family: str, params: Dict[str, Any], dim: int, minima: np.ndarray,
                 value_fn: ArrayFn, grad_fn: ArrayFn, hess_fn: ArrayFn,
                 rotation: Optional[np.ndarray] = None):
        self.family = family
        self.params = dict(params)
        self.dim = int(dim)
        self.minima = np.atleast_2d(np.asarray(minima, dtype=float)).reshape(-1, self.dim)
        self._value = value_fn
        self._grad = grad_fn
        self._hess = hess_fn
        self.rotation = rotation

    def value(self, u) -> np.ndarray:
        return self._value(np.asarray(u, dtype=float))

    def grad(self, u) -> np.ndarray:
        return self._grad(np.asarray(u, dtype=float))

    def hess(self, u) -> np.ndarray:
        return self._hess(np.asarray(u, dtype=float))

    def eval_all(self, u) -> Tuple[float, np.ndarray, np.ndarray]:
        return eval_all(self, u)

    def describe(self) -> Dict[str, Any]:
        return {"family": self.family, "params": self.params, "dim": self.dim,
                "minima": self.minima.tolist()}

    def __repr__(self) -> str:
        return f"Potential({self.family}, m={self.dim}, minima={self.minima.tolist()})"


def eval_all(pot: Potential, u) -> Tuple[float, np.ndarray, np.ndarray]:
    """W, grad W and the Hessian at one point; non-finite input or output is rejected."""
    u = np.asarray(u, dtype=float).reshape(pot.dim)
    if not np.all(np.isfinite(u)):
        raise DomainError("❌ Non-finite point passed to the potential", point=u)
    W = float(pot.value(u))
    g = np.asarray(pot.grad(u), dtype=float).reshape(pot.dim)
    H = np.asarray(pot.hess(u), dtype=float).reshape(pot.dim, pot.dim)
    if not (np.isfinite(W) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
        raise DomainError("❌ Potential evaluation is not finite", point=u)
    return W, g, H


# ---------------- Built-in families ----------------
def _scalar(fn: Callable[[np.ndarray], np.ndarray]) -> Tuple[ArrayFn, ArrayFn, ArrayFn]:
    """Lift scalar W, W', W'' (in that order, as one callable returning a triple) to (..., 1) arrays."""
    def value(u):
        return fn(u[..., 0])[0]

    def grad(u):
        return fn(u[..., 0])[1][..., None]

    def hess(u):
        return fn(u[..., 0])[2][..., None, None]

    return value, grad, hess


def double_well(scale: float = 1.0) -> Potential:
    """W(u) = 1/4 (1 - u^2)^2."""
    def w(u):
        return (scale * 0.25 * (1.0 - u * u) ** 2,
                scale * (u ** 3 - u),
                scale * (3.0 * u * u - 1.0))
    return Potential("double_well", {"scale": scale}, 1, [[-1.0], [1.0]], *_scalar(w))


def triple_well(scale: float = 1.0) -> Potential:
    """W(u) = 1/4 u^2 (1 - u^2)^2; W''(0) = 1/2, W''(+-1) = 2."""
    def w(u):
        u2 = u * u
        return (scale * 0.25 * u2 * (1.0 - u2) ** 2,
                scale * (0.5 * u - 2.0 * u ** 3 + 1.5 * u ** 5),
                scale * (0.5 - 6.0 * u2 + 7.5 * u2 * u2))
    return Potential("triple_well", {"scale": scale}, 1, [[-1.0], [0.0], [1.0]], *_scalar(w))


def skewed_double_well(beta: float = 1.0, scale: float = 1.0) -> Potential:
    """W(u) = (1 - u^2)^2 e^{beta u}; unequal curvatures W''(+-1) = 8 e^{+-beta}."""
    def w(u):
        e = np.exp(beta * u)
        p = 1.0 - u * u
        return (scale * p * p * e,
                scale * e * (-4.0 * u * p + beta * p * p),
                scale * e * (beta * beta * p * p - 8.0 * beta * u * p - 4.0 + 12.0 * u * u))
    return Potential("skewed_double_well", {"beta": beta, "scale": scale}, 1,
                     [[-1.0], [1.0]], *_scalar(w))


def dihedral(K: int = 3, radial_stiffness: float = 1.0, scale: float = 1.0) -> Potential:
    """
    Planar W(u) = |u^K - 1|^2 + kappa (|u|^2 - 1)^2, u read as a complex number.
    The radial term splits the Hessian at the K-th roots of unity into
    2K^2 (tangential) and 2K^2 + 8 kappa (radial).
    """
    K = int(K)
    if K < 2:
        raise ConfigError("❌ dihedral potential needs K >= 2", K=K)
    kappa = float(radial_stiffness)

    def parts(u):
        x, y = u[..., 0], u[..., 1]
        z = x + 1j * y
        f = z ** K - 1.0
        fp = K * z ** (K - 1)
        fpp = K * (K - 1) * z ** (K - 2)
        r2 = x * x + y * y
        return x, y, f, fp, fpp, r2

    def value(u):
        x, y, f, fp, fpp, r2 = parts(u)
        return scale * (np.abs(f) ** 2 + kappa * (r2 - 1.0) ** 2)

    def grad(u):
        x, y, f, fp, fpp, r2 = parts(u)
        G = 2.0 * f * np.conj(fp)
        radial = 4.0 * kappa * (r2 - 1.0)
        return scale * np.stack([G.real + radial * x, G.imag + radial * y], axis=-1)

    def hess(u):
        x, y, f, fp, fpp, r2 = parts(u)
        q = f * np.conj(fpp)
        a2 = 2.0 * np.abs(fp) ** 2
        iso = 4.0 * kappa * (r2 - 1.0)
        hxx = a2 + 2.0 * q.real + iso + 8.0 * kappa * x * x
        hyy = a2 - 2.0 * q.real + iso + 8.0 * kappa * y * y
        hxy = 2.0 * q.imag + 8.0 * kappa * x * y
        return scale * np.stack([np.stack([hxx, hxy], axis=-1),
                                 np.stack([hxy, hyy], axis=-1)], axis=-2)

    angles = 2.0 * np.pi * np.arange(K) / K
    minima = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    th = 2.0 * np.pi / K
    rotation = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    return Potential("dihedral", {"K": K, "radial_stiffness": kappa, "scale": scale}, 2,
                     minima, value, grad, hess, rotation=rotation)


def polynomial(coefficients, scale: float = 1.0) -> Potential:
    """Scalar W from ascending coefficients; minima are the real critical points where W vanishes."""
    c = np.asarray(coefficients, dtype=float) * scale
    if c.ndim != 1 or c.size < 3:
        raise ConfigError("❌ polynomial potential needs at least 3 coefficients")
    P = Polynomial(c)
    P1, P2 = P.deriv(1), P.deriv(2)
    deg = P.degree()
    if deg % 2 or c[deg] <= 0:
        raise ConfigError("❌ polynomial potential must have even degree and positive leading coefficient",
                          coefficients=c.tolist())

    roots = P1.roots()
    minima: List[float] = []
    for r in roots[np.abs(roots.imag) < 1e-8].real:
        for _ in range(5):
            d2 = P2(r)
            if d2 == 0.0:
                break
            r = r - P1(r) / d2
        if P2(r) > 0 and abs(P(r)) <= 1e-8 * (1.0 + np.max(np.abs(c))):
            if not any(abs(r - m) < 1e-9 for m in minima):
                minima.append(float(r))
    if not minima:
        raise ConfigError("❌ polynomial potential has no zero minimum", coefficients=c.tolist())
    minima.sort()

    def w(u):
        return P(u), P1(u), P2(u)

    return Potential("polynomial", {"coefficients": list(map(float, coefficients)), "scale": scale},
                     1, [[m] for m in minima], *_scalar(w))


_BUILDERS = {
    "double_well": double_well,
    "triple_well": triple_well,
    "skewed_double_well": skewed_double_well,
    "dihedral": dihedral,
    "polynomial": polynomial,
}


def build_potential(family: str, params: Optional[Dict[str, Any]] = None) -> Potential:
    family = str(family).strip().lower()
    if family not in _BUILDERS:
        raise ConfigError(f"❌ Unknown potential family '{family}'", known=list(FAMILIES))
    try:
        return _BUILDERS[family](**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"❌ Bad parameters for {family}: {exc}", params=params) from exc


# ---------------- Minima ----------------
def classify_minima(pot: Potential) -> List[MinimumData]:
    """Eigen-data of W_uu at every minimum; raises H2ViolationError on non-PD or repeated eigenvalues."""
    if len(pot.minima) == 0:
        raise ConfigError("❌ Potential declares no minima")
    out: List[MinimumData] = []
    for a in pot.minima:
        _, _, H = eval_all(pot, a)
        H = 0.5 * (H + H.T)
        lam, vecs = np.linalg.eigh(H)
        # first nonzero component positive
        for h in range(vecs.shape[1]):
            col = vecs[:, h]
            nz = np.flatnonzero(np.abs(col) > 1e-12)
            if nz.size and col[nz[0]] < 0:
                vecs[:, h] = -col
        scale = max(np.max(np.abs(lam)), 1e-300)
        if lam[0] <= 0.0:
            raise H2ViolationError(f"❌ Hessian at {a.tolist()} is not positive definite",
                                   point=a.tolist(), eigenvalues=lam.tolist())
        if lam.size > 1 and np.min(np.diff(lam) / lam[1:]) <= GAP_TOL:
            raise H2ViolationError(f"❌ Repeated Hessian eigenvalues at {a.tolist()}",
                                   point=a.tolist(), eigenvalues=lam.tolist())
        res = np.max(np.abs(H @ vecs - vecs * lam))
        if res >= 1e-10 * scale:
            log.warning("⚠️ eigen-residual %.2e at minimum %s", res, a.tolist())
        out.append(MinimumData(point=a.copy(), eigenvalues=lam, eigenvectors=vecs))
    return out


def validate(pot: Potential, rng: Optional[np.random.Generator] = None, n_samples: int = 400) -> List[MinimumData]:
    """Checks W(a) = 0, grad W(a) = 0, positivity on sample points off A and H2; returns classify_minima()."""
    for a in pot.minima:
        W, g, _ = eval_all(pot, a)
        if abs(W) > TOL_MIN or np.max(np.abs(g)) > TOL_MIN:
            raise ConfigError(f"❌ {a.tolist()} is not a critical zero of W", W=W, grad=g.tolist())

    rng = rng if rng is not None else np.random.default_rng(0)
    box = 1.5 * max(1.0, float(np.max(np.abs(pot.minima))))
    samples = rng.uniform(-box, box, size=(n_samples, pot.dim))
    dist = np.min(np.linalg.norm(samples[:, None, :] - pot.minima[None, :, :], axis=-1), axis=1)
    samples = samples[dist > 1e-3]
    vals = pot.value(samples)
    if np.any(vals <= 0.0):
        bad = samples[np.argmin(vals)]
        raise ConfigError("❌ W is not positive off its zero set", point=bad.tolist())
    return classify_minima(pot)


def fd_check(pot: Potential, points: np.ndarray, step: float = 1e-5) -> Tuple[float, float]:
    """
    Finite-difference consistency over points (k, m). Returns the worst
    |grad - FD(W)|/(1+|grad|) and |hess - FD(grad)|/(1+|hess|), sup norms.
    """
    points = np.atleast_2d(points)
    worst_g, worst_h = 0.0, 0.0
    eye = np.eye(pot.dim) * step
    for u in points:
        _, g, H = eval_all(pot, u)
        g_fd = np.array([(pot.value(u + e) - pot.value(u - e)) / (2 * step) for e in eye])
        H_fd = np.stack([(pot.grad(u + e) - pot.grad(u - e)) / (2 * step) for e in eye], axis=1)
        worst_g = max(worst_g, np.max(np.abs(g - g_fd)) / (1.0 + np.max(np.abs(g))))
        worst_h = max(worst_h, np.max(np.abs(H - H_fd)) / (1.0 + np.max(np.abs(H))))
    return worst_g, worst_h


def nearest_minimum(pot: Potential, point, tol: float = 1e-6) -> int:
    p = np.asarray(point, dtype=float).reshape(pot.dim)
    d = np.linalg.norm(pot.minima - p, axis=1)
    i = int(np.argmin(d))
    if d[i] > tol:
        raise ConfigError(f"❌ {p.tolist()} is not a minimum of {pot.family}", minima=pot.minima.tolist())
    return i


def max_curvature(pot: Potential, points: Optional[np.ndarray] = None) -> float:
    """Largest |eigenvalue| of W_uu over the minima and the given points."""
    pts = pot.minima if points is None else np.vstack([pot.minima, np.asarray(points).reshape(-1, pot.dim)])
    H = pot.hess(pts)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + np.swapaxes(H, -1, -2))))))

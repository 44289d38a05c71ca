# grid.py
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from config import MIN_POINTS_PER_EPS, POINTS_PER_EPS
from errors import ResolutionError


def default_points(eps: float, per_eps: float = POINTS_PER_EPS) -> int:
    """Smallest power of two giving at least `per_eps` points per eps-width."""
    need = int(np.ceil(per_eps / eps))
    return int(2 ** int(np.ceil(np.log2(max(need, 16)))))


def check_resolution(n: int, eps: float, per_eps: float = MIN_POINTS_PER_EPS) -> None:
    if n * eps < per_eps:
        raise ResolutionError(f"❌ Grid of {n} points does not resolve eps={eps:g} "
                              f"(needs at least {per_eps:g} points per eps)", n=n, eps=eps)


class GridFunction:
    """
    1-periodic R^m-valued field sampled at x_i = i/n, carrying eps.
    - dx() / dxx(): spectral derivatives
    - inner(), norm(), w12_norm(): <v, w> = h sum v.w, ||v||^2 + eps^2 ||v_x||^2
    - shifted(s): x -> v(x - s) (spectral), rotated(R): pointwise R v
    """

    def __init__(self, values, eps: float):
        values = np.asarray(values, dtype=float)
        self.values = values.reshape(values.shape[0], -1)
        self.eps = float(eps)

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], n: int, eps: float) -> "GridFunction":
        x = np.arange(n) / n
        return cls(np.asarray(fn(x)).reshape(n, -1), eps)

    @classmethod
    def constant(cls, value, n: int, eps: float) -> "GridFunction":
        v = np.asarray(value, dtype=float).ravel()
        return cls(np.tile(v, (n, 1)), eps)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    @cached_property
    def _k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=1.0 / self.n)

    def _spectral(self, mult: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft(mult[:, None] * np.fft.fft(self.values, axis=0), axis=0))

    def dx(self) -> "GridFunction":
        k = 1j * self._k
        if self.n % 2 == 0:
            k = k.copy()
            k[self.n // 2] = 0.0
        return GridFunction(self._spectral(k), self.eps)

    def dxx(self) -> "GridFunction":
        return GridFunction(self._spectral(-self._k ** 2), self.eps)

    def shifted(self, s: float) -> "GridFunction":
        """The field translated right by s on the circle."""
        mult = np.exp(-1j * self._k * s)
        if self.n % 2 == 0:
            mult = mult.copy()
            mult[self.n // 2] = np.cos(self._k[self.n // 2] * s)
        return GridFunction(self._spectral(mult), self.eps)

    def rotated(self, R: np.ndarray) -> "GridFunction":
        return GridFunction(self.values @ np.asarray(R).T, self.eps)

    def inner(self, other: "GridFunction") -> float:
        return float(self.h * np.sum(self.values * _vals(other)))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))

    def w12_norm(self) -> float:
        d = self.dx()
        return float(np.sqrt(self.inner(self) + self.eps ** 2 * d.inner(d)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "GridFunction":
        return GridFunction(self.values.copy(), self.eps)

    def __add__(self, other):
        return GridFunction(self.values + _vals(other), self.eps)

    def __sub__(self, other):
        return GridFunction(self.values - _vals(other), self.eps)

    def __mul__(self, c: float):
        return GridFunction(self.values * c, self.eps)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(-self.values, self.eps)

    def __repr__(self) -> str:
        return f"GridFunction(n={self.n}, m={self.m}, eps={self.eps:g})"


def _vals(v) -> np.ndarray:
    return v.values if isinstance(v, GridFunction) else np.asarray(v, dtype=float)


def spectral_d2_matrix(n: int) -> np.ndarray:
    """Dense periodic second-derivative matrix on [0, 1), symmetric."""
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
    D2 = np.real(np.fft.ifft(-(k ** 2)[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0))
    return 0.5 * (D2 + D2.T)


def energy(u: GridFunction, pot) -> float:
    """J_eps(u) = integral of 1/2 eps^2 |u_x|^2 + W(u) over the period."""
    d = u.dx()
    return float(u.h * np.sum(0.5 * u.eps ** 2 * np.sum(d.values ** 2, axis=1) + pot.value(u.values)))


def stationary_residual(u: GridFunction, pot) -> GridFunction:
    """eps^2 u_xx - grad W(u)."""
    return GridFunction(u.eps ** 2 * u.dxx().values - pot.grad(u.values), u.eps)

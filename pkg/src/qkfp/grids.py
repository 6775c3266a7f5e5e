"""Phase-space grids and discrete derivative operators.

Momentum: uniform nodes on [-P, P] with second-order centered stencils
(one-sided closures at the endpoints) and trapezoid quadrature weights.
Space: uniform periodic nodes on a torus of length L with spectral (FFT)
differentiation.

Field array convention throughout the package: values[x_i, p_j], i.e.
x-major with the momentum index last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MomentumGrid:
    """Uniform momentum grid on [-p_max, p_max], endpoints included."""

    n_p: int
    p_max: float
    nodes: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    weights: np.ndarray = field(init=False, repr=False)  # trapezoid

    def __post_init__(self):
        if self.n_p < 8:
            raise ValueError(f"momentum grid needs n_p >= 8, got {self.n_p}")
        if not self.p_max > 0:
            raise ValueError("p_max must be positive")
        nodes = np.linspace(-self.p_max, self.p_max, self.n_p)
        w = np.full(self.n_p, nodes[1] - nodes[0])
        w[0] *= 0.5
        w[-1] *= 0.5
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "h", nodes[1] - nodes[0])
        object.__setattr__(self, "weights", w)

    def deriv1(self, values: np.ndarray) -> np.ndarray:
        """First p-derivative, O(h^2): centered interior, one-sided ends.

        Acts on the last axis so (n_x, n_p) fields work unchanged.
        """
        v = np.asarray(values, dtype=float)
        out = np.empty_like(v)
        h = self.h
        out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * h)
        out[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
        out[..., -1] = (3 * v[..., -1] - 4 * v[..., -2] + v[..., -3]) / (2 * h)
        return out

    def deriv2(self, values: np.ndarray) -> np.ndarray:
        """Second p-derivative, O(h^2): centered interior, one-sided ends."""
        v = np.asarray(values, dtype=float)
        out = np.empty_like(v)
        h2 = self.h * self.h
        out[..., 1:-1] = (v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]) / h2
        out[..., 0] = (2 * v[..., 0] - 5 * v[..., 1] + 4 * v[..., 2] - v[..., 3]) / h2
        out[..., -1] = (2 * v[..., -1] - 5 * v[..., -2] + 4 * v[..., -3] - v[..., -4]) / h2
        return out

    def deriv1_matrix(self) -> np.ndarray:
        """Dense matrix of deriv1, used for quadratic-form assembly."""
        n, h = self.n_p, self.h
        d = np.zeros((n, n))
        idx = np.arange(1, n - 1)
        d[idx, idx + 1] = 1.0 / (2 * h)
        d[idx, idx - 1] = -1.0 / (2 * h)
        d[0, :3] = np.array([-3.0, 4.0, -1.0]) / (2 * h)
        d[-1, -3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
        return d

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Trapezoid integral over p (last axis)."""
        return np.asarray(values) @ self.weights

    def inner(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Weighted L^2_p inner product over the last axis."""
        return (np.asarray(u) * np.asarray(v)) @ self.weights


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0, length), endpoint excluded."""

    n_x: int
    length: float = 2.0 * np.pi
    nodes: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    wavenumbers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_x < 4:
            raise ValueError(f"torus grid needs n_x >= 4, got {self.n_x}")
        if not self.length > 0:
            raise ValueError("torus length must be positive")
        nodes = np.arange(self.n_x) * (self.length / self.n_x)
        k = 2.0 * np.pi * np.fft.rfftfreq(self.n_x, d=self.length / self.n_x)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "h", self.length / self.n_x)
        object.__setattr__(self, "wavenumbers", k)

    def deriv(self, values: np.ndarray) -> np.ndarray:
        """Spectral x-derivative along the first axis (periodic-exact)."""
        v = np.asarray(values, dtype=float)
        vhat = np.fft.rfft(v, axis=0)
        shape = [1] * v.ndim
        shape[0] = len(self.wavenumbers)
        vhat *= 1j * self.wavenumbers.reshape(shape)
        return np.fft.irfft(vhat, n=self.n_x, axis=0)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Periodic trapezoid (= uniform-weight) integral over x (first axis)."""
        return np.asarray(values).sum(axis=0) * self.h


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid on the torus x momentum phase space."""

    x: TorusGrid
    p: MomentumGrid

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.n_x, self.p.n_p)

    def integrate(self, values: np.ndarray) -> float:
        """Full phase-space integral, uniform in x, trapezoid in p."""
        return float(self.x.integrate(self.p.integrate(np.asarray(values))))

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return self.integrate(np.asarray(u) * np.asarray(v))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

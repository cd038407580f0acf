"""Fiber-bundle domains and tensor-product quadrature.

The physical domain is ``Omega = (0, L) x gamma_x`` and the transverse map
``psi_x`` sends each physical fiber ``gamma_x`` onto the reference fiber
``(-1/2, 1/2)``. All maps here are affine in the transverse coordinate, so
``dpsi/dy`` depends on ``x`` only; the load assembly relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError

__all__ = [
    "REFERENCE_FIBER",
    "DomainMap",
    "QuadratureGrid",
    "adr_map",
    "stokes_map",
    "build_quadrature",
    "map_eval",
]

REFERENCE_FIBER = (-0.5, 0.5)
MAP_KINDS = ("identity", "sinusoidal-additive", "sinusoidal-multiplicative")
_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class DomainMap:
    """Closed-form transverse map of a fiber-bundle domain.

    ``sinusoidal-additive``:
        ``psi_x(y) = y - amplitude * sin(frequency * x + phase)``
    ``sinusoidal-multiplicative``:
        ``psi_x(y) = y / w(x)`` with
        ``w(x) = 1 + amplitude * (2 / height) * sin(frequency * x + phase)``
    ``identity``:
        ``psi_x(y) = y``
    """

    length: float
    kind: str = "identity"
    amplitude: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0
    height: float = 1.0

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ConfigurationError(f"unknown map kind {self.kind!r}; expected one of {MAP_KINDS}")
        if not self.length > 0:
            raise ConfigurationError("domain length must be positive")
        if self.kind == "sinusoidal-multiplicative":
            if self.height <= 0:
                raise ConfigurationError("height must be positive")
            if abs(self.amplitude) * 2.0 / self.height >= 1.0:
                raise ConfigurationError("multiplicative map degenerates (width reaches zero)")

    # -- pieces of the closed form -------------------------------------------------
    def _arg(self, x):
        return self.frequency * np.asarray(x, dtype=float) + self.phase

    def shift(self, x):
        """Vertical offset of the fiber (additive kind)."""
        return self.amplitude * np.sin(self._arg(x))

    def width(self, x):
        """Fiber width (multiplicative kind)."""
        return 1.0 + self.amplitude * (2.0 / self.height) * np.sin(self._arg(x))

    def _width_dx(self, x):
        return self.amplitude * (2.0 / self.height) * self.frequency * np.cos(self._arg(x))

    # -- map, inverse and derivatives ---------------------------------------------
    def psi(self, x, y):
        """Reference coordinate of the physical point ``(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            return y + 0.0 * x
        if self.kind == "sinusoidal-additive":
            return y - self.shift(x)
        return y / self.width(x)

    def inverse(self, x, y_hat):
        """Physical transverse coordinate of the reference point ``(x, y_hat)``."""
        x = np.asarray(x, dtype=float)
        y_hat = np.asarray(y_hat, dtype=float)
        if self.kind == "identity":
            return y_hat + 0.0 * x
        if self.kind == "sinusoidal-additive":
            return y_hat + self.shift(x)
        return y_hat * self.width(x)

    def dpsi_dx(self, x, y_hat):
        """``d psi / dx`` at the physical point mapped from ``(x, y_hat)``."""
        x = np.asarray(x, dtype=float)
        y_hat = np.asarray(y_hat, dtype=float)
        if self.kind == "identity":
            return np.zeros(np.broadcast(x, y_hat).shape)
        if self.kind == "sinusoidal-additive":
            val = -self.amplitude * self.frequency * np.cos(self._arg(x))
            return val + 0.0 * y_hat
        return -y_hat * self._width_dx(x) / self.width(x)

    def dpsi_dy(self, x):
        """``d psi / dy``; independent of the transverse coordinate."""
        x = np.asarray(x, dtype=float)
        if self.kind == "sinusoidal-multiplicative":
            return 1.0 / self.width(x)
        return np.ones(x.shape)

    def bounds(self, x):
        """Physical fiber ``gamma_x`` as ``(y_low, y_high)``."""
        return self.inverse(x, REFERENCE_FIBER[0]), self.inverse(x, REFERENCE_FIBER[1])

    def contains(self, x, y, tol: float = _EDGE_TOL):
        x = np.asarray(x, dtype=float)
        y_hat = self.psi(x, y)
        return (
            (x >= -tol)
            & (x <= self.length + tol)
            & (y_hat >= REFERENCE_FIBER[0] - tol)
            & (y_hat <= REFERENCE_FIBER[1] + tol)
        )


def adr_map(length: float = 4.0, amplitude: float = 0.2) -> DomainMap:
    """``psi_x(y) = y - amplitude * sin(3 pi x / (2 L))``."""
    return DomainMap(
        length=length,
        kind="sinusoidal-additive",
        amplitude=amplitude,
        frequency=3.0 * np.pi / (2.0 * length),
        phase=0.0,
    )


def stokes_map(length: float = 6.0, height: float = 1.0) -> DomainMap:
    """``psi_x(y) = y / (1 + 2/5 sin(6 pi x / L + pi/2) * 2/H)``."""
    return DomainMap(
        length=length,
        kind="sinusoidal-multiplicative",
        amplitude=0.4,
        frequency=6.0 * np.pi / length,
        phase=0.5 * np.pi,
        height=height,
    )


def map_eval(dmap: DomainMap, x: float, y_hat: float):
    """Physical coordinate and map derivatives for a reference point.

    Returns
    -------
    (y_phys, dpsi_dx, dpsi_dy)
        Derivatives of ``psi`` evaluated at ``(x, y_phys)``.
    """
    if not (-_EDGE_TOL <= x <= dmap.length + _EDGE_TOL):
        raise GeometryError(f"x={x} outside [0, {dmap.length}]")
    if not (REFERENCE_FIBER[0] - _EDGE_TOL <= y_hat <= REFERENCE_FIBER[1] + _EDGE_TOL):
        raise GeometryError(f"y_hat={y_hat} outside the reference fiber")
    dy = float(dmap.dpsi_dy(x))
    if not dy > 0:
        raise GeometryError(f"map not invertible at x={x} (dpsi/dy={dy})")
    return float(dmap.inverse(x, y_hat)), float(dmap.dpsi_dx(x, y_hat)), dy


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre rules on a uniform axial mesh and on the reference fiber.

    Attributes
    ----------
    edges : (n_el + 1,) element boundaries on ``(0, L)``
    axial_nodes, axial_weights : (n_el, order_axial)
    transverse_nodes, transverse_weights : (order_transverse,)
    """

    length: float
    edges: np.ndarray
    axial_nodes: np.ndarray
    axial_weights: np.ndarray
    transverse_nodes: np.ndarray
    transverse_weights: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.axial_nodes.shape[0]

    @property
    def order_axial(self) -> int:
        return self.axial_nodes.shape[1]

    @property
    def order_transverse(self) -> int:
        return self.transverse_nodes.shape[0]

    @property
    def element_size(self) -> float:
        return self.length / self.n_elements

    @property
    def reference_local(self):
        """Axial nodes in local element coordinates on [0, 1]."""
        return (self.axial_nodes[0] - self.edges[0]) / self.element_size

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        """Same mesh with ``factor`` times as many points in each direction."""
        return build_quadrature(
            self.n_elements, factor * self.order_axial, factor * self.order_transverse, self.length
        )


def _gauss(order: int, a: float, b: float):
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def build_quadrature(
    mesh_elements: int,
    order_axial: int = 8,
    order_transverse: int = 64,
    length: float = 1.0,
) -> QuadratureGrid:
    """Tensor Gauss-Legendre quadrature for a uniform mesh of ``(0, length)``."""
    for name, val in (("mesh_elements", mesh_elements), ("order_axial", order_axial),
                      ("order_transverse", order_transverse)):
        if int(val) != val or val < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {val}")
    if not length > 0:
        raise ConfigurationError("length must be positive")
    edges = np.linspace(0.0, length, int(mesh_elements) + 1)
    ref_t, ref_w = _gauss(int(order_axial), 0.0, 1.0)
    h = edges[1:] - edges[:-1]
    nodes = edges[:-1, None] + h[:, None] * ref_t[None, :]
    weights = h[:, None] * ref_w[None, :]
    y, wy = _gauss(int(order_transverse), *REFERENCE_FIBER)
    return QuadratureGrid(float(length), edges, nodes, weights, y, wy)

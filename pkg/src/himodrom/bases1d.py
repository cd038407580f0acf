"""Axial finite element spaces and transverse modal bases.

Axial functions are continuous Lagrange P1/P2 elements on a uniform mesh.
Transverse functions are the first eigenfunctions of ``-phi'' = lam phi``
on the reference fiber with homogeneous Dirichlet or Robin conditions
("educated" bases), or orthonormal Legendre polynomials.

Modal functions are stored as Legendre series in ``t = 2 y_hat``, so values,
derivatives and antiderivatives are available at any point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as leg

from .errors import BasisError, ConfigurationError
from .geometry import QuadratureGrid
from .linalg import gen_sym_eig

__all__ = [
    "Fem1DSpace",
    "ModalBasis",
    "BoundaryTag",
    "dirichlet",
    "robin",
    "free",
    "build_fem1d",
    "build_educated_basis",
]


# ---------------------------------------------------------------------------
# axial finite elements
# ---------------------------------------------------------------------------

def _local_shape(degree: int, xi: np.ndarray):
    """Lagrange shape functions on [0, 1] and their xi-derivatives."""
    xi = np.asarray(xi, dtype=float)
    if degree == 1:
        val = np.stack([1.0 - xi, xi], axis=-1)
        der = np.stack([-np.ones_like(xi), np.ones_like(xi)], axis=-1)
    elif degree == 2:
        # local order: left vertex, midpoint, right vertex
        val = np.stack([
            2.0 * (xi - 0.5) * (xi - 1.0),
            -4.0 * xi * (xi - 1.0),
            2.0 * xi * (xi - 0.5),
        ], axis=-1)
        der = np.stack([4.0 * xi - 3.0, -8.0 * xi + 4.0, 4.0 * xi - 1.0], axis=-1)
    else:
        raise ConfigurationError(f"unsupported polynomial degree {degree}")
    return val, der


@dataclass(frozen=True)
class Fem1DSpace:
    """Continuous Lagrange space on a uniform mesh of ``(0, L)``.

    ``values[e, q, a]`` / ``derivs[e, q, a]`` tabulate local basis ``a`` of
    element ``e`` at axial quadrature node ``q``; ``element_dofs[e, a]`` is its
    global index. DOFs are numbered left to right.
    """

    length: float
    n_elements: int
    degree: int
    element_dofs: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    edges: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.n_elements * self.degree + 1

    @property
    def inflow_dofs(self) -> np.ndarray:
        return np.array([0])

    @property
    def outflow_dofs(self) -> np.ndarray:
        return np.array([self.n_dofs - 1])

    @property
    def nodes(self) -> np.ndarray:
        """Coordinates of the Lagrange nodes (interpolation points)."""
        return np.linspace(0.0, self.length, self.n_dofs)

    def locate(self, x):
        """Element index and local coordinate in [0, 1] of each point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        h = self.length / self.n_elements
        e = np.clip(np.floor(x / h).astype(int), 0, self.n_elements - 1)
        return e, (x - self.edges[e]) / h

    def basis_at(self, x):
        """Dense ``(len(x), n_dofs)`` matrices of basis values and x-derivatives."""
        e, xi = self.locate(x)
        val, der = _local_shape(self.degree, xi)
        h = self.length / self.n_elements
        vals = np.zeros((xi.size, self.n_dofs))
        ders = np.zeros((xi.size, self.n_dofs))
        rows = np.repeat(np.arange(xi.size), self.degree + 1)
        cols = self.element_dofs[e].ravel()
        vals[rows, cols] = val.ravel()
        ders[rows, cols] = der.ravel() / h
        return vals, ders

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant coefficients of ``func``."""
        return np.asarray(func(self.nodes), dtype=float)


def build_fem1d(length: float, n_elements: int, degree: int, quad: QuadratureGrid) -> Fem1DSpace:
    """Tabulate a P1 or P2 space at the axial nodes of ``quad``."""
    if int(n_elements) != n_elements or n_elements < 1:
        raise ConfigurationError("n_elements must be a positive integer")
    if degree not in (1, 2):
        raise ConfigurationError("degree must be 1 or 2")
    if quad.n_elements != n_elements or not np.isclose(quad.length, length):
        raise ConfigurationError("quadrature mesh does not match the FE mesh")
    n_elements = int(n_elements)
    base = np.arange(n_elements)[:, None] * degree
    element_dofs = base + np.arange(degree + 1)[None, :]
    xi = quad.reference_local
    val, der = _local_shape(degree, xi)
    h = length / n_elements
    values = np.broadcast_to(val, (n_elements,) + val.shape).copy()
    derivs = np.broadcast_to(der / h, (n_elements,) + der.shape).copy()
    return Fem1DSpace(float(length), n_elements, degree, element_dofs, values, derivs,
                      quad.edges.copy())


# ---------------------------------------------------------------------------
# transverse modal bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryTag:
    """Lateral condition embedded in a modal basis.

    ``kind`` is ``"dirichlet"``, ``"robin"`` (``nu_ref * dphi/dn + rho * phi = 0``)
    or ``"free"`` (plain Legendre polynomials).
    """

    kind: str
    nu_ref: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "robin", "free"):
            raise ConfigurationError(f"unknown boundary tag {self.kind!r}")
        if self.kind == "robin" and not (self.nu_ref > 0 and self.rho >= 0):
            raise ConfigurationError("robin tag needs nu_ref > 0 and rho >= 0")


def dirichlet() -> BoundaryTag:
    return BoundaryTag("dirichlet")


def robin(nu_ref: float, rho: float) -> BoundaryTag:
    return BoundaryTag("robin", float(nu_ref), float(rho))


def free() -> BoundaryTag:
    return BoundaryTag("free")


@dataclass(frozen=True)
class ModalBasis:
    """``m`` transverse functions, L2-orthonormal on the reference fiber.

    ``coeffs[k]`` holds the Legendre-series coefficients (variable
    ``t = 2 y_hat``) of mode ``k``; ``values``/``derivs`` tabulate the modes at
    the transverse quadrature nodes with shape ``(m, n_nodes)``.
    """

    tag: BoundaryTag
    coeffs: np.ndarray
    eigenvalues: np.ndarray | None
    values: np.ndarray = field(repr=False)
    derivs: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.coeffs.shape[0]

    def eval(self, y_hat) -> np.ndarray:
        """Mode values, shape ``(m,) + y_hat.shape``."""
        y_hat = np.asarray(y_hat, dtype=float)
        return leg.legval(2.0 * y_hat, self.coeffs.T)

    def deriv(self, y_hat) -> np.ndarray:
        """``d phi_k / d y_hat``."""
        y_hat = np.asarray(y_hat, dtype=float)
        d = 2.0 * leg.legder(self.coeffs.T, axis=0)
        return leg.legval(2.0 * y_hat, d)

    def antiderivative(self, y_hat) -> np.ndarray:
        """Primitive of each mode, vanishing at ``y_hat = -1/2``."""
        y_hat = np.asarray(y_hat, dtype=float)
        c = 0.5 * leg.legint(self.coeffs.T, axis=0, lbnd=-1.0)
        return leg.legval(2.0 * y_hat, c)


def _normalized_legendre(degree: int) -> np.ndarray:
    """Rows: coefficients of sqrt(2j+1) P_j(2 y_hat), j < degree."""
    return np.diag(np.sqrt(2.0 * np.arange(degree) + 1.0))


def _sturm_liouville(tag: BoundaryTag, resolution: int):
    """Legendre-Galerkin discretization of ``-phi'' = lam phi`` on (-1/2, 1/2).

    Returns eigenvalues and the coefficient rows of L2-orthonormal eigenfunctions.
    """
    n = resolution
    if tag.kind == "dirichlet":
        # P_j - P_{j+2} vanishes at t = +-1
        trial = np.zeros((n - 1, n + 1))
        idx = np.arange(n - 1)
        trial[idx, idx] = 1.0
        trial[idx, idx + 2] = -1.0
    else:
        trial = np.eye(n + 1)
    t, w = leg.leggauss(n + 2)
    w = 0.5 * w  # measure of y_hat
    vand = leg.legvander(t, n)
    val = vand @ trial.T
    dcoef = np.stack([leg.legder(row) for row in trial])
    dval = 2.0 * (leg.legvander(t, n - 1) @ dcoef.T)
    mass = val.T @ (w[:, None] * val)
    stiff = dval.T @ (w[:, None] * dval)
    if tag.kind == "robin":
        ends = leg.legvander(np.array([-1.0, 1.0]), n) @ trial.T
        stiff = stiff + (tag.rho / tag.nu_ref) * (ends.T @ ends)
    lam, vecs = gen_sym_eig(stiff, mass)
    return lam, vecs.T @ trial


def build_educated_basis(
    tag: BoundaryTag,
    m: int,
    quad: QuadratureGrid,
    resolution: int = 64,
) -> ModalBasis:
    """First ``m`` modes for the boundary tag, tabulated on ``quad``.

    Eigen-bases are sign-normalized so each mode is positive at the first
    transverse quadrature node; ``free`` returns Legendre polynomials as is.
    """
    if int(m) != m or m < 1:
        raise ConfigurationError("m must be a positive integer")
    m = int(m)
    if tag.kind == "free":
        coeffs = _normalized_legendre(m)
        eigenvalues = None
    else:
        if m > resolution // 2:
            raise ConfigurationError(
                f"m={m} exceeds what the auxiliary resolution {resolution} resolves"
            )
        try:
            lam, coeffs = _sturm_liouville(tag, resolution)
        except Exception as exc:  # pragma: no cover - eigensolver failures are rare
            raise BasisError(f"modal eigenproblem failed: {exc}") from exc
        eigenvalues, coeffs = lam[:m], coeffs[:m]
        first = leg.legval(2.0 * quad.transverse_nodes[0], coeffs.T)
        coeffs = coeffs * np.where(first < 0, -1.0, 1.0)[:, None]
    basis = ModalBasis(tag, coeffs, eigenvalues, np.empty(0), np.empty(0))
    values = basis.eval(quad.transverse_nodes)
    derivs = basis.deriv(quad.transverse_nodes)
    return ModalBasis(tag, coeffs, eigenvalues, values, derivs)

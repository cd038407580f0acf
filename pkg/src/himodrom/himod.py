"""HiMod spaces, tensor-quadrature assembly and affine containers.

A HiMod function is ``u(x, y) = sum_k sum_i u[k, i] theta_i(x) phi_k(psi_x(y))``
with coefficients stored mode-major (index ``k * N_h + i``). Integrals are
computed on the reference slab; physical gradients follow from the chain rule

    du/dx = du/dx_ref + du/dy_hat * dpsi/dx,   du/dy = du/dy_hat * dpsi/dy

and ``dOmega = dx dy_hat / (dpsi/dy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .bases1d import BoundaryTag, Fem1DSpace, ModalBasis, build_educated_basis, build_fem1d
from .errors import ConfigurationError, GeometryError
from .geometry import DomainMap, QuadratureGrid
from .linalg import SparseMatrix, restrict

__all__ = [
    "HiModSpace",
    "build_space",
    "Theta",
    "AffineSystem",
    "InnerProductMatrix",
    "bilinear",
    "linear",
    "inner_product",
    "evaluate_field",
    "evaluate_gradient",
    "free_dofs",
    "evaluate_thetas",
    "theta_matrix",
]


@dataclass(frozen=True)
class HiModSpace:
    """Scalar HiMod space: axial FE space x transverse modal basis."""

    fem: Fem1DSpace
    modal: ModalBasis
    dmap: DomainMap
    quad: QuadratureGrid

    @property
    def m(self) -> int:
        return self.modal.m

    @property
    def n_axial(self) -> int:
        return self.fem.n_dofs

    @property
    def dim(self) -> int:
        return self.m * self.fem.n_dofs

    def dof(self, mode, axial):
        return np.asarray(mode) * self.fem.n_dofs + np.asarray(axial)

    def axial_dofs(self, axial: np.ndarray) -> np.ndarray:
        """Indices of the given axial DOFs across all modes."""
        axial = np.atleast_1d(axial)
        return (np.arange(self.m)[:, None] * self.n_axial + axial[None, :]).ravel()

    def split(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficient vector reshaped to ``(m, N_h)``."""
        return np.asarray(coeffs).reshape(self.m, self.n_axial)


def build_space(
    dmap: DomainMap,
    quad: QuadratureGrid,
    degree: int,
    tag: BoundaryTag,
    m: int,
    resolution: int = 64,
) -> HiModSpace:
    if not np.isclose(dmap.length, quad.length):
        raise ConfigurationError("map length and quadrature length differ")
    fem = build_fem1d(dmap.length, quad.n_elements, degree, quad)
    modal = build_educated_basis(tag, m, quad, resolution=resolution)
    return HiModSpace(fem, modal, dmap, quad)


# ---------------------------------------------------------------------------
# geometric fields at the tensor quadrature nodes, shape (E, Q, R)
# ---------------------------------------------------------------------------

def _geometry_fields(dmap: DomainMap, quad: QuadratureGrid):
    x = quad.axial_nodes[:, :, None]
    yh = quad.transverse_nodes[None, None, :]
    shape = (quad.n_elements, quad.order_axial, quad.order_transverse)
    psi_x = np.broadcast_to(dmap.dpsi_dx(x, yh), shape)
    psi_y = np.broadcast_to(dmap.dpsi_dy(x), shape)
    if np.any(psi_y <= 0):
        raise GeometryError("map is not invertible at some quadrature node")
    jac = 1.0 / psi_y
    return psi_x, psi_y, jac


# each derivative of a HiMod function as a sum of (axial order, modal order, factor)
def _terms(op: str, psi_x, psi_y):
    if op == "v":
        return [(0, 0, 1.0)]
    if op == "x":
        return [(1, 0, 1.0), (0, 1, psi_x)]
    if op == "y":
        return [(0, 1, psi_y)]
    raise ValueError(f"unknown operator {op!r}")


def _axial(space: HiModSpace, order: int):
    return space.fem.derivs if order else space.fem.values


def _modal(space: HiModSpace, order: int):
    return space.modal.derivs if order else space.modal.values


def _block(test: HiModSpace, trial: HiModSpace, t_ax, t_md, s_ax, s_md, weight):
    quad = test.quad
    shape = (quad.n_elements, quad.order_axial, quad.order_transverse)
    weight = np.broadcast_to(weight, shape)
    wy = quad.transverse_weights
    trans = np.einsum("kr,lr,eqr->eqkl", _modal(test, t_md) * wy, _modal(trial, s_md), weight,
                      optimize=True)
    loc = np.einsum("eq,eqa,eqb,eqkl->eklab", quad.axial_weights, _axial(test, t_ax),
                    _axial(trial, s_ax), trans, optimize=True)
    rows = (np.arange(test.m)[None, :, None, None, None] * test.n_axial
            + test.fem.element_dofs[:, None, None, :, None])
    cols = (np.arange(trial.m)[None, None, :, None, None] * trial.n_axial
            + trial.fem.element_dofs[:, None, None, None, :])
    rows, cols = np.broadcast_arrays(rows, cols)
    rows = np.broadcast_to(rows, loc.shape)
    cols = np.broadcast_to(cols, loc.shape)
    return sp.coo_matrix((loc.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(test.dim, trial.dim)).tocsr()


def bilinear(test: HiModSpace, trial: HiModSpace, test_op: str, trial_op: str, coef=1.0):
    """Matrix of ``int_Omega coef * (D_test v) * (D_trial u) dOmega``.

    ``test_op`` / ``trial_op`` are ``"v"`` (value), ``"x"`` or ``"y"`` (physical
    partial derivative). ``coef`` is a scalar or an ``(E, Q, R)`` field.
    Rows index the test space, columns the trial space.
    """
    psi_x, psi_y, jac = _geometry_fields(test.dmap, test.quad)
    total = None
    for t_ax, t_md, t_c in _terms(test_op, psi_x, psi_y):
        for s_ax, s_md, s_c in _terms(trial_op, psi_x, psi_y):
            blk = _block(test, trial, t_ax, t_md, s_ax, s_md, coef * t_c * s_c * jac)
            total = blk if total is None else total + blk
    return total


def linear(test: HiModSpace, op: str = "v", coef=1.0) -> np.ndarray:
    """Vector of ``int_Omega coef * (D_op v) dOmega`` over the test basis."""
    psi_x, psi_y, jac = _geometry_fields(test.dmap, test.quad)
    quad = test.quad
    shape = (quad.n_elements, quad.order_axial, quad.order_transverse)
    out = np.zeros((test.m, test.n_axial))
    for ax, md, c in _terms(op, psi_x, psi_y):
        weight = np.broadcast_to(coef * c * jac, shape)
        trans = np.einsum("kr,eqr->eqk", _modal(test, md) * quad.transverse_weights, weight)
        loc = np.einsum("eq,eqa,eqk->eka", quad.axial_weights, _axial(test, ax), trans)
        for a in range(test.fem.degree + 1):
            np.add.at(out, (slice(None), test.fem.element_dofs[:, a]), loc[:, :, a].T)
    return out.ravel()


def lateral_mass(test: HiModSpace, trial: HiModSpace) -> sp.csr_matrix:
    """``int_{y_hat = +-1/2} u v dx`` with the flat reference-wall measure."""
    ends = np.array([-0.5, 0.5])
    phi_t = test.modal.eval(ends)
    phi_s = trial.modal.eval(ends)
    modes = phi_t @ phi_s.T
    axial = _axial_mass(test.fem, trial.fem, test.quad)
    return sp.kron(sp.csr_matrix(modes), axial, format="csr")


def lateral_load(test: HiModSpace) -> np.ndarray:
    """``int_{y_hat = +-1/2} v dx`` with the flat reference-wall measure."""
    ends = test.modal.eval(np.array([-0.5, 0.5])).sum(axis=1)
    axial = np.zeros(test.n_axial)
    wq = test.quad.axial_weights
    for a in range(test.fem.degree + 1):
        np.add.at(axial, test.fem.element_dofs[:, a], (wq * test.fem.values[:, :, a]).sum(axis=1))
    return np.kron(ends, axial)


def fiber_load(test: HiModSpace, axial_dof: int, x: float) -> np.ndarray:
    """``int_{gamma_x} v dy`` for the fiber through the Lagrange node ``axial_dof``."""
    quad = test.quad
    jac = 1.0 / test.dmap.dpsi_dy(np.full_like(quad.transverse_nodes, x))
    trans = test.modal.values @ (quad.transverse_weights * jac)
    out = np.zeros((test.m, test.n_axial))
    out[:, axial_dof] = trans
    return out.ravel()


def _axial_mass(test_fem: Fem1DSpace, trial_fem: Fem1DSpace, quad: QuadratureGrid):
    loc = np.einsum("eq,eqa,eqb->eab", quad.axial_weights, test_fem.values, trial_fem.values)
    rows = np.broadcast_to(test_fem.element_dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(trial_fem.element_dofs[:, None, :], loc.shape)
    return sp.coo_matrix((loc.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(test_fem.n_dofs, trial_fem.n_dofs)).tocsr()


# ---------------------------------------------------------------------------
# affine containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Theta:
    """Coefficient function ``theta(mu) = scale * mu[slot]`` (or ``scale`` if no slot)."""

    slot: int | None = None
    scale: float = 1.0

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.slot is None:
            return np.full(mu.shape[:-1], self.scale) if mu.ndim > 1 else self.scale
        return self.scale * mu[..., self.slot]


def evaluate_thetas(thetas: Sequence[Theta], mu) -> np.ndarray:
    """Stack of coefficient values: ``(Q,)`` for one mu, ``(M, Q)`` for a batch."""
    mu = np.asarray(mu, dtype=float)
    return np.stack([np.asarray(th(mu), dtype=float) * np.ones(mu.shape[:-1]) for th in thetas],
                    axis=-1)


def theta_matrix(thetas: Sequence[Theta], n_params: int):
    """``(W, c)`` with ``evaluate_thetas(thetas, mu) == mu @ W.T + c``."""
    w = np.zeros((len(thetas), n_params))
    c = np.zeros(len(thetas))
    for q, th in enumerate(thetas):
        if th.slot is None:
            c[q] = th.scale
        else:
            w[q, th.slot] = th.scale
    return w, c


def free_dofs(dim: int, constrained) -> np.ndarray:
    mask = np.ones(dim, dtype=bool)
    mask[np.asarray(constrained, dtype=int)] = False
    return np.flatnonzero(mask)


@dataclass
class AffineSystem:
    """``A(mu) = sum_q theta_a[q](mu) A_q`` and ``f(mu) = sum_q theta_f[q](mu) f_q``.

    Essential conditions are homogeneous: ``constrained`` DOFs are eliminated
    from every solve and stay zero in solutions.
    """

    blocks: list
    theta_a: list
    loads: list
    theta_f: list
    constrained: np.ndarray
    block_names: list = field(default_factory=list)
    load_names: list = field(default_factory=list)
    param_names: tuple = ()

    def __post_init__(self):
        self.constrained = np.asarray(self.constrained, dtype=int)
        self.free = free_dofs(self.dim, self.constrained)
        self._free_blocks = None

    @property
    def dim(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def theta_a_values(self, mu) -> np.ndarray:
        return evaluate_thetas(self.theta_a, mu)

    def theta_f_values(self, mu) -> np.ndarray:
        return evaluate_thetas(self.theta_f, mu)

    def matrix(self, mu) -> sp.csr_matrix:
        th = self.theta_a_values(mu)
        out = th[0] * self.blocks[0]
        for c, blk in zip(th[1:], self.blocks[1:]):
            out = out + c * blk
        return out.tocsr()

    def rhs(self, mu) -> np.ndarray:
        th = self.theta_f_values(mu)
        return np.tensordot(th, np.asarray(self.loads), axes=(0, 0))

    def free_blocks(self):
        """Blocks restricted to the free DOFs (cached, CSC)."""
        if self._free_blocks is None:
            self._free_blocks = [sp.csc_matrix(restrict(b, self.free)) for b in self.blocks]
        return self._free_blocks


class InnerProductMatrix:
    """SPD inner-product matrix with a factorization on the free DOFs.

    Vectors are full-length; constrained entries are ignored in
    :meth:`riesz` and returned as zero.
    """

    def __init__(self, matrix, tag: str, constrained=()):
        self.matrix = sp.csr_matrix(matrix)
        self.tag = tag
        self.constrained = np.asarray(constrained, dtype=int)
        self.free = free_dofs(self.dim, self.constrained)
        self._handle = SparseMatrix(restrict(self.matrix, self.free), symmetric=True)
        self._handle.factorize()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def with_constraints(self, constrained) -> "InnerProductMatrix":
        return InnerProductMatrix(self.matrix, self.tag, constrained)

    def inner(self, u, v):
        return u.T @ (self.matrix @ v)

    def norm(self, v) -> float:
        return float(np.sqrt(max(v @ (self.matrix @ v), 0.0)))

    def riesz(self, r: np.ndarray) -> np.ndarray:
        """Solve ``X z = r`` on the free DOFs (vector or matrix of columns)."""
        r = np.asarray(r, dtype=float)
        z = np.zeros_like(r)
        z[self.free] = self._handle.solve(r[self.free])
        return z

    def dual_norm(self, r: np.ndarray) -> float:
        z = self.riesz(r)
        return float(np.sqrt(max(r[self.free] @ z[self.free], 0.0)))


def inner_product(space: HiModSpace, tag: str = "H1", constrained=()) -> InnerProductMatrix:
    """H1 (``L2 + gradient``) or L2 Gram matrix of the HiMod basis."""
    if tag not in ("H1", "L2"):
        raise ConfigurationError(f"unknown norm tag {tag!r}")
    mat = bilinear(space, space, "v", "v")
    if tag == "H1":
        mat = mat + bilinear(space, space, "x", "x") + bilinear(space, space, "y", "y")
    mat = 0.5 * (mat + mat.T)
    return InnerProductMatrix(mat, tag, constrained)


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

def _check_points(space: HiModSpace, x, y):
    inside = space.dmap.contains(x, y, tol=1e-10)
    if not np.all(inside):
        bad = np.flatnonzero(~np.atleast_1d(inside))[0]
        raise GeometryError(f"point ({np.ravel(x)[bad]}, {np.ravel(y)[bad]}) is outside the domain")


def evaluate_field(space: HiModSpace, coeffs, points) -> np.ndarray:
    """Values of the HiMod function at physical ``points`` of shape ``(n, 2)``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    _check_points(space, x, y)
    theta, _ = space.fem.basis_at(x)
    phi = space.modal.eval(space.dmap.psi(x, y))  # (m, n)
    axial = theta @ space.split(coeffs).T  # (n, m)
    return np.einsum("nk,kn->n", axial, phi)


def evaluate_gradient(space: HiModSpace, coeffs, points) -> np.ndarray:
    """Physical gradient ``(n, 2)`` of the HiMod function at ``points``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    _check_points(space, x, y)
    yh = space.dmap.psi(x, y)
    theta, dtheta = space.fem.basis_at(x)
    phi = space.modal.eval(yh)
    dphi = space.modal.deriv(yh)
    c = space.split(coeffs)
    a, da = theta @ c.T, dtheta @ c.T
    px, py = space.dmap.dpsi_dx(x, yh), space.dmap.dpsi_dy(x)
    gx = np.einsum("nk,kn->n", da, phi) + np.einsum("nk,kn->n", a, dphi) * px
    gy = np.einsum("nk,kn->n", a, dphi) * py
    return np.stack([gx, gy], axis=1)


def solve_restricted(matrix, rhs: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Solve on the free DOFs and scatter back into a zero full-length vector."""
    handle = SparseMatrix(restrict(matrix, free))
    out = np.zeros(matrix.shape[0])
    out[free] = handle.solve(rhs[free])
    return out


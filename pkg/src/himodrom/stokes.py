"""HiMod discretization of the parametrized Stokes problem in strain-rate form.

Velocity: P2 axial elements times ``m_u`` Dirichlet-educated modes, used for
both components. Pressure: P1 axial elements times ``m_p`` Legendre modes,
with ``m_u = m_p + 2``. Parameters are ``mu = [nu, C_in, C_out, f_x, f_y]``.

The saddle system is ``[[nu A, B^T], [B, 0]] [u; p] = [F; 0]`` with
``A`` from ``int (grad u + grad u^T) : grad v``, ``B`` from ``int div(u) q``
and ``F(v) = int f.v + int_{in/out} C n.v`` (``C = -C_in`` at the inflow,
``C_out`` at the outflow).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .bases1d import dirichlet, free
from .errors import ConfigurationError, FormulationError, SolverError
from .geometry import DomainMap, build_quadrature, stokes_map
from .himod import (
    HiModSpace,
    InnerProductMatrix,
    Theta,
    bilinear,
    build_space,
    evaluate_thetas,
    fiber_load,
    free_dofs,
    inner_product,
    linear,
)
from .linalg import SparseMatrix, gen_sym_eig, restrict

__all__ = [
    "STOKES_PARAMS",
    "StokesSpace",
    "SaddleAffineSystem",
    "build_stokes_space",
    "reference_stokes_space",
    "assemble_stokes",
    "solve_stokes",
    "solve_supremizer",
    "velocity_inner_product",
    "pressure_inner_product",
    "infsup_himod",
    "infsup_reduced",
    "infsup_saddle_dense",
]

STOKES_PARAMS = ("nu", "C_in", "C_out", "f_x", "f_y")


@dataclass(frozen=True)
class StokesSpace:
    """Velocity (two components sharing one scalar space) and pressure spaces."""

    velocity: HiModSpace
    pressure: HiModSpace

    def __post_init__(self):
        if self.velocity.m != self.pressure.m + 2:
            raise ConfigurationError(
                f"velocity/pressure modes must satisfy m_u = m_p + 2 (got {self.velocity.m}, {self.pressure.m})"
            )

    @property
    def n_velocity(self) -> int:
        return 2 * self.velocity.dim

    @property
    def n_pressure(self) -> int:
        return self.pressure.dim

    @property
    def constrained(self) -> np.ndarray:
        """Transverse-velocity DOFs on the inflow and outflow fibers."""
        v = self.velocity
        ends = np.concatenate([v.fem.inflow_dofs, v.fem.outflow_dofs])
        return v.dim + v.axial_dofs(ends)


def build_stokes_space(
    dmap: DomainMap,
    n_elements: int,
    m_p: int,
    m_u: int | None = None,
    order_axial: int = 8,
    order_transverse: int = 64,
    enforce_pairing: bool = True,
) -> StokesSpace:
    """Taylor-Hood P2/P1 axial pair with ``m_u = m_p + 2`` transverse modes.

    ``enforce_pairing=False`` allows other mode counts (used to show what
    breaks when the compatibility rule is violated).
    """
    m_u = m_p + 2 if m_u is None else m_u
    quad = build_quadrature(n_elements, order_axial, order_transverse, dmap.length)
    vel = build_space(dmap, quad, 2, dirichlet(), m_u)
    pre = build_space(dmap, quad, 1, free(), m_p)
    if enforce_pairing:
        return StokesSpace(vel, pre)
    obj = object.__new__(StokesSpace)
    object.__setattr__(obj, "velocity", vel)
    object.__setattr__(obj, "pressure", pre)
    return obj


def reference_stokes_space(n_elements: int = 80, m_p: int = 5, length: float = 6.0,
                       height: float = 1.0, **kw) -> StokesSpace:
    return build_stokes_space(stokes_map(length, height), n_elements, m_p, **kw)


@dataclass
class SaddleAffineSystem:
    """``nu A`` velocity block, fixed divergence block ``B`` and affine loads."""

    space: StokesSpace
    blocks: list
    theta_a: list
    divergence: sp.csr_matrix
    loads: list
    theta_f: list
    constrained: np.ndarray
    param_names: tuple = STOKES_PARAMS
    load_names: list = field(default_factory=list)

    def __post_init__(self):
        self.free = free_dofs(self.n_velocity, self.constrained)
        self._free = None

    @property
    def n_velocity(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def n_pressure(self) -> int:
        return self.divergence.shape[0]

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def theta_a_values(self, mu):
        return evaluate_thetas(self.theta_a, mu)

    def theta_f_values(self, mu):
        return evaluate_thetas(self.theta_f, mu)

    def velocity_matrix(self, mu):
        th = self.theta_a_values(mu)
        out = th[0] * self.blocks[0]
        for c, blk in zip(th[1:], self.blocks[1:]):
            out = out + c * blk
        return out.tocsr()

    def rhs(self, mu) -> np.ndarray:
        return np.tensordot(self.theta_f_values(mu), np.asarray(self.loads), axes=(0, 0))

    def free_parts(self):
        """Velocity blocks and ``B`` restricted to free velocity DOFs."""
        if self._free is None:
            blocks = [sp.csc_matrix(restrict(b, self.free)) for b in self.blocks]
            div = sp.csc_matrix(sp.csr_matrix(self.divergence)[:, self.free])
            self._free = (blocks, div)
        return self._free

    def saddle_matrix(self, mu) -> sp.csc_matrix:
        """Full saddle matrix on the free DOFs."""
        blocks, div = self.free_parts()
        th = self.theta_a_values(mu)
        a = th[0] * blocks[0]
        for c, blk in zip(th[1:], blocks[1:]):
            a = a + c * blk
        return sp.bmat([[a, div.T], [div, None]], format="csc")


def assemble_stokes(space: StokesSpace, nu_slot: int = 0) -> SaddleAffineSystem:
    """Assemble the affine saddle system; loads ordered ``(f_x, f_y, C_in, C_out)``."""
    v, q = space.velocity, space.pressure
    xx = bilinear(v, v, "x", "x")
    yy = bilinear(v, v, "y", "y")
    a_xx = 2.0 * xx + yy
    a_yy = xx + 2.0 * yy
    a_xy = bilinear(v, v, "y", "x")  # test v_x, trial u_y: int du_y/dx dv_x/dy
    a_yx = bilinear(v, v, "x", "y")
    a = sp.bmat([[a_xx, a_xy], [a_yx, a_yy]], format="csr")
    a = 0.5 * (a + a.T)
    b = sp.hstack([bilinear(q, v, "v", "x"), bilinear(q, v, "v", "y")], format="csr")

    zero = np.zeros(v.dim)
    body = linear(v, "v")
    inflow = fiber_load(v, v.fem.inflow_dofs[0], 0.0)
    outflow = fiber_load(v, v.fem.outflow_dofs[0], v.dmap.length)
    loads = [
        np.concatenate([body, zero]),
        np.concatenate([zero, body]),
        np.concatenate([inflow, zero]),  # C = -C_in, n = (-1, 0)
        np.concatenate([outflow, zero]),  # C = C_out, n = (1, 0)
    ]
    names = STOKES_PARAMS
    return SaddleAffineSystem(
        space=space,
        blocks=[a],
        theta_a=[Theta(slot=nu_slot)],
        divergence=b,
        loads=loads,
        theta_f=[Theta(slot=names.index(n)) for n in ("f_x", "f_y", "C_in", "C_out")],
        constrained=space.constrained,
        load_names=["f_x", "f_y", "C_in", "C_out"],
    )


def solve_stokes(affine: SaddleAffineSystem, mu):
    """HiMod velocity (``[u_x; u_y]``, mode-major) and pressure coefficients."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (affine.n_params,):
        raise ConfigurationError(f"expected {affine.n_params} parameters, got {mu.shape}")
    mat = affine.saddle_matrix(mu)
    f = affine.rhs(mu)
    rhs = np.concatenate([f[affine.free], np.zeros(affine.n_pressure)])
    try:
        sol = SparseMatrix(mat).solve(rhs)
    except SolverError as exc:
        raise SolverError(f"Stokes saddle solve failed at mu={mu.tolist()}: {exc}") from exc
    u = np.zeros(affine.n_velocity)
    u[affine.free] = sol[: affine.free.size]
    return u, sol[affine.free.size:]


def velocity_inner_product(space: StokesSpace, tag: str = "H1") -> InnerProductMatrix:
    """Block-diagonal inner product for the two velocity components."""
    scalar = inner_product(space.velocity, tag).matrix
    return InnerProductMatrix(sp.block_diag([scalar, scalar], format="csr"), tag, space.constrained)


def pressure_inner_product(space: StokesSpace, tag: str = "L2") -> InnerProductMatrix:
    return inner_product(space.pressure, tag)


def solve_supremizer(x_u: InnerProductMatrix, divergence, pressure: np.ndarray) -> np.ndarray:
    """Velocity ``s`` with ``X_u s = B^T p`` on the free velocity DOFs."""
    rhs = divergence.T @ np.asarray(pressure, dtype=float)
    return x_u.riesz(rhs)


def _beta_from_schur(schur: np.ndarray, x_p: np.ndarray) -> float:
    lam, _ = gen_sym_eig(schur, x_p, k=1)
    lam1 = float(lam[0])
    scale = max(np.abs(np.diag(schur)).max(), 1e-300) / max(np.abs(np.diag(x_p)).max(), 1e-300)
    if lam1 < -1e-10 * scale:
        raise FormulationError(f"negative inf-sup eigenvalue {lam1:.3e}")
    if lam1 < 1e-14 * scale:  # roundoff floor of a singular pencil
        return 0.0
    return float(np.sqrt(lam1))


def infsup_himod(affine: SaddleAffineSystem, x_u: InnerProductMatrix, x_p: InnerProductMatrix,
                 mu=None) -> float:
    """HiMod inf-sup constant from ``B X_u^{-1} B^T q = lam X_p q``.

    ``B`` does not depend on the parameter here; ``mu`` is accepted for
    interface symmetry.
    """
    b = sp.csr_matrix(affine.divergence)
    z = x_u.riesz(b.T.toarray())  # (n_velocity, n_pressure)
    schur = b @ z
    return _beta_from_schur(np.asarray(schur), x_p.matrix.toarray())


def infsup_reduced(b_n: np.ndarray, x_un: np.ndarray, x_pn: np.ndarray) -> float:
    """Reduced inf-sup constant ``sqrt(lam_min)`` of ``B_N X_uN^{-1} B_N^T q = lam X_pN q``."""
    b_n = np.atleast_2d(b_n)
    schur = b_n @ np.linalg.solve(x_un, b_n.T)
    return _beta_from_schur(0.5 * (schur + schur.T), x_pn)


def infsup_saddle_dense(x_u: np.ndarray, b: np.ndarray, x_p: np.ndarray) -> float:
    """Inf-sup constant from the full indefinite generalized eigenproblem.

    ``[[X_u, B^T], [B, 0]] w = -lam [[0, 0], [0, X_p]] w``; the smallest
    finite eigenvalue is returned as ``sqrt(lam)``. Dense, small cases only.
    """
    import scipy.linalg as sla

    nv, npr = x_u.shape[0], x_p.shape[0]
    lhs = np.block([[x_u, b.T], [b, np.zeros((npr, npr))]])
    rhs = np.zeros_like(lhs)
    rhs[nv:, nv:] = -x_p
    vals = sla.eig(lhs, rhs, right=False, homogeneous_eigvals=True)
    alpha, beta = vals
    finite = np.abs(beta) > 1e-12 * np.abs(alpha).max()
    lam = np.real(alpha[finite] / beta[finite])
    return float(np.sqrt(max(lam.min(), 0.0)))

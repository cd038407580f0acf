"""Galerkin projection onto reduced bases and online queries.

Parameter-independent reduced blocks are computed once; a query only
combines them with the coefficient functions and solves a dense system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .himod import AffineSystem, evaluate_thetas, theta_matrix
from .linalg import dense_solve
from .pod import ReducedBasis

__all__ = [
    "ReducedSystem",
    "ReducedSaddleSystem",
    "project_system",
    "project_stokes",
    "rom_query",
    "rom_query_stokes",
    "enriched_velocity_basis",
]


@dataclass
class ReducedSystem:
    """``A_N(mu) = sum_q theta_q(mu) A_Nq``, ``f_N(mu) = sum_q theta_q(mu) f_Nq``."""

    a_blocks: np.ndarray  # (Qa, N, N)
    f_blocks: np.ndarray  # (Qf, N)
    theta_a: list
    theta_f: list
    basis: ReducedBasis

    @property
    def n(self) -> int:
        return self.a_blocks.shape[1]

    def matrix(self, mu) -> np.ndarray:
        """Reduced matrix for one ``mu`` or a stack for ``mu`` of shape ``(M, P)``."""
        return np.tensordot(evaluate_thetas(self.theta_a, mu), self.a_blocks, axes=(-1, 0))

    def rhs(self, mu) -> np.ndarray:
        return np.tensordot(evaluate_thetas(self.theta_f, mu), self.f_blocks, axes=(-1, 0))

    def _compile(self):
        p = max([th.slot for th in self.theta_a + self.theta_f if th.slot is not None], default=-1) + 1
        self._wa, self._ca = theta_matrix(self.theta_a, p)
        self._wf, self._cf = theta_matrix(self.theta_f, p)
        self._a_flat = self.a_blocks.reshape(self.a_blocks.shape[0], -1)

    def solve(self, mu) -> np.ndarray:
        """Reduced coefficients for a single ``mu`` (lean path for timing-sensitive queries)."""
        if not hasattr(self, "_a_flat"):
            self._compile()
        mu = np.asarray(mu, dtype=float)
        n = self.a_blocks.shape[1]
        mat = ((self._wa @ mu + self._ca) @ self._a_flat).reshape(n, n)
        return dense_solve(mat, (self._wf @ mu + self._cf) @ self.f_blocks)

    def truncated(self, n: int) -> "ReducedSystem":
        """Restriction to the first ``n`` basis functions (nested bases)."""
        return ReducedSystem(self.a_blocks[:, :n, :n].copy(), self.f_blocks[:, :n].copy(),
                             self.theta_a, self.theta_f, self.basis.truncated(n))


def project_system(affine: AffineSystem, basis: ReducedBasis) -> ReducedSystem:
    """Project every affine term of a scalar HiMod system."""
    phi = basis.matrix
    if phi.shape[0] != affine.dim:
        raise ConfigurationError(f"basis rows {phi.shape[0]} do not match system size {affine.dim}")
    if basis.role not in ("state",):
        raise ConfigurationError(f"cannot project a scalar system on a {basis.role!r} basis")
    a_n = np.stack([phi.T @ (blk @ phi) for blk in affine.blocks])
    f_n = np.stack([phi.T @ f for f in affine.loads])
    return ReducedSystem(a_n, f_n, list(affine.theta_a), list(affine.theta_f), basis)


def rom_query(reduced: ReducedSystem, mu):
    """Reduced coefficients and the lifted HiMod-coordinate vector."""
    coeffs = reduced.solve(mu)
    return coeffs, reduced.basis.matrix @ coeffs


def enriched_velocity_basis(velocity: ReducedBasis, supremizer: ReducedBasis) -> ReducedBasis:
    """``[velocity, supremizer]`` column concatenation."""
    if velocity.role != "velocity" or supremizer.role != "supremizer":
        raise ConfigurationError("expected velocity and supremizer bases")
    return ReducedBasis(np.hstack([velocity.matrix, supremizer.matrix]), "enriched-velocity",
                        velocity.norm)


@dataclass
class ReducedSaddleSystem:
    """Reduced Stokes operator with blocks on the enriched velocity space."""

    a_blocks: np.ndarray  # (Qa, Nv, Nv)
    divergence: np.ndarray  # (Np, Nv)
    f_blocks: np.ndarray  # (Qf, Nv)
    theta_a: list
    theta_f: list
    velocity: ReducedBasis
    pressure: ReducedBasis
    x_u: np.ndarray  # reduced velocity inner product
    x_p: np.ndarray  # reduced pressure inner product

    @property
    def n_velocity(self) -> int:
        return self.a_blocks.shape[1]

    @property
    def n_pressure(self) -> int:
        return self.divergence.shape[0]

    def matrix(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        a = np.tensordot(evaluate_thetas(self.theta_a, mu), self.a_blocks, axes=(-1, 0))
        nv, npr = self.n_velocity, self.n_pressure
        out = np.zeros(mu.shape[:-1] + (nv + npr, nv + npr))
        out[..., :nv, :nv] = a
        out[..., :nv, nv:] = self.divergence.T
        out[..., nv:, :nv] = self.divergence
        return out

    def solve(self, mu) -> np.ndarray:
        """Stacked ``[velocity; pressure]`` reduced coefficients for a single ``mu``."""
        if not hasattr(self, "_template"):
            p = max([th.slot for th in self.theta_a + self.theta_f if th.slot is not None], default=-1) + 1
            self._wa, self._ca = theta_matrix(self.theta_a, p)
            self._wf, self._cf = theta_matrix(self.theta_f, p)
            nv, npr = self.n_velocity, self.n_pressure
            self._template = np.zeros((nv + npr, nv + npr))
            self._template[:nv, nv:] = self.divergence.T
            self._template[nv:, :nv] = self.divergence
            self._a_flat = self.a_blocks.reshape(self.a_blocks.shape[0], -1)
        mu = np.asarray(mu, dtype=float)
        nv = self.n_velocity
        mat = self._template.copy()
        mat[:nv, :nv] += ((self._wa @ mu + self._ca) @ self._a_flat).reshape(nv, nv)
        rhs = np.zeros(mat.shape[0])
        rhs[:nv] = (self._wf @ mu + self._cf) @ self.f_blocks
        return dense_solve(mat, rhs)

    def rhs(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        f = np.tensordot(evaluate_thetas(self.theta_f, mu), self.f_blocks, axes=(-1, 0))
        pad = np.zeros(mu.shape[:-1] + (self.n_pressure,))
        return np.concatenate([f, pad], axis=-1)


def project_stokes(affine, velocity: ReducedBasis, pressure: ReducedBasis, x_u, x_p) -> ReducedSaddleSystem:
    """Project the saddle system on ``velocity`` (typically ``[Upsilon, Xi]``) and ``pressure``.

    ``x_u``/``x_p`` are the HiMod inner products, projected for the reduced
    inf-sup computation.
    """
    phi, pi = velocity.matrix, pressure.matrix
    if phi.shape[0] != affine.n_velocity or pi.shape[0] != affine.n_pressure:
        raise ConfigurationError("basis sizes do not match the saddle system")
    if pressure.role != "pressure":
        raise ConfigurationError("second basis must carry the pressure role")
    a_n = np.stack([phi.T @ (blk @ phi) for blk in affine.blocks])
    b_n = pi.T @ (affine.divergence @ phi)
    f_n = np.stack([phi.T @ f for f in affine.loads])
    xu_n = phi.T @ (x_u.matrix @ phi)
    xp_n = pi.T @ (x_p.matrix @ pi)
    return ReducedSaddleSystem(a_n, np.asarray(b_n), f_n, list(affine.theta_a), list(affine.theta_f),
                               velocity, pressure, xu_n, xp_n)


def rom_query_stokes(reduced: ReducedSaddleSystem, mu):
    """Reduced velocity/pressure coefficients and their HiMod lifts."""
    sol = reduced.solve(mu)
    nv = reduced.n_velocity
    uc, pc = sol[:nv], sol[nv:]
    return (uc, pc), (reduced.velocity.matrix @ uc, reduced.pressure.matrix @ pc)

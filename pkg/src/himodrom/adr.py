"""HiMod discretization of the parametrized advection-diffusion-reaction problem.

    -div(nu grad u) + b . grad u + sigma u = f   in Omega
    u = 0                                        on the inflow fiber x = 0
    nu du/dn = h                                 on the outflow fiber x = L
    nu du/dn + rho u = l                         on the lateral walls

Parameters are laid out as ``mu = [nu, b_x, b_y, sigma]``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bases1d import robin
from .errors import ConfigurationError, SolverError
from .geometry import DomainMap, QuadratureGrid, adr_map, build_quadrature
from .himod import (
    AffineSystem,
    HiModSpace,
    Theta,
    bilinear,
    build_space,
    fiber_load,
    lateral_load,
    lateral_mass,
    linear,
)
from .linalg import SparseMatrix

__all__ = [
    "Ellipse",
    "AdrProblemSpec",
    "reference_adr_spec",
    "reference_adr_space",
    "assemble_adr",
    "assemble_adr_direct",
    "solve_himod",
    "ellipse_load",
    "ADR_PARAMS",
]

ADR_PARAMS = ("nu", "b_x", "b_y", "sigma")


@dataclass(frozen=True)
class Ellipse:
    """Weighted indicator of ``{a_x (x - c_x)^2 + a_y (y - c_y)^2 < r}``."""

    center_x: float
    center_y: float
    coef_x: float
    coef_y: float
    radius: float
    weight: float

    @property
    def half_x(self) -> float:
        return float(np.sqrt(self.radius / self.coef_x))

    @property
    def half_y(self) -> float:
        return float(np.sqrt(self.radius / self.coef_y))

    def indicator(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = self.coef_x * (x - self.center_x) ** 2 + self.coef_y * (y - self.center_y) ** 2 < self.radius
        return self.weight * inside


@dataclass(frozen=True)
class AdrProblemSpec:
    """Data of the ADR problem.

    ``nu``, ``b_x``, ``b_y`` and ``sigma`` are either a float (fixed) or the
    string ``"param"`` (read from the matching slot of ``mu``).
    """

    nu: float | str = "param"
    b_x: float | str = "param"
    b_y: float | str = "param"
    sigma: float | str = "param"
    rho: float = 1.0
    forcing: tuple = ()
    forcing_constant: float = 0.0
    inflow_g: float = 0.0
    outflow_h: float = 0.0
    lateral_l: float = 0.0

    def __post_init__(self):
        for name in ADR_PARAMS:
            val = getattr(self, name)
            if isinstance(val, str) and val != "param":
                raise ConfigurationError(f"{name} must be a number or 'param'")
        if self.rho < 0:
            raise ConfigurationError("rho must be non-negative")
        if not isinstance(self.nu, str) and self.nu <= 0:
            raise ConfigurationError("nu must be positive")
        if not isinstance(self.sigma, str) and self.sigma < 0:
            raise ConfigurationError("sigma must be non-negative")
        if self.inflow_g != 0.0:
            raise ConfigurationError("only homogeneous inflow data is supported")

    def theta(self, name: str) -> Theta:
        val = getattr(self, name)
        if isinstance(val, str):
            return Theta(slot=ADR_PARAMS.index(name))
        return Theta(scale=float(val))


def reference_adr_spec() -> AdrProblemSpec:
    """Test data: two ellipses with weights +-1.8, rho = 1, g = h = l = 0."""
    ellipses = (
        Ellipse(0.75, 0.0, 0.5, 0.4, 0.02, 1.8),
        Ellipse(1.5, 0.0, 0.5, 0.4, 0.02, -1.8),
    )
    return AdrProblemSpec(rho=1.0, forcing=ellipses)


def reference_adr_space(
    m: int = 8,
    n_elements: int = 80,
    length: float = 4.0,
    amplitude: float = 0.2,
    nu_ref: float = 5.0,
    rho: float = 1.0,
    order_axial: int = 8,
    order_transverse: int = 64,
    dmap: DomainMap | None = None,
) -> HiModSpace:
    """P1 axial elements with a Robin-educated modal basis frozen at ``nu_ref``."""
    dmap = adr_map(length, amplitude) if dmap is None else dmap
    quad = build_quadrature(n_elements, order_axial, order_transverse, dmap.length)
    return build_space(dmap, quad, 1, robin(nu_ref, rho), m)


def ellipse_load(space: HiModSpace, ellipse: Ellipse, n_points: int = 16) -> np.ndarray:
    """``int_Omega chi_ellipse v dOmega`` for every HiMod basis function.

    The axial variable is parametrized as ``x = c_x + half_x sin(t)`` so the
    square-root behaviour at the ellipse tips disappears; the transverse
    integral uses exact antiderivatives of the modes (the map is affine in y).
    """
    fem, dmap = space.fem, space.dmap
    out = np.zeros((space.m, space.n_axial))
    ax, by = ellipse.half_x, ellipse.half_y
    lo_x, hi_x = ellipse.center_x - ax, ellipse.center_x + ax
    tg, wg = np.polynomial.legendre.leggauss(n_points)
    for e in range(fem.n_elements):
        a, b = max(fem.edges[e], lo_x, 0.0), min(fem.edges[e + 1], hi_x, dmap.length)
        if b <= a:
            continue
        t0 = np.arcsin(np.clip((a - ellipse.center_x) / ax, -1.0, 1.0))
        t1 = np.arcsin(np.clip((b - ellipse.center_x) / ax, -1.0, 1.0))
        t = 0.5 * (t1 - t0) * tg + 0.5 * (t0 + t1)
        wt = 0.5 * (t1 - t0) * wg
        x = ellipse.center_x + ax * np.sin(t)
        half = by * np.cos(t)
        y_lo = dmap.psi(x, ellipse.center_y - half)
        y_hi = dmap.psi(x, ellipse.center_y + half)
        y_lo, y_hi = np.clip(y_lo, -0.5, 0.5), np.clip(y_hi, -0.5, 0.5)
        trans = (space.modal.antiderivative(y_hi) - space.modal.antiderivative(y_lo)) / dmap.dpsi_dy(x)
        theta, _ = fem.basis_at(x)
        dofs = fem.element_dofs[e]
        jac = ax * np.cos(t) * wt
        out[:, dofs] += (trans * jac) @ theta[:, dofs]
    return ellipse.weight * out.ravel()


def _load_terms(space: HiModSpace, spec: AdrProblemSpec):
    load = np.zeros(space.dim)
    for ell in spec.forcing:
        load += ellipse_load(space, ell)
    if spec.forcing_constant:
        load += spec.forcing_constant * linear(space, "v")
    if spec.outflow_h:
        last = space.fem.outflow_dofs[0]
        load += spec.outflow_h * fiber_load(space, last, space.dmap.length)
    if spec.lateral_l:
        load += spec.lateral_l * lateral_load(space)
    return load


def assemble_adr(space: HiModSpace, spec: AdrProblemSpec) -> AffineSystem:
    """Affine HiMod system with blocks (diffusion, adv-x, adv-y, reaction, Robin)."""
    if space.fem.degree not in (1, 2):
        raise ConfigurationError("unsupported axial degree")
    blocks = [
        bilinear(space, space, "x", "x") + bilinear(space, space, "y", "y"),
        bilinear(space, space, "v", "x"),
        bilinear(space, space, "v", "y"),
        bilinear(space, space, "v", "v"),
        lateral_mass(space, space),
    ]
    thetas = [spec.theta(n) for n in ADR_PARAMS] + [Theta(scale=spec.rho)]
    constrained = space.axial_dofs(space.fem.inflow_dofs)
    return AffineSystem(
        blocks=blocks,
        theta_a=thetas,
        loads=[_load_terms(space, spec)],
        theta_f=[Theta(scale=1.0)],
        constrained=constrained,
        block_names=["diffusion", "advection_x", "advection_y", "reaction", "robin"],
        load_names=["forcing"],
        param_names=ADR_PARAMS,
    )


def assemble_adr_direct(space: HiModSpace, spec: AdrProblemSpec, mu):
    """Assemble ``A(mu)`` in one pass with the coefficients inside the integrand."""
    mu = np.asarray(mu, dtype=float)
    nu, bx, by, sigma = (float(spec.theta(n)(mu)) for n in ADR_PARAMS)
    return (
        bilinear(space, space, "x", "x", nu)
        + bilinear(space, space, "y", "y", nu)
        + bilinear(space, space, "v", "x", bx)
        + bilinear(space, space, "v", "y", by)
        + bilinear(space, space, "v", "v", sigma)
        + spec.rho * lateral_mass(space, space)
    )


def _check_mu(affine: AffineSystem, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (affine.n_params,):
        raise ConfigurationError(f"expected {affine.n_params} parameters, got shape {mu.shape}")
    return mu


def solve_himod(affine: AffineSystem, mu) -> np.ndarray:
    """HiMod coefficients (mode-major) for one parameter value."""
    mu = _check_mu(affine, mu)
    th = affine.theta_a_values(mu)
    blocks = affine.free_blocks()
    mat = th[0] * blocks[0]
    for c, blk in zip(th[1:], blocks[1:]):
        mat = mat + c * blk
    rhs = affine.rhs(mu)
    out = np.zeros(affine.dim)
    try:
        out[affine.free] = SparseMatrix(mat).solve(rhs[affine.free])
    except SolverError as exc:
        raise SolverError(f"HiMod solve failed at mu={mu.tolist()}: {exc}") from exc
    return out


def timed_solve(affine: AffineSystem, mu):
    t0 = time.perf_counter()
    u = solve_himod(affine, mu)
    return u, time.perf_counter() - t0

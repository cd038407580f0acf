"""Independent reference computations used by the test-suite.

These deliberately avoid the block-assembly code path: fields are evaluated
pointwise through the public evaluation routines on a refined quadrature
grid, and residuals are integrated directly against each test function.
"""

from __future__ import annotations

import numpy as np

from himodrom.geometry import map_eval
from himodrom.himod import HiModSpace, evaluate_field, evaluate_gradient


def _refined_points(space: HiModSpace, factor: int = 2):
    quad = space.quad.refined(factor)
    x = quad.axial_nodes  # (E, Q)
    yh = quad.transverse_nodes  # (R,)
    return quad, x, yh


def _physical(space: HiModSpace, x, yh):
    """Physical coordinates and map derivatives, one map_eval call per point."""
    ev = np.vectorize(lambda a, b: map_eval(space.dmap, a, b))
    yp, px, py = ev(x[..., None], yh[None, None, :])
    return yp, px, py


def _test_functions(space: HiModSpace, quad, x, yh, px, py):
    """Values and physical gradients of all test functions at refined points.

    Returns arrays indexed ``[e, q, r, a, k]`` together with the global row
    index ``[e, a, k]``.
    """
    fem = space.fem
    E, Q = x.shape
    theta = np.zeros((E, Q, fem.degree + 1))
    dtheta = np.zeros_like(theta)
    for e in range(E):
        vals, ders = fem.basis_at(x[e])
        theta[e] = vals[:, fem.element_dofs[e]]
        dtheta[e] = ders[:, fem.element_dofs[e]]
    phi = space.modal.eval(yh).T  # (R, m)
    dphi = space.modal.deriv(yh).T
    v = theta[:, :, None, :, None] * phi[None, None, :, None, :]
    vx = (dtheta[:, :, None, :, None] * phi[None, None, :, None, :]
          + theta[:, :, None, :, None] * dphi[None, None, :, None, :] * px[..., None, None])
    vy = theta[:, :, None, :, None] * dphi[None, None, :, None, :] * py[..., None, None]
    rows = (np.arange(space.m)[None, None, :] * space.n_axial
            + fem.element_dofs[:, :, None])
    return v, vx, vy, rows


def adr_galerkin_residual(space: HiModSpace, spec, mu, u, factor: int = 2) -> np.ndarray:
    """``F(v) - a(u, v)`` for every HiMod test function, refined quadrature."""
    nu, bx, by, sigma = (float(spec.theta(n)(np.asarray(mu, float))) for n in ("nu", "b_x", "b_y", "sigma"))
    quad, x, yh = _refined_points(space, factor)
    yp, px, py = _physical(space, x, yh)
    pts = np.stack([np.broadcast_to(x[..., None], yp.shape).ravel(), yp.ravel()], axis=1)
    uval = evaluate_field(space, u, pts).reshape(yp.shape)
    grad = evaluate_gradient(space, u, pts).reshape(yp.shape + (2,))
    v, vx, vy, rows = _test_functions(space, quad, x, yh, px, py)
    w = quad.axial_weights[:, :, None] * quad.transverse_weights[None, None, :] / py
    integrand = (nu * (grad[..., 0, None, None] * vx + grad[..., 1, None, None] * vy)
                 + (bx * grad[..., 0] + by * grad[..., 1] + sigma * uval)[..., None, None] * v)
    loc = np.einsum("eqr,eqrak->eak", w, integrand)
    res = np.zeros(space.dim)
    np.add.at(res, rows.ravel(), -loc.ravel())

    # Robin term on the reference walls, flat measure
    for side in (-0.5, 0.5):
        xs = x.ravel()
        ys = space.dmap.inverse(xs, side)
        us = evaluate_field(space, u, np.stack([xs, ys], axis=1)).reshape(x.shape)
        theta = np.stack([space.fem.basis_at(x[e])[0][:, space.fem.element_dofs[e]] for e in range(x.shape[0])])
        phis = space.modal.eval(np.array(side))
        loc = np.einsum("eq,eq,eqa,k->eak", quad.axial_weights, us, theta, phis)
        np.add.at(res, rows.ravel(), -spec.rho * loc.ravel())

    res += sum((ellipse_load_oracle(space, ell) for ell in spec.forcing), np.zeros(space.dim))
    return res


def ellipse_load_oracle(space: HiModSpace, ellipse, n_t: int = 32, n_y: int = 48) -> np.ndarray:
    """Ellipse load by nested Gauss quadrature of pointwise mode values."""
    fem, dmap = space.fem, space.dmap
    out = np.zeros((space.m, space.n_axial))
    tg, wg = np.polynomial.legendre.leggauss(n_t)
    sg, sw = np.polynomial.legendre.leggauss(n_y)
    ax, by = ellipse.half_x, ellipse.half_y
    for e in range(fem.n_elements):
        a = max(fem.edges[e], ellipse.center_x - ax)
        b = min(fem.edges[e + 1], ellipse.center_x + ax)
        if b <= a:
            continue
        t0 = np.arcsin((a - ellipse.center_x) / ax)
        t1 = np.arcsin((b - ellipse.center_x) / ax)
        for tk, wk in zip(0.5 * (t1 - t0) * tg + 0.5 * (t0 + t1), 0.5 * (t1 - t0) * wg):
            xk = ellipse.center_x + ax * np.sin(tk)
            half = by * np.cos(tk)
            # integrate directly in the physical transverse variable
            ylo, yhi = dmap.bounds(xk)
            lo = max(ellipse.center_y - half, float(ylo))
            hi = min(ellipse.center_y + half, float(yhi))
            if hi <= lo:
                continue
            ys = 0.5 * (hi - lo) * sg + 0.5 * (hi + lo)
            trans = space.modal.eval(dmap.psi(xk, ys)) @ (0.5 * (hi - lo) * sw)
            theta, _ = fem.basis_at(np.array([xk]))
            out += np.outer(trans, theta[0]) * ax * np.cos(tk) * wk
    return ellipse.weight * out.ravel()


def stokes_galerkin_residual(sspace, mu, u, p, factor: int = 2):
    """Momentum and continuity residuals of the Stokes HiMod solution.

    Returns ``(momentum, continuity)`` full-length vectors; entries at
    constrained velocity DOFs are zeroed since those tests are excluded.
    """
    nu, c_in, c_out, fx, fy = np.asarray(mu, dtype=float)
    vs, ps = sspace.velocity, sspace.pressure
    quad, x, yh = _refined_points(vs, factor)
    yp, px, py = _physical(vs, x, yh)
    pts = np.stack([np.broadcast_to(x[..., None], yp.shape).ravel(), yp.ravel()], axis=1)
    n = vs.dim
    ux, uy = u[:n], u[n:]
    gux = evaluate_gradient(vs, ux, pts).reshape(yp.shape + (2,))
    guy = evaluate_gradient(vs, uy, pts).reshape(yp.shape + (2,))
    pval = evaluate_field(ps, p, pts).reshape(yp.shape)
    w = quad.axial_weights[:, :, None] * quad.transverse_weights[None, None, :] / py
    v, vx, vy, rows = _test_functions(vs, quad, x, yh, px, py)
    # 2 nu D(u) : grad v, split by test component
    sxx = 2.0 * gux[..., 0]
    sxy = gux[..., 1] + guy[..., 0]
    syy = 2.0 * guy[..., 1]
    div = gux[..., 0] + guy[..., 1]

    def integrate(expr):
        out = np.zeros(n)
        np.add.at(out, rows.ravel(), np.einsum("eqr,eqrak->eak", w, expr).ravel())
        return out

    mom_x = integrate(nu * (sxx[..., None, None] * vx + sxy[..., None, None] * vy)
                      + pval[..., None, None] * vx - fx * v)
    mom_y = integrate(nu * (sxy[..., None, None] * vx + syy[..., None, None] * vy)
                      + pval[..., None, None] * vy - fy * v)
    # boundary functional int C n.v on the in/out fibers
    for xb, cval in ((0.0, c_in), (vs.dmap.length, c_out)):
        sg, sw = np.polynomial.legendre.leggauss(48)
        ylo, yhi = vs.dmap.bounds(xb)
        ys = 0.5 * (yhi - ylo) * sg + 0.5 * (yhi + ylo)
        trans = vs.modal.eval(vs.dmap.psi(xb, ys)) @ (0.5 * (yhi - ylo) * sw)
        theta, _ = vs.fem.basis_at(np.array([xb]))
        mom_x -= cval * np.kron(trans, theta[0])
    momentum = -np.concatenate([mom_x, mom_y])

    q_v, _, _, q_rows = _test_functions(ps, quad, x, yh, px, py)
    cont = np.zeros(ps.dim)
    np.add.at(cont, q_rows.ravel(), np.einsum("eqr,eqrak->eak", w, div[..., None, None] * q_v).ravel())
    momentum[sspace.constrained] = 0.0
    return momentum, cont

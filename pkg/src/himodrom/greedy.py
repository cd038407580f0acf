"""HiRB offline phase: residual estimator and greedy basis construction.

The residual ``r(mu) = sum_q theta^f_q f_q - sum_q theta^a_q A_q Phi c`` is a
linear combination of fixed vectors with coefficients that depend on ``mu``
and the reduced solution. Their Riesz representers are kept in an
X-orthonormal factorization ``Z = Q R`` so the dual norm is ``||R g||_2``.
This is algebraically the usual quadratic form in precomputed Gram blocks,
but it does not lose digits to cancellation when the residual is tiny.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisError, ConfigurationError, HiModError
from .himod import InnerProductMatrix, evaluate_thetas, theta_matrix
from .pod import ReducedBasis, TrainingSet
from .projection import ReducedSaddleSystem, ReducedSystem

__all__ = [
    "EstimatorMachinery",
    "AdrEstimator",
    "StokesEstimator",
    "GreedyRecord",
    "GreedyLog",
    "estimator",
    "greedy_offline",
    "greedy_offline_stokes",
    "orthonormalize_against",
]

log = logging.getLogger(__name__)

# about sqrt(eps): a small accepted vector amplifies the roundoff of later candidates
REJECT_TOL = 1e-8
_DEPENDENT_TOL = 1e-13


def orthonormalize_against(v: np.ndarray, basis: np.ndarray, x: InnerProductMatrix, passes: int = 2):
    """X-orthonormalize ``v`` against the columns of ``basis`` (MGS, re-orthogonalized).

    Returns ``(q, ratio)`` where ``ratio`` is the remaining norm relative to
    the original one; ``q`` is ``None`` when ``ratio < REJECT_TOL``.
    """
    xm = x.matrix
    w = np.array(v, dtype=float, copy=True)
    orig = np.sqrt(max(w @ (xm @ w), 0.0))
    if orig == 0.0:
        return None, 0.0
    for _ in range(passes):
        for i in range(basis.shape[1]):
            w -= (basis[:, i] @ (xm @ w)) * basis[:, i]
    nrm = np.sqrt(max(w @ (xm @ w), 0.0))
    ratio = nrm / orig
    if ratio < REJECT_TOL:
        return None, ratio
    return w / nrm, ratio


class EstimatorMachinery:
    """Growing set of residual components with X-orthonormalized representers.

    Columns are added with :meth:`add`; :meth:`norm` returns ``||sum_j g_j z_j||_X``
    where ``z_j`` is the Riesz representer of the ``j``-th column.
    """

    def __init__(self, x: InnerProductMatrix, alpha_lb: float = 1.0):
        if alpha_lb <= 0:
            raise ConfigurationError("stability lower bound must be positive")
        self.x = x
        self.alpha_lb = float(alpha_lb)
        self._q = np.zeros((x.dim, 0))
        self._r = np.zeros((0, 0))

    @property
    def n_columns(self) -> int:
        return self._r.shape[1]

    @property
    def rank(self) -> int:
        return self._q.shape[1]

    def add(self, vectors: np.ndarray) -> None:
        """Append residual components (columns of ``vectors``, full-length)."""
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        reps = self.x.riesz(vectors)
        xm = self.x.matrix
        for z in reps.T:
            z = z.copy()
            scale = np.sqrt(max(z @ (xm @ z), 0.0))
            h = np.zeros(self.rank)
            for _ in range(2):
                if self.rank:
                    dh = self._q.T @ (xm @ z)
                    z -= self._q @ dh
                    h += dh
            rho = np.sqrt(max(z @ (xm @ z), 0.0))
            grow = scale > 0 and rho > _DEPENDENT_TOL * scale
            rows = self.rank + int(grow)
            r = np.zeros((rows, self.n_columns + 1))
            r[: self._r.shape[0], : self.n_columns] = self._r
            r[: self.rank, -1] = h
            if grow:
                r[-1, -1] = rho
                self._q = np.column_stack([self._q, z / rho])
            self._r = r

    def norm(self, g: np.ndarray) -> np.ndarray:
        """``||R g||`` for ``g`` of shape ``(ncols,)`` or ``(M, ncols)``, divided by ``alpha_lb``."""
        g = np.asarray(g, dtype=float)
        v = g @ self._r.T
        return np.sqrt(np.einsum("...i,...i->...", v, v)) / self.alpha_lb


class _ThetaCache:
    def _thetas(self, mu):
        if not hasattr(self, "_wa"):
            p = self.affine.n_params
            self._wa, self._ca = theta_matrix(self.affine.theta_a, p)
            self._wf, self._cf = theta_matrix(self.affine.theta_f, p)
        mu = np.asarray(mu, dtype=float)
        return mu @ self._wa.T + self._ca, mu @ self._wf.T + self._cf


class AdrEstimator(_ThetaCache):
    """Residual estimator for a scalar affine system and a growing basis."""

    def __init__(self, affine, x: InnerProductMatrix, alpha_lb: float = 1.0):
        self.affine = affine
        self.machinery = EstimatorMachinery(x, alpha_lb)
        self.n = 0
        loads = np.column_stack(affine.loads)
        self.machinery.add(self._mask(loads))

    def _mask(self, v: np.ndarray) -> np.ndarray:
        v = np.array(v, dtype=float, copy=True)
        v[self.affine.constrained] = 0.0
        return v

    def extend(self, phi: np.ndarray) -> None:
        """Add the components ``A_q phi`` for one new basis vector."""
        cols = np.column_stack([blk @ phi for blk in self.affine.blocks])
        self.machinery.add(self._mask(cols))
        self.n += 1

    def coefficients(self, mu, coeffs) -> np.ndarray:
        th_a, th_f = self._thetas(mu)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n:
            raise ConfigurationError(f"estimator holds {self.n} basis vectors, got {coeffs.shape[-1]} coefficients")
        a_part = -(coeffs[..., :, None] * th_a[..., None, :])  # (..., N, Qa), basis-major
        return np.concatenate([th_f, a_part.reshape(a_part.shape[:-2] + (-1,))], axis=-1)

    def eta(self, mu, coeffs) -> np.ndarray:
        return self.machinery.norm(self.coefficients(mu, coeffs))

    def residual(self, mu, coeffs, basis: np.ndarray) -> np.ndarray:
        """Algebraic residual ``f(mu) - A(mu) Phi c`` on the free DOFs (zero elsewhere)."""
        u = basis[:, : self.n] @ np.asarray(coeffs, dtype=float)
        return self._mask(self.affine.rhs(mu) - self.affine.matrix(mu) @ u)

    def direct(self, mu, coeffs, basis: np.ndarray) -> float:
        """Dual norm from one explicit Riesz solve."""
        return self.machinery.x.dual_norm(self.residual(mu, coeffs, basis)) / self.machinery.alpha_lb


class StokesEstimator(_ThetaCache):
    """Momentum-residual estimator for the reduced saddle problem.

    Components are tagged so that coefficients can be routed from the
    ``[Upsilon, Xi]`` / ``Pi`` ordering of the reduced system.
    """

    def __init__(self, affine, x_u: InnerProductMatrix, beta_lb: float = 1.0):
        self.affine = affine
        self.machinery = EstimatorMachinery(x_u, beta_lb)
        self.tags: list[tuple[str, int]] = [("f", q) for q in range(len(affine.loads))]
        self.machinery.add(self._mask(np.column_stack(affine.loads)))
        self.counts = {"u": 0, "s": 0, "p": 0}

    def _mask(self, v: np.ndarray) -> np.ndarray:
        v = np.array(v, dtype=float, copy=True)
        v[self.affine.constrained] = 0.0
        return v

    def extend(self, kind: str, vec: np.ndarray) -> None:
        """Register a new velocity (``u``), supremizer (``s``) or pressure (``p``) vector."""
        if kind in ("u", "s"):
            cols = np.column_stack([blk @ vec for blk in self.affine.blocks])
            self.tags.extend((kind, self.counts[kind], q) for q in range(cols.shape[1]))
        elif kind == "p":
            cols = (self.affine.divergence.T @ vec)[:, None]
            self.tags.append(("p", self.counts["p"]))
        else:
            raise ConfigurationError(f"unknown component kind {kind!r}")
        self.machinery.add(self._mask(cols))
        self.counts[kind] += 1

    def coefficients(self, mu, coeffs_u, coeffs_p) -> np.ndarray:
        th_a, th_f = self._thetas(mu)
        cu = np.asarray(coeffs_u, dtype=float)
        cp = np.asarray(coeffs_p, dtype=float)
        n_u = self.counts["u"]
        g = np.zeros(cu.shape[:-1] + (len(self.tags),))
        for j, tag in enumerate(self.tags):
            if tag[0] == "f":
                g[..., j] = th_f[..., tag[1]]
            elif tag[0] == "p":
                g[..., j] = -cp[..., tag[1]]
            else:
                pos = tag[1] if tag[0] == "u" else n_u + tag[1]
                g[..., j] = -th_a[..., tag[2]] * cu[..., pos]
        return g

    def eta(self, mu, coeffs_u, coeffs_p) -> np.ndarray:
        return self.machinery.norm(self.coefficients(mu, coeffs_u, coeffs_p))

    def residual(self, mu, coeffs_u, coeffs_p, velocity: np.ndarray, pressure: np.ndarray) -> np.ndarray:
        u = velocity @ np.asarray(coeffs_u, dtype=float)
        p = pressure @ np.asarray(coeffs_p, dtype=float)
        r = self.affine.rhs(mu) - self.affine.velocity_matrix(mu) @ u - self.affine.divergence.T @ p
        return self._mask(r)

    def direct(self, mu, coeffs_u, coeffs_p, velocity, pressure) -> float:
        r = self.residual(mu, coeffs_u, coeffs_p, velocity, pressure)
        return self.machinery.x.dual_norm(r) / self.machinery.alpha_lb


def estimator(machinery, mu, *coeffs):
    """Estimator value(s) ``||R(mu)||_{X'} / alpha_LB`` from precomputed data."""
    return machinery.eta(mu, *coeffs)


@dataclass
class GreedyRecord:
    iteration: int
    mu: np.ndarray
    sample_index: int
    max_eta: float
    defect: float
    wall_time: float


@dataclass
class GreedyLog:
    records: list = field(default_factory=list)
    n_solves: int = 0
    stop_reason: str = ""

    @property
    def selected(self) -> np.ndarray:
        return np.array([r.mu for r in self.records])

    @property
    def max_etas(self) -> np.ndarray:
        return np.array([r.max_eta for r in self.records])

    def to_csv(self, path, param_names) -> None:
        header = "# schema=greedy-log/1\niteration," + ",".join(param_names) + ",max_eta,defect,wall_time\n"
        with open(path, "w") as fh:
            fh.write(header)
            for r in self.records:
                vals = ",".join(f"{v:.17g}" for v in r.mu)
                fh.write(f"{r.iteration},{vals},{r.max_eta:.17g},{r.defect:.3e},{r.wall_time:.6f}\n")


def _check_training(training: TrainingSet, n_max: int):
    if training.size < 1:
        raise ConfigurationError("training set is empty")
    if n_max < 1 or n_max > training.size:
        raise ConfigurationError(f"N_max must lie in [1, {training.size}]")


def _defect(q: np.ndarray, x: InnerProductMatrix) -> float:
    if q.shape[1] == 0:
        return 0.0
    return float(np.abs(q.T @ (x.matrix @ q) - np.eye(q.shape[1])).max())


def greedy_offline(
    affine,
    x: InnerProductMatrix,
    training: TrainingSet,
    n_max: int,
    eta_bar: float = 0.0,
    seed: int = 0,
    alpha_lb: float = 1.0,
    solver=None,
):
    """Greedy reduced basis for a scalar affine system.

    Returns ``(ReducedBasis, ReducedSystem, AdrEstimator, GreedyLog)``; the
    reduced system and estimator are synchronized with the final basis.
    """
    from .adr import solve_himod

    solver = solve_himod if solver is None else solver
    _check_training(training, n_max)
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(training.size))
    t0 = time.perf_counter()

    est = AdrEstimator(affine, x, alpha_lb)
    phi = np.zeros((affine.dim, 0))
    a_n = np.zeros((len(affine.blocks), 0, 0))
    f_n = np.zeros((len(affine.loads), 0))
    glog = GreedyLog()
    samples = training.samples
    th_a = evaluate_thetas(affine.theta_a, samples)  # (M, Qa)
    th_f = evaluate_thetas(affine.theta_f, samples)

    while True:
        mu = samples[idx]
        try:
            u = solver(affine, mu)
        except HiModError as exc:
            raise HiModError(f"greedy snapshot failed at mu={mu.tolist()}: {exc}") from exc
        glog.n_solves += 1
        q, ratio = orthonormalize_against(u, phi, x)
        if q is None:
            if phi.shape[1] == 0:
                raise BasisError(f"first greedy snapshot at mu={mu.tolist()} is zero")
            glog.stop_reason = f"snapshot rejected (relative norm {ratio:.2e})"
            break
        # incremental projection: new row and column of every block
        aq = np.stack([blk @ q for blk in affine.blocks])  # (Qa, dim)
        n = phi.shape[1]
        grown = np.zeros((a_n.shape[0], n + 1, n + 1))
        grown[:, :n, :n] = a_n
        grown[:, :n, n] = aq @ phi if n else 0.0
        grown[:, n, :n] = np.stack([phi.T @ (blk.T @ q) for blk in affine.blocks]) if n else 0.0
        grown[:, n, n] = aq @ q
        a_n = grown
        f_n = np.column_stack([f_n, [f @ q for f in affine.loads]])
        phi = np.column_stack([phi, q])
        est.extend(q)

        mats = np.tensordot(th_a, a_n, axes=(1, 0))
        rhs = th_f @ f_n
        coeffs = np.linalg.solve(mats, rhs[..., None])[..., 0]
        etas = est.eta(samples, coeffs)
        idx = int(np.argmax(etas))
        max_eta = float(etas[idx])
        glog.records.append(GreedyRecord(phi.shape[1], mu.copy(), int(np.flatnonzero((samples == mu).all(1))[0]),
                                         max_eta, _defect(phi, x), time.perf_counter() - t0))
        log.debug("greedy N=%d max eta=%.3e", phi.shape[1], max_eta)
        if phi.shape[1] >= n_max:
            glog.stop_reason = "N_max reached"
            break
        if max_eta < eta_bar:
            glog.stop_reason = "tolerance reached"
            break

    basis = ReducedBasis(phi, "state", x.tag)
    reduced = ReducedSystem(a_n, f_n, list(affine.theta_a), list(affine.theta_f), basis)
    return basis, reduced, est, glog


def greedy_offline_stokes(
    affine,
    x_u: InnerProductMatrix,
    x_p: InnerProductMatrix,
    training: TrainingSet,
    n_max: int,
    eta_bar: float = 0.0,
    seed: int = 0,
    beta_lb: float = 1.0,
):
    """Greedy velocity, pressure and supremizer bases for the saddle system.

    Each of the three new vectors is rejected on its own when it adds no new
    direction; the loop stops only when all three are rejected.

    Returns ``(velocity, pressure, supremizer, ReducedSaddleSystem, StokesEstimator, GreedyLog)``.
    """
    from .projection import enriched_velocity_basis, project_stokes
    from .stokes import solve_stokes, solve_supremizer

    _check_training(training, n_max)
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(training.size))
    t0 = time.perf_counter()
    est = StokesEstimator(affine, x_u, beta_lb)
    ups = np.zeros((affine.n_velocity, 0))
    xis = np.zeros((affine.n_velocity, 0))
    pis = np.zeros((affine.n_pressure, 0))
    glog = GreedyLog()
    samples = training.samples
    reduced = None

    for k in range(n_max):
        mu = samples[idx]
        try:
            u, p = solve_stokes(affine, mu)
        except HiModError as exc:
            raise HiModError(f"greedy snapshot failed at mu={mu.tolist()}: {exc}") from exc
        glog.n_solves += 1
        s = solve_supremizer(x_u, affine.divergence, p)
        qu, _ = orthonormalize_against(u, ups, x_u)
        qp, _ = orthonormalize_against(p, pis, x_p)
        qs, _ = orthonormalize_against(s, xis, x_u) if qp is not None else (None, 0.0)
        if qu is None and qp is None and qs is None:
            if k == 0:
                raise BasisError(f"first greedy snapshot at mu={mu.tolist()} is zero")
            glog.stop_reason = "all snapshot components rejected"
            break
        if qu is not None:
            ups = np.column_stack([ups, qu])
            est.extend("u", qu)
        if qs is not None:
            xis = np.column_stack([xis, qs])
            est.extend("s", qs)
        if qp is not None:
            pis = np.column_stack([pis, qp])
            est.extend("p", qp)

        vel = enriched_velocity_basis(ReducedBasis(ups, "velocity", x_u.tag), ReducedBasis(xis, "supremizer", x_u.tag))
        reduced = project_stokes(affine, vel, ReducedBasis(pis, "pressure", x_p.tag), x_u, x_p)
        mats = reduced.matrix(samples)
        rhs = reduced.rhs(samples)
        sol = np.linalg.solve(mats, rhs[..., None])[..., 0]
        nv = reduced.n_velocity
        etas = est.eta(samples, sol[:, :nv], sol[:, nv:])
        idx = int(np.argmax(etas))
        max_eta = float(etas[idx])
        defect = max(_defect(vel.matrix, x_u), _defect(pis, x_p))
        glog.records.append(GreedyRecord(k + 1, mu.copy(), int(np.flatnonzero((samples == mu).all(1))[0]),
                                         max_eta, defect, time.perf_counter() - t0))
        if max_eta < eta_bar:
            glog.stop_reason = "tolerance reached"
            break
    else:
        glog.stop_reason = "N_max reached"

    return (ReducedBasis(ups, "velocity", x_u.tag), ReducedBasis(pis, "pressure", x_p.tag),
            ReducedBasis(xis, "supremizer", x_u.tag), reduced, est, glog)

"""HiPOD offline phase: training sets, snapshots and POD basis extraction."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BasisError, ConfigurationError, HiModError
from .himod import InnerProductMatrix
from .linalg import sym_eig

__all__ = [
    "TrainingSet",
    "ResponseMatrix",
    "PodSpectrum",
    "ReducedBasis",
    "sample_training_set",
    "collect_snapshots",
    "collect_stokes_snapshots",
    "pod_extract",
    "orthonormalize",
    "save_basis",
    "load_basis",
]

log = logging.getLogger(__name__)

EIGEN_CUTOFF = 1e-13


@dataclass(frozen=True)
class TrainingSet:
    """Seeded uniform samples of a box-shaped parameter domain."""

    domain: np.ndarray  # (P, 2) lower/upper bounds
    samples: np.ndarray  # (M, P)
    seed: int

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    def __len__(self):
        return self.size

    def __iter__(self):
        return iter(self.samples)


def sample_training_set(domain, size: int, seed: int) -> TrainingSet:
    """Draw ``size`` points uniformly in the box ``domain = [(lo, hi), ...]``."""
    dom = np.asarray(domain, dtype=float)
    if dom.ndim != 2 or dom.shape[1] != 2:
        raise ConfigurationError("domain must be a list of (low, high) pairs")
    if int(size) != size or size < 1:
        raise ConfigurationError("training set size must be a positive integer")
    if np.any(dom[:, 1] < dom[:, 0]):
        raise ConfigurationError("empty parameter interval")
    rng = np.random.default_rng(seed)
    samples = rng.uniform(dom[:, 0], dom[:, 1], size=(int(size), dom.shape[0]))
    degenerate = dom[:, 0] == dom[:, 1]
    samples[:, degenerate] = dom[degenerate, 0]
    return TrainingSet(dom, samples, int(seed))


@dataclass
class ResponseMatrix:
    """Snapshots stored by column."""

    matrix: np.ndarray
    role: str = "state"
    parameters: np.ndarray | None = None

    @property
    def n_snapshots(self) -> int:
        return self.matrix.shape[1]


def collect_snapshots(affine, training: TrainingSet, solver=None) -> ResponseMatrix:
    """Solve the HiMod problem at every training parameter (scalar problems)."""
    from .adr import solve_himod

    solver = solve_himod if solver is None else solver
    cols = []
    for mu in training.samples:
        try:
            cols.append(solver(affine, mu))
        except HiModError as exc:
            raise HiModError(f"snapshot collection aborted at mu={mu.tolist()}: {exc}") from exc
    return ResponseMatrix(np.column_stack(cols), "state", training.samples.copy())


def collect_stokes_snapshots(affine, x_u: InnerProductMatrix, training: TrainingSet):
    """Velocity, pressure and supremizer response matrices."""
    from .stokes import solve_stokes, solve_supremizer

    vel, pre, sup = [], [], []
    for mu in training.samples:
        try:
            u, p = solve_stokes(affine, mu)
        except HiModError as exc:
            raise HiModError(f"snapshot collection aborted at mu={mu.tolist()}: {exc}") from exc
        vel.append(u)
        pre.append(p)
        sup.append(solve_supremizer(x_u, affine.divergence, p))
    params = training.samples.copy()
    return (
        ResponseMatrix(np.column_stack(vel), "velocity", params),
        ResponseMatrix(np.column_stack(pre), "pressure", params),
        ResponseMatrix(np.column_stack(sup), "supremizer", params),
    )


@dataclass
class PodSpectrum:
    """Eigenvalues of the correlation matrix (descending) and energy ratios."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def normalized(self) -> np.ndarray:
        return self.eigenvalues / self.eigenvalues[0]

    @property
    def energy(self) -> np.ndarray:
        """``E(N)`` for ``N = 1..M``."""
        lam = np.clip(self.eigenvalues, 0.0, None)
        return np.cumsum(lam) / lam.sum()

    def rank(self, cutoff: float = EIGEN_CUTOFF) -> int:
        return int(np.sum(self.eigenvalues > cutoff * self.eigenvalues[0]))

    def n_for_energy(self, eps: float) -> int:
        """Smallest ``N`` with ``E(N) > 1 - eps``."""
        return int(np.searchsorted(self.energy, 1.0 - eps, side="right") + 1)


@dataclass
class ReducedBasis:
    """Columns spanning a reduced space, X-orthonormal."""

    matrix: np.ndarray
    role: str = "state"
    norm: str = "H1"

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def truncated(self, n: int) -> "ReducedBasis":
        return ReducedBasis(self.matrix[:, :n].copy(), self.role, self.norm)

    def orthonormality_defect(self, x: InnerProductMatrix) -> float:
        gram = self.matrix.T @ (x.matrix @ self.matrix)
        return float(np.abs(gram - np.eye(self.n)).max()) if self.n else 0.0


def orthonormalize(vectors: np.ndarray, x: InnerProductMatrix, passes: int = 2) -> np.ndarray:
    """Modified Gram-Schmidt in the X inner product, order preserved."""
    q = np.array(vectors, dtype=float, copy=True)
    xm = x.matrix
    for j in range(q.shape[1]):
        for _ in range(passes):
            for i in range(j):
                q[:, j] -= (q[:, i] @ (xm @ q[:, j])) * q[:, i]
        nrm = np.sqrt(q[:, j] @ (xm @ q[:, j]))
        q[:, j] /= nrm
    return q


def pod_extract(
    response: ResponseMatrix,
    x: InnerProductMatrix,
    n: int | None = None,
    energy: float | None = None,
    strict: bool = False,
):
    """POD basis from the correlation matrix ``C = U^T X U``.

    Exactly one of ``n`` (fixed size) or ``energy`` (``E(N) > 1 - energy``)
    selects the size. Eigenvalues below ``1e-13 * lam_1`` are never used: a
    fixed ``n`` beyond the numerical rank is shrunk (or raises with ``strict``).

    Returns
    -------
    (ReducedBasis, PodSpectrum)
    """
    if (n is None) == (energy is None):
        raise ConfigurationError("give exactly one of n or energy")
    u = np.asarray(response.matrix, dtype=float)
    corr = u.T @ (x.matrix @ u)
    lam, vec = sym_eig(0.5 * (corr + corr.T))
    lam, vec = lam[::-1], vec[:, ::-1]
    spectrum = PodSpectrum(lam, vec)
    if lam[0] <= 0:
        raise BasisError("snapshot set has zero energy")
    rank = spectrum.rank()
    if n is None:
        n = spectrum.n_for_energy(energy)
    if n > response.n_snapshots:
        raise ConfigurationError(f"requested N={n} exceeds the {response.n_snapshots} snapshots")
    if n > rank:
        if strict:
            raise BasisError(f"requested N={n} exceeds numerical rank {rank}")
        log.warning("POD size reduced from %d to numerical rank %d", n, rank)
        n = rank
    phi = (u @ vec[:, :n]) / np.sqrt(lam[:n])
    phi = orthonormalize(phi, x)
    return ReducedBasis(phi, response.role, x.tag), spectrum


_MAGIC = b"HIMODRB1"


def save_basis(basis: ReducedBasis, path) -> None:
    """Binary file: magic, header length, JSON header, column-major float64 payload."""
    header = json.dumps({
        "rows": basis.dim, "cols": basis.n, "role": basis.role, "norm": basis.norm,
        "dtype": "<f8", "order": "F",
    }).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.asarray(basis.matrix, dtype="<f8").tobytes(order="F"))


def load_basis(path) -> ReducedBasis:
    data = Path(path).read_bytes()
    if data[:8] != _MAGIC:
        raise BasisError(f"{path} is not a basis file")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen])
    payload = np.frombuffer(data[12 + hlen:], dtype=header["dtype"])
    if payload.size != header["rows"] * header["cols"]:
        raise BasisError("truncated basis file")
    mat = payload.reshape((header["rows"], header["cols"]), order="F").copy()
    return ReducedBasis(mat, header["role"], header["norm"])

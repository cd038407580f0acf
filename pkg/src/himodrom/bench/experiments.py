"""Experiment drivers: spectra, error sweeps, speedups, offline cost, inf-sup sweep."""

from __future__ import annotations

import csv
import logging
import statistics
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..adr import assemble_adr, reference_adr_space, reference_adr_spec, solve_himod
from ..errors import ConfigurationError
from ..geometry import adr_map, stokes_map
from ..greedy import greedy_offline, greedy_offline_stokes
from ..himod import evaluate_field, inner_product
from ..pod import (
    collect_snapshots,
    collect_stokes_snapshots,
    pod_extract,
    sample_training_set,
)
from ..projection import (
    enriched_velocity_basis,
    project_stokes,
    project_system,
    rom_query,
    rom_query_stokes,
)
from ..stokes import (
    assemble_stokes,
    build_stokes_space,
    infsup_himod,
    infsup_reduced,
    pressure_inner_product,
    solve_stokes,
    velocity_inner_product,
)
from .config import ExperimentConfig

__all__ = [
    "BenchRecord",
    "build_problem",
    "hipod_offline",
    "hirb_offline",
    "median_time",
    "run_eig_decay",
    "run_error_vs_n",
    "run_speedup",
    "run_offline_cost_sweep",
    "run_infsup_sweep",
    "run_field_export",
    "run_experiment",
]

log = logging.getLogger(__name__)
SCHEMA_VERSION = 1


def median_time(fn, repeats: int = 5) -> float:
    """Median wall time of ``fn()`` over ``repeats`` calls after one discarded warm-up."""
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _write_csv(path: Path, schema: str, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={schema}/{SCHEMA_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# problem and reduced-model wrappers

@dataclass
class AdrProblem:
    space: object
    affine: object
    x: object
    kind: str = "adr"

    def solve(self, mu):
        return solve_himod(self.affine, mu)

    def errors(self, exact, approx) -> dict:
        err = self.x.norm(exact - approx)
        return {"h1": err, "h1_rel": err / max(self.x.norm(exact), 1e-300)}


@dataclass
class StokesProblem:
    space: object
    affine: object
    x_u: object
    x_p: object
    kind: str = "stokes"

    def solve(self, mu):
        return solve_stokes(self.affine, mu)

    def errors(self, exact, approx) -> dict:
        (u, p), (ul, pl) = exact, approx
        eu, ep = self.x_u.norm(u - ul), self.x_p.norm(p - pl)
        return {
            "velocity_h1": eu,
            "velocity_h1_rel": eu / max(self.x_u.norm(u), 1e-300),
            "pressure_l2": ep,
            "pressure_l2_rel": ep / max(self.x_p.norm(p), 1e-300),
        }


def build_problem(cfg: ExperimentConfig):
    """HiMod space, affine system and inner products for ``cfg``."""
    if cfg.problem == "adr":
        space = reference_adr_space(
            m=cfg.m, n_elements=cfg.n_elements, nu_ref=cfg.nu_ref, rho=cfg.rho,
            order_axial=cfg.order_axial, order_transverse=cfg.order_transverse,
            dmap=adr_map(cfg.length, cfg.amplitude),
        )
        spec = reference_adr_spec()
        if cfg.rho != spec.rho:
            spec = replace(spec, rho=cfg.rho)
        affine = assemble_adr(space, spec)
        return AdrProblem(space, affine, inner_product(space, "H1", affine.constrained))
    dmap = replace(stokes_map(cfg.length, cfg.height), amplitude=cfg.amplitude)
    space = build_stokes_space(dmap, cfg.n_elements, cfg.m_p, cfg.m_u,
                               cfg.order_axial, cfg.order_transverse)
    affine = assemble_stokes(space)
    return StokesProblem(space, affine, velocity_inner_product(space), pressure_inner_product(space))


@dataclass
class AdrRom:
    reduced: object
    estimator: object = None

    @property
    def n(self) -> int:
        return self.reduced.n

    def query(self, mu):
        return rom_query(self.reduced, mu)

    def query_with_eta(self, mu):
        coeffs, lifted = rom_query(self.reduced, mu)
        return lifted, float(self.estimator.eta(mu, coeffs))

    def truncated(self, n: int):
        return AdrRom(self.reduced.truncated(n), self.estimator)

    def eta(self, mu, coeffs):
        pad = np.zeros(self.estimator.n)
        pad[: coeffs.size] = coeffs
        return float(self.estimator.eta(mu, pad))


@dataclass
class StokesRom:
    reduced: object
    estimator: object = None
    sizes: tuple = ()

    @property
    def n(self) -> int:
        return max(self.sizes)

    def query(self, mu):
        (cu, cp), lifted = rom_query_stokes(self.reduced, mu)
        return (cu, cp), lifted

    def query_with_eta(self, mu):
        (cu, cp), lifted = rom_query_stokes(self.reduced, mu)
        return lifted, float(self.estimator.eta(mu, cu, cp))


def _stokes_rom(problem: StokesProblem, vel, pre, sup, n: int, estimator=None, full=None) -> StokesRom:
    v, p, s = vel.truncated(min(n, vel.n)), pre.truncated(min(n, pre.n)), sup.truncated(min(n, sup.n))
    red = project_stokes(problem.affine, enriched_velocity_basis(v, s), p, problem.x_u, problem.x_p)
    return StokesRom(red, estimator if full else None, (v.n, p.n, s.n))


@dataclass
class OfflineResult:
    rom: object
    seconds: float
    n_solves: int
    spectra: dict = field(default_factory=dict)
    log: object = None
    bases: tuple = ()

    def truncated(self, problem, n: int):
        if problem.kind == "adr":
            return self.rom.truncated(n)
        vel, pre, sup = self.bases
        return _stokes_rom(problem, vel, pre, sup, n, self.rom.estimator, full=n >= self.rom.n)


def hipod_offline(problem, training, n: int, energy: float | None = None) -> OfflineResult:
    """Snapshots, POD extraction and projection, timed together."""
    t0 = time.perf_counter()
    kw = {"energy": energy} if energy is not None else {"n": n}
    if problem.kind == "adr":
        snaps = collect_snapshots(problem.affine, training)
        basis, spectrum = pod_extract(snaps, problem.x, **kw)
        rom = AdrRom(project_system(problem.affine, basis))
        spectra = {"state": spectrum}
        bases = (basis,)
    else:
        vel, pre, sup = collect_stokes_snapshots(problem.affine, problem.x_u, training)
        bv, sv = pod_extract(vel, problem.x_u, **kw)
        bp, sp_ = pod_extract(pre, problem.x_p, **kw)
        bs, ss = pod_extract(sup, problem.x_u, **kw)
        spectra = {"velocity": sv, "pressure": sp_, "supremizer": ss}
        bases = (bv, bp, bs)
        rom = _stokes_rom(problem, bv, bp, bs, max(bv.n, bp.n, bs.n))
    seconds = time.perf_counter() - t0
    return OfflineResult(rom, seconds, training.size, spectra, None, bases)


def hirb_offline(problem, training, n: int, eta_bar: float = 0.0, seed: int = 0,
                 alpha_lb: float = 1.0) -> OfflineResult:
    """Greedy construction (snapshots, estimator machinery and sweeps), timed."""
    t0 = time.perf_counter()
    if problem.kind == "adr":
        basis, reduced, est, glog = greedy_offline(problem.affine, problem.x, training, n, eta_bar, seed, alpha_lb)
        rom = AdrRom(reduced, est)
        bases = (basis,)
    else:
        vel, pre, sup, reduced, est, glog = greedy_offline_stokes(
            problem.affine, problem.x_u, problem.x_p, training, n, eta_bar, seed, alpha_lb)
        rom = StokesRom(reduced, est, (vel.n, pre.n, sup.n))
        bases = (vel, pre, sup)
    seconds = time.perf_counter() - t0
    return OfflineResult(rom, seconds, glog.n_solves, {}, glog, bases)


def _methods(method: str):
    return ("hipod", "hirb") if method == "both" else (method,)


def _training(cfg: ExperimentConfig, size: int | None = None, seed: int | None = None):
    return sample_training_set(cfg.domain, cfg.train_size if size is None else size,
                               cfg.train_seed if seed is None else seed)


def _testing(cfg: ExperimentConfig):
    return sample_training_set(cfg.domain, cfg.test_size, cfg.test_seed)


def _offline(problem, cfg: ExperimentConfig, method: str, training=None) -> OfflineResult:
    training = _training(cfg) if training is None else training
    if method == "hipod":
        return hipod_offline(problem, training, cfg.n, cfg.energy)
    return hirb_offline(problem, training, cfg.n, cfg.eta_bar, cfg.train_seed, cfg.alpha_lb)


# experiments

def write_spectrum(path: Path, spectrum) -> Path:
    lam = spectrum.eigenvalues
    rows = [(k + 1, lam[k], lam[k] / lam[0], spectrum.energy[k]) for k in range(lam.size)]
    return _write_csv(path, "spectrum", ("k", "lambda", "lambda_rel", "energy"), rows)


def run_eig_decay(cfg: ExperimentConfig, out: Path, problem=None) -> dict:
    """Correlation spectra of ``M`` snapshots; one CSV per field."""
    problem = build_problem(cfg) if problem is None else problem
    res = hipod_offline(problem, _training(cfg), min(cfg.n, cfg.train_size))
    for role, spectrum in res.spectra.items():
        write_spectrum(Path(out) / f"spectrum_{role}.csv", spectrum)
    return res.spectra


def run_error_vs_n(cfg: ExperimentConfig, out: Path, method: str | None = None, problem=None,
                   offline: dict | None = None) -> dict:
    """Mean errors (and mean estimator for HiRB) over the testing set for ``N = 1..n``."""
    problem = build_problem(cfg) if problem is None else problem
    testing = _testing(cfg)
    truth = [problem.solve(mu) for mu in testing.samples]
    results = {}
    for meth in _methods(method or cfg.method):
        res = (offline or {}).get(meth) or _offline(problem, cfg, meth)
        rows = []
        n_top = res.rom.n
        for n in range(1, n_top + 1):
            rom = res.truncated(problem, n)
            errs, etas = [], []
            for mu, exact in zip(testing.samples, truth):
                coeffs, lifted = rom.query(mu)
                errs.append(problem.errors(exact, lifted))
                if meth == "hirb" and problem.kind == "adr":
                    etas.append(rom.eta(mu, coeffs))
                elif meth == "hirb" and n == n_top:
                    etas.append(float(res.rom.estimator.eta(mu, *coeffs)))
            keys = list(errs[0])
            means = [float(np.mean([e[k] for e in errs])) for k in keys]
            eta = float(np.mean(etas)) if etas else float("nan")
            rows.append([n, *means, eta])
        header = ["n", *(f"mean_{k}" for k in keys), "mean_eta"]
        _write_csv(Path(out) / f"error_vs_n_{meth}.csv", "error-vs-n", header, rows)
        results[meth] = {"header": header, "rows": rows, "offline": res}
        if res.log is not None:
            res.log.to_csv(Path(out) / "greedy_log.csv", cfg.param_names)
    return results


@dataclass
class BenchRecord:
    mu: np.ndarray
    tau_m: float
    tau_mn: float
    errors: dict
    eta: float | None = None

    @property
    def speedup(self) -> float:
        return self.tau_m / self.tau_mn


def run_speedup(cfg: ExperimentConfig, out: Path, method: str | None = None, problem=None,
                offline: dict | None = None, queries=None) -> dict:
    """Per-query HiMod and ROM times (solve only, median of ``cfg.repeats``)."""
    problem = build_problem(cfg) if problem is None else problem
    queries = [np.asarray(cfg.query, float)] if queries is None else queries
    results = {}
    for meth in _methods(method or cfg.method):
        res = (offline or {}).get(meth) or _offline(problem, cfg, meth)
        rom = res.rom
        records = []
        for mu in queries:
            exact = problem.solve(mu)
            tau_m = median_time(lambda: problem.solve(mu), cfg.repeats)
            if meth == "hirb":
                tau_n = median_time(lambda: rom.query_with_eta(mu), cfg.repeats)
                lifted, eta = rom.query_with_eta(mu)
            else:
                tau_n = median_time(lambda: rom.query(mu), cfg.repeats)
                lifted, eta = rom.query(mu)[1], None
            records.append(BenchRecord(np.asarray(mu), tau_m, tau_n, problem.errors(exact, lifted), eta))
        keys = list(records[0].errors)
        header = [*cfg.param_names, "tau_m", "tau_mn", "speedup", *keys, "eta"]
        rows = [[*r.mu, r.tau_m, r.tau_mn, r.speedup, *(r.errors[k] for k in keys),
                 float("nan") if r.eta is None else r.eta] for r in records]
        _write_csv(Path(out) / f"speedup_{meth}.csv", "speedup", header, rows)
        results[meth] = {"records": records, "offline": res}
    return results


def run_offline_cost_sweep(cfg: ExperimentConfig, m_list, out: Path | None = None, problem=None,
                           repeats: int = 1) -> list:
    """Offline wall time of HiPOD and HiRB for each training-set size."""
    problem = build_problem(cfg) if problem is None else problem
    m_list = list(m_list)
    if m_list != sorted(m_list):
        raise ConfigurationError("M-list must be increasing")
    rows = []
    for m in m_list:
        training = _training(cfg, size=m)
        n = min(cfg.n, m)
        pod_t, rb_t = [], []
        for _ in range(repeats):
            pod = hipod_offline(problem, training, n)
            rb = hirb_offline(problem, training, n, cfg.eta_bar, cfg.train_seed, cfg.alpha_lb)
            pod_t.append(pod.seconds)
            rb_t.append(rb.seconds)
        rows.append([m, statistics.median(pod_t), statistics.median(rb_t), pod.n_solves, rb.n_solves])
        log.info("offline M=%d hipod=%.3fs hirb=%.3fs", m, rows[-1][1], rows[-1][2])
    if out is not None:
        _write_csv(Path(out) / "offline_cost.csv", "offline-cost",
                   ("M", "hipod_seconds", "hirb_seconds", "hipod_solves", "hirb_solves"), rows)
    return rows


def run_infsup_sweep(cfg: ExperimentConfig, ns_list, out: Path | None = None, problem=None) -> list:
    """Reduced inf-sup constant for growing supremizer counts, HiPOD bases of size ``cfg.n``."""
    if cfg.problem != "stokes":
        raise ConfigurationError("the inf-sup sweep needs a Stokes configuration")
    problem = build_problem(cfg) if problem is None else problem
    res = hipod_offline(problem, _training(cfg), cfg.n)
    vel, pre, sup = res.bases
    beta_h = infsup_himod(problem.affine, problem.x_u, problem.x_p)
    rows = []
    for ns in ns_list:
        s = sup.truncated(min(ns, sup.n))
        phi = np.hstack([vel.matrix, s.matrix])
        xu = phi.T @ (problem.x_u.matrix @ phi)
        b = pre.matrix.T @ (problem.affine.divergence @ phi)
        xp = pre.matrix.T @ (problem.x_p.matrix @ pre.matrix)
        rows.append([ns, infsup_reduced(b, xu, xp), beta_h])
    if out is not None:
        _write_csv(Path(out) / "infsup.csv", "infsup-sweep", ("n_s", "beta_reduced", "beta_himod"), rows)
    return rows


def _grid(dmap, nx: int = 201, ny: int = 21):
    x = np.linspace(0.0, dmap.length, nx)
    t = np.linspace(0.0, 1.0, ny)
    lo, hi = dmap.bounds(x)
    xx = np.repeat(x, ny)
    yy = (lo[:, None] + (hi - lo)[:, None] * t[None, :]).ravel()
    return np.stack([xx, yy], axis=1)


def _coeff_rows(space, coeffs, field_name: str):
    n = space.n_axial
    return [(field_name, i, i // n, i % n, float(v)) for i, v in enumerate(coeffs)]


def run_field_export(cfg: ExperimentConfig, out: Path, method: str | None = None, problem=None) -> list:
    """HiMod and ROM fields at ``cfg.query`` on a structured grid, plus raw coefficients."""
    problem = build_problem(cfg) if problem is None else problem
    mu = np.asarray(cfg.query, float)
    written = []
    fields = {"himod": problem.solve(mu)}
    for meth in _methods(method or cfg.method):
        fields[meth] = _offline(problem, cfg, meth).rom.query(mu)[1]
    for name, sol in fields.items():
        if problem.kind == "adr":
            space = problem.space
            pts = _grid(space.dmap)
            vals = evaluate_field(space, sol, pts)
            rows = [(x, y, v) for (x, y), v in zip(pts, vals)]
            written.append(_write_csv(Path(out) / f"field_{name}.csv", "field-adr", ("x", "y", "u"), rows))
            crow = _coeff_rows(space, sol, "u")
        else:
            u, p = sol
            vs, ps = problem.space.velocity, problem.space.pressure
            pts = _grid(vs.dmap)
            ux = evaluate_field(vs, u[: vs.dim], pts)
            uy = evaluate_field(vs, u[vs.dim:], pts)
            pv = evaluate_field(ps, p, pts)
            rows = [(x, y, a, b, c) for (x, y), a, b, c in zip(pts, ux, uy, pv)]
            written.append(_write_csv(Path(out) / f"field_{name}.csv", "field-stokes",
                                      ("x", "y", "u_x", "u_y", "p"), rows))
            crow = (_coeff_rows(vs, u[: vs.dim], "u_x") + _coeff_rows(vs, u[vs.dim:], "u_y")
                    + _coeff_rows(ps, p, "p"))
        written.append(_write_csv(Path(out) / f"coefficients_{name}.csv", "coefficients",
                                  ("field", "index", "mode", "axial_dof", "value"), crow))
    return written


def run_experiment(cfg: ExperimentConfig, out: Path | None = None) -> Path:
    """Offline phases, spectra, error sweep over the testing set, speedups and a summary."""
    out = Path(cfg.out if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"problem: {cfg.problem}", f"train.size: {cfg.train_size}", f"rom.n: {cfg.n}"]
    summary = out / "summary.txt"
    try:
        t0 = time.perf_counter()
        problem = build_problem(cfg)
        lines.append(f"assembly_seconds: {time.perf_counter() - t0:.4f}")
        offline = {m: _offline(problem, cfg, m) for m in _methods(cfg.method)}
        for meth, res in offline.items():
            lines.append(f"{meth}.offline_seconds: {res.seconds:.4f}")
            lines.append(f"{meth}.himod_solves: {res.n_solves}")
            for role, spectrum in res.spectra.items():
                write_spectrum(out / f"spectrum_{role}.csv", spectrum)
                if spectrum.eigenvalues.size > 4:
                    lines.append(f"{meth}.{role}.lambda5_rel: {spectrum.normalized[4]:.3e}")
                k = min(cfg.n, spectrum.eigenvalues.size) - 1
                lines.append(f"{meth}.{role}.lambda{k + 1}_rel: {spectrum.normalized[k]:.3e}")
        sweep = run_error_vs_n(cfg, out, problem=problem, offline=offline)
        for meth, res in sweep.items():
            last = res["rows"][-1]
            for key, val in zip(res["header"][1:], last[1:]):
                lines.append(f"{meth}.N{last[0]}.{key}: {val:.4e}")
        speed = run_speedup(cfg, out, problem=problem, offline=offline)
        for meth, res in speed.items():
            rec = res["records"][0]
            lines.append(f"{meth}.tau_m: {rec.tau_m:.4e}")
            lines.append(f"{meth}.tau_mn: {rec.tau_mn:.4e}")
            lines.append(f"{meth}.speedup: {rec.speedup:.1f}")
    except Exception as exc:
        lines.append(f"error: {type(exc).__name__}: {exc}")
        summary.write_text("\n".join(lines) + "\n")
        raise
    summary.write_text("\n".join(lines) + "\n")
    return summary

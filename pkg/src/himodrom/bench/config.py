"""Flat ``key = value`` experiment configuration.

One key per line, nested keys dotted, ``#`` starts a comment. Recognized
keys (defaults in brackets)::

    problem            adr | stokes                         [adr]
    map.length         fiber length                         [4 adr, 6 stokes]
    map.amplitude      wall oscillation amplitude           [0.2 adr, 0.4 stokes]
    map.height         channel height (stokes)              [1]
    disc.n_elements    axial elements                       [80]
    disc.m             modes (adr)                          [8]
    disc.m_p           pressure modes (stokes)              [5]
    disc.m_u           velocity modes, must be m_p + 2      [m_p + 2]
    disc.nu_ref        viscosity freezing the Robin basis   [5]
    disc.rho           Robin coefficient                    [1]
    disc.order_axial   Gauss points per element             [8]
    disc.order_transverse  transverse Gauss points          [64]
    domain.<param>     lo, hi                               [problem defaults]
    train.size         M                                    [100]
    train.seed                                              [42]
    rom.method         hipod | hirb | both                  [both]
    rom.n              reduced dimension                    [20 adr, 4 stokes]
    rom.energy         POD energy tolerance (overrides rom.n for HiPOD)
    rom.eta_bar        greedy tolerance                     [0]
    rom.alpha_lb       stability lower bound                [1]
    query.mu           comma-separated parameter vector
    test.size          testing-set size                     [100]
    test.seed                                               [7]
    timing.repeats                                          [5]
    offline.m_list     comma-separated M values
    infsup.ns          comma-separated N_s values           [0,1,2,3,4]
    out                output directory                     [results]
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from ..errors import ConfigurationError

__all__ = ["ExperimentConfig", "parse_config", "load_config", "DEFAULT_DOMAINS"]

DEFAULT_DOMAINS = {
    "adr": {"nu": (1.0, 10.0), "b_x": (15.0, 25.0), "b_y": (70.0, 80.0), "sigma": (20.0, 30.0)},
    "stokes": {"nu": (1.0, 10.0), "C_in": (5.0, 15.0), "C_out": (0.0, 10.0),
               "f_x": (1.0, 10.0), "f_y": (0.0, 10.0)},
}
PARAM_ORDER = {
    "adr": ("nu", "b_x", "b_y", "sigma"),
    "stokes": ("nu", "C_in", "C_out", "f_x", "f_y"),
}
DEFAULT_QUERY = {"adr": (5.0, 20.0, 75.0, 25.0), "stokes": (5.0, 10.0, 0.0, 3.0, 0.0)}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "adr"
    length: float | None = None
    amplitude: float | None = None
    height: float = 1.0
    n_elements: int = 80
    m: int = 8
    m_p: int = 5
    m_u: int | None = None
    nu_ref: float = 5.0
    rho: float = 1.0
    order_axial: int = 8
    order_transverse: int = 64
    domain: tuple = ()
    train_size: int = 100
    train_seed: int = 42
    method: str = "both"
    n: int | None = None
    energy: float | None = None
    eta_bar: float = 0.0
    alpha_lb: float = 1.0
    query: tuple = ()
    test_size: int = 100
    test_seed: int = 7
    repeats: int = 5
    m_list: tuple = (25, 50, 100, 200, 300, 400, 500)
    ns_list: tuple = (0, 1, 2, 3, 4)
    out: str = "results"
    extra: dict = field(default_factory=dict)

    @property
    def param_names(self) -> tuple:
        return PARAM_ORDER[self.problem]

    def validated(self) -> "ExperimentConfig":
        """Fill problem defaults and check consistency."""
        if self.problem not in PARAM_ORDER:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        stokes = self.problem == "stokes"
        cfg = replace(
            self,
            length=self.length if self.length is not None else (6.0 if stokes else 4.0),
            amplitude=self.amplitude if self.amplitude is not None else (0.4 if stokes else 0.2),
            n=self.n if self.n is not None else (4 if stokes else 20),
            domain=self.domain or tuple(DEFAULT_DOMAINS[self.problem][k] for k in self.param_names),
            query=self.query or DEFAULT_QUERY[self.problem],
        )
        if cfg.method not in ("hipod", "hirb", "both"):
            raise ConfigurationError(f"method must be hipod, hirb or both (got {cfg.method!r})")
        if cfg.train_size < 1:
            raise ConfigurationError("train.size (M) must be at least 1")
        if cfg.test_size < 1:
            raise ConfigurationError("test.size must be at least 1")
        if cfg.n < 1:
            raise ConfigurationError("rom.n must be at least 1")
        if cfg.n > cfg.train_size:
            raise ConfigurationError(f"rom.n = {cfg.n} exceeds train.size = {cfg.train_size}")
        if cfg.energy is not None and not 0 < cfg.energy < 1:
            raise ConfigurationError("rom.energy must lie in (0, 1)")
        if cfg.n_elements < 1 or cfg.repeats < 1:
            raise ConfigurationError("disc.n_elements and timing.repeats must be positive")
        if len(cfg.domain) != len(cfg.param_names):
            raise ConfigurationError("parameter domain has the wrong number of intervals")
        for name, (lo, hi) in zip(cfg.param_names, cfg.domain):
            if hi < lo:
                raise ConfigurationError(f"empty interval for {name}")
        if len(cfg.query) != len(cfg.param_names):
            raise ConfigurationError(f"query.mu needs {len(cfg.param_names)} components")
        if stokes:
            m_u = cfg.m_p + 2 if cfg.m_u is None else cfg.m_u
            if m_u != cfg.m_p + 2:
                raise ConfigurationError("disc.m_u must equal disc.m_p + 2")
            cfg = replace(cfg, m_u=m_u)
        if list(cfg.m_list) != sorted(cfg.m_list) or min(cfg.m_list, default=1) < 1:
            raise ConfigurationError("offline.m_list must be increasing positive integers")
        return cfg


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(";", ",").split(",") if t.strip())


_SCALAR_KEYS = {
    "problem": ("problem", str),
    "map.length": ("length", float),
    "map.amplitude": ("amplitude", float),
    "map.height": ("height", float),
    "disc.n_elements": ("n_elements", int),
    "disc.m": ("m", int),
    "disc.m_p": ("m_p", int),
    "disc.m_u": ("m_u", int),
    "disc.nu_ref": ("nu_ref", float),
    "disc.rho": ("rho", float),
    "disc.order_axial": ("order_axial", int),
    "disc.order_transverse": ("order_transverse", int),
    "train.size": ("train_size", int),
    "train.seed": ("train_seed", int),
    "rom.method": ("method", str),
    "rom.n": ("n", int),
    "rom.energy": ("energy", float),
    "rom.eta_bar": ("eta_bar", float),
    "rom.alpha_lb": ("alpha_lb", float),
    "query.mu": ("query", _floats),
    "test.size": ("test_size", int),
    "test.seed": ("test_seed", int),
    "timing.repeats": ("repeats", int),
    "offline.m_list": ("m_list", _ints),
    "infsup.ns": ("ns_list", _ints),
    "out": ("out", str),
}


def parse_config(text: str, validate: bool = True) -> ExperimentConfig:
    values: dict = {}
    domain: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("domain."):
            bounds = _floats(val)
            if len(bounds) != 2:
                raise ConfigurationError(f"line {lineno}: {key} needs 'lo, hi'")
            domain[key[7:]] = bounds
            continue
        if key not in _SCALAR_KEYS:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        attr, conv = _SCALAR_KEYS[key]
        try:
            values[attr] = conv(val)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    cfg = ExperimentConfig(**values)
    if domain:
        if cfg.problem not in PARAM_ORDER:
            raise ConfigurationError(f"unknown problem {cfg.problem!r}")
        unknown = set(domain) - set(PARAM_ORDER[cfg.problem])
        if unknown:
            raise ConfigurationError(f"unknown parameters in domain: {sorted(unknown)}")
        full = dict(DEFAULT_DOMAINS[cfg.problem], **domain)
        cfg = replace(cfg, domain=tuple(full[k] for k in PARAM_ORDER[cfg.problem]))
    return cfg.validated() if validate else cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())

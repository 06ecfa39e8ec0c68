"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are hard errors so a
typo in a physical constant cannot silently fall back to a default.
"""

from dataclasses import dataclass, fields, asdict

from .errors import ParameterError
from .params import PhysicalParams, Geometry
from .operator import VARIANTS
from .stability import PRESETS
from .symbols import BC_SETS

EXPERIMENTS = (
    "spectrum", "resolvent", "evolve", "decay-probe", "symbol-scan", "ls-check",
    "gc-scan", "dissipativity", "trace-check", "all",
)
_PARAM_KEYS = tuple(f.name for f in fields(PhysicalParams))


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 1.0
    beta: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0
    rho0: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    sigma: float = 0.0
    m: float = 0.0
    kappa: float = 1.0
    mu: float = 0.3
    r_in: float = 1.0
    r_out: float = 2.0
    n_annulus: int = 32
    n_disk: int = 32
    k_max: int = 24
    variant: str = "full"
    experiment: str = "spectrum"
    lam_min: float = 2.0
    lam_max: float = 200.0
    points_per_decade: int = 12
    resolvent_checks: bool = True
    t_final: float = 10.0
    dt: float = 0.05
    preset: str = "mixed"
    smooth: bool = False
    fit_start: float = 0.0
    fit_end: float = 0.0
    grid_density: int = 64
    ls_n: int = 32
    bc_sets: str = "B1,B2"
    routh_samples: int = 10000
    samples: int = 200
    x0_x: float = 0.0
    x0_y: float = 0.0
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        self.params()
        self.geometry()
        for name in ("n_annulus", "n_disk"):
            if getattr(self, name) < 8:
                raise ParameterError(f"{name} must be >= 8, got {getattr(self, name)}", name)
        if self.k_max < 0:
            raise ParameterError(f"k_max must be >= 0, got {self.k_max}", "k_max")
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}", "experiment")
        if self.variant not in VARIANTS:
            raise ParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}", "variant")
        if self.preset not in PRESETS:
            raise ParameterError(f"preset must be one of {PRESETS}, got {self.preset!r}", "preset")
        if not 0 < self.lam_min < self.lam_max:
            raise ParameterError("need 0 < lam_min < lam_max", "lam_min")
        if self.points_per_decade < 1:
            raise ParameterError("points_per_decade must be >= 1", "points_per_decade")
        if self.dt <= 0 or self.t_final <= 0:
            raise ParameterError("dt and t_final must be > 0", "dt")
        if self.fit_start < 0 or self.fit_end < 0:
            raise ParameterError("fit window bounds must be >= 0", "fit_start")
        for name in ("grid_density", "ls_n", "routh_samples", "samples"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1", name)
        for b in self.bc_list():
            if b not in BC_SETS:
                raise ParameterError(f"bc_sets entries must be in {BC_SETS}, got {b!r}", "bc_sets")
        if not 0 <= self.seed < 2 ** 64:
            raise ParameterError("seed must be an unsigned 64-bit integer", "seed")

    def params(self):
        return PhysicalParams(**{k: getattr(self, k) for k in _PARAM_KEYS})

    def geometry(self):
        return Geometry(r_in=self.r_in, r_out=self.r_out)

    def bc_list(self):
        return tuple(s.strip() for s in self.bc_sets.split(",") if s.strip())

    def with_(self, **changes):
        d = asdict(self)
        d.update(changes)
        return RunConfig(**d)

    def as_dict(self):
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key, raw):
    typ = _FIELD_TYPES[key]
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw, 0)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ParameterError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}", key) from None
    return raw


def parse_config(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'", None)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ParameterError(f"line {lineno}: unknown key {key!r}", key)
        if key in values:
            raise ParameterError(f"line {lineno}: duplicate key {key!r}", key)
        values[key] = _convert(key, raw)
    try:
        return RunConfig(**values)
    except ParameterError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParameterError(str(exc), None) from exc


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_config(cfg):
    """Serialize every field; ``parse_config(format_config(c)) == c``."""
    out = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        out.append(f"{f.name} = {s}")
    return "\n".join(out) + "\n"


def config_diff(a, b):
    """Fields whose values differ, as ``{name: (a_value, b_value)}``."""
    return {f.name: (getattr(a, f.name), getattr(b, f.name))
            for f in fields(RunConfig) if getattr(a, f.name) != getattr(b, f.name)}

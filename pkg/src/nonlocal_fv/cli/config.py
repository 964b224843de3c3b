"""Run configuration: YAML parsing, validation and canonical dumping.

Every problem found during validation is collected (with the YAML line
where possible) and reported together in one :class:`ConfigError`.  The
grammar is documented in ``docs/config.md``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import yaml

from ..errors import ConfigError, InvalidArgument
from ..kernels import FAMILIES, KernelSpec

__all__ = [
    "MODES",
    "GridConfig",
    "TimeConfig",
    "SolverConfig",
    "Gaussian",
    "SpeciesConfig",
    "KernelConfig",
    "PoissonConfig",
    "PotentialConfig",
    "OutputConfig",
    "ConvergenceConfig",
    "SweepConfig",
    "RegularizationConfig",
    "BenchmarkConfig",
    "RunConfig",
    "parse_config",
    "load_config",
    "dump_config",
]

MODES = (
    "transient",
    "keller_segel",
    "convergence_space",
    "convergence_time",
    "regularization_compare",
    "eta_sweep",
    "benchmark",
)


# ----------------------------------------------------------------------------
# YAML loading with line numbers


class _LineDict(dict):
    line: int = 0
    key_lines: dict


class _LineList(list):
    line: int = 0


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in out:
            raise ConfigError(f"line {key_node.start_mark.line + 1}: duplicate key {key!r}")
        out[key] = loader.construct_object(value_node, deep=True)
        out.key_lines[key] = key_node.start_mark.line + 1
    return out


def _construct_sequence(loader, node):
    out = _LineList(loader.construct_object(child, deep=True) for child in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


class _Reader:
    """Typed key access that records problems instead of raising."""

    def __init__(self):
        self.problems: list[str] = []

    def _where(self, mapping, key, path):
        line = getattr(mapping, "key_lines", {}).get(key) or getattr(mapping, "line", None)
        return f"{path} (line {line})" if line else path

    def error(self, msg):
        self.problems.append(msg)

    def section(self, parent, key, path, required=True):
        if parent is None:
            return None
        if key not in parent or parent[key] is None:
            if required:
                self.error(f"{path}: missing required section")
            return None
        val = parent[key]
        if not isinstance(val, dict):
            self.error(f"{self._where(parent, key, path)}: expected a mapping")
            return None
        return val

    def get(self, mapping, key, path, kind, required=False, default=None, check=None, msg=None):
        if mapping is None:
            return default
        if key not in mapping or mapping[key] is None:
            if required:
                self.error(f"{path}: missing required key")
            return default
        raw = mapping[key]
        where = self._where(mapping, key, path)
        try:
            val = _coerce(raw, kind)
        except (TypeError, ValueError) as exc:
            self.error(f"{where}: {exc}")
            return default
        if check is not None and not check(val):
            self.error(f"{where}: {msg or 'invalid value'} (got {raw!r})")
            return default
        return val

    def unknown(self, mapping, allowed, path):
        if mapping is None:
            return
        for key in mapping:
            if key not in allowed:
                line = getattr(mapping, "key_lines", {}).get(key)
                where = f"{path}.{key}" if path else str(key)
                self.error(f"{where}{f' (line {line})' if line else ''}: unknown key")


def _coerce(raw, kind):
    if kind == "float":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise TypeError(f"expected a number, got {type(raw).__name__}")
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v
    if kind == "int":
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or int(raw) != raw:
            raise TypeError(f"expected an integer, got {raw!r}")
        return int(raw)
    if kind == "str":
        if not isinstance(raw, str):
            raise TypeError(f"expected a string, got {type(raw).__name__}")
        return raw
    if kind == "bool":
        if not isinstance(raw, bool):
            raise TypeError(f"expected true/false, got {raw!r}")
        return raw
    if kind in ("floats", "ints"):
        if not isinstance(raw, list):
            raise TypeError("expected a list")
        inner = kind[:-1]
        return tuple(_coerce(v, inner) for v in raw)
    raise AssertionError(kind)


# ----------------------------------------------------------------------------
# configuration dataclasses


@dataclass(frozen=True)
class GridConfig:
    dim: int
    L: tuple  # half-widths per axis
    N: tuple  # half grid counts per axis


@dataclass(frozen=True)
class TimeConfig:
    dt: float
    t_end: float
    diag_stride: int = 1
    snapshot_stride: int = 0
    blowup_ceiling: Optional[float] = None


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-13
    max_iter: Optional[int] = None


@dataclass(frozen=True)
class Gaussian:
    """amplitude * exp(-rate * |x - center|^2)."""

    amplitude: float
    center: tuple
    rate: float


@dataclass(frozen=True)
class SpeciesConfig:
    valence: int
    gaussians: tuple = ()
    table: Optional[str] = None


@dataclass(frozen=True)
class KernelConfig:
    family: str
    alpha: Optional[float] = None
    eps: Optional[float] = None
    eta: float = 1.0
    sign: float = 1.0
    evaluation: str = "tensor"

    def spec(self, dim: int) -> KernelSpec:
        return KernelSpec(self.family, self.alpha, self.eps, self.eta, self.sign, dim)


@dataclass(frozen=True)
class PoissonConfig:
    alpha: float
    beta: float
    g_left: float
    g_right: float
    family: str = "poisson_robin"


@dataclass(frozen=True)
class PotentialConfig:
    form: str = "none"
    a: float = 0.0
    wells: tuple = ()  # (amplitude, rate, center) triples
    couple_valence: bool = False


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    prefix: str = "run"


@dataclass(frozen=True)
class ConvergenceConfig:
    N: tuple = ()
    reference_N: Optional[int] = None
    dt: tuple = ()
    reference_dt: Optional[float] = None
    cauchy: bool = False


@dataclass(frozen=True)
class SweepConfig:
    eta: tuple
    kernel: str = "W"


@dataclass(frozen=True)
class RegularizationConfig:
    eps: tuple
    N: tuple
    pointwise_K: bool = True


@dataclass(frozen=True)
class BenchmarkConfig:
    N: tuple
    repeats: int = 3
    direct_max_nodes: int = 4096
    kernel: str = "W"


@dataclass(frozen=True)
class RunConfig:
    mode: str
    grid: GridConfig
    time: Optional[TimeConfig]
    species: tuple
    K: Any = None  # KernelConfig | PoissonConfig | None
    W: Optional[KernelConfig] = None
    potential: PotentialConfig = PotentialConfig()
    solver: SolverConfig = SolverConfig()
    output: OutputConfig = OutputConfig()
    convergence: Optional[ConvergenceConfig] = None
    sweep: Optional[SweepConfig] = None
    regularization: Optional[RegularizationConfig] = None
    benchmark: Optional[BenchmarkConfig] = None
    name: str = ""

    @property
    def valences(self) -> tuple:
        return tuple(s.valence for s in self.species)


# ----------------------------------------------------------------------------
# parsing


_TOP_KEYS = {"name", "mode", "grid", "time", "solver", "species", "kernels", "potential", "output",
             "convergence", "sweep", "regularization", "benchmark"}


def _parse_grid(r: _Reader, doc):
    g = r.section(doc, "grid", "grid")
    if g is None:
        return None
    dim = r.get(g, "dim", "grid.dim", "int", required=True, check=lambda v: v in (1, 2), msg="dim must be 1 or 2")
    if dim == 2:
        r.unknown(g, {"dim", "L", "Lx", "Ly", "N", "Nx", "Ny"}, "grid")
        L = r.get(g, "L", "grid.L", "float")
        Lx = r.get(g, "Lx", "grid.Lx", "float", default=L)
        Ly = r.get(g, "Ly", "grid.Ly", "float", default=L)
        N = r.get(g, "N", "grid.N", "int")
        Nx = r.get(g, "Nx", "grid.Nx", "int", default=N)
        Ny = r.get(g, "Ny", "grid.Ny", "int", default=N)
        Ls, Ns = (Lx, Ly), (Nx, Ny)
        names = (("grid.Lx", "grid.Ly"), ("grid.Nx", "grid.Ny"))
    else:
        r.unknown(g, {"dim", "L", "N"}, "grid")
        Ls = (r.get(g, "L", "grid.L", "float", required=True),)
        Ns = (r.get(g, "N", "grid.N", "int", required=True),)
        names = (("grid.L",), ("grid.N",))
    if dim is None:
        return None
    ok = True
    for L, name in zip(Ls, names[0]):
        if L is None:
            r.error(f"{name}: missing required key")
            ok = False
        elif L <= 0:
            r.error(f"{name}: must be positive (got {L})")
            ok = False
    for N, name in zip(Ns, names[1]):
        if N is None:
            r.error(f"{name}: missing required key")
            ok = False
        elif N < 2:
            r.error(f"{name}: half grid count must be >= 2 (got {N})")
            ok = False
    return GridConfig(dim, tuple(Ls), tuple(Ns)) if ok else None


def _parse_time(r: _Reader, doc, required: bool):
    t = r.section(doc, "time", "time", required=required)
    if t is None:
        return None
    r.unknown(t, {"dt", "t_end", "diag_stride", "snapshot_stride", "blowup_ceiling"}, "time")
    pos = dict(check=lambda v: v > 0, msg="must be positive")
    dt = r.get(t, "dt", "time.dt", "float", required=True, **pos)
    t_end = r.get(t, "t_end", "time.t_end", "float", required=True, check=lambda v: v >= 0, msg="must be >= 0")
    diag = r.get(t, "diag_stride", "time.diag_stride", "int", default=1, **pos)
    snap = r.get(t, "snapshot_stride", "time.snapshot_stride", "int", default=0,
                 check=lambda v: v >= 0, msg="must be >= 0")
    ceil = r.get(t, "blowup_ceiling", "time.blowup_ceiling", "float", **pos)
    if dt is None or t_end is None:
        return None
    return TimeConfig(dt, t_end, diag, snap, ceil)


def _parse_species(r: _Reader, doc, dim):
    items = doc.get("species")
    if not isinstance(items, list) or not items:
        r.error("species: expected a non-empty list")
        return ()
    out = []
    for i, item in enumerate(items):
        path = f"species[{i}]"
        if not isinstance(item, dict):
            r.error(f"{path}: expected a mapping")
            continue
        r.unknown(item, {"valence", "initial", "table"}, path)
        z = r.get(item, "valence", f"{path}.valence", "int", required=True)
        table = r.get(item, "table", f"{path}.table", "str")
        gs = []
        init = item.get("initial")
        if init is None and table is None:
            r.error(f"{path}: needs 'initial' Gaussians or a 'table'")
        if init is not None:
            if not isinstance(init, list):
                init = [init]
            for k, gd in enumerate(init):
                gp = f"{path}.initial[{k}]"
                if not isinstance(gd, dict):
                    r.error(f"{gp}: expected a mapping")
                    continue
                r.unknown(gd, {"amplitude", "center", "rate", "width"}, gp)
                amp = r.get(gd, "amplitude", f"{gp}.amplitude", "float", required=True)
                center = r.get(gd, "center", f"{gp}.center", "floats", default=(0.0,) * (dim or 1))
                rate = r.get(gd, "rate", f"{gp}.rate", "float", check=lambda v: v > 0, msg="must be positive")
                width = r.get(gd, "width", f"{gp}.width", "float", check=lambda v: v > 0, msg="must be positive")
                if (rate is None) == (width is None):
                    r.error(f"{gp}: give exactly one of 'rate' or 'width'")
                    continue
                if rate is None:
                    rate = 1.0 / (2.0 * width * width)
                if dim is not None and len(center) != dim:
                    r.error(f"{gp}.center: expected {dim} coordinates, got {len(center)}")
                    continue
                if amp is not None:
                    gs.append(Gaussian(amp, tuple(center), rate))
        if z is not None:
            out.append(SpeciesConfig(z, tuple(gs), table))
    return tuple(out)


def _parse_kernel(r: _Reader, kd, path, dim, allow_poisson):
    if kd is None or kd == "none":
        return None
    if not isinstance(kd, dict):
        r.error(f"{path}: expected a mapping or 'none'")
        return None
    family = r.get(kd, "family", f"{path}.family", "str", required=True)
    if family is None:
        return None
    if family == "none":
        r.unknown(kd, {"family"}, path)
        return None
    if family == "poisson_robin":
        if not allow_poisson:
            r.error(f"{path}.family: poisson_robin is only available for K")
            return None
        if dim != 1:
            r.error(f"{path}.family: poisson_robin is only available in 1D")
        r.unknown(kd, {"family", "bc"}, path)
        bc = r.section(kd, "bc", f"{path}.bc")
        if bc is None:
            return None
        r.unknown(bc, {"alpha", "beta", "g_left", "g_right"}, f"{path}.bc")
        vals = [r.get(bc, k, f"{path}.bc.{k}", "float", required=True) for k in ("alpha", "beta", "g_left", "g_right")]
        if None in vals:
            return None
        if vals[0] == 0.0:
            r.error(f"{path}.bc.alpha: must be non-zero (alpha = 0 is a singular Neumann problem)")
            return None
        return PoissonConfig(*vals)
    r.unknown(kd, {"family", "alpha", "eps", "eta", "sign", "evaluation"}, path)
    if family not in FAMILIES:
        r.error(f"{path}.family: unknown kernel family {family!r} (expected one of {', '.join(FAMILIES)} or poisson_robin)")
        return None
    alpha = r.get(kd, "alpha", f"{path}.alpha", "float")
    eps = r.get(kd, "eps", f"{path}.eps", "float")
    eta = r.get(kd, "eta", f"{path}.eta", "float", default=1.0)
    sign = r.get(kd, "sign", f"{path}.sign", "float", default=1.0)
    evaluation = r.get(kd, "evaluation", f"{path}.evaluation", "str", default="tensor",
                       check=lambda v: v in ("tensor", "pointwise"), msg="must be 'tensor' or 'pointwise'")
    kc = KernelConfig(family, alpha, eps, eta, sign, evaluation)
    if dim is not None:
        try:
            spec = kc.spec(dim)
        except InvalidArgument as exc:
            r.error(f"{path}: {exc}")
            return None
        if evaluation == "pointwise" and spec.singular:
            r.error(f"{path}.evaluation: pointwise evaluation needs a non-singular kernel")
            return None
    return kc


def _parse_potential(r: _Reader, doc, dim):
    p = doc.get("potential")
    if p is None or p == "none":
        return PotentialConfig()
    if not isinstance(p, dict):
        r.error("potential: expected a mapping or 'none'")
        return PotentialConfig()
    r.unknown(p, {"form", "a", "wells", "couple_valence"}, "potential")
    form = r.get(p, "form", "potential.form", "str", required=True,
                 check=lambda v: v in ("none", "quadratic", "linear", "multi_well"),
                 msg="form must be none, quadratic, linear or multi_well")
    a = r.get(p, "a", "potential.a", "float", default=0.0)
    couple = r.get(p, "couple_valence", "potential.couple_valence", "bool", default=False)
    wells = []
    raw = p.get("wells") or []
    if raw and form != "multi_well":
        r.error("potential.wells: only used by the multi_well form")
    for i, w in enumerate(raw if isinstance(raw, list) else []):
        wp = f"potential.wells[{i}]"
        if not isinstance(w, dict):
            r.error(f"{wp}: expected a mapping")
            continue
        r.unknown(w, {"amplitude", "rate", "center"}, wp)
        amp = r.get(w, "amplitude", f"{wp}.amplitude", "float", required=True)
        rate = r.get(w, "rate", f"{wp}.rate", "float", required=True)
        center = r.get(w, "center", f"{wp}.center", "floats", required=True)
        if None in (amp, rate, center):
            continue
        if dim is not None and len(center) != dim:
            r.error(f"{wp}.center: expected {dim} coordinates")
            continue
        wells.append((amp, rate, tuple(center)))
    return PotentialConfig(form or "none", a, tuple(wells), couple)


def _parse_mode_block(r: _Reader, doc, mode):
    conv = sweep = reg = bench = None
    if mode in ("convergence_space", "convergence_time"):
        c = r.section(doc, "convergence", "convergence")
        if c is not None:
            r.unknown(c, {"N", "reference_N", "dt", "reference_dt", "cauchy"}, "convergence")
            Ns = r.get(c, "N", "convergence.N", "ints", default=())
            dts = r.get(c, "dt", "convergence.dt", "floats", default=())
            ref_N = r.get(c, "reference_N", "convergence.reference_N", "int")
            ref_dt = r.get(c, "reference_dt", "convergence.reference_dt", "float")
            cauchy = r.get(c, "cauchy", "convergence.cauchy", "bool", default=False)
            if mode == "convergence_space":
                if len(Ns) < (4 if cauchy else 3):
                    r.error("convergence.N: need at least three error points")
                if any(n < 2 for n in Ns):
                    r.error("convergence.N: half grid counts must be >= 2")
                if not cauchy and ref_N is None:
                    r.error("convergence.reference_N: required unless cauchy is true")
            else:
                if len(dts) < 3:
                    r.error("convergence.dt: need at least three time steps")
                if any(d <= 0 for d in dts):
                    r.error("convergence.dt: time steps must be positive")
                if ref_dt is None:
                    r.error("convergence.reference_dt: missing required key")
            conv = ConvergenceConfig(Ns, ref_N, dts, ref_dt, cauchy)
    if mode == "eta_sweep":
        s = r.section(doc, "sweep", "sweep")
        if s is not None:
            r.unknown(s, {"eta", "kernel"}, "sweep")
            etas = r.get(s, "eta", "sweep.eta", "floats", required=True, default=())
            kern = r.get(s, "kernel", "sweep.kernel", "str", default="W",
                         check=lambda v: v in ("K", "W"), msg="must be K or W")
            if not etas:
                r.error("sweep.eta: need at least one value")
            sweep = SweepConfig(etas, kern)
    if mode == "regularization_compare":
        s = r.section(doc, "regularization", "regularization")
        if s is not None:
            r.unknown(s, {"eps", "N", "pointwise_K"}, "regularization")
            eps = r.get(s, "eps", "regularization.eps", "floats", required=True, default=())
            Ns = r.get(s, "N", "regularization.N", "ints", required=True, default=())
            pk = r.get(s, "pointwise_K", "regularization.pointwise_K", "bool", default=True)
            if any(e <= 0 for e in eps):
                r.error("regularization.eps: eps must be > 0 (eps = 0 is the singular kernel itself)")
            if not eps:
                r.error("regularization.eps: need at least one value")
            if not Ns:
                r.error("regularization.N: need at least one grid")
            reg = RegularizationConfig(eps, Ns, pk)
    if mode == "benchmark":
        s = r.section(doc, "benchmark", "benchmark")
        if s is not None:
            r.unknown(s, {"N", "repeats", "direct_max_nodes", "kernel"}, "benchmark")
            Ns = r.get(s, "N", "benchmark.N", "ints", required=True, default=())
            reps = r.get(s, "repeats", "benchmark.repeats", "int", default=3,
                         check=lambda v: v >= 1, msg="must be >= 1")
            dmax = r.get(s, "direct_max_nodes", "benchmark.direct_max_nodes", "int", default=4096,
                         check=lambda v: v >= 0, msg="must be >= 0")
            kern = r.get(s, "kernel", "benchmark.kernel", "str", default="W",
                         check=lambda v: v in ("K", "W"), msg="must be K or W")
            if not Ns:
                r.error("benchmark.N: need at least one grid")
            bench = BenchmarkConfig(Ns, reps, dmax, kern)
    for key, wanted in (("convergence", ("convergence_space", "convergence_time")), ("sweep", ("eta_sweep",)),
                        ("regularization", ("regularization_compare",)), ("benchmark", ("benchmark",))):
        if key in doc and mode not in wanted:
            r.error(f"{key}: section is not used by mode {mode!r}")
    return conv, sweep, reg, bench


def parse_config(text: str) -> RunConfig:
    """Parse and validate a YAML run description.

    Raises
    ------
    ConfigError
        On YAML syntax errors (with line and column) or on any validation
        problem; ``problems`` lists all of them.
    """
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"YAML parse error at {where}: {exc.problem}") from None
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a YAML mapping")
    r = _Reader()
    r.unknown(doc, _TOP_KEYS, "")
    name = r.get(doc, "name", "name", "str", default="")
    mode = r.get(doc, "mode", "mode", "str", required=True, check=lambda v: v in MODES,
                 msg=f"mode must be one of {', '.join(MODES)}")
    grid = _parse_grid(r, doc)
    dim = grid.dim if grid else None
    time = _parse_time(r, doc, required=mode != "benchmark")
    species = _parse_species(r, doc, dim) if mode != "benchmark" or "species" in doc else ()

    kernels = r.section(doc, "kernels", "kernels", required=False) or {}
    r.unknown(kernels, {"K", "W"}, "kernels")
    K = _parse_kernel(r, kernels.get("K"), "kernels.K", dim, allow_poisson=True)
    W = _parse_kernel(r, kernels.get("W"), "kernels.W", dim, allow_poisson=False)
    potential = _parse_potential(r, doc, dim)

    s = r.section(doc, "solver", "solver", required=False)
    r.unknown(s, {"tol", "max_iter"}, "solver")
    solver = SolverConfig(
        r.get(s, "tol", "solver.tol", "float", default=1e-13, check=lambda v: 0 < v <= 1e-6,
              msg="tolerance must lie in (0, 1e-6]"),
        r.get(s, "max_iter", "solver.max_iter", "int", check=lambda v: v >= 1, msg="must be >= 1"),
    )
    o = r.section(doc, "output", "output", required=False)
    r.unknown(o, {"dir", "prefix"}, "output")
    output = OutputConfig(r.get(o, "dir", "output.dir", "str", default="out"),
                          r.get(o, "prefix", "output.prefix", "str", default="run"))

    conv = sweep = reg = bench = None
    if mode is not None:
        conv, sweep, reg, bench = _parse_mode_block(r, doc, mode)
        if mode == "keller_segel":
            if K is not None:
                r.error("kernels.K: keller_segel runs have no K kernel")
            if W is None or W.family != "log2d":
                r.error("kernels.W: keller_segel runs need the log2d kernel")
            if dim is not None and dim != 2:
                r.error("grid.dim: keller_segel runs are 2D")
        if mode == "regularization_compare":
            if dim is not None and dim != 1:
                r.error("grid.dim: regularization_compare is 1D")
            if W is None or W.family != "power_law":
                r.error("kernels.W: regularization_compare needs a singular power_law W")
        if mode == "eta_sweep" and sweep is not None:
            target = K if sweep.kernel == "K" else W
            if not isinstance(target, KernelConfig):
                r.error(f"kernels.{sweep.kernel}: eta_sweep needs this kernel to be defined")
        if mode == "benchmark" and bench is not None:
            target = K if bench.kernel == "K" else W
            if not isinstance(target, KernelConfig):
                r.error(f"kernels.{bench.kernel}: benchmark needs this kernel to be defined")
    if r.problems:
        raise ConfigError(r.problems)
    return RunConfig(mode, grid, time, species, K, W, potential, solver, output, conv, sweep, reg, bench, name)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ----------------------------------------------------------------------------
# canonical dump


def _clean(obj):
    if isinstance(obj, tuple):
        return [_clean(v) for v in obj]
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    return obj


def _kernel_dict(k):
    if k is None:
        return "none"
    if isinstance(k, PoissonConfig):
        return {"family": "poisson_robin",
                "bc": {"alpha": k.alpha, "beta": k.beta, "g_left": k.g_left, "g_right": k.g_right}}
    d = {"family": k.family}
    for key in ("alpha", "eps"):
        if getattr(k, key) is not None:
            d[key] = getattr(k, key)
    d.update(eta=k.eta, sign=k.sign, evaluation=k.evaluation)
    return d


def to_dict(cfg: RunConfig) -> dict:
    g = cfg.grid
    grid = {"dim": g.dim}
    if g.dim == 1:
        grid.update(L=g.L[0], N=g.N[0])
    else:
        grid.update(Lx=g.L[0], Ly=g.L[1], Nx=g.N[0], Ny=g.N[1])
    d = {"name": cfg.name, "mode": cfg.mode, "grid": grid}
    if cfg.time is not None:
        t = asdict(cfg.time)
        if t["blowup_ceiling"] is None:
            del t["blowup_ceiling"]
        d["time"] = t
    solver = {"tol": cfg.solver.tol}
    if cfg.solver.max_iter is not None:
        solver["max_iter"] = cfg.solver.max_iter
    d["solver"] = solver
    species = []
    for s in cfg.species:
        item = {"valence": s.valence}
        if s.gaussians:
            item["initial"] = [{"amplitude": gs.amplitude, "center": list(gs.center), "rate": gs.rate}
                               for gs in s.gaussians]
        if s.table is not None:
            item["table"] = s.table
        species.append(item)
    if species:
        d["species"] = species
    d["kernels"] = {"K": _kernel_dict(cfg.K), "W": _kernel_dict(cfg.W)}
    p = cfg.potential
    pot = {"form": p.form, "a": p.a, "couple_valence": p.couple_valence}
    if p.wells:
        pot["wells"] = [{"amplitude": a, "rate": k, "center": list(c)} for a, k, c in p.wells]
    d["potential"] = pot
    d["output"] = asdict(cfg.output)
    if cfg.convergence is not None:
        c = asdict(cfg.convergence)
        d["convergence"] = {k: v for k, v in c.items() if v not in (None, ())}
    for key in ("sweep", "regularization", "benchmark"):
        block = getattr(cfg, key)
        if block is not None:
            d[key] = asdict(block)
    return _clean(d)


def dump_config(cfg: RunConfig) -> str:
    """Canonical YAML text; ``parse_config(dump_config(c)) == c``."""
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)

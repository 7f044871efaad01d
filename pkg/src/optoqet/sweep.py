"""Sweeps over drive strength, temperature and model variant."""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import config as cfg
from .config import ConfigError
from .estimation import SOURCES, DegenerateRoot, NonPhysicalState, estimate
from .gaussian import SingularSystem
from .model import (
    REFERENCE_PARAMS,
    QUADRATURES,
    VARIANTS,
    GaussianityWarning,
    ModelError,
    Multistable,
    PhysicalParams,
    Unstable,
)

DRIVE_MIN = 1e8
DRIVE_MAX = 3.8e9
DEFAULT_POINTS = 60
TEMPERATURES = (0.0, 1e-3, 8e-2)
FORMATS = ("csv", "json", "svg")

COLUMNS = (
    ["E", "T", "variant", "status", "flags"]
    + ["alpha2", "log10_alpha2", "x0", "Delta_eff", "omega_eff", "g_eff", "n_bar"]
    + ["I11", "I22", "I12", "avg11", "avg22", "var11", "var22"]
    + ["It11", "It22", "It12", "avgt11", "avgt22", "vart11", "vart22"]
    + ["light_I11", "light_I22", "mech_I11", "mech_I22"]
    + [f"J_{q}_{i}{i}" for q in QUADRATURES for i in (1, 2)]
    + [f"rel_g{i}_{src}" for src in SOURCES for i in (1, 2)]
    + ["lyap_residual", "physical_margin"]
)
_NUMERIC = COLUMNS[5:]


def log_drive_grid(lo: float = DRIVE_MIN, hi: float = DRIVE_MAX, n: int = DEFAULT_POINTS) -> tuple:
    if n < 1:
        raise ConfigError("drive grid needs at least one point")
    if n == 1:
        return (float(lo),)
    return tuple(float(e) for e in np.logspace(math.log10(lo), math.log10(hi), n))


@dataclass(frozen=True)
class SweepConfig:
    base: PhysicalParams = REFERENCE_PARAMS
    drive_grid: tuple = field(default_factory=log_drive_grid)
    temperatures: tuple = TEMPERATURES
    variants: tuple = ("quadratic",)
    runs: int = 1
    out_dir: str = "out"
    formats: tuple = ("csv", "json")
    tolerances: dict = field(default_factory=dict)
    preset: str | None = None
    allow_multistable: bool = False
    workers: int = 1

    def __post_init__(self):
        grid = tuple(float(e) for e in self.drive_grid)
        if not grid:
            raise ConfigError("drive_grid is empty")
        if any(not (math.isfinite(e) and e > 0) for e in grid):
            raise ConfigError("drive_grid values must be positive and finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("drive_grid must be strictly increasing")
        temps = tuple(float(t) for t in self.temperatures)
        if not temps:
            raise ConfigError("temperatures is empty")
        if any(not (math.isfinite(t) and t >= 0) for t in temps):
            raise ConfigError("temperatures must be finite and >= 0")
        variants = tuple(self.variants)
        if not variants or any(v not in VARIANTS for v in variants) or len(set(variants)) != len(variants):
            raise ConfigError(f"variants must be a nonempty subset of {VARIANTS}, got {variants}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise ConfigError(f"runs must be a positive integer, got {self.runs!r}")
        formats = tuple(self.formats)
        if not formats:
            raise ConfigError("no output formats requested")
        if any(f not in FORMATS for f in formats):
            raise ConfigError(f"formats must be a subset of {FORMATS}, got {formats}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        object.__setattr__(self, "drive_grid", grid)
        object.__setattr__(self, "temperatures", temps)
        object.__setattr__(self, "variants", variants)
        object.__setattr__(self, "formats", formats)
        object.__setattr__(self, "runs", int(self.runs))
        object.__setattr__(self, "tolerances", dict(self.tolerances))

    def replace(self, **changes) -> "SweepConfig":
        return dataclasses.replace(self, **changes)

    def points(self):
        """Grid in output order: variant, then temperature, then drive."""
        for variant in self.variants:
            for T in self.temperatures:
                for E in self.drive_grid:
                    yield self.base.replace(drive=E, temperature=T, variant=variant)

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "drive_grid": list(self.drive_grid),
            "temperatures": list(self.temperatures),
            "variants": list(self.variants),
            "runs": self.runs,
            "out_dir": self.out_dir,
            "formats": list(self.formats),
            "tolerances": dict(sorted(self.tolerances.items())),
            "preset": self.preset,
            "allow_multistable": self.allow_multistable,
            "workers": self.workers,
        }

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "SweepConfig":
        """Build from parsed ``key = value`` pairs.

        ``preset`` (if present) supplies the starting configuration; drive
        grids come from ``drive_grid`` or from ``drive_min``, ``drive_max``
        and ``drive_points``. Keys prefixed ``tol.`` become tolerances, and
        any remaining key must be a model parameter.
        """
        values = dict(values)
        start = figure_preset(values.pop("preset")) if "preset" in values else cls()
        changes: dict = {}
        tolerances = dict(start.tolerances)
        base = start.base.to_dict()

        if "drive_grid" in values:
            changes["drive_grid"] = tuple(cfg.as_float("drive_grid", v) for v in cfg.as_list(values.pop("drive_grid")))
        span = [k for k in ("drive_min", "drive_max", "drive_points") if k in values]
        if span:
            if "drive_grid" in changes:
                raise ConfigError("give either drive_grid or drive_min/drive_max/drive_points")
            lo = cfg.as_float("drive_min", values.pop("drive_min", str(DRIVE_MIN)))
            hi = cfg.as_float("drive_max", values.pop("drive_max", str(DRIVE_MAX)))
            n = cfg.as_int("drive_points", values.pop("drive_points", str(DEFAULT_POINTS)))
            if n > 1 and not hi > lo:
                raise ConfigError("drive_max must exceed drive_min")
            if lo <= 0:
                raise ConfigError("drive_min must be positive")
            changes["drive_grid"] = log_drive_grid(lo, hi, n)
        if "temperatures" in values:
            changes["temperatures"] = tuple(
                cfg.as_float("temperatures", v) for v in cfg.as_list(values.pop("temperatures"))
            )
        if "variants" in values:
            changes["variants"] = tuple(cfg.as_list(values.pop("variants")))
        if "formats" in values:
            changes["formats"] = tuple(cfg.as_list(values.pop("formats")))
        if "runs" in values:
            changes["runs"] = cfg.as_int("runs", values.pop("runs"))
        if "workers" in values:
            changes["workers"] = cfg.as_int("workers", values.pop("workers"))
        if "out" in values:
            changes["out_dir"] = values.pop("out")
        if "allow_multistable" in values:
            changes["allow_multistable"] = cfg.as_bool("allow_multistable", values.pop("allow_multistable"))
        for key in [k for k in values if k.startswith("tol.")]:
            tolerances[key[4:]] = cfg.as_float(key, values.pop(key))
        changes["tolerances"] = tolerances

        aliases = {"E": "drive", "T": "temperature", "model_variant": "variant"}
        for key, value in values.items():
            name = aliases.get(key, key)
            if name not in base:
                raise ConfigError(f"unknown config key {key!r}")
            base[name] = value
        try:
            changes["base"] = PhysicalParams.from_mapping(base)
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return start.replace(**changes)

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        return cls.from_mapping(cfg.read_flat(path))


def _empty_record(params: PhysicalParams, status: str, flags: list[str]) -> dict:
    rec = dict(E=params.drive, T=params.temperature, variant=params.variant, status=status, flags=";".join(flags))
    rec.update(dict.fromkeys(_NUMERIC, math.nan))
    rec["n_bar"] = params.n_bar
    return rec


def evaluate_point(params: PhysicalParams, runs: int = 1, allow_multistable: bool = False) -> dict:
    """One sweep record. Model failures are recorded in ``status``, not raised."""
    flags: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", GaussianityWarning)
        try:
            rep = estimate(params, runs=runs, allow_multistable=allow_multistable)
        except Multistable:
            return _empty_record(params, "multistable", flags)
        except Unstable:
            return _empty_record(params, "unstable", flags)
        except (ModelError, DegenerateRoot, NonPhysicalState, SingularSystem, np.linalg.LinAlgError) as exc:
            return _empty_record(params, "error", [type(exc).__name__])
    if any(issubclass(w.category, GaussianityWarning) for w in caught):
        flags.append("low_photon")

    op, q = rep.op, rep.qfim
    rec = _empty_record(params, "ok", flags)
    rec.update(
        alpha2=op.photon_number,
        log10_alpha2=math.log10(op.photon_number) if op.photon_number > 0 else -math.inf,
        x0=op.x0,
        Delta_eff=op.Delta_eff,
        omega_eff=op.omega_eff,
        g_eff=op.g_eff,
        n_bar=op.n_bar,
    )
    w2 = params.omega_m**2
    for prefix, scale in (("", 1.0), ("t", w2)):
        rec[f"I{prefix}11"] = scale * q.I[0, 0]
        rec[f"I{prefix}22"] = scale * q.I[1, 1]
        rec[f"I{prefix}12"] = scale * q.I[0, 1]
        for i in (1, 2):
            rec[f"avg{prefix}{i}{i}"] = scale * q.averages_term[i - 1, i - 1]
            rec[f"var{prefix}{i}{i}"] = scale * q.variances_term[i - 1, i - 1]
    for i in (1, 2):
        rec[f"light_I{i}{i}"] = rep.light.I[i - 1, i - 1]
        rec[f"mech_I{i}{i}"] = rep.mechanics.I[i - 1, i - 1]
        for quad in QUADRATURES:
            rec[f"J_{quad}_{i}{i}"] = rep.fi[quad][i - 1, i - 1]
        for src in SOURCES:
            rec[f"rel_g{i}_{src}"] = rep.relative_errors(src)[i - 1]
    rec["lyap_residual"] = rep.lyapunov_residual
    rec["physical_margin"] = rep.physicality_margin
    return {key: (float(rec[key]) if key in _NUMERIC else rec[key]) for key in COLUMNS}


def _evaluate_args(args):
    return evaluate_point(*args)


def run_sweep(config: SweepConfig) -> list[dict]:
    """Evaluate every grid point, in the order given by ``SweepConfig.points``."""
    tasks = [(p, config.runs, config.allow_multistable) for p in config.points()]
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_evaluate_args, tasks, chunksize=max(1, len(tasks) // (4 * config.workers))))
    return [evaluate_point(*t) for t in tasks]


@dataclass(frozen=True)
class Curve:
    label: str
    column: str
    T: float
    variant: str = "quadratic"
    style: str = "-"


@dataclass(frozen=True)
class PlotSpec:
    title: str
    ylabel: str
    curves: tuple


_T_LABEL = {0.0: "T = 0", 1e-3: "T = 1 mK", 8e-2: "T = 80 mK"}


def _t_label(T: float) -> str:
    return _T_LABEL.get(T, f"T = {T:g} K")


def _fig3(i: int, T: float) -> PlotSpec:
    curves = [Curve("QFI", f"rel_g{i}_global", T)]
    curves += [Curve(q, f"rel_g{i}_{q}", T, style="--") for q in QUADRATURES]
    return PlotSpec(f"Quadrature measurements, g{i}, {_t_label(T)}", f"relative error on g{i}", tuple(curves))


def _decomposition(i: int, T: float) -> PlotSpec:
    curves = (
        Curve("QFI", f"It{i}{i}", T),
        Curve("averages", f"avgt{i}{i}", T, style=":"),
        Curve("variances", f"vart{i}{i}", T, style="--"),
    )
    return PlotSpec(f"QFI decomposition for dimensionless g{i}, {_t_label(T)}", f"QFI (dimensionless g{i})", curves)


def _local(i: int, temps) -> PlotSpec:
    curves = []
    for T in temps:
        for src, style in (("global", "-"), ("light", ":"), ("mechanics", "--")):
            curves.append(Curve(f"{src}, {_t_label(T)}", f"rel_g{i}_{src}", T, style=style))
    return PlotSpec(f"Global and local QFI, g{i}", f"relative error on g{i}", tuple(curves))


def _relative(i: int, temps, variants) -> PlotSpec:
    curves = [
        Curve(f"{v}, {_t_label(T)}", f"rel_g{i}_global", T, v, "-" if v == "quadratic" else "--")
        for v in variants
        for T in temps
    ]
    return PlotSpec(f"Relative error bound on g{i}", f"relative error on g{i}", tuple(curves))


_PRESETS = {
    "fig1a": (TEMPERATURES, ("linear", "quadratic"), lambda: _relative(1, TEMPERATURES, ("linear", "quadratic"))),
    "fig1b": (TEMPERATURES, ("quadratic",), lambda: _relative(2, TEMPERATURES, ("quadratic",))),
    "fig2a": ((0.0, 8e-2), ("quadratic",), lambda: _local(1, (0.0, 8e-2))),
    "fig2b": ((0.0, 8e-2), ("quadratic",), lambda: _local(2, (0.0, 8e-2))),
    "fig3a": ((8e-2,), ("quadratic",), lambda: _fig3(1, 8e-2)),
    "fig3b": ((8e-2,), ("quadratic",), lambda: _fig3(2, 8e-2)),
    "fig3c": ((0.0,), ("quadratic",), lambda: _fig3(1, 0.0)),
    "fig3d": ((0.0,), ("quadratic",), lambda: _fig3(2, 0.0)),
    "fig4a": ((0.0,), ("quadratic",), lambda: _decomposition(1, 0.0)),
    "fig4b": ((8e-2,), ("quadratic",), lambda: _decomposition(1, 8e-2)),
    "fig5a": ((0.0,), ("quadratic",), lambda: _decomposition(2, 0.0)),
    "fig5b": ((8e-2,), ("quadratic",), lambda: _decomposition(2, 8e-2)),
}
PRESET_NAMES = tuple(_PRESETS)


def figure_preset(name: str) -> SweepConfig:
    """Sweep configuration reproducing one published figure panel."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    temps, variants, _ = _PRESETS[name]
    return SweepConfig(
        temperatures=temps,
        variants=variants,
        formats=FORMATS,
        out_dir=f"out/{name}",
        preset=name,
    )


def plot_spec(config: SweepConfig) -> PlotSpec:
    """Curves to draw: the preset's panel, or ``Delta g1 / g1`` for every (variant, T)."""
    if config.preset in _PRESETS:
        return _PRESETS[config.preset][2]()
    return _relative(1, config.temperatures, config.variants)

"""TOML experiment configs: schema validation and construction of the objects they describe."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import tomli

from .errors import ConfigError
from .lattice import arc_predicate, build_circle_mesh, build_interval_mesh, decompose
from .model import (
    POTENTIAL_KINDS,
    ActionSpec,
    GradientEnergy,
    NonlocalKernel,
    QuadraticSite,
    SitePotential,
    Source,
    cut_boundary_stencil,
    inverse_laplacian_kernel,
)

GENERIC_KINDS = ("localization", "cluster")
EXEMPLAR_KINDS = ("annulus", "circle_wave", "nonlocal_source")

_NUM = (int, float)
_SCHEMA = {
    "": {"experiment": str, "name": str},
    "output": {"dir": str},
    "mesh": {"kind": str, "n_sites": int, "circumference": _NUM, "length": _NUM, "n_r": int, "n_theta": int},
    "action": {"total_time": _NUM, "time_steps": int, "mass": _NUM, "period": _NUM, "potential": list},
    "potential": {"kind": str, "stiffness": _NUM, "k": _NUM, "scale": _NUM, "amplitude": _NUM, "support": str, "function": str},
    "region": {"arc_start": _NUM, "arc_length": _NUM, "ratio_num": int, "ratio_den": int, "irrational": str, "cut_boundary": bool},
    "endpoints": {"initial": dict, "final": dict},
    "endpoint": {"kind": str, "amplitude": _NUM, "wavenumber": int, "value": _NUM},
    "solver": {"tol": _NUM, "method": str},
    "locality": {"epsilon": (float, int, str), "factor": _NUM, "expect": str},
    "semiclassical": {"hbar": _NUM, "max_defect": _NUM, "min_defect": _NUM},
    "seeds": {"strategy": str, "n_modes": int, "amplitude": _NUM},
    "source": {"amplitudes": list},
}
_SITE_FUNCTIONS = {
    "sine_gordon": (lambda p: 1 - np.cos(p), np.sin, np.cos),
    "quartic": (lambda p: 0.25 * p**4, lambda p: p**3, lambda p: 3 * p**2),
}


@dataclass
class ExperimentConfig:
    experiment: str
    name: str
    output_dir: Optional[str] = None
    sections: dict = field(default_factory=dict)
    source_text: str = ""

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def solver_tol(self) -> float:
        return float(self.get("solver", "tol", 1e-10))


def _locate(text: str, section: str, key: str):
    """Line and column of ``key`` inside ``[section]`` (best effort)."""
    current = ""
    pat = re.compile(r"^\s*(" + re.escape(key) + r")\s*=")
    for ln, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?", line)
        if head:
            current = head.group(1)
            continue
        m = pat.match(line)
        if m and (current == section or current.endswith("." + section) or not section):
            return ln, m.start(1) + 1
        inline = re.search(r"\b" + re.escape(key) + r"\s*=", line)
        if inline and (current == section or section in line):
            return ln, inline.start() + 1
    return None, None


def _fail(text, section, key, msg):
    line, col = _locate(text, section, key)
    where = f" (line {line}, column {col})" if line else ""
    raise ConfigError(f"{msg}{where}", line, col, key)


def _check_table(text, section: str, table: dict, schema_name: Optional[str] = None):
    schema = _SCHEMA[schema_name if schema_name is not None else section]
    for key, value in table.items():
        if key not in schema:
            label = f"{section}.{key}" if section else key
            _fail(text, section, key, f"unknown key {label!r}")
        want = schema[key]
        if isinstance(value, bool) and want is not bool:
            _fail(text, section, key, f"key {key!r} has the wrong type")
        if not isinstance(value, want):
            _fail(text, section, key, f"key {key!r} has the wrong type ({type(value).__name__})")


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc.msg} (line {exc.lineno}, column {exc.colno})", exc.lineno, exc.colno) from exc

    top = {k: v for k, v in data.items() if not isinstance(v, dict)}
    _check_table(text, "", top)
    for section, table in data.items():
        if not isinstance(table, dict):
            continue
        if section not in _SCHEMA or section in ("", "potential", "endpoint"):
            _fail(text, "", section, f"unknown section {section!r}")
        _check_table(text, section, table)
    for pot in data.get("action", {}).get("potential", []):
        if not isinstance(pot, dict):
            _fail(text, "action", "potential", "action.potential must be an array of tables")
        _check_table(text, "action.potential", pot, "potential")
        kind = pot.get("kind")
        if kind not in POTENTIAL_KINDS:
            _fail(text, "action.potential", "kind", f"unknown potential kind {kind!r} for key 'kind'")
    for which, ep in data.get("endpoints", {}).items():
        _check_table(text, "endpoints." + which, ep, "endpoint")

    from .checks import REGISTRY

    kind = data.get("experiment")
    if kind is None:
        _fail(text, "", "experiment", "missing key 'experiment'")
    if kind not in GENERIC_KINDS and kind not in REGISTRY:
        _fail(text, "", "experiment", f"unknown experiment kind {kind!r}")

    tol = data.get("solver", {}).get("tol")
    if tol is not None and not tol > 0:
        _fail(text, "solver", "tol", "solver.tol must be positive")
    eps = data.get("locality", {}).get("epsilon")
    if isinstance(eps, str) and eps != "calibrate":
        _fail(text, "locality", "epsilon", "locality.epsilon must be a positive number or 'calibrate'")
    if isinstance(eps, (int, float)) and not eps > 0:
        _fail(text, "locality", "epsilon", "locality.epsilon must be positive")
    hbar = data.get("semiclassical", {}).get("hbar")
    if hbar is not None and not hbar > 0:
        _fail(text, "semiclassical", "hbar", "semiclassical.hbar must be positive")

    sections = {k: v for k, v in data.items() if isinstance(v, dict)}
    return ExperimentConfig(
        experiment=kind,
        name=data.get("name", kind),
        output_dir=sections.get("output", {}).get("dir"),
        sections=sections,
        source_text=text,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"config {path} is not UTF-8") from exc
    return parse_config(text)


# ---------------------------------------------------------------- builders


def build_mesh(cfg: ExperimentConfig):
    kind = cfg.get("mesh", "kind", "circle")
    n = int(cfg.get("mesh", "n_sites", 64))
    if kind == "circle":
        return build_circle_mesh(n, float(cfg.get("mesh", "circumference", 1.0)))
    if kind == "interval":
        return build_interval_mesh(n, float(cfg.get("mesh", "length", 1.0)))
    _fail(cfg.source_text, "mesh", "kind", f"unknown mesh kind {kind!r}")


def build_decomposition(cfg: ExperimentConfig, mesh):
    C = float(mesh.measure)
    start = float(cfg.get("region", "arc_start", 0.0))
    length = float(cfg.get("region", "arc_length", C / 4))
    return decompose(mesh, arc_predicate(start, length, C))


def _support_mask(support: str, dec, n: int) -> np.ndarray:
    mask = np.zeros(n, bool)
    if support == "all":
        mask[:] = True
    elif support == "O":
        mask[dec.interior_O] = True
    elif support == "N":
        mask[dec.interior_N] = True
    else:
        raise ConfigError(f"unknown support {support!r} for key 'support'", key="support")
    return mask


def build_action(cfg: ExperimentConfig, mesh, dec=None) -> ActionSpec:
    terms = []
    for pot in cfg.get("action", "potential", []):
        kind = pot["kind"]
        if kind == "quadratic_local":
            terms.append(GradientEnergy(float(pot.get("stiffness", 1.0))))
        elif kind == "site_quadratic":
            terms.append(QuadraticSite(float(pot.get("k", 1.0))))
        elif kind == "site_potential":
            fn = pot.get("function", "sine_gordon")
            if fn not in _SITE_FUNCTIONS:
                _fail(cfg.source_text, "action.potential", "function", f"unknown site function {fn!r}")
            f, df, d2f = _SITE_FUNCTIONS[fn]
            terms.append(SitePotential(f, df, d2f, float(pot.get("scale", 1.0))))
        elif kind == "nonlocal":
            terms.append(NonlocalKernel(inverse_laplacian_kernel(mesh, float(pot.get("scale", 1.0)))))
        elif kind == "source":
            mask = _support_mask(pot.get("support", "all"), dec, mesh.n_sites)
            terms.append(Source(np.where(mask, float(pot.get("amplitude", 1.0)), 0.0)))
    period = cfg.get("action", "period")
    spec = ActionSpec(
        mesh,
        float(cfg.get("action", "total_time", 1.0)),
        int(cfg.get("action", "time_steps", 100)),
        terms=tuple(terms),
        mass=float(cfg.get("action", "mass", 1.0)),
        period=None if period is None else float(period),
    )
    if dec is not None and cfg.get("region", "cut_boundary", False):
        spec = cut_boundary_stencil(spec, dec)
    return spec


def build_endpoint(cfg: ExperimentConfig, mesh, which: str) -> np.ndarray:
    ep = cfg.get("endpoints", which, {"kind": "zero"})
    kind = ep.get("kind", "zero")
    x = mesh.positions[:, 0]
    C = float(mesh.measure)
    amp = float(ep.get("amplitude", 1.0))
    k = int(ep.get("wavenumber", 1))
    if kind == "zero":
        return np.zeros(mesh.n_sites)
    if kind == "constant":
        return np.full(mesh.n_sites, float(ep.get("value", 0.0)))
    if kind == "sine":
        return amp * np.sin(2 * np.pi * k * x / C)
    if kind == "cosine":
        return amp * np.cos(2 * np.pi * k * x / C)
    _fail(cfg.source_text, "endpoints." + which, "kind", f"unknown endpoint kind {kind!r}")


def build_seeds(cfg: ExperimentConfig) -> Any:
    from .extremal import default_seeds
    from .model import Path

    strategy = cfg.get("seeds", "strategy", "default")
    if strategy == "line":
        return lambda spec, a, b: [("line", Path.linear(spec, a, b))]
    if strategy == "default":
        n_modes = int(cfg.get("seeds", "n_modes", 2))
        amp = float(cfg.get("seeds", "amplitude", 0.5))
        return lambda spec, a, b: default_seeds(spec, a, b, n_modes, amp)
    _fail(cfg.source_text, "seeds", "strategy", f"unknown seed strategy {strategy!r}")

"""Experiment results and their on-disk artifacts (JSON, CSV, SVG)."""
from __future__ import annotations

import csv
import json
import math
import operator
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Iterable, Sequence

import numpy as np

from .lattice import FieldConfig, Mesh, RegionDecomposition

_OPS = {"<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge, "==": operator.eq}


@dataclass(frozen=True)
class Check:
    """``metrics[metric] <op> bound``; NaN metrics always fail."""

    metric: str
    op: str
    bound: float

    def holds(self, value) -> bool:
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return False
        return bool(_OPS[self.op](value, self.bound))

    def describe(self) -> str:
        return f"{self.metric} {self.op} {self.bound:g}"


@dataclass
class ExperimentResult:
    name: str
    metrics: dict
    checks: Sequence[Check] = ()
    artifacts: list = field(default_factory=list)
    details: dict = field(default_factory=dict)
    error: str = ""

    @property
    def passed(self) -> bool:
        if self.error:
            return False
        return all(c.holds(self.metrics.get(c.metric)) for c in self.checks)

    def failures(self) -> list:
        out = [f"{c.describe()} (got {self.metrics.get(c.metric)!r})" for c in self.checks if not c.holds(self.metrics.get(c.metric))]
        if self.error:
            out.insert(0, self.error)
        return out

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "name": self.name,
                "pass": self.passed,
                "metrics": self.metrics,
                "tolerances": [{"metric": c.metric, "op": c.op, "bound": c.bound} for c in self.checks],
                "failures": self.failures(),
                "artifacts": [os.path.basename(a) for a in self.artifacts],
                "details": self.details,
                "error": self.error,
            }
        )


def to_jsonable(obj):
    """Plain JSON types; complex numbers become ``[re, im]``, non-finite floats strings."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(float(obj.real)), to_jsonable(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, Mesh):
        return mesh_to_dict(obj)
    if isinstance(obj, RegionDecomposition):
        return decomposition_to_dict(obj)
    if isinstance(obj, FieldConfig):
        return {"values": to_jsonable(obj.values)}
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def mesh_to_dict(mesh: Mesh) -> dict:
    return {
        "topology": mesh.topology,
        "n_sites": mesh.n_sites,
        "measure": mesh.measure,
        "grid_shape": list(mesh.grid_shape) if mesh.grid_shape else None,
        "positions": mesh.positions.tolist(),
        "weights": mesh.weights.tolist(),
        "edges": mesh.edges.tolist(),
        "edge_lengths": mesh.edge_lengths.tolist(),
        "edge_faces": mesh.edge_faces.tolist(),
        "dirichlet": mesh.dirichlet.tolist(),
    }


def mesh_from_dict(d: dict) -> Mesh:
    return Mesh(
        positions=np.asarray(d["positions"], float),
        weights=np.asarray(d["weights"], float),
        edges=np.asarray(d["edges"], int).reshape(-1, 2),
        edge_lengths=np.asarray(d["edge_lengths"], float),
        edge_faces=np.asarray(d["edge_faces"], float),
        topology=d["topology"],
        dirichlet=np.asarray(d["dirichlet"], bool),
        measure=float(d["measure"]),
        grid_shape=tuple(d["grid_shape"]) if d.get("grid_shape") else None,
    )


def decomposition_to_dict(dec: RegionDecomposition) -> dict:
    return {
        "interior_O": dec.interior_O.tolist(),
        "interior_N": dec.interior_N.tolist(),
        "boundary": dec.boundary.tolist(),
    }


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> str:
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))
    return str(path)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return str(path)


def _figure(figsize):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "locality-lab"
    matplotlib.rcParams["svg.fonttype"] = "path"
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    fig = Figure(figsize=figsize)
    FigureCanvasSVG(fig)
    return fig


def save_svg(fig, path) -> str:
    """Write ``fig`` without a timestamp so repeated runs give identical bytes."""
    FsPath(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return str(path)


def line_plot(path, x, series: dict, title: str, xlabel: str, ylabel: str, logy: bool = False) -> str:
    fig = _figure((6, 4))
    ax = fig.subplots()
    for label, y in series.items():
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    return save_svg(fig, path)


def heatmap_pair(path, left, right, titles, extent=None) -> str:
    fig = _figure((10, 4))
    axes = fig.subplots(1, 2)
    for ax, data, title in zip(axes, (left, right), titles):
        im = ax.imshow(data, aspect="auto", origin="lower", extent=extent)
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return save_svg(fig, path)

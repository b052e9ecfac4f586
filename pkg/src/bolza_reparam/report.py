"""Machine-readable output: canonical JSON, CSV lattices, run manifests, optional figures."""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import __version__

FLOAT_FORMAT = ".17g"


def jsonable(obj):
    """Plain JSON types; non-finite floats become the strings "inf", "-inf", "nan"."""
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if isinstance(obj, enum.Enum):
        return jsonable(obj.value)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if dataclasses.is_dataclass(obj):
        return jsonable(dataclasses.asdict(obj))
    if obj is None or isinstance(obj, str):
        return obj
    return repr(obj)


def format_float(v: float) -> str:
    """17 significant digits; integral values keep a trailing ".0" so they read back as floats."""
    text = format(v, FLOAT_FORMAT)
    if not any(ch in text for ch in ".einn"):
        text += ".0"
    return text


def _encode(v, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v[k], indent, level + 1)}" for k in sorted(v)]
        return "{" + sep.join(items) + end + "}"
    if isinstance(v, list):
        if not v:
            return "[]"
        return "[" + sep.join(f"{pad}{_encode(x, indent, level + 1)}" for x in v) + end + "]"
    if isinstance(v, float):
        return format_float(v)
    return json.dumps(v)


def dumps(obj, indent: int = 2) -> str:
    """Byte-stable JSON: sorted keys and floats printed with 17 significant digits."""
    return _encode(jsonable(obj), indent, 0) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format_float(float(v))
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_csv_cell(v) for v in row])
    return buf.getvalue()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list
    input_digests: dict = field(default_factory=dict)
    tool_version: str = __version__
    outputs: list = field(default_factory=list)

    def add_input(self, path: str):
        self.input_digests[os.path.basename(path)] = sha256_file(path)

    def to_dict(self) -> dict:
        return {"command": self.command, "input_digests": self.input_digests,
                "tool_version": self.tool_version, "outputs": sorted(self.outputs)}


class OutputDir:
    """Writes files into one directory and records them in a manifest."""

    def __init__(self, path: str, manifest: RunManifest):
        self.path = path
        self.manifest = manifest
        os.makedirs(path, exist_ok=True)

    def write_text(self, name: str, text: str) -> str:
        full = os.path.join(self.path, name)
        with open(full, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.manifest.outputs.append(name)
        return full

    def finish(self) -> str:
        """Write manifest.json (listed among its own outputs, without a digest)."""
        self.manifest.outputs.append("manifest.json")
        full = os.path.join(self.path, "manifest.json")
        with open(full, "w", encoding="utf-8", newline="") as fh:
            fh.write(dumps(self.manifest))
        return full


# -- CSV tables ------------------------------------------------------------------------


def lattice_csv(report) -> str:
    return csv_text(("cells", "control_bound", "best_cost"), report.lattice_rows())


def pair_csv(pair) -> str:
    U, Y, nodes = pair.u.values, pair.y.values, pair.grid.nodes
    header = ["s"] + [f"y{i + 1}" for i in range(Y.shape[1])] + [f"u{i + 1}" for i in range(U.shape[1])]
    rows = []
    for k, s in enumerate(nodes):
        u = U[min(k, U.shape[0] - 1)]
        rows.append([float(s)] + [float(v) for v in Y[k]] + [float(v) for v in u])
    return csv_text(header, rows)


def phi_csv(cov) -> str:
    return csv_text(("tau", "phi"), zip(cov.tau.tolist(), cov.image.tolist()))


# -- figures ---------------------------------------------------------------------------


def _pyplot():
    try:
        import matplotlib
    except ImportError:
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_lattice(report, path: str) -> bool:
    """Best cost against cell count, one line per control bound.  False when matplotlib is missing."""
    plt = _pyplot()
    if plt is None:
        return False
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for b in report.control_bound_ladder:
        xs = [c for c in report.grid_ladder if math.isfinite(report.costs[(c, b)])]
        ys = [report.costs[(c, b)] for c in xs]
        if xs:
            ax.plot(xs, ys, marker="o", lw=1.2, label=f"|u| <= {b:g}")
    ax.axhline(report.unconstrained_inf, color="k", ls="--", lw=0.8, label="extrapolated inf")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("cells")
    ax.set_ylabel("best cost")
    ax.set_title(f"{report.verdict}, gap {report.gap_estimate:.2e}", fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_reparam(before, after, cov, path: str) -> bool:
    """Control norms before and after, and the change of variable."""
    plt = _pyplot()
    if plt is None:
        return False
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.0, 3.0))
    for pair, label in ((before, "input"), (after, "bounded")):
        nodes = pair.grid.nodes
        norms = pair.u.norms()
        ax0.step(nodes, np.append(norms, norms[-1]), where="post", lw=1.2, label=label)
    ax0.set_xlabel("s")
    ax0.set_ylabel("|u|")
    ax0.legend(fontsize=7, frameon=False)
    ax1.plot(cov.tau, cov.image, lw=1.2)
    ax1.plot(cov.tau, cov.tau, color="0.6", ls=":", lw=0.8)
    ax1.set_xlabel("tau")
    ax1.set_ylabel("phi(tau)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True

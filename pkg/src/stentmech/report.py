"""Output writers: delimited tables, legacy-VTK text, and figures.

Figures are rendered with matplotlib to SVG next to the CSV/JSON output.
Rendering is pinned deterministic (fixed hash salt, no embedded dates) so
reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "stentmech"
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .correlation import CorrelationReport  # noqa: E402
from .gmm import MixtureModel, PlaqueComponent  # noqa: E402
from .mesh import CrossSectionMesh  # noqa: E402
from .solver import SolveState, TraceEntry  # noqa: E402

_SAVE_KW = {"metadata": {"Date": None}}


def _fmt(x: float) -> str:
    return repr(float(x))


def save_figure(fig, path: str | Path) -> None:
    fig.savefig(Path(path), format="svg", **_SAVE_KW)
    plt.close(fig)


# --- segmentation outputs ---------------------------------------------------

def write_model_csv(model: MixtureModel, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("component", "mean", "variance", "weight"))
        for comp, g in zip(PlaqueComponent, model.components):
            w.writerow((comp.name.lower(), _fmt(g.mean), _fmt(g.variance),
                        _fmt(g.weight)))


def _mixture_density(model: MixtureModel, x: np.ndarray) -> np.ndarray:
    parts = [g.weight * np.exp(-0.5 * (x - g.mean) ** 2 / g.variance)
             / np.sqrt(2.0 * np.pi * g.variance) for g in model.components]
    return np.array(parts)


def write_histogram_csv(samples: np.ndarray, model: MixtureModel,
                        path: str | Path, n_bins: int = 120) -> None:
    """Histogram of the HU samples with per-component and mixture densities."""
    samples = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(samples, bins=n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = _mixture_density(model, centers)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("hu", "count") + tuple(c.name.lower() for c in PlaqueComponent)
                   + ("mixture",))
        for i, c in enumerate(centers):
            w.writerow((_fmt(c), int(counts[i]))
                       + tuple(_fmt(dens[k, i]) for k in range(dens.shape[0]))
                       + (_fmt(dens[:, i].sum()),))


def plot_gmm_fit(samples: np.ndarray, model: MixtureModel,
                 path: str | Path) -> None:
    samples = np.asarray(samples, dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(samples, bins=120, density=True, color="lightsteelblue",
            label="HU samples")
    x = np.linspace(samples.min(), samples.max(), 600)
    dens = _mixture_density(model, x)
    colors = ["gold", "seagreen", "firebrick", "purple"]
    for k, comp in enumerate(PlaqueComponent):
        ax.plot(x, dens[k], color=colors[k], label=comp.name.lower())
    ax.plot(x, dens.sum(axis=0), "k-", lw=1.5, label="mixture")
    ax.set_xlabel("HU")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path)


def write_labels_volume(labels: np.ndarray, spacing, origin,
                        hdr_path: str | Path, raw_path: str | Path) -> None:
    """Component-label volume in the same header+raw layout as the HU data
    (int8 payload, UNLABELED = -1)."""
    dims = labels.shape
    hdr = (f"dims {dims[0]} {dims[1]} {dims[2]}\n"
           f"spacing {' '.join(_fmt(v) for v in spacing)}\n"
           f"origin {' '.join(_fmt(v) for v in origin)}\n")
    Path(hdr_path).write_text(hdr, encoding="utf-8")
    Path(raw_path).write_bytes(np.ascontiguousarray(
        labels.ravel(order="F"), dtype=np.int8).tobytes())


# --- mesh / solver outputs --------------------------------------------------

def write_mesh_csv(mesh: CrossSectionMesh, nodes_path: str | Path,
                   elements_path: str | Path) -> None:
    with Path(nodes_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("node", "x", "y"))
        for i, (x, y) in enumerate(mesh.nodes):
            w.writerow((i, _fmt(x), _fmt(y)))
    with Path(elements_path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("element", "n0", "n1", "n2", "n3", "layer", "material",
                    "sector", "ring"))
        for e in range(mesh.n_elements):
            w.writerow((e, *mesh.elements[e],
                        int(mesh.element_layer[e]), int(mesh.element_material[e]),
                        int(mesh.element_sector[e]), int(mesh.element_ring[e])))


def write_vtk(mesh: CrossSectionMesh, path: str | Path,
              displacements: np.ndarray | None = None,
              cell_data: dict[str, np.ndarray] | None = None,
              title: str = "stentmech slice") -> None:
    """Legacy ASCII VTK unstructured grid (quads), for visual inspection."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID"]
    pts = mesh.nodes if displacements is None else mesh.nodes + displacements
    lines.append(f"POINTS {mesh.n_nodes} double")
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in pts]
    lines.append(f"CELLS {mesh.n_elements} {5 * mesh.n_elements}")
    lines += ["4 " + " ".join(str(n) for n in quad) for quad in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += ["9"] * mesh.n_elements

    data = {"material": mesh.element_material, "layer": mesh.element_layer}
    data.update(cell_data or {})
    lines.append(f"CELL_DATA {mesh.n_elements}")
    for name, arr in data.items():
        arr = np.asarray(arr)
        if np.issubdtype(arr.dtype, np.integer):
            lines.append(f"SCALARS {name} int 1")
            lines.append("LOOKUP_TABLE default")
            lines += [str(int(v)) for v in arr]
        else:
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_fmt(v) for v in arr]

    if displacements is not None:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        lines.append("VECTORS displacement double")
        lines += [f"{_fmt(ux)} {_fmt(uy)} 0.0" for ux, uy in displacements]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_displacements_csv(state: SolveState, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("node", "ux", "uy"))
        for i, (ux, uy) in enumerate(state.u):
            w.writerow((i, _fmt(ux), _fmt(uy)))


def write_qp_stress_csv(mesh: CrossSectionMesh, state: SolveState,
                        p1: np.ndarray, weights: np.ndarray,
                        path: str | Path) -> None:
    """Per-quadrature-point stress table: components, first principal value
    and deformed area weight."""
    s = state.qp_stress
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("element", "qp", "sxx", "syy", "szz", "sxy", "p1", "area",
                    "layer", "material"))
        for e in range(mesh.n_elements):
            for q in range(4):
                w.writerow((e, q, _fmt(s[e, q, 0, 0]), _fmt(s[e, q, 1, 1]),
                            _fmt(s[e, q, 2, 2]), _fmt(s[e, q, 0, 1]),
                            _fmt(p1[e, q]), _fmt(weights[e, q]),
                            int(mesh.element_layer[e]),
                            int(mesh.element_material[e])))


def write_newton_trace(trace: list[TraceEntry], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("phase", "step_fraction", "iterations", "residual_norm",
                    "pressure"))
        for t in trace:
            w.writerow((t.phase, _fmt(t.step_fraction), t.iterations,
                        _fmt(t.residual_norm), _fmt(t.pressure)))


def write_summaries_csv(summaries, thresholds, path: str | Path,
                        arclengths=None) -> None:
    thresholds = [float(t) for t in thresholds]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("slice", "s", "mean_p1", "p95_p1", "total_area")
                   + tuple(f"frac_above_{t:g}" for t in thresholds))
        for i, sm in enumerate(summaries):
            s_val = _fmt(arclengths[i]) if arclengths is not None else ""
            w.writerow((sm.slice_index, s_val, _fmt(sm.mean_p1), _fmt(sm.p95_p1),
                        _fmt(sm.total_area))
                       + tuple(_fmt(sm.area_fraction_above[t]) for t in thresholds))


def plot_centerline_stress(summaries, arclengths, path: str | Path) -> None:
    s = np.asarray(arclengths, dtype=float)
    mean = np.array([sm.mean_p1 for sm in summaries])
    p95 = np.array([sm.p95_p1 for sm in summaries])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(s, mean, "o-", label="mean first principal stress")
    ax.plot(s, p95, "s--", label="95th percentile")
    ax.set_xlabel("centerline arclength (mm)")
    ax.set_ylabel("stress (kPa)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path)


# --- correlation outputs ----------------------------------------------------

def correlation_to_dict(report: CorrelationReport) -> dict:
    return {
        "r_mean": report.r_mean,
        "r_p95": report.r_p95,
        "argmax_tau": report.argmax_tau,
        "n_points": report.n_points,
        "sweep": [{"tau": t, "r": r} for t, r in report.sweep],
        "table": [{
            "slice": rec.slice_index,
            "restenosis_pct": rec.restenosis_pct,
            "mean_p1": rec.mean_p1,
            "p95_p1": rec.p95_p1,
            "fraction_above": {f"{t:g}": v for t, v in rec.fraction_above.items()},
        } for rec in report.table],
    }


def write_correlation_json(report: CorrelationReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(correlation_to_dict(report), indent=2,
                                     sort_keys=True) + "\n", encoding="utf-8")


def write_correlation_csv(report: CorrelationReport, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("tau_kpa", "r"))
        for tau, r in report.sweep:
            w.writerow((_fmt(tau), "" if r is None else _fmt(r)))


def plot_correlation_sweep(report: CorrelationReport, path: str | Path) -> None:
    """Correlation coefficient vs stress threshold, with the mean- and
    p95-stress correlations as horizontal reference lines."""
    taus = [t for t, r in report.sweep if r is not None]
    rs = [r for _, r in report.sweep if r is not None]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(taus, rs, "o-", color="tab:blue", label="area fraction above threshold")
    if report.r_mean is not None:
        ax.axhline(report.r_mean, color="purple", ls="--", lw=1.2,
                   label=f"mean stress (r = {report.r_mean:.2f})")
    if report.r_p95 is not None:
        ax.axhline(report.r_p95, color="orchid", ls=":", lw=1.2,
                   label=f"p95 stress (r = {report.r_p95:.2f})")
    if report.argmax_tau is not None:
        ax.axvline(report.argmax_tau, color="gray", lw=0.8)
    ax.set_xlabel("stress threshold (kPa)")
    ax.set_ylabel("Pearson correlation with restenosis")
    ax.set_ylim(-1.05, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    save_figure(fig, path)


def plot_morphology_study(rows: list[dict], path: str | Path) -> None:
    names = [r["scenario"] for r in rows]
    p95 = [r["p95_residual"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(names, p95, color="tab:red", alpha=0.8)
    ax.set_ylabel("p95 residual first principal stress,\nnon-calcified intima (kPa)")
    ax.tick_params(axis="x", rotation=20)
    fig.tight_layout()
    save_figure(fig, path)


def write_table_csv(rows: list[dict], path: str | Path) -> None:
    """Row-dict table with the union of keys; numbers via repr, blanks for
    missing cells."""
    if not rows:
        return
    cols = list(dict.fromkeys(k for r in rows for k in r))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if c not in r else
                        (r[c] if isinstance(r[c], str) else _fmt(r[c]))
                        for c in cols])

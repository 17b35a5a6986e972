"""Command-line pipeline driver.

Subcommands: ``segment``, ``mesh``, ``simulate``, ``analyze``, ``correlate``,
``morphology-study``, ``pipeline``, plus ``synth-case`` to generate a demo
bundle.  Every run echoes its effective configuration (``config.txt``) and a
machine-readable ``manifest.json`` into the output directory.

Exit codes: 0 success, 1 partial slice failures, 2 input errors, 3 internal
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, report
from .case_io import CaseBundle, load_case, save_case, slice_samples
from .config import RunConfig, apply_overrides, load_config
from .correlation import threshold_sweep
from .errors import NoSamplesForSliceError, StentmechError
from .gmm import classify, classify_volume, fit_em, kmeans_init
from .materials import MaterialKey, material_table
from .mesh import (CrossSectionMesh, assign_regions, asymmetric_block,
                   behind_block_elements, build_slice_mesh,
                   circumferential_calc, homogeneous, mesh_quality,
                   opposing_blocks, synth_slice)
from .solver import (InflateToMeanRadius, InflateToPressure, LoadProgram,
                     Unload, default_program, hoop_stress_at_inner_boundary,
                     max_penetration, run_program)
from .stress import (SliceStressSummary, area_weights, first_principal_field,
                     global_percentile_thresholds, slice_summary)
from .gmm import PlaqueComponent
from .synthetic import make_synthetic_case


def _write_manifest(out_dir: Path, stage: str, timings: dict, extra: dict | None = None):
    import matplotlib
    import scipy
    manifest = {
        "stage": stage,
        "versions": {"stentmech": __version__, "python": sys.version.split()[0],
                     "numpy": np.__version__, "scipy": scipy.__version__,
                     "matplotlib": matplotlib.__version__},
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    manifest.update(extra or {})
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prepare_out(out_dir: str | Path, cfg: RunConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.txt")
    return out


def _effective_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg


def _fit_case_model(bundle: CaseBundle):
    cfg = bundle.config
    samples = bundle.volume.values[bundle.mask.flags.astype(bool)].astype(float)
    init = kmeans_init(samples, cfg.gmm_init_means,
                       max_iter=cfg.gmm_kmeans_max_iter,
                       variance_floor=cfg.gmm_variance_floor,
                       weight_epsilon=cfg.gmm_weight_epsilon)
    model = fit_em(samples, init, tol=cfg.gmm_tol, max_iter=cfg.gmm_max_iter,
                   variance_floor=cfg.gmm_variance_floor)
    return samples, model


def _case_with_config(case_dir: str | Path, cfg: RunConfig) -> CaseBundle:
    import dataclasses
    bundle = load_case(case_dir)
    return dataclasses.replace(bundle, config=cfg)


# --- segment ----------------------------------------------------------------

def run_segment(case_dir: str | Path, out_dir: str | Path, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    bundle = _case_with_config(case_dir, cfg)
    out = _prepare_out(out_dir, cfg)
    samples, model = _fit_case_model(bundle)
    labels = classify_volume(bundle, model)
    report.write_model_csv(model, out / "model.csv")
    report.write_histogram_csv(samples, model, out / "histogram.csv")
    report.plot_gmm_fit(samples, model, out / "gmm_fit.svg")
    report.write_labels_volume(labels, bundle.volume.spacing, bundle.volume.origin,
                               out / "labels.hdr", out / "labels.raw")
    _write_manifest(out, "segment", {"total": time.perf_counter() - t0},
                    {"n_samples": int(samples.size),
                     "iterations": model.iterations,
                     "log_likelihood": model.log_likelihood})
    return 0


# --- mesh -------------------------------------------------------------------

def _slice_mesh(bundle: CaseBundle, index: int) -> CrossSectionMesh:
    cfg = bundle.config
    return build_slice_mesh(bundle.contours.lumen[index],
                            bundle.contours.outer[index],
                            t_media=cfg.mesh_t_media, t_adv=cfg.mesh_t_adv,
                            n_sectors=cfg.mesh_n_sectors, rings=cfg.rings())


def run_mesh(case_dir: str | Path, out_dir: str | Path, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    bundle = _case_with_config(case_dir, cfg)
    out = _prepare_out(out_dir, cfg)
    rows = []
    failed = []
    for i in range(bundle.n_slices):
        try:
            mesh = _slice_mesh(bundle, i)
            q = mesh_quality(mesh)
            rows.append({"slice": str(i), "min_jacobian": q.min_jacobian,
                         "max_aspect": q.max_aspect, "area": q.total_area})
            sdir = out / f"slice_{i:03d}"
            sdir.mkdir(exist_ok=True)
            report.write_mesh_csv(mesh, sdir / "nodes.csv", sdir / "elements.csv")
            report.write_vtk(mesh, sdir / "mesh.vtk")
        except StentmechError as exc:
            failed.append({"slice": i, "error": str(exc)})
    report.write_table_csv(rows, out / "mesh_quality.csv")
    _write_manifest(out, "mesh", {"total": time.perf_counter() - t0},
                    {"failed_slices": failed})
    return 1 if failed and rows else (2 if failed else 0)


# --- simulate ---------------------------------------------------------------

def _simulate_slice(bundle: CaseBundle, model, index: int):
    """Mesh, label and solve one slice; returns everything the writers need."""
    cfg = bundle.config
    mesh = _slice_mesh(bundle, index)
    positions, hu = slice_samples(bundle, index)
    if positions.shape[0] == 0:
        raise NoSamplesForSliceError(f"slice {index}: no masked voxels near the plane")
    labels = classify(model, hu.astype(float))
    mesh = assign_regions(mesh, positions, labels)

    r0 = mesh.reference_lumen_radius()
    if bundle.profiles.in_stent[index]:
        d_post = bundle.profiles.d_post[index]
        r_stent = (d_post / 2.0 if np.isfinite(d_post)
                   else cfg.solver_stent_radius_factor * r0)
        r_balloon = max(cfg.solver_inflate_radius_factor * r0, r_stent)
        program = LoadProgram(
            phases=(InflateToMeanRadius(r_balloon, cfg.solver_n_steps_inflate),
                    Unload(cfg.solver_n_steps_unload, r_stent=r_stent)),
            outer_spring_stiffness=cfg.solver_spring_stiffness,
            penalty_stiffness=cfg.solver_penalty_stiffness,
            balloon_stiffness=cfg.solver_balloon_stiffness,
            max_radius_increment=cfg.solver_max_radius_increment)
    else:
        program = LoadProgram(phases=(),
                              outer_spring_stiffness=cfg.solver_spring_stiffness,
                              penalty_stiffness=cfg.solver_penalty_stiffness)

    result = run_program(mesh, program, material_table(cfg.material_overrides),
                         abs_tol=cfg.solver_abs_tol, rel_tol=cfg.solver_rel_tol,
                         max_newton_iter=cfg.solver_max_newton_iter,
                         max_halvings=cfg.solver_max_step_halvings)
    thresholds = cfg.thresholds()
    summary_res = slice_summary(mesh, result.state_residual, thresholds,
                                slice_index=index, layers=cfg.analysis_layers)
    summary_max = slice_summary(mesh, result.state_max, thresholds,
                                slice_index=index, layers=cfg.analysis_layers)
    return mesh, result, summary_res, summary_max


def _lame_self_test(cfg: RunConfig) -> dict:
    """Embedded plane-strain Lame benchmark; returns the check record."""
    from .mesh import SynthGeometry
    geom = SynthGeometry(lumen_radius=1.5, intima_thickness=2.34 - 1.5)
    lumen, outer = geom.contours()
    mesh = build_slice_mesh(lumen, outer, t_media=0.32, t_adv=0.34,
                            n_sectors=64, rings=(4, 4, 4))
    from .materials import MaterialParams
    mat = MaterialParams(E=0.16, nu=0.45)
    mats = {int(k): mat for k in MaterialKey}
    program = LoadProgram(phases=(InflateToPressure(1.0, 2),),
                          outer_spring_stiffness=0.0)
    result = run_program(mesh, program, mats)
    a, b, p = 1.5, 3.0, 1.0
    expected = p * (a * a + b * b) / (b * b - a * a)
    measured = hoop_stress_at_inner_boundary(mesh, result.state_max)
    rel = abs(measured - expected) / expected
    return {"expected_kpa": expected, "measured_kpa": round(measured, 6),
            "relative_error": round(rel, 6), "passed": bool(rel <= 0.02)}


def run_simulate(case_dir: str | Path, out_dir: str | Path, cfg: RunConfig,
                 threads: int = 1, self_test: bool = True) -> int:
    t0 = time.perf_counter()
    bundle = _case_with_config(case_dir, cfg)
    out = _prepare_out(out_dir, cfg)
    _, model = _fit_case_model(bundle)
    t_fit = time.perf_counter()

    def work(i: int):
        try:
            return i, _simulate_slice(bundle, model, i), None
        except StentmechError as exc:
            return i, None, str(exc)

    indices = list(range(bundle.n_slices))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, indices))
    else:
        results = [work(i) for i in indices]
    t_solve = time.perf_counter()

    failed, summaries_res, summaries_max, arclengths = [], [], [], []
    for i, payload, err in results:
        if err is not None:
            failed.append({"slice": i, "error": err})
            continue
        mesh, result, summary_res, summary_max = payload
        summaries_res.append(summary_res)
        summaries_max.append(summary_max)
        arclengths.append(float(bundle.centerline.s[i]))
        sdir = out / f"slice_{i:03d}"
        sdir.mkdir(exist_ok=True)
        state = result.state_residual
        p1 = first_principal_field(state)
        w = area_weights(mesh, state)
        report.write_displacements_csv(state, sdir / "displacements.csv")
        report.write_qp_stress_csv(mesh, state, p1, w, sdir / "qp_stress.csv")
        report.write_newton_trace(result.trace, sdir / "newton_trace.csv")
        report.write_vtk(mesh, sdir / "deformed.vtk", displacements=state.u,
                         cell_data={"sigma1": p1.mean(axis=1)})
        np.save(sdir / "qp_stress_max.npy", result.state_max.qp_stress)

    thresholds = cfg.thresholds()
    if summaries_res:
        report.write_summaries_csv(summaries_res, thresholds, out / "summaries.csv",
                                   arclengths=arclengths)
        report.write_summaries_csv(summaries_max, thresholds,
                                   out / "summaries_max.csv", arclengths=arclengths)
        report.plot_centerline_stress(summaries_res, arclengths,
                                      out / "stress_profile.svg")

    extra = {"failed_slices": failed, "n_slices": bundle.n_slices}
    if self_test:
        extra["lame_self_test"] = _lame_self_test(cfg)
    _write_manifest(out, "simulate",
                    {"fit": t_fit - t0, "solve": t_solve - t_fit,
                     "total": time.perf_counter() - t0}, extra)
    if failed and summaries_res:
        return 1
    if failed:
        return 2
    return 0


# --- analyze ----------------------------------------------------------------

def _read_qp_dump(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    import csv as _csv
    p1, area, layer, material = [], [], [], []
    with path.open(encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            p1.append(float(row["p1"]))
            area.append(float(row["area"]))
            layer.append(int(row["layer"]))
            material.append(int(row["material"]))
    return (np.array(p1), np.array(area), np.array(layer, dtype=int),
            np.array(material, dtype=int))


def run_analyze(sim_dir: str | Path, out_dir: str | Path, cfg: RunConfig) -> int:
    """Recompute slice summaries and global top-20%/top-5% thresholds from the
    quadrature dumps of a simulate run."""
    t0 = time.perf_counter()
    sim = Path(sim_dir)
    out = _prepare_out(out_dir, cfg)
    slice_dirs = sorted(sim.glob("slice_*/qp_stress.csv"))
    if not slice_dirs:
        raise StentmechError(f"no qp_stress.csv dumps under {sim}")
    thresholds = cfg.thresholds()
    fields = []
    summaries = []
    for path in slice_dirs:
        idx = int(path.parent.name.split("_")[1])
        p1, area, layer, _ = _read_qp_dump(path)
        if cfg.analysis_layers == "intima":
            keep = layer == 0
            p1, area = p1[keep], area[keep]
        fields.append((p1, area))
        total = float(area.sum())
        from .stress import weighted_percentile
        fractions = {float(t): float(area[p1 > t].sum() / total) for t in thresholds}
        summaries.append(SliceStressSummary(
            slice_index=idx, mean_p1=float((p1 * area).sum() / total),
            p95_p1=weighted_percentile(p1, area, 0.95),
            area_fraction_above=fractions, total_area=total))
    t80, t95 = global_percentile_thresholds(fields, (0.80, 0.95))
    report.write_summaries_csv(summaries, thresholds, out / "summaries.csv")
    (out / "global_thresholds.json").write_text(
        json.dumps({"top20_kpa": t80, "top5_kpa": t95}, indent=2) + "\n",
        encoding="utf-8")

    # per-slice area fractions of the light (top 20%) / dark (top 5%)
    # stress-map bands
    from .stress import band_classes
    import csv as _csv
    with (out / "stress_bands.csv").open("w", newline="", encoding="utf-8") as fh:
        w = _csv.writer(fh)
        w.writerow(("slice", "frac_top20", "frac_top5"))
        for sm, (p1, area) in zip(summaries, fields):
            cls = band_classes(p1, t80, t95)
            total = float(area.sum())
            w.writerow((sm.slice_index,
                        repr(float(area[cls >= 1].sum() / total)),
                        repr(float(area[cls == 2].sum() / total))))
    _write_manifest(out, "analyze", {"total": time.perf_counter() - t0},
                    {"n_slices": len(summaries)})
    return 0


# --- correlate --------------------------------------------------------------

def _read_summaries_csv(path: Path) -> tuple[list[SliceStressSummary], list[float]]:
    import csv as _csv
    summaries, arclengths = [], []
    with path.open(encoding="utf-8") as fh:
        for row in _csv.DictReader(fh):
            fractions = {float(k.split("_")[-1]): float(v)
                         for k, v in row.items() if k.startswith("frac_above_")}
            summaries.append(SliceStressSummary(
                slice_index=int(row["slice"]), mean_p1=float(row["mean_p1"]),
                p95_p1=float(row["p95_p1"]),
                area_fraction_above=fractions,
                total_area=float(row["total_area"])))
            arclengths.append(float(row["s"]) if row.get("s") else np.nan)
    return summaries, arclengths


def run_correlate(summaries_csv: str | Path, case_dir: str | Path,
                  out_dir: str | Path, cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    bundle = _case_with_config(case_dir, cfg)
    out = _prepare_out(out_dir, cfg)
    summaries, _ = _read_summaries_csv(Path(summaries_csv))
    by_index = {s.slice_index: s for s in summaries}

    pr = bundle.profiles
    skipped = []
    kept_idx = []
    for i in range(len(pr)):
        if not pr.in_stent[i]:
            continue
        if np.isnan(pr.d_post[i]) or np.isnan(pr.d_followup[i]):
            skipped.append({"slice": i, "reason": "missing diameter"})
            continue
        if i not in by_index:
            skipped.append({"slice": i, "reason": "no stress summary"})
            continue
        kept_idx.append(i)

    resten = np.array([100.0 * max(0.0, 1.0 - pr.d_followup[i] / pr.d_post[i])
                       for i in kept_idx])
    if cfg.correlate_pooling == "normalized" and resten.size and resten.max() > 0:
        resten = resten / resten.max() * 100.0
    sweep_summaries = [by_index[i] for i in kept_idx]
    taus = cfg.thresholds()
    if sweep_summaries:
        have = set(sweep_summaries[0].area_fraction_above)
        missing = [t for t in taus if t not in have]
        if missing:
            raise StentmechError(
                f"summaries lack fraction columns for thresholds {missing[:3]}; "
                "run correlate with the same analysis.threshold_* config as simulate")
    rep = threshold_sweep(sweep_summaries, resten, taus)
    report.write_correlation_json(rep, out / "correlation.json")
    report.write_correlation_csv(rep, out / "correlation.csv")
    report.plot_correlation_sweep(rep, out / "correlation_sweep.svg")
    _write_manifest(out, "correlate", {"total": time.perf_counter() - t0},
                    {"skipped_slices": skipped, "n_points": rep.n_points,
                     "argmax_tau": rep.argmax_tau, "r_mean": rep.r_mean,
                     "r_p95": rep.r_p95})
    return 0


# --- morphology study -------------------------------------------------------

def run_morphology_study(out_dir: str | Path, cfg: RunConfig) -> int:
    """Four calcification scenarios under one identical load program."""
    t0 = time.perf_counter()
    out = _prepare_out(out_dir, cfg)
    scenarios = [
        ("homogeneous_fibrotic", homogeneous(PlaqueComponent.FIBROTIC)),
        ("asymmetric_block_90", asymmetric_block(90.0)),
        ("opposing_blocks_60", opposing_blocks(60.0)),
        ("circumferential_270", circumferential_calc(270.0)),
    ]
    mats = material_table(cfg.material_overrides)
    rows = []
    states = {}
    meshes = {}
    for name, pattern in scenarios:
        mesh = synth_slice(pattern, t_media=cfg.mesh_t_media, t_adv=cfg.mesh_t_adv,
                           n_sectors=cfg.mesh_n_sectors, rings=cfg.rings())
        program = default_program(
            mesh, spring_stiffness=cfg.solver_spring_stiffness,
            penalty_stiffness=cfg.solver_penalty_stiffness,
            balloon_stiffness=cfg.solver_balloon_stiffness,
            inflate_factor=cfg.solver_inflate_radius_factor,
            stent_factor=cfg.solver_stent_radius_factor,
            n_steps_inflate=cfg.solver_n_steps_inflate,
            n_steps_unload=cfg.solver_n_steps_unload,
            max_radius_increment=cfg.solver_max_radius_increment)
        result = run_program(mesh, program, mats,
                             abs_tol=cfg.solver_abs_tol, rel_tol=cfg.solver_rel_tol,
                             max_newton_iter=cfg.solver_max_newton_iter,
                             max_halvings=cfg.solver_max_step_halvings)
        noncalc = mesh.intima_mask() & (mesh.element_material
                                        != MaterialKey.CALCIFICATION)
        sm_res = slice_summary(mesh, result.state_residual, element_mask=noncalc)
        sm_max = slice_summary(mesh, result.state_max, element_mask=noncalc)
        rows.append({"scenario": name, "p95_residual": sm_res.p95_p1,
                     "mean_residual": sm_res.mean_p1, "p95_max": sm_max.p95_p1,
                     "penetration_mm": max_penetration(mesh, result.state_residual)})
        states[name] = result
        meshes[name] = mesh
        p1 = first_principal_field(result.state_residual)
        report.write_vtk(mesh, out / f"{name}.vtk",
                         displacements=result.state_residual.u,
                         cell_data={"sigma1": p1.mean(axis=1)})

    # tissue radially behind the block vs the same elements in the baseline
    block_pattern = scenarios[1][1]
    behind = behind_block_elements(meshes["asymmetric_block_90"], block_pattern)
    for name in ("asymmetric_block_90", "homogeneous_fibrotic"):
        p1 = first_principal_field(states[name].state_residual)[behind]
        w = area_weights(meshes[name], states[name].state_residual)[behind]
        rows_idx = next(r for r in rows if r["scenario"] == name)
        rows_idx["behind_block_mean"] = float((p1 * w).sum() / w.sum())

    p95 = {r["scenario"]: r["p95_residual"] for r in rows}
    orderings = {
        "circ_gt_block": bool(p95["circumferential_270"] > p95["asymmetric_block_90"]),
        "block_gt_homog": bool(p95["asymmetric_block_90"] > p95["homogeneous_fibrotic"]),
        "behind_block_protected": bool(
            next(r for r in rows if r["scenario"] == "asymmetric_block_90")["behind_block_mean"]
            < next(r for r in rows if r["scenario"] == "homogeneous_fibrotic")["behind_block_mean"]),
    }
    report.write_table_csv(rows, out / "morphology.csv")
    report.plot_morphology_study(rows, out / "morphology.svg")
    _write_manifest(out, "morphology-study", {"total": time.perf_counter() - t0},
                    {"orderings": orderings})
    return 0


# --- pipeline ---------------------------------------------------------------

def run_pipeline(case_dir: str | Path, out_dir: str | Path, cfg: RunConfig,
                 threads: int = 1) -> int:
    t0 = time.perf_counter()
    out = _prepare_out(out_dir, cfg)
    code = run_segment(case_dir, out / "segment", cfg)
    sim_code = run_simulate(case_dir, out / "simulate", cfg, threads=threads)
    code = max(code, sim_code)
    if sim_code < 2:
        code = max(code, run_analyze(out / "simulate", out / "analyze", cfg))
        code = max(code, run_correlate(out / "simulate" / "summaries.csv",
                                       case_dir, out / "correlate", cfg))
    _write_manifest(out, "pipeline", {"total": time.perf_counter() - t0},
                    {"exit_code": code})
    return code


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stentmech",
                                 description="Plaque-resolved stenting mechanics pipeline")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, case=True, out=True):
        if case:
            p.add_argument("case_dir", help="case bundle directory")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="config file (key = value lines)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0,
                       help="seed for synthetic data generation only")

    p = sub.add_parser("segment", help="GMM plaque segmentation")
    common(p)
    p = sub.add_parser("mesh", help="build per-slice cross-section meshes")
    common(p)
    p = sub.add_parser("simulate", help="per-slice expansion FE + summaries")
    common(p)
    p.add_argument("--no-self-test", action="store_true",
                   help="skip the embedded Lame benchmark")
    p = sub.add_parser("analyze", help="aggregate stress statistics from dumps")
    p.add_argument("sim_dir", help="simulate output directory")
    common(p, case=False)
    p = sub.add_parser("correlate", help="restenosis correlation sweep")
    p.add_argument("summaries_csv", help="summaries.csv from simulate/analyze")
    common(p)
    p = sub.add_parser("morphology-study", help="calcification scenario study")
    common(p, case=False)
    p = sub.add_parser("pipeline", help="segment + simulate + analyze + correlate")
    common(p)
    p = sub.add_parser("synth-case", help="write a synthetic demo case bundle")
    common(p, case=False)
    p.add_argument("--slices", type=int, default=20)
    p.add_argument("--plaque", choices=["mixed", "binary"], default="mixed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _effective_config(args)
        if args.command == "segment":
            return run_segment(args.case_dir, args.out, cfg)
        if args.command == "mesh":
            return run_mesh(args.case_dir, args.out, cfg)
        if args.command == "simulate":
            return run_simulate(args.case_dir, args.out, cfg, threads=args.threads,
                                self_test=not args.no_self_test)
        if args.command == "analyze":
            return run_analyze(args.sim_dir, args.out, cfg)
        if args.command == "correlate":
            return run_correlate(args.summaries_csv, args.case_dir, args.out, cfg)
        if args.command == "morphology-study":
            return run_morphology_study(args.out, cfg)
        if args.command == "pipeline":
            return run_pipeline(args.case_dir, args.out, cfg, threads=args.threads)
        if args.command == "synth-case":
            bundle = make_synthetic_case(n_slices=args.slices, seed=args.seed,
                                         plaque=args.plaque, config=cfg)
            save_case(bundle, args.out)
            return 0
        raise AssertionError(f"unhandled command {args.command}")
    except StentmechError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Restenosis quantification and stress-threshold correlation sweep.

Per-slice restenosis is estimated from the post-stenting and follow-up
diameters; Pearson correlations relate it to mean stress, 95th-percentile
stress, and the area fraction above each threshold of a sweep grid.
Undefined correlations (a constant column) are recorded as missing rather
than zeroed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .case_io import CenterlineProfile
from .errors import (ConstantInputError, LengthMismatchError,
                     MissingDiameterError, ZeroReferenceError)
from .stress import SliceStressSummary

DEFAULT_TAU_GRID = tuple(float(t) for t in range(5, 105, 5))


@dataclass(frozen=True)
class SliceRecord:
    slice_index: int
    restenosis_pct: float
    mean_p1: float
    p95_p1: float
    fraction_above: dict[float, float]


@dataclass(frozen=True)
class CorrelationReport:
    r_mean: float | None
    r_p95: float | None
    sweep: tuple[tuple[float, float | None], ...]
    argmax_tau: float | None
    n_points: int
    table: tuple[SliceRecord, ...]


def rescale_diameters(raw, reference_index: int, reference_diameter: float) -> np.ndarray:
    """Scale a proportional diameter profile so the entry at
    ``reference_index`` equals the known physical diameter (mm)."""
    raw = np.asarray(raw, dtype=float)
    ref = raw[reference_index]
    if not np.isfinite(ref) or ref <= 0.0:
        raise ZeroReferenceError(
            f"reference diameter at index {reference_index} is {ref}")
    return raw * (reference_diameter / ref)


def restenosis_percent(profile: CenterlineProfile) -> np.ndarray:
    """Per-slice restenosis percentage, 100 * (1 - d_followup / d_post).

    Lumen gain at follow-up is clamped to 0%.  Slices outside the stent are
    NaN; an in-stent slice with a missing diameter raises
    MissingDiameterError.
    """
    out = np.full(len(profile), np.nan)
    stent = profile.in_stent
    missing = stent & (np.isnan(profile.d_post) | np.isnan(profile.d_followup))
    if missing.any():
        raise MissingDiameterError(
            f"in-stent slice {int(np.nonzero(missing)[0][0])} lacks post or "
            "follow-up diameter")
    out[stent] = 100.0 * (1.0 - profile.d_followup[stent] / profile.d_post[stent])
    return np.where(stent, np.maximum(out, 0.0), out)


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient.

    Sums use math.fsum, so the result is exactly invariant under permuting
    the sample order.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatchError(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 3:
        raise LengthMismatchError(f"need at least 3 points, got {x.size}")
    dx = x - math.fsum(x) / x.size
    dy = y - math.fsum(y) / y.size
    sx = math.fsum(dx * dx)
    sy = math.fsum(dy * dy)
    if sx == 0.0 or sy == 0.0:
        raise ConstantInputError("correlation undefined for a constant input")
    return math.fsum(dx * dy) / math.sqrt(sx * sy)


def _maybe_pearson(x, y) -> float | None:
    try:
        return pearson(x, y)
    except ConstantInputError:
        return None


def threshold_sweep(summaries: list[SliceStressSummary], restenosis,
                    tau_grid=DEFAULT_TAU_GRID) -> CorrelationReport:
    """Pearson sweep of area-fraction-above-threshold against restenosis.

    ``summaries`` and ``restenosis`` are parallel over the in-stent slices.
    ``argmax_tau`` reports the grid value with the highest defined
    correlation, ties resolved toward the lower threshold.
    """
    tau_grid = tuple(float(t) for t in tau_grid)
    if not tau_grid:
        raise ValueError("threshold grid must be non-empty")
    restenosis = np.asarray(restenosis, dtype=float).ravel()
    if len(summaries) != restenosis.size:
        raise LengthMismatchError(
            f"{len(summaries)} summaries vs {restenosis.size} restenosis values")

    means = np.array([s.mean_p1 for s in summaries])
    p95s = np.array([s.p95_p1 for s in summaries])
    sweep = []
    best: tuple[float, float] | None = None
    for tau in tau_grid:
        fracs = np.array([s.area_fraction_above[tau] for s in summaries])
        r = _maybe_pearson(fracs, restenosis)
        sweep.append((tau, r))
        if r is not None and (best is None or r > best[1]):
            best = (tau, r)

    table = tuple(
        SliceRecord(slice_index=s.slice_index, restenosis_pct=float(restenosis[i]),
                    mean_p1=s.mean_p1, p95_p1=s.p95_p1,
                    fraction_above=dict(s.area_fraction_above))
        for i, s in enumerate(summaries))
    return CorrelationReport(
        r_mean=_maybe_pearson(means, restenosis),
        r_p95=_maybe_pearson(p95s, restenosis),
        sweep=tuple(sweep),
        argmax_tau=None if best is None else best[0],
        n_points=len(summaries),
        table=table)

"""First-principal-stress extraction and per-slice aggregation.

Statistics are area-weighted over quadrature points: each point carries
weight ``w * detJ_ref * det F`` (its share of the deformed cross-section).
The percentile convention is the weighted lower-edge inverse CDF, and area
fractions use a strict ``>`` comparison, so ``frac_above`` is non-increasing
and right-continuous in the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, NonSymmetricError, UnconvergedStateError
from .mesh import CrossSectionMesh, Layer, element_jacobians
from .solver import SolveState


@dataclass(frozen=True)
class SliceStressSummary:
    slice_index: int
    mean_p1: float
    p95_p1: float
    area_fraction_above: dict[float, float]
    total_area: float


def principal_stresses(sigma: np.ndarray) -> np.ndarray:
    """Eigenvalues of symmetric stress tensor(s), sorted descending.

    Accepts shape (..., 3, 3); asymmetry beyond 1e-9 raises NonSymmetricError.
    """
    sigma = np.asarray(sigma, dtype=float)
    skew = np.abs(sigma - np.swapaxes(sigma, -1, -2)).max()
    if skew > 1e-9:
        raise NonSymmetricError(f"stress asymmetry {skew:.3e} exceeds 1e-9")
    vals = np.linalg.eigvalsh(0.5 * (sigma + np.swapaxes(sigma, -1, -2)))
    return vals[..., ::-1]


def first_principal_field(state: SolveState) -> np.ndarray:
    """First principal Cauchy stress per quadrature point, (n_elem, 4)."""
    return principal_stresses(state.qp_stress)[..., 0]


def area_weights(mesh: CrossSectionMesh, state: SolveState) -> np.ndarray:
    """Deformed-area share of each quadrature point, (n_elem, 4), mm^2."""
    det_ref = element_jacobians(mesh.nodes, mesh.elements)
    detF = (state.qp_F[..., 0, 0] * state.qp_F[..., 1, 1]
            - state.qp_F[..., 0, 1] * state.qp_F[..., 1, 0])
    return det_ref * detF


def weighted_percentile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Weighted lower-edge inverse CDF: the smallest value whose cumulative
    weight reaches q * total."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInputError("no samples")
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(weights[order])
    target = q * cum[-1]
    idx = int(np.searchsorted(cum, target, side="left"))
    return float(v[min(idx, v.size - 1)])


def _selection(mesh: CrossSectionMesh, layers: str,
               element_mask: np.ndarray | None) -> np.ndarray:
    if element_mask is not None:
        sel = np.asarray(element_mask, dtype=bool)
    else:
        sel = np.ones(mesh.n_elements, dtype=bool)
    if layers == "intima":
        sel = sel & (mesh.element_layer == Layer.INTIMA)
    elif layers != "all":
        raise ValueError(f"layers must be 'all' or 'intima', got {layers!r}")
    return sel


def slice_summary(mesh: CrossSectionMesh, state: SolveState,
                  thresholds=(), slice_index: int = 0, layers: str = "all",
                  element_mask: np.ndarray | None = None) -> SliceStressSummary:
    """Area-weighted mean / 95th percentile / above-threshold fractions of
    the first principal stress over (a subset of) the deformed slice."""
    if not state.converged:
        raise UnconvergedStateError("slice summary requires a converged state")
    sel = _selection(mesh, layers, element_mask)
    if not sel.any():
        raise EmptyInputError("selection excludes every element")
    p1 = first_principal_field(state)[sel].ravel()
    w = area_weights(mesh, state)[sel].ravel()
    total = float(w.sum())
    mean = float((p1 * w).sum() / total)
    p95 = weighted_percentile(p1, w, 0.95)
    fractions = {float(t): float(w[p1 > t].sum() / total) for t in thresholds}
    return SliceStressSummary(slice_index=slice_index, mean_p1=mean, p95_p1=p95,
                              area_fraction_above=fractions, total_area=total)


def global_percentile_thresholds(fields: list[tuple[np.ndarray, np.ndarray]],
                                 quantiles: tuple[float, float] = (0.80, 0.95)
                                 ) -> tuple[float, ...]:
    """Area-weighted quantiles over the union of all slices' stress samples.

    ``fields`` is a list of (first-principal values, area weights) pairs; the
    returned thresholds band stress maps into none / light / dark classes.
    """
    if not fields:
        raise EmptyInputError("no slice fields")
    values = np.concatenate([np.asarray(v, dtype=float).ravel() for v, _ in fields])
    weights = np.concatenate([np.asarray(w, dtype=float).ravel() for _, w in fields])
    if values.size == 0:
        raise EmptyInputError("no stress samples")
    return tuple(weighted_percentile(values, weights, q) for q in quantiles)


def band_classes(values: np.ndarray, t_light: float, t_dark: float) -> np.ndarray:
    """0 below the light threshold, 1 in [light, dark), 2 at or above dark."""
    values = np.asarray(values, dtype=float)
    return ((values >= t_light).astype(np.int8)
            + (values >= t_dark).astype(np.int8))

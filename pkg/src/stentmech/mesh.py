"""Layered annular quad meshes of artery cross-sections.

A slice mesh is a structured grid of bilinear quads: ``n_sectors`` angular
sectors times a stack of radial rings.  The intima band interpolates the
(variable-thickness) region between the lumen and intima-outer contours;
media and adventitia are fixed-thickness offsets along the local outward
normal of the intima-outer contour.

Also provides the synthetic morphology scenarios (circumferential and block
calcification patterns) used by the desk-scale calcification study.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import (ContourCrossingError, DegenerateElementError,
                     NoSamplesForSliceError)
from .gmm import PlaqueComponent
from .materials import MaterialKey


class Layer(IntEnum):
    INTIMA = 0
    MEDIA = 1
    ADVENTITIA = 2


# --- bilinear quad reference element ---------------------------------------

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
GAUSS_WEIGHTS = np.ones(4)


def shape_functions(xi: float, eta: float) -> np.ndarray:
    return 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                            (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])


def shape_gradients(xi: float, eta: float) -> np.ndarray:
    """d N_a / d(xi, eta), shape (4, 2)."""
    return 0.25 * np.array([
        [-(1 - eta), -(1 - xi)],
        [(1 - eta), -(1 + xi)],
        [(1 + eta), (1 + xi)],
        [-(1 + eta), (1 - xi)],
    ])


GAUSS_GRADS = np.stack([shape_gradients(xi, eta) for xi, eta in GAUSS_POINTS])


def element_jacobians(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """det of the reference->physical map at the 2x2 Gauss points, (n_elem, 4).

    Convention: the reference element is [-1, 1]^2, so a unit square gives
    det = 0.25 (quarter-area)."""
    coords = nodes[elements]                       # (e, 4, 2)
    jac = np.einsum("eai,qao->eqio", coords, GAUSS_GRADS)
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


@dataclass(frozen=True)
class CrossSectionMesh:
    nodes: np.ndarray                 # (n_nodes, 2), mm
    elements: np.ndarray              # (n_elem, 4), counterclockwise
    element_layer: np.ndarray         # (n_elem,) Layer values
    element_material: np.ndarray      # (n_elem,) MaterialKey values
    element_sector: np.ndarray        # (n_elem,)
    element_ring: np.ndarray          # (n_elem,) global ring index, 0 at lumen
    lumen_boundary_nodes: np.ndarray  # ordered CCW, implicit closure
    outer_boundary_nodes: np.ndarray
    center: np.ndarray                # (2,) ray-cast center (lumen centroid)
    n_sectors: int
    rings: tuple[int, int, int]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)

    def element_circumferential(self) -> np.ndarray:
        """Unit in-plane circumferential direction (+theta) per element."""
        rel = self.element_centroids() - self.center
        r = np.linalg.norm(rel, axis=1, keepdims=True)
        t = np.column_stack([-rel[:, 1], rel[:, 0]]) / r
        return t

    def intima_mask(self) -> np.ndarray:
        return self.element_layer == Layer.INTIMA

    def with_materials(self, element_material: np.ndarray) -> "CrossSectionMesh":
        return dataclasses.replace(self, element_material=np.asarray(
            element_material, dtype=self.element_material.dtype))

    def reference_lumen_radius(self) -> float:
        """Mean distance of lumen boundary nodes from the mesh center."""
        rel = self.nodes[self.lumen_boundary_nodes] - self.center
        return float(np.linalg.norm(rel, axis=1).mean())


@dataclass(frozen=True)
class MeshQuality:
    min_jacobian: float
    max_aspect: float
    total_area: float


# --- contour helpers --------------------------------------------------------

def polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return 0.5 * float(np.sum(x * yn - xn * y))


def polygon_centroid(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _ray_distances(center: np.ndarray, directions: np.ndarray,
                   polygon: np.ndarray, which: str) -> np.ndarray:
    """Distance from center to the polygon along each direction.

    Takes the nearest positive intersection; raises ContourCrossingError if
    any ray misses the contour entirely.
    """
    p = polygon
    q = np.roll(polygon, -1, axis=0)
    edge = q - p                                   # (m, 2)
    rel = p - center                               # (m, 2)
    # center + t*u = p + s*edge  ->  [u, -edge] [t, s]^T = rel
    out = np.full(directions.shape[0], np.inf)
    for j, u in enumerate(directions):
        det = -u[0] * edge[:, 1] + u[1] * edge[:, 0]
        ok = np.abs(det) > 1e-14
        t = np.where(ok, (rel[:, 0] * (-edge[:, 1]) + rel[:, 1] * edge[:, 0]) / det, np.inf)
        s = np.where(ok, (u[0] * rel[:, 1] - u[1] * rel[:, 0]) / det, -1.0)
        # tolerant at endpoints: a vertex lying exactly on the ray must hit
        hit = ok & (t > 1e-12) & (s >= -1e-9) & (s <= 1.0 + 1e-9)
        if not np.any(hit):
            raise ContourCrossingError(
                f"sector ray {j} misses the {which} contour")
        out[j] = t[hit].min()
    return out


def _outward_normals(points: np.ndarray) -> np.ndarray:
    """Vertex normals of a CCW loop, pointing away from the interior."""
    t = np.roll(points, -1, axis=0) - np.roll(points, 1, axis=0)
    n = np.column_stack([t[:, 1], -t[:, 0]])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


# --- mesh construction ------------------------------------------------------

def build_slice_mesh(lumen: np.ndarray, intima_outer: np.ndarray,
                     t_media: float = 0.32, t_adv: float = 0.34,
                     n_sectors: int = 48,
                     rings: tuple[int, int, int] = (4, 2, 2)) -> CrossSectionMesh:
    """Structured layered mesh between the two contours.

    Intima rings interpolate lumen -> intima-outer along each sector ray;
    media and adventitia rings offset outward along the local contour normal
    by ``t_media`` and ``t_adv``.  All element Jacobians are verified
    positive (one normal-smoothing pass is attempted before giving up).
    """
    lumen = np.asarray(lumen, dtype=float)
    intima_outer = np.asarray(intima_outer, dtype=float)
    if n_sectors < 8:
        raise ValueError("n_sectors must be at least 8")
    n_int, n_med, n_adv = rings
    if min(n_int, n_med, n_adv) < 1:
        raise ValueError("each layer needs at least one ring")
    if t_media <= 0 or t_adv <= 0:
        raise ValueError("layer thicknesses must be positive")

    center = polygon_centroid(lumen)
    theta = 2.0 * np.pi * np.arange(n_sectors) / n_sectors
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    r_lumen = _ray_distances(center, dirs, lumen, "lumen")
    r_outer = _ray_distances(center, dirs, intima_outer, "intima-outer")
    bad = np.nonzero(r_outer <= r_lumen)[0]
    if bad.size:
        raise ContourCrossingError(
            f"lumen reaches past the intima-outer contour at sector {bad[0]}")

    outer_pts = center + r_outer[:, None] * dirs
    normals = _outward_normals(outer_pts)

    def assemble_nodes(nrm: np.ndarray) -> np.ndarray:
        rows = []
        for k in range(n_int + 1):
            frac = k / n_int
            radii = (1.0 - frac) * r_lumen + frac * r_outer
            rows.append(center + radii[:, None] * dirs)
        for k in range(1, n_med + 1):
            rows.append(outer_pts + (t_media * k / n_med) * nrm)
        for k in range(1, n_adv + 1):
            rows.append(outer_pts + (t_media + t_adv * k / n_adv) * nrm)
        return np.concatenate(rows, axis=0)

    n_rings = n_int + n_med + n_adv
    sectors = np.arange(n_sectors)
    ring_idx, sect_idx = np.meshgrid(np.arange(n_rings), sectors, indexing="ij")
    ring_idx = ring_idx.ravel()
    sect_idx = sect_idx.ravel()
    nxt = (sect_idx + 1) % n_sectors
    elements = np.column_stack([
        ring_idx * n_sectors + sect_idx,
        (ring_idx + 1) * n_sectors + sect_idx,
        (ring_idx + 1) * n_sectors + nxt,
        ring_idx * n_sectors + nxt,
    ]).astype(np.int32)

    nodes = assemble_nodes(normals)
    det = element_jacobians(nodes, elements)
    if det.min() <= 0.0:
        # One smoothing pass over the offset normals, then give up.
        sm = normals + 0.5 * (np.roll(normals, 1, axis=0) + np.roll(normals, -1, axis=0))
        sm /= np.linalg.norm(sm, axis=1, keepdims=True)
        nodes = assemble_nodes(sm)
        det = element_jacobians(nodes, elements)
        if det.min() <= 0.0:
            e = int(np.unravel_index(det.argmin(), det.shape)[0])
            raise DegenerateElementError(e, float(det.min()))

    layer = np.where(ring_idx < n_int, Layer.INTIMA,
                     np.where(ring_idx < n_int + n_med, Layer.MEDIA,
                              Layer.ADVENTITIA)).astype(np.int8)
    material = np.where(layer == Layer.INTIMA, MaterialKey.NORMAL_INTIMA,
                        np.where(layer == Layer.MEDIA, MaterialKey.MEDIA,
                                 MaterialKey.ADVENTITIA)).astype(np.int8)

    return CrossSectionMesh(
        nodes=nodes,
        elements=elements,
        element_layer=layer,
        element_material=material,
        element_sector=sect_idx.astype(np.int32),
        element_ring=ring_idx.astype(np.int32),
        lumen_boundary_nodes=np.arange(n_sectors, dtype=np.int32),
        outer_boundary_nodes=(n_rings * n_sectors
                              + np.arange(n_sectors, dtype=np.int32)),
        center=center,
        n_sectors=n_sectors,
        rings=(n_int, n_med, n_adv),
    )


def assign_regions(mesh: CrossSectionMesh, positions: np.ndarray,
                   labels: np.ndarray) -> CrossSectionMesh:
    """Label each intima element with the nearest classified sample.

    Nearest is Euclidean distance from the element centroid to the sample
    position, ties broken by the lowest sample index; media and adventitia
    keep their layer material.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    labels = np.asarray(labels)
    if positions.shape[0] == 0:
        raise NoSamplesForSliceError("no labeled samples for this slice")
    if positions.shape[0] != labels.shape[0]:
        raise ValueError("positions and labels must have equal length")

    material = mesh.element_material.copy()
    intima = mesh.intima_mask()
    centroids = mesh.element_centroids()[intima]
    nearest = np.empty(centroids.shape[0], dtype=np.int64)
    chunk = max(1, int(2e6) // max(positions.shape[0], 1))
    for lo in range(0, centroids.shape[0], chunk):
        d = centroids[lo:lo + chunk, None, :] - positions[None, :, :]
        dist2 = np.einsum("cij,cij->ci", d, d)
        nearest[lo:lo + chunk] = dist2.argmin(axis=1)
    material[intima] = labels[nearest].astype(material.dtype)
    return mesh.with_materials(material)


def mesh_quality(mesh: CrossSectionMesh) -> MeshQuality:
    det = element_jacobians(mesh.nodes, mesh.elements)
    coords = mesh.nodes[mesh.elements]
    edges = np.roll(coords, -1, axis=1) - coords
    lengths = np.linalg.norm(edges, axis=2)
    aspect = lengths.max(axis=1) / lengths.min(axis=1)
    area = float(np.sum(det * GAUSS_WEIGHTS))
    return MeshQuality(min_jacobian=float(det.min()),
                       max_aspect=float(aspect.max()),
                       total_area=area)


# --- synthetic morphologies -------------------------------------------------

class PatternKind(IntEnum):
    HOMOGENEOUS = 0
    CIRCUMFERENTIAL_CALC = 1
    ASYMMETRIC_BLOCK = 2
    OPPOSING_BLOCKS = 3


@dataclass(frozen=True)
class MorphologyPattern:
    """Synthetic intima composition scenario.

    ``arc_deg`` is the angular extent of the calcified region starting at
    ``start_deg``; ``block_depth`` is the fraction of intima rings (from the
    lumen outward) occupied by a block calcification, with ``behind`` filling
    the rings between block and media.
    """

    kind: PatternKind
    arc_deg: float = 360.0
    component: PlaqueComponent = PlaqueComponent.FIBROTIC
    behind: PlaqueComponent = PlaqueComponent.FIBROTIC
    start_deg: float = 0.0
    block_depth: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.arc_deg <= 360.0:
            raise ValueError("arc must lie in (0, 360] degrees")
        if self.kind == PatternKind.CIRCUMFERENTIAL_CALC and self.arc_deg <= 180.0:
            raise ValueError("circumferential calcification requires arc > 180 degrees")
        if not 0.0 < self.block_depth <= 1.0:
            raise ValueError("block_depth must lie in (0, 1]")


def homogeneous(component: PlaqueComponent) -> MorphologyPattern:
    return MorphologyPattern(PatternKind.HOMOGENEOUS, component=component)


def circumferential_calc(arc_deg: float) -> MorphologyPattern:
    return MorphologyPattern(PatternKind.CIRCUMFERENTIAL_CALC, arc_deg=arc_deg)


def asymmetric_block(arc_deg: float,
                     behind: PlaqueComponent = PlaqueComponent.FIBROTIC,
                     block_depth: float = 0.5) -> MorphologyPattern:
    return MorphologyPattern(PatternKind.ASYMMETRIC_BLOCK, arc_deg=arc_deg,
                             behind=behind, block_depth=block_depth)


def opposing_blocks(arc_deg: float) -> MorphologyPattern:
    return MorphologyPattern(PatternKind.OPPOSING_BLOCKS, arc_deg=arc_deg)


@dataclass(frozen=True)
class SynthGeometry:
    """Concentric (or eccentric) circular slice used for studies and tests."""

    lumen_radius: float = 1.5
    intima_thickness: float = 0.5
    lumen_offset: float = 0.0   # lumen center offset along +x, mm
    contour_points: int = 128

    def contours(self) -> tuple[np.ndarray, np.ndarray]:
        ang = 2.0 * np.pi * np.arange(self.contour_points) / self.contour_points
        ring = np.column_stack([np.cos(ang), np.sin(ang)])
        lumen = self.lumen_radius * ring + np.array([self.lumen_offset, 0.0])
        outer = (self.lumen_radius + self.intima_thickness) * ring
        return lumen, outer


def _in_arc(angles_deg: np.ndarray, start: float, arc: float) -> np.ndarray:
    return (angles_deg - start) % 360.0 < arc


def synth_slice(pattern: MorphologyPattern,
                geometry: SynthGeometry = SynthGeometry(),
                t_media: float = 0.32, t_adv: float = 0.34,
                n_sectors: int = 36,
                rings: tuple[int, int, int] = (4, 2, 2)) -> CrossSectionMesh:
    """Mesh of a synthetic slice whose intima labels realize ``pattern``."""
    lumen, outer = geometry.contours()
    mesh = build_slice_mesh(lumen, outer, t_media=t_media, t_adv=t_adv,
                            n_sectors=n_sectors, rings=rings)
    material = mesh.element_material.copy()
    intima = mesh.intima_mask()
    sector_angle = (mesh.element_sector + 0.5) * (360.0 / n_sectors)
    ring = mesh.element_ring
    n_int = rings[0]

    if pattern.kind == PatternKind.HOMOGENEOUS:
        material[intima] = pattern.component
    elif pattern.kind == PatternKind.CIRCUMFERENTIAL_CALC:
        arc = _in_arc(sector_angle, pattern.start_deg, pattern.arc_deg)
        material[intima & arc] = PlaqueComponent.CALCIFICATION
        material[intima & ~arc] = PlaqueComponent.FIBROTIC
    elif pattern.kind == PatternKind.ASYMMETRIC_BLOCK:
        arc = _in_arc(sector_angle, pattern.start_deg, pattern.arc_deg)
        depth = int(np.ceil(pattern.block_depth * n_int))
        block = intima & arc & (ring < depth)
        rear = intima & arc & (ring >= depth)
        material[intima] = PlaqueComponent.FIBROTIC
        material[block] = PlaqueComponent.CALCIFICATION
        material[rear] = pattern.behind
    elif pattern.kind == PatternKind.OPPOSING_BLOCKS:
        arc = (_in_arc(sector_angle, pattern.start_deg, pattern.arc_deg)
               | _in_arc(sector_angle, pattern.start_deg + 180.0, pattern.arc_deg))
        material[intima & arc] = PlaqueComponent.CALCIFICATION
        material[intima & ~arc] = PlaqueComponent.FIBROTIC
    return mesh.with_materials(material)


def behind_block_elements(mesh: CrossSectionMesh, pattern: MorphologyPattern,
                          ) -> np.ndarray:
    """Element indices of intima tissue radially behind the block arc."""
    n_int = mesh.rings[0]
    depth = int(np.ceil(pattern.block_depth * n_int))
    sector_angle = (mesh.element_sector + 0.5) * (360.0 / mesh.n_sectors)
    arc = _in_arc(sector_angle, pattern.start_deg, pattern.arc_deg)
    sel = mesh.intima_mask() & arc & (mesh.element_ring >= depth)
    return np.nonzero(sel)[0]

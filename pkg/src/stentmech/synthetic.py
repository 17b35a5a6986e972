"""Synthetic case bundles for tests, demos and the morphology study.

Generates a straight vessel segment with a Gaussian stenosis bump, a
plaque-component layout painted into the intima voxels (HU = component mean
plus seeded Gaussian noise), and diameter profiles with a restenosis pattern
at follow-up.  The seed only affects HU noise and profile noise; geometry is
deterministic.
"""

from __future__ import annotations

import numpy as np

from .case_io import (CaseBundle, Centerline, CenterlineProfile, HuVolume,
                      IntimaMask, SliceContours)
from .config import RunConfig
from .gmm import PlaqueComponent

HU_MEANS = {PlaqueComponent.LIPID_RICH: 20.0, PlaqueComponent.FIBROTIC: 90.0,
            PlaqueComponent.NORMAL_INTIMA: 180.0,
            PlaqueComponent.CALCIFICATION: 500.0}
HU_SIGMAS = {PlaqueComponent.LIPID_RICH: 10.0, PlaqueComponent.FIBROTIC: 20.0,
             PlaqueComponent.NORMAL_INTIMA: 25.0,
             PlaqueComponent.CALCIFICATION: 40.0}


def _lumen_radius_profile(z_frac: np.ndarray, base: float, depth: float) -> np.ndarray:
    """Lumen radius vs normalized axial position; Gaussian stenosis at 0.5."""
    return base - depth * np.exp(-(((z_frac - 0.5) / 0.18) ** 2))


def make_synthetic_case(n_slices: int = 20, seed: int = 0,
                        lumen_radius: float = 1.5, outer_radius: float = 2.0,
                        stenosis_depth: float = 0.5,
                        spacing: float = 0.4, contour_points: int = 64,
                        plaque: str = "mixed",
                        config: RunConfig | None = None) -> CaseBundle:
    """Build a fully in-memory synthetic case bundle.

    ``plaque`` is "mixed" (all four components present) or "binary"
    (fibrotic background with one calcified block, for two-cluster tests).
    """
    if plaque not in ("mixed", "binary"):
        raise ValueError(f"unknown plaque layout {plaque!r}")
    rng = np.random.default_rng(seed)

    # grid: x/y centered on the vessel axis, slices every other voxel in z
    half_extent = outer_radius + 1.2
    nxy = 2 * int(np.ceil(half_extent / spacing)) + 1
    nz = 2 * n_slices + 2
    dims = (nxy, nxy, nz)
    axis_xy = spacing * (nxy - 1) / 2.0
    origin = (0.0, 0.0, 0.0)

    ix = np.arange(nxy) * spacing - axis_xy
    iz = np.arange(nz) * spacing
    X, Y, Z = np.meshgrid(ix, ix, iz, indexing="ij")
    R = np.hypot(X, Y)
    theta = np.degrees(np.arctan2(Y, X)) % 360.0

    z_start = spacing  # first slice plane
    z_span = 2.0 * spacing * (n_slices - 1)
    zfrac = np.clip((Z - z_start) / z_span, 0.0, 1.0)
    r_lum = _lumen_radius_profile(zfrac, lumen_radius, stenosis_depth)

    mask = (R > r_lum) & (R < outer_radius)
    radial = np.clip((R - r_lum) / np.maximum(outer_radius - r_lum, 1e-9), 0.0, 1.0)

    comp = np.full(dims, int(PlaqueComponent.FIBROTIC), dtype=np.int8)
    if plaque == "mixed":
        calc_zone = ((theta >= 20.0) & (theta < 120.0) & (zfrac > 0.35)
                     & (zfrac < 0.75) & (radial < 0.6))
        comp[(radial >= 0.75)] = int(PlaqueComponent.NORMAL_INTIMA)
        lipid_zone = (theta >= 190.0) & (theta < 270.0) & (radial < 0.45)
        comp[lipid_zone] = int(PlaqueComponent.LIPID_RICH)
    else:  # a single large calcified block on fibrotic background
        calc_zone = theta < 120.0
    comp[calc_zone] = int(PlaqueComponent.CALCIFICATION)

    hu = np.full(dims, 300.0)  # contrast-filled lumen / background
    hu[~mask & (R >= outer_radius)] = -60.0
    means = np.array([HU_MEANS[PlaqueComponent(k)] for k in range(4)])
    sigmas = np.array([HU_SIGMAS[PlaqueComponent(k)] for k in range(4)])
    if plaque == "binary":
        sigmas = np.array([10.0, 10.0, 25.0, 30.0])  # crisp two-cluster data
    noise = rng.standard_normal(int(mask.sum()))
    hu[mask] = means[comp[mask]] + sigmas[comp[mask]] * noise
    volume = HuVolume(dims=dims, spacing=(spacing,) * 3, origin=origin,
                      values=np.round(np.clip(hu, -1024, 3071)).astype(np.int16))
    intima = IntimaMask(dims=dims, flags=mask.astype(np.uint8))

    # centerline: straight along +z through the grid center
    s = 2.0 * spacing * np.arange(n_slices)
    positions = np.column_stack([np.full(n_slices, axis_xy),
                                 np.full(n_slices, axis_xy),
                                 z_start + s])
    tangents = np.tile([0.0, 0.0, 1.0], (n_slices, 1))
    centerline = Centerline(s=s, positions=positions, tangents=tangents)

    ang = 2.0 * np.pi * np.arange(contour_points) / contour_points
    ring = np.column_stack([np.cos(ang), np.sin(ang)])
    sfrac = np.clip(s / max(z_span, 1e-9), 0.0, 1.0)
    r_slice = _lumen_radius_profile(sfrac, lumen_radius, stenosis_depth)
    lumen = tuple(r * ring for r in r_slice)
    outer = tuple(outer_radius * ring for _ in range(n_slices))
    contours = SliceContours(lumen=lumen, outer=outer)

    # profiles: post-stent diameter set by the scaffold, restenosis at follow-up
    in_stent = (np.arange(n_slices) >= n_slices // 4) & \
               (np.arange(n_slices) < n_slices - n_slices // 4)
    d_pre = 2.0 * r_slice
    d_post = np.where(in_stent, 2.0 * 1.1 * lumen_radius, d_pre)
    resten = np.where(in_stent,
                      45.0 * np.exp(-(((sfrac - 0.5) / 0.2) ** 2))
                      + rng.uniform(0.0, 3.0, n_slices), 0.0)
    d_fu = d_post * (1.0 - resten / 100.0)
    profiles = CenterlineProfile(s=s, d_pre=d_pre, d_post=d_post,
                                 d_followup=d_fu, in_stent=in_stent)

    return CaseBundle(volume=volume, mask=intima, centerline=centerline,
                      contours=contours, profiles=profiles,
                      config=config if config is not None else RunConfig())


def draw_mixture_samples(n: int, seed: int,
                         means=(20.0, 90.0, 180.0, 500.0),
                         sigmas=(10.0, 20.0, 25.0, 40.0),
                         weights=(0.25, 0.25, 0.25, 0.25)
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Samples from a known 4-component mixture plus their true labels."""
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(means), size=n, p=np.asarray(weights) / np.sum(weights))
    x = np.asarray(means)[labels] + np.asarray(sigmas)[labels] * rng.standard_normal(n)
    return x, labels

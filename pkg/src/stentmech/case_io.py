"""Case-bundle directory format.

A case is a directory with:

* ``volume.hdr``  -- plain-text header: ``dims``, ``spacing``, ``origin``
  lines (three numbers each)
* ``volume.raw``  -- little-endian signed 16-bit HU payload, x-fastest
* ``mask.raw``    -- 8-bit {0,1} intima mask of equal dims
* ``centerline.csv`` -- columns s,x,y,z,tx,ty,tz
* ``contours.csv``   -- columns slice_index,contour,point_index,u,v with
  contour in {lumen, outer}; u,v are in-slice mm coordinates
* ``profiles.csv``   -- columns s,d_pre,d_post,d_followup,in_stent
  (empty cell = diameter not available)
* ``config.txt``     -- flat ``key = value`` run configuration

Voxel (0,0,0) is centered at ``origin``; voxel centers advance by
``spacing`` per index.  Floats are written with ``repr`` so a save/load
round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import (HeaderMismatchError, IndexOutOfRangeError,
                     InvariantViolationError, IoFailureError, MissingFileError)

VOLUME_HDR = "volume.hdr"
VOLUME_RAW = "volume.raw"
MASK_RAW = "mask.raw"
CENTERLINE_CSV = "centerline.csv"
CONTOURS_CSV = "contours.csv"
PROFILES_CSV = "profiles.csv"
CONFIG_TXT = "config.txt"

CASE_FILES = (VOLUME_HDR, VOLUME_RAW, MASK_RAW, CENTERLINE_CSV,
              CONTOURS_CSV, PROFILES_CSV, CONFIG_TXT)


# --- domain types -----------------------------------------------------------

@dataclass(frozen=True)
class HuVolume:
    """Dense HU grid; ``values`` has shape (nx, ny, nz)."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float]
    values: np.ndarray

    def __post_init__(self):
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise InvariantViolationError("volume.dims", f"must be 3 positive ints, got {self.dims}")
        if any(s <= 0 for s in self.spacing):
            raise InvariantViolationError("volume.spacing", f"must be positive, got {self.spacing}")
        if self.values.dtype != np.int16 or self.values.shape != tuple(self.dims):
            raise InvariantViolationError(
                "volume.values", f"expected int16 of shape {self.dims}, got "
                f"{self.values.dtype} {self.values.shape}")

    def voxel_centers(self, index: np.ndarray) -> np.ndarray:
        """World coordinates (mm) of voxel indices, shape (..., 3)."""
        return np.asarray(self.origin) + np.asarray(index) * np.asarray(self.spacing)


@dataclass(frozen=True)
class IntimaMask:
    dims: tuple[int, int, int]
    flags: np.ndarray  # uint8 {0,1}, shape dims

    def __post_init__(self):
        if self.flags.dtype != np.uint8 or self.flags.shape != tuple(self.dims):
            raise InvariantViolationError(
                "mask.flags", f"expected uint8 of shape {self.dims}")
        bad = (self.flags > 1).nonzero()
        if bad[0].size:
            raise InvariantViolationError("mask.flags", "values must be 0 or 1",
                                          index=int(bad[0][0]))


@dataclass(frozen=True)
class Centerline:
    s: np.ndarray          # (n,) arclength, mm
    positions: np.ndarray  # (n, 3)
    tangents: np.ndarray   # (n, 3) unit

    def __post_init__(self):
        if self.s.ndim != 1 or self.s.size == 0:
            raise InvariantViolationError("centerline.s", "must be non-empty 1D")
        if self.s[0] != 0.0:
            raise InvariantViolationError("centerline.s", "must start at 0", index=0)
        bad = np.nonzero(np.diff(self.s) <= 0.0)[0]
        if bad.size:
            raise InvariantViolationError("centerline.s", "must be strictly increasing",
                                          index=int(bad[0] + 1))
        norms = np.linalg.norm(self.tangents, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > 1e-9)[0]
        if bad.size:
            raise InvariantViolationError("centerline.tangent", "must be unit-norm",
                                          index=int(bad[0]))

    def __len__(self) -> int:
        return self.s.size

    def slice_frame(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic in-plane orthonormal basis (e1, e2) for a slice.

        Gram-Schmidt of the fixed reference (0,0,1) against the tangent,
        falling back to (1,0,0) for near-axial tangents.
        """
        t = self.tangents[index]
        ref = np.array([0.0, 0.0, 1.0])
        if abs(float(t @ ref)) > 0.99:
            ref = np.array([1.0, 0.0, 0.0])
        e1 = ref - (ref @ t) * t
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(t, e1)
        return e1, e2


@dataclass(frozen=True)
class SliceContours:
    """Per-slice lumen and intima-outer polylines (in-slice mm coords)."""

    lumen: tuple[np.ndarray, ...]
    outer: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.lumen) != len(self.outer):
            raise InvariantViolationError("contours", "lumen/outer slice counts differ")
        for i, (lum, out) in enumerate(zip(self.lumen, self.outer)):
            for name, poly in (("lumen", lum), ("outer", out)):
                if poly.shape[0] < 8:
                    raise InvariantViolationError(f"contours.{name}",
                                                  "needs at least 8 points", index=i)
                if _polygon_signed_area(poly) <= 0.0:
                    raise InvariantViolationError(f"contours.{name}",
                                                  "must be counterclockwise", index=i)
                if _self_intersects(poly):
                    raise InvariantViolationError(f"contours.{name}",
                                                  "polyline self-intersects", index=i)
            if not _strictly_inside(lum, out):
                raise InvariantViolationError("contours.lumen",
                                              "must lie strictly inside the outer contour",
                                              index=i)

    def __len__(self) -> int:
        return len(self.lumen)


@dataclass(frozen=True)
class CenterlineProfile:
    """Arclength-indexed diameters; NaN marks a missing measurement."""

    s: np.ndarray
    d_pre: np.ndarray
    d_post: np.ndarray
    d_followup: np.ndarray
    in_stent: np.ndarray  # bool

    def __post_init__(self):
        n = self.s.size
        for name in ("d_pre", "d_post", "d_followup", "in_stent"):
            if getattr(self, name).shape != (n,):
                raise InvariantViolationError(f"profiles.{name}", "length mismatch")
        for name in ("d_pre", "d_post", "d_followup"):
            arr = getattr(self, name)
            bad = np.nonzero(~np.isnan(arr) & (arr <= 0.0))[0]
            if bad.size:
                raise InvariantViolationError(f"profiles.{name}",
                                              "diameters must be positive",
                                              index=int(bad[0]))

    def __len__(self) -> int:
        return self.s.size


@dataclass(frozen=True)
class CaseBundle:
    volume: HuVolume
    mask: IntimaMask
    centerline: Centerline
    contours: SliceContours
    profiles: CenterlineProfile
    config: RunConfig

    def __post_init__(self):
        if tuple(self.mask.dims) != tuple(self.volume.dims):
            raise InvariantViolationError("mask.dims", "must match volume dims")
        if not self.mask.flags.any():
            raise InvariantViolationError("mask.flags", "no voxel flagged")
        n = len(self.centerline)
        if len(self.contours) != n or len(self.profiles) != n:
            raise InvariantViolationError(
                "bundle", f"centerline ({n}), contours ({len(self.contours)}) and "
                f"profiles ({len(self.profiles)}) sample counts must match")

    @property
    def n_slices(self) -> int:
        return len(self.centerline)


# --- polygon predicates -----------------------------------------------------

def _polygon_signed_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _self_intersects(points: np.ndarray) -> bool:
    """Proper-crossing test over all non-adjacent closed-polyline segments."""
    n = points.shape[0]
    p = points
    q = np.roll(points, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))  # wrap-around neighbors
    i, j = i[keep], j[keep]

    def orient(a, b, c):
        return ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    d1 = orient(p[i], q[i], p[j]) * orient(p[i], q[i], q[j])
    d2 = orient(p[j], q[j], p[i]) * orient(p[j], q[j], q[i])
    return bool(np.any((d1 < 0.0) & (d2 < 0.0)))


def _points_inside(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule, vectorized over query points."""
    x, y = points[:, 0], points[:, 1]
    px, py = polygon[:, 0], polygon[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    inside = np.zeros(points.shape[0], dtype=bool)
    for k in range(polygon.shape[0]):
        cond = (py[k] > y) != (qy[k] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = px[k] + (y - py[k]) * (qx[k] - px[k]) / (qy[k] - py[k])
        inside ^= cond & (x < xcross)
    return inside


def _strictly_inside(inner: np.ndarray, outer: np.ndarray) -> bool:
    if not np.all(_points_inside(inner, outer)):
        return False
    # no boundary crossings between the two loops
    n, m = inner.shape[0], outer.shape[0]
    p1, q1 = inner, np.roll(inner, -1, axis=0)
    p2, q2 = outer, np.roll(outer, -1, axis=0)
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()

    def orient(a, b, c):
        return ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    d1 = orient(p1[ii], q1[ii], p2[jj]) * orient(p1[ii], q1[ii], q2[jj])
    d2 = orient(p2[jj], q2[jj], p1[ii]) * orient(p2[jj], q2[jj], q1[ii])
    return not bool(np.any((d1 < 0.0) & (d2 < 0.0)))


# --- text formatting --------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _parse_float(text: str, field: str, index: int | None = None) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise InvariantViolationError(field, f"not a number: {text!r}", index=index) from exc


def _read_csv(path: Path, columns: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise HeaderMismatchError(f"{path.name}: not valid UTF-8 text") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != columns:
        raise HeaderMismatchError(
            f"{path.name}: expected columns {','.join(columns)}, got "
            f"{reader.fieldnames}")
    return list(reader)


# --- loading ----------------------------------------------------------------

def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingFileError(path)
    return path


def _load_volume(case_dir: Path) -> HuVolume:
    header = _require(case_dir / VOLUME_HDR).read_text(encoding="utf-8")
    fields: dict[str, tuple[float, ...]] = {}
    for line in header.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] not in ("dims", "spacing", "origin"):
            raise HeaderMismatchError(f"{VOLUME_HDR}: bad line {line!r}")
        try:
            fields[parts[0]] = tuple(float(tok) for tok in parts[1:])
        except ValueError as exc:
            raise HeaderMismatchError(f"{VOLUME_HDR}: bad number in {line!r}") from exc
    missing = {"dims", "spacing", "origin"} - set(fields)
    if missing:
        raise HeaderMismatchError(f"{VOLUME_HDR}: missing {sorted(missing)}")
    dims_f = fields["dims"]
    if any(d != int(d) for d in dims_f):
        raise HeaderMismatchError(f"{VOLUME_HDR}: dims must be integers, got {dims_f}")
    dims = tuple(int(d) for d in dims_f)

    payload = _require(case_dir / VOLUME_RAW).read_bytes()
    n = int(np.prod(dims))
    if len(payload) != 2 * n:
        raise HeaderMismatchError(
            f"{VOLUME_RAW}: payload is {len(payload)} bytes, header declares "
            f"{2 * n} ({dims[0]}x{dims[1]}x{dims[2]} int16)")
    values = np.frombuffer(payload, dtype="<i2").reshape(dims, order="F")
    return HuVolume(dims=dims, spacing=fields["spacing"], origin=fields["origin"],
                    values=values.astype(np.int16))


def _load_mask(case_dir: Path, dims: tuple[int, int, int]) -> IntimaMask:
    payload = _require(case_dir / MASK_RAW).read_bytes()
    n = int(np.prod(dims))
    if len(payload) != n:
        raise HeaderMismatchError(
            f"{MASK_RAW}: payload is {len(payload)} bytes, volume dims imply {n}")
    flags = np.frombuffer(payload, dtype=np.uint8).reshape(dims, order="F").copy()
    return IntimaMask(dims=dims, flags=flags)


def _load_centerline(case_dir: Path) -> Centerline:
    rows = _read_csv(_require(case_dir / CENTERLINE_CSV),
                     ("s", "x", "y", "z", "tx", "ty", "tz"))
    if not rows:
        raise InvariantViolationError("centerline", "no rows")
    s = np.array([_parse_float(r["s"], "centerline.s", i) for i, r in enumerate(rows)])
    pos = np.array([[_parse_float(r[c], f"centerline.{c}", i) for c in ("x", "y", "z")]
                    for i, r in enumerate(rows)])
    tan = np.array([[_parse_float(r[c], f"centerline.{c}", i) for c in ("tx", "ty", "tz")]
                    for i, r in enumerate(rows)])
    return Centerline(s=s, positions=pos, tangents=tan)


def _load_contours(case_dir: Path, n_slices: int) -> SliceContours:
    rows = _read_csv(_require(case_dir / CONTOURS_CSV),
                     ("slice_index", "contour", "point_index", "u", "v"))
    per: dict[tuple[int, str], list[tuple[int, float, float]]] = {}
    for i, r in enumerate(rows):
        try:
            sl = int(r["slice_index"])
            pt = int(r["point_index"])
        except ValueError as exc:
            raise InvariantViolationError("contours.index", f"bad row {i}") from exc
        name = r["contour"]
        if name not in ("lumen", "outer"):
            raise InvariantViolationError("contours.contour",
                                          f"unknown contour {name!r}", index=i)
        u = _parse_float(r["u"], "contours.u", i)
        v = _parse_float(r["v"], "contours.v", i)
        per.setdefault((sl, name), []).append((pt, u, v))

    lumen, outer = [], []
    for sl in range(n_slices):
        for name, dest in (("lumen", lumen), ("outer", outer)):
            pts = per.pop((sl, name), None)
            if pts is None:
                raise InvariantViolationError("contours",
                                              f"slice {sl} missing {name} contour",
                                              index=sl)
            pts.sort(key=lambda t: t[0])
            if [p[0] for p in pts] != list(range(len(pts))):
                raise InvariantViolationError("contours.point_index",
                                              "must be 0..k-1 per contour", index=sl)
            dest.append(np.array([[u, v] for _, u, v in pts]))
    if per:
        sl, name = next(iter(per))
        raise InvariantViolationError("contours", f"unexpected {name} contour for "
                                      f"slice {sl} (beyond centerline)", index=sl)
    return SliceContours(lumen=tuple(lumen), outer=tuple(outer))


def _load_profiles(case_dir: Path) -> CenterlineProfile:
    rows = _read_csv(_require(case_dir / PROFILES_CSV),
                     ("s", "d_pre", "d_post", "d_followup", "in_stent"))
    if not rows:
        raise InvariantViolationError("profiles", "no rows")

    def diam(r, c, i):
        return np.nan if r[c] == "" else _parse_float(r[c], f"profiles.{c}", i)

    s = np.array([_parse_float(r["s"], "profiles.s", i) for i, r in enumerate(rows)])
    d_pre = np.array([diam(r, "d_pre", i) for i, r in enumerate(rows)])
    d_post = np.array([diam(r, "d_post", i) for i, r in enumerate(rows)])
    d_fu = np.array([diam(r, "d_followup", i) for i, r in enumerate(rows)])
    stent = []
    for i, r in enumerate(rows):
        if r["in_stent"] not in ("0", "1"):
            raise InvariantViolationError("profiles.in_stent", "must be 0 or 1", index=i)
        stent.append(r["in_stent"] == "1")
    return CenterlineProfile(s=s, d_pre=d_pre, d_post=d_post, d_followup=d_fu,
                             in_stent=np.array(stent, dtype=bool))


def load_case(path: str | Path) -> CaseBundle:
    """Load and fully validate a case bundle directory."""
    case_dir = Path(path)
    if not case_dir.is_dir():
        raise MissingFileError(case_dir)
    volume = _load_volume(case_dir)
    mask = _load_mask(case_dir, volume.dims)
    centerline = _load_centerline(case_dir)
    contours = _load_contours(case_dir, len(centerline))
    profiles = _load_profiles(case_dir)
    config = load_config(_require(case_dir / CONFIG_TXT))
    bundle = CaseBundle(volume=volume, mask=mask, centerline=centerline,
                        contours=contours, profiles=profiles, config=config)
    if not np.allclose(profiles.s, centerline.s, rtol=0.0, atol=1e-9):
        raise InvariantViolationError("profiles.s", "must match centerline arclengths")
    return bundle


# --- saving -----------------------------------------------------------------

def save_case(bundle: CaseBundle, path: str | Path) -> None:
    """Write a bundle so that :func:`load_case` reproduces it bit-exactly."""
    case_dir = Path(path)
    try:
        case_dir.mkdir(parents=True, exist_ok=True)
        hdr = (f"dims {bundle.volume.dims[0]} {bundle.volume.dims[1]} {bundle.volume.dims[2]}\n"
               f"spacing {' '.join(_fmt(v) for v in bundle.volume.spacing)}\n"
               f"origin {' '.join(_fmt(v) for v in bundle.volume.origin)}\n")
        (case_dir / VOLUME_HDR).write_text(hdr, encoding="utf-8")
        (case_dir / VOLUME_RAW).write_bytes(
            np.ascontiguousarray(bundle.volume.values.ravel(order="F"),
                                 dtype="<i2").tobytes())
        (case_dir / MASK_RAW).write_bytes(
            np.ascontiguousarray(bundle.mask.flags.ravel(order="F"),
                                 dtype=np.uint8).tobytes())

        with (case_dir / CENTERLINE_CSV).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("s", "x", "y", "z", "tx", "ty", "tz"))
            cl = bundle.centerline
            for i in range(len(cl)):
                w.writerow([_fmt(cl.s[i])] + [_fmt(v) for v in cl.positions[i]]
                           + [_fmt(v) for v in cl.tangents[i]])

        with (case_dir / CONTOURS_CSV).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("slice_index", "contour", "point_index", "u", "v"))
            for sl in range(len(bundle.contours)):
                for name, poly in (("lumen", bundle.contours.lumen[sl]),
                                   ("outer", bundle.contours.outer[sl])):
                    for k, (u, v) in enumerate(poly):
                        w.writerow((sl, name, k, _fmt(u), _fmt(v)))

        with (case_dir / PROFILES_CSV).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(("s", "d_pre", "d_post", "d_followup", "in_stent"))
            pr = bundle.profiles
            for i in range(len(pr)):
                def cell(x):
                    return "" if np.isnan(x) else _fmt(x)
                w.writerow((_fmt(pr.s[i]), cell(pr.d_pre[i]), cell(pr.d_post[i]),
                            cell(pr.d_followup[i]), int(pr.in_stent[i])))

        bundle.config.save(case_dir / CONFIG_TXT)
    except OSError as exc:
        raise IoFailureError(f"cannot write case bundle to {case_dir}: {exc}") from exc


# --- slice sampling ---------------------------------------------------------

def slice_samples(bundle: CaseBundle, slice_index: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Masked voxels near a slice plane, projected into slice coordinates.

    Returns (positions (k, 2) in mm, HU values (k,)).  A voxel belongs to the
    slice when its center lies within +-max(spacing)/2 of the plane.
    """
    if not 0 <= slice_index < bundle.n_slices:
        raise IndexOutOfRangeError(
            f"slice {slice_index} out of range 0..{bundle.n_slices - 1}")
    idx = np.argwhere(bundle.mask.flags > 0)
    if idx.size == 0:
        return np.empty((0, 2)), np.empty((0,), dtype=np.int16)
    centers = bundle.volume.voxel_centers(idx)
    p = bundle.centerline.positions[slice_index]
    t = bundle.centerline.tangents[slice_index]
    rel = centers - p
    w = rel @ t
    half = max(bundle.volume.spacing) / 2.0
    keep = np.abs(w) <= half
    e1, e2 = bundle.centerline.slice_frame(slice_index)
    uv = np.column_stack([rel[keep] @ e1, rel[keep] @ e2])
    hu = bundle.volume.values[tuple(idx[keep].T)]
    return uv, hu

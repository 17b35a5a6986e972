"""Run configuration: every tunable of the pipeline under one flat namespace.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed.  Keys are namespaced (``gmm.max_iter``, ``mesh.n_sectors``,
``material.media.k1`` ...).  Unknown keys are rejected, and every run echoes
its effective configuration into the output directory so results stay
reproducible.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

# Material table rows that accept per-field overrides.
MATERIAL_NAMES = ("lipid_rich", "fibrotic", "normal_intima", "calcification",
                  "media", "adventitia")
MATERIAL_FIELDS = ("E", "nu", "k1", "k2", "phi")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


@dataclass
class RunConfig:
    # gmm.*
    gmm_init_means: tuple[float, ...] = (20.0, 90.0, 180.0, 500.0)
    gmm_variance_floor: float = 1.0
    gmm_weight_epsilon: float = 1e-6
    gmm_tol: float = 1e-6
    gmm_max_iter: int = 500
    gmm_kmeans_max_iter: int = 100

    # mesh.*
    mesh_n_sectors: int = 48
    mesh_rings_intima: int = 4
    mesh_rings_media: int = 2
    mesh_rings_adventitia: int = 2
    mesh_t_media: float = 0.32
    mesh_t_adv: float = 0.34

    # solver.*  (stresses in kPa, lengths in mm)
    solver_spring_stiffness: float = 10.0
    solver_penalty_stiffness: float = 2.0e4
    solver_balloon_stiffness: float = 2.0e3
    solver_max_radius_increment: float = 0.06
    solver_abs_tol: float = 1e-10
    solver_rel_tol: float = 1e-8
    solver_max_newton_iter: int = 25
    solver_n_steps_inflate: int = 8
    solver_n_steps_unload: int = 8
    solver_inflate_radius_factor: float = 1.1
    solver_stent_radius_factor: float = 1.1
    solver_max_step_halvings: int = 6

    # analysis.*
    analysis_threshold_min: float = 5.0
    analysis_threshold_max: float = 100.0
    analysis_threshold_step: float = 5.0
    analysis_layers: str = "all"  # "all" | "intima"

    # correlate.*
    correlate_pooling: str = "raw"  # "raw" | "normalized"

    # material.<name>.<field> overrides, e.g. {"media": {"k1": 0.7}}
    material_overrides: dict[str, dict[str, float]] = field(default_factory=dict)

    def thresholds(self) -> tuple[float, ...]:
        """Stress-threshold grid in kPa (inclusive of both ends)."""
        lo, hi, step = (self.analysis_threshold_min, self.analysis_threshold_max,
                        self.analysis_threshold_step)
        if step <= 0 or hi < lo:
            raise ConfigError(f"bad threshold grid: min={lo} max={hi} step={step}")
        n = int(round((hi - lo) / step))
        return tuple(lo + i * step for i in range(n + 1))

    def rings(self) -> tuple[int, int, int]:
        return (self.mesh_rings_intima, self.mesh_rings_media, self.mesh_rings_adventitia)

    # -- flat key <-> attribute mapping --------------------------------

    def set_key(self, key: str, raw: str) -> None:
        parts = key.split(".")
        if parts[0] == "material":
            if len(parts) != 3 or parts[1] not in MATERIAL_NAMES or parts[2] not in MATERIAL_FIELDS:
                raise ConfigError(f"unknown config key: {key!r}")
            try:
                value = float(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
            self.material_overrides.setdefault(parts[1], {})[parts[2]] = value
            return
        attr = _KEY_TO_ATTR.get(key)
        if attr is None:
            raise ConfigError(f"unknown config key: {key!r}")
        kind = _ATTR_TYPES[attr]
        try:
            if kind is int:
                value = int(raw)
            elif kind is float:
                value = float(raw)
            elif kind is bool:
                value = _parse_bool(raw)
            elif kind is tuple:
                value = _parse_float_list(raw)
            else:
                value = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
        setattr(self, attr, value)
        if attr == "analysis_layers" and value not in ("all", "intima"):
            raise ConfigError(f"analysis.layers must be 'all' or 'intima', got {value!r}")
        if attr == "correlate_pooling" and value not in ("raw", "normalized"):
            raise ConfigError(f"correlate.pooling must be 'raw' or 'normalized', got {value!r}")

    def items(self) -> list[tuple[str, str]]:
        """Effective configuration as sorted (key, canonical value) pairs."""
        out = []
        for key, attr in _KEY_TO_ATTR.items():
            value = getattr(self, attr)
            if isinstance(value, tuple):
                text = ",".join(repr(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            out.append((key, text))
        for name in sorted(self.material_overrides):
            for fld in sorted(self.material_overrides[name]):
                out.append((f"material.{name}.{fld}", repr(self.material_overrides[name][fld])))
        return sorted(out)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def copy(self) -> "RunConfig":
        dup = dataclasses.replace(self)
        dup.material_overrides = {k: dict(v) for k, v in self.material_overrides.items()}
        return dup


def _build_keymap() -> dict[str, str]:
    keymap = {}
    for f in dataclasses.fields(RunConfig):
        if f.name == "material_overrides":
            continue
        group, _, rest = f.name.partition("_")
        keymap[f"{group}.{rest}"] = f.name
    return keymap


_KEY_TO_ATTR = _build_keymap()
# Field annotations are strings here (future import), so classify by name.
_ATTR_TYPES = {
    f.name: (tuple if "tuple" in str(f.type) else
             int if str(f.type) == "int" else
             float if str(f.type) == "float" else
             bool if str(f.type) == "bool" else str)
    for f in dataclasses.fields(RunConfig) if f.name != "material_overrides"
}


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base.copy() if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        cfg.set_key(key.strip(), raw.strip())
    return cfg


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), base=base)


def apply_overrides(cfg: RunConfig, assignments: list[str]) -> RunConfig:
    """Apply ``key=value`` strings (e.g. from --set flags) on top of cfg."""
    out = cfg.copy()
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, raw = item.partition("=")
        out.set_key(key.strip(), raw.strip())
    return out

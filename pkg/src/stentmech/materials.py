"""Hyperelastic artery-wall materials.

Compressible Neo-Hookean base with two exponential fiber families in the
circumferential-axial plane for media and adventitia; isotropic plaque
components in the intima.  All stress-like quantities are in kPa and
lengths in mm; Young's moduli are stored in MPa (the table convention)
and converted internally.

Every operation accepts a batch of deformation gradients (shape
``(..., 3, 3)``), so the FE solver evaluates whole quadrature-point groups
in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import NonPositiveJacobianError

_EYE3 = np.eye(3)


class MaterialKey(IntEnum):
    """Element material label: plaque components plus the two outer layers."""

    LIPID_RICH = 0
    FIBROTIC = 1
    NORMAL_INTIMA = 2
    CALCIFICATION = 3
    MEDIA = 4
    ADVENTITIA = 5


@dataclass(frozen=True)
class MaterialParams:
    """E in MPa, nu dimensionless, k1 in kPa, k2 dimensionless, phi in degrees
    measured from the circumferential direction."""

    E: float
    nu: float
    k1: float = 0.0
    k2: float = 0.0
    phi: float = 0.0
    has_fibers: bool = False

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not 0.0 < self.nu < 0.5:
            raise ValueError(f"nu must lie in (0, 0.5), got {self.nu}")
        if self.has_fibers:
            if self.k1 <= 0 or self.k2 <= 0:
                raise ValueError("fiber materials need k1 > 0 and k2 > 0")
            if not 0.0 <= self.phi < 90.0:
                raise ValueError(f"phi must lie in [0, 90) degrees, got {self.phi}")

    @property
    def mu(self) -> float:
        """Shear modulus in kPa."""
        return 1e3 * self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        """First Lame parameter in kPa."""
        return 1e3 * self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


# Artery material table (base moduli in MPa, fiber k1 in kPa, phi in degrees).
_TABLE: dict[MaterialKey, MaterialParams] = {
    MaterialKey.ADVENTITIA: MaterialParams(E=0.016, nu=0.45, k1=5.1, k2=15.4,
                                           phi=56.3, has_fibers=True),
    MaterialKey.MEDIA: MaterialParams(E=0.16, nu=0.45, k1=0.64, k2=3.54,
                                      phi=5.76, has_fibers=True),
    MaterialKey.NORMAL_INTIMA: MaterialParams(E=0.16, nu=0.45),
    MaterialKey.LIPID_RICH: MaterialParams(E=0.08, nu=0.45),
    MaterialKey.FIBROTIC: MaterialParams(E=0.16, nu=0.45),
    MaterialKey.CALCIFICATION: MaterialParams(E=1.6, nu=0.45),
}

_OVERRIDE_NAMES = {
    "lipid_rich": MaterialKey.LIPID_RICH,
    "fibrotic": MaterialKey.FIBROTIC,
    "normal_intima": MaterialKey.NORMAL_INTIMA,
    "calcification": MaterialKey.CALCIFICATION,
    "media": MaterialKey.MEDIA,
    "adventitia": MaterialKey.ADVENTITIA,
}


def material_of(component) -> MaterialParams:
    """Table lookup for a plaque component or wall layer."""
    return _TABLE[MaterialKey(int(component))]


def material_table(overrides: dict[str, dict[str, float]] | None = None
                   ) -> dict[MaterialKey, MaterialParams]:
    """Full material map with optional ``material.<name>.<field>`` overrides."""
    table = dict(_TABLE)
    for name, fields in (overrides or {}).items():
        key = _OVERRIDE_NAMES[name]
        base = table[key]
        values = {"E": base.E, "nu": base.nu, "k1": base.k1, "k2": base.k2,
                  "phi": base.phi}
        values.update(fields)
        table[key] = MaterialParams(has_fibers=base.has_fibers, **values)
    return table


@dataclass(frozen=True)
class DeformationState:
    """Deformation gradient(s) plus the local reference circumferential
    direction used to orient fiber families.

    ``F`` has shape (..., 3, 3); ``circ`` broadcasts to (..., 2) and is the
    in-plane unit vector of the circumferential direction in the reference
    configuration.  Fibers live in the plane spanned by ``circ`` and the
    out-of-plane axis.
    """

    F: np.ndarray
    circ: np.ndarray = (1.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "circ", np.asarray(self.circ, dtype=float))

    @classmethod
    def from_plane_strain(cls, F2d: np.ndarray, circ=(1.0, 0.0)) -> "DeformationState":
        """Embed in-plane gradients (..., 2, 2) with F33 = 1 and no
        out-of-plane shear."""
        F2d = np.asarray(F2d, dtype=float)
        F = np.zeros(F2d.shape[:-2] + (3, 3))
        F[..., :2, :2] = F2d
        F[..., 2, 2] = 1.0
        return cls(F=F, circ=circ)

    @property
    def J(self) -> np.ndarray:
        return np.linalg.det(self.F)

    @property
    def C(self) -> np.ndarray:
        return np.swapaxes(self.F, -1, -2) @ self.F

    @property
    def I1(self) -> np.ndarray:
        return np.einsum("...ij,...ij->...", self.F, self.F)


def _check_jacobian(J: np.ndarray) -> np.ndarray:
    if np.any(J <= 0.0):
        bad = np.nonzero(np.atleast_1d(J) <= 0.0)[0]
        raise NonPositiveJacobianError(int(bad[0]) if bad.size else None)
    return J


def fiber_directions(mat: MaterialParams, circ: np.ndarray) -> np.ndarray:
    """Reference unit vectors of the two families, shape (..., 2, 3).

    Family i = cos(phi) * circ +/- sin(phi) * e_z.
    """
    circ = np.asarray(circ, dtype=float)
    phi = np.deg2rad(mat.phi)
    a = np.zeros(circ.shape[:-1] + (2, 3))
    a[..., 0, :2] = np.cos(phi) * circ
    a[..., 0, 2] = np.sin(phi)
    a[..., 1, :2] = np.cos(phi) * circ
    a[..., 1, 2] = -np.sin(phi)
    return a


def fiber_family_energy(I4, k1: float, k2: float):
    """Energy of one fiber family (kPa); zero unless stretched (I4 > 1)."""
    d = np.maximum(np.asarray(I4, dtype=float) - 1.0, 0.0)
    return k1 / (2.0 * k2) * (np.exp(k2 * d * d) - 1.0)


def _fiber_terms(F: np.ndarray, mat: MaterialParams, circ: np.ndarray):
    """Per-family kinematics: direction a0, pushed vector m = F a0, and the
    clamped stretch measure d = max(I4 - 1, 0)."""
    a0 = fiber_directions(mat, circ)            # (..., 2, 3)
    m = np.einsum("...ij,...fj->...fi", F, a0, optimize=True)  # (..., 2, 3)
    I4 = np.einsum("...fi,...fi->...f", m, m)
    d = np.maximum(I4 - 1.0, 0.0)
    return a0, m, d


def strain_energy(state: DeformationState, mat: MaterialParams) -> np.ndarray:
    """Strain-energy density in kPa.

    W = mu/2 (I1 - 3) - mu ln J + lam/2 (ln J)^2, plus the tension-only
    exponential fiber term summed over both families.
    """
    F = state.F
    J = _check_jacobian(np.linalg.det(F))
    lnJ = np.log(J)
    I1 = np.einsum("...ij,...ij->...", F, F)
    mu, lam = mat.mu, mat.lam
    W = 0.5 * mu * (I1 - 3.0) - mu * lnJ + 0.5 * lam * lnJ * lnJ
    if mat.has_fibers:
        _, _, d = _fiber_terms(F, mat, state.circ)
        W = W + (mat.k1 / (2.0 * mat.k2) * (np.exp(mat.k2 * d * d) - 1.0)).sum(axis=-1)
    return W


def first_piola(state: DeformationState, mat: MaterialParams) -> np.ndarray:
    """First Piola-Kirchhoff stress, shape (..., 3, 3), kPa."""
    F = state.F
    J = _check_jacobian(np.linalg.det(F))
    lnJ = np.log(J)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    mu, lam = mat.mu, mat.lam
    P = mu * F + (lam * lnJ - mu)[..., None, None] * FinvT
    if mat.has_fibers:
        a0, m, d = _fiber_terms(F, mat, state.circ)
        psi1 = mat.k1 * d * np.exp(mat.k2 * d * d)          # dW/dI4, zero if slack
        P = P + 2.0 * np.einsum("...f,...fi,...fj->...ij", psi1, m, a0, optimize=True)
    return P


def cauchy_stress(state: DeformationState, mat: MaterialParams) -> np.ndarray:
    """Cauchy stress, shape (..., 3, 3), kPa; symmetric by construction."""
    F = state.F
    J = _check_jacobian(np.linalg.det(F))
    lnJ = np.log(J)
    B = F @ np.swapaxes(F, -1, -2)
    mu, lam = mat.mu, mat.lam
    sig = (mu * (B - _EYE3) + (lam * lnJ)[..., None, None] * _EYE3) / J[..., None, None]
    if mat.has_fibers:
        _, m, d = _fiber_terms(F, mat, state.circ)
        psi1 = mat.k1 * d * np.exp(mat.k2 * d * d)
        sig = sig + 2.0 * np.einsum("...f,...fi,...fj->...ij", psi1 / J[..., None], m, m, optimize=True)
    # exact by construction; the einsum path may leave last-bit asymmetry
    return 0.5 * (sig + np.swapaxes(sig, -1, -2))


def piola_tangent(state: DeformationState, mat: MaterialParams) -> np.ndarray:
    """dP/dF, shape (..., 3, 3, 3, 3); the Newton linearization kernel."""
    F = state.F
    J = _check_jacobian(np.linalg.det(F))
    lnJ = np.log(J)
    Finv = np.linalg.inv(F)
    FinvT = np.swapaxes(Finv, -1, -2)
    mu, lam = mat.mu, mat.lam

    shape = F.shape[:-2]
    A = np.zeros(shape + (3, 3, 3, 3))
    A += mu * np.einsum("ik,JL->iJkL", _EYE3, _EYE3)
    # d(F^-T)_iJ / dF_kL = -Finv_Jk Finv_Li
    A -= (lam * lnJ - mu)[..., None, None, None, None] * np.einsum(
        "...Jk,...Li->...iJkL", Finv, Finv, optimize=True)
    A += lam * np.einsum("...iJ,...kL->...iJkL", FinvT, FinvT, optimize=True)

    if mat.has_fibers:
        a0, m, d = _fiber_terms(F, mat, state.circ)
        e = np.exp(mat.k2 * d * d)
        psi1 = mat.k1 * d * e
        psi2 = np.where(d > 0.0, mat.k1 * e * (1.0 + 2.0 * mat.k2 * d * d), 0.0)
        A += 4.0 * np.einsum("...f,...fi,...fJ,...fk,...fL->...iJkL", psi2, m, a0, m, a0, optimize=True)
        A += 2.0 * np.einsum("...f,ik,...fJ,...fL->...iJkL", psi1, _EYE3, a0, a0, optimize=True)
    return A


def plane_strain_piola(F2: np.ndarray, mat: MaterialParams,
                       circ: np.ndarray) -> np.ndarray:
    """In-plane block of the first Piola stress for plane-strain gradients.

    Exact restriction of :func:`first_piola` to the embedding F33 = 1 with no
    out-of-plane shear; both fiber families share I4 there, so they enter as
    a factor of two.  ``F2`` is (..., 2, 2), ``circ`` broadcasts to (..., 2).
    """
    J = _check_jacobian(F2[..., 0, 0] * F2[..., 1, 1]
                        - F2[..., 0, 1] * F2[..., 1, 0])
    lnJ = np.log(J)
    FinvT = _inv2_t(F2, J)
    mu, lam = mat.mu, mat.lam
    P = mu * F2 + (lam * lnJ - mu)[..., None, None] * FinvT
    if mat.has_fibers:
        psi1, _, cos2, m = _plane_fiber_terms(F2, mat, circ)
        P = P + (4.0 * psi1 * cos2)[..., None, None] * np.einsum(
            "...i,...j->...ij", m, np.broadcast_to(circ, m.shape))
    return P


def plane_strain_tangent(F2: np.ndarray, mat: MaterialParams,
                         circ: np.ndarray) -> np.ndarray:
    """In-plane block of dP/dF for plane-strain gradients, (..., 2, 2, 2, 2)."""
    J = _check_jacobian(F2[..., 0, 0] * F2[..., 1, 1]
                        - F2[..., 0, 1] * F2[..., 1, 0])
    lnJ = np.log(J)
    FinvT = _inv2_t(F2, J)
    Finv = np.swapaxes(FinvT, -1, -2)
    mu, lam = mat.mu, mat.lam
    eye = np.eye(2)
    A = mu * np.einsum("ik,JL->iJkL", eye, eye) + np.zeros(F2.shape[:-2] + (2, 2, 2, 2))
    A -= (lam * lnJ - mu)[..., None, None, None, None] * np.einsum(
        "...Jk,...Li->...iJkL", Finv, Finv, optimize=True)
    A += lam * np.einsum("...iJ,...kL->...iJkL", FinvT, FinvT, optimize=True)
    if mat.has_fibers:
        psi1, psi2, cos2, m = _plane_fiber_terms(F2, mat, circ)
        c = np.broadcast_to(circ, m.shape)
        A += (8.0 * psi2 * cos2 * cos2)[..., None, None, None, None] * np.einsum(
            "...i,...J,...k,...L->...iJkL", m, c, m, c, optimize=True)
        A += (4.0 * psi1 * cos2)[..., None, None, None, None] * np.einsum(
            "ik,...J,...L->...iJkL", eye, c, c, optimize=True)
    return A


def _inv2_t(F2: np.ndarray, J: np.ndarray) -> np.ndarray:
    """Transposed inverse of 2x2 matrices with known determinant."""
    out = np.empty_like(F2)
    out[..., 0, 0] = F2[..., 1, 1]
    out[..., 1, 1] = F2[..., 0, 0]
    out[..., 0, 1] = -F2[..., 1, 0]
    out[..., 1, 0] = -F2[..., 0, 1]
    return out / J[..., None, None]


def _plane_fiber_terms(F2: np.ndarray, mat: MaterialParams, circ: np.ndarray):
    c = np.broadcast_to(np.asarray(circ, dtype=float), F2.shape[:-2] + (2,))
    m = np.einsum("...ij,...j->...i", F2, c)
    phi = np.deg2rad(mat.phi)
    cos2 = np.cos(phi) ** 2
    I4 = cos2 * np.einsum("...i,...i->...", m, m) + np.sin(phi) ** 2
    d = np.maximum(I4 - 1.0, 0.0)
    e = np.exp(mat.k2 * d * d)
    psi1 = mat.k1 * d * e
    psi2 = np.where(d > 0.0, mat.k1 * e * (1.0 + 2.0 * mat.k2 * d * d), 0.0)
    return psi1, psi2, cos2, m


def spatial_tangent(state: DeformationState, mat: MaterialParams) -> np.ndarray:
    """Derivative of Cauchy stress w.r.t. the deformation gradient,
    shape (..., 3, 3, 3, 3); equals the classical elasticity tensor at F = I.

    Symmetric in the first index pair (sigma is symmetric).  Matches
    directional finite differences of :func:`cauchy_stress`.
    """
    F = state.F
    J = np.linalg.det(F)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    P = first_piola(state, mat)
    A = piola_tangent(state, mat)
    sig = cauchy_stress(state, mat)
    Jinv = 1.0 / J
    out = -np.einsum("...ij,...kL->...ijkL", sig, FinvT)
    out += np.einsum("...,...iAkL,...jA->...ijkL", Jinv, A, F)
    out += np.einsum("...,...iL,jk->...ijkL", Jinv, P, _EYE3)
    return out

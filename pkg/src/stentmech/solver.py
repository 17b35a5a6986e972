"""Quasi-static nonlinear plane-strain FE solve of lumen loading per slice.

Total-Lagrangian bilinear quads with 2x2 Gauss quadrature.  External loads:
follower pressure on the lumen loop, linear radial springs on the outer
loop, and rigid-circle penalty constraints (balloon expansion target and/or
stent scaffold).  Newton iteration with backtracking line search; load
programs step incrementally with adaptive halving on divergence.

Rigid-body modes are removed by a minimal set of gauge constraints on outer
boundary nodes (one tangential anchor when springs carry translation, three
anchors otherwise); the anchors are compatible with equilibrium, so they
carry no reaction for self-equilibrated loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (AbortedStepError, DivergedNewtonError,
                     NonPositiveJacobianError, SingularSystemError)
from .materials import (DeformationState, MaterialParams, cauchy_stress,
                        material_table, plane_strain_piola,
                        plane_strain_tangent, strain_energy)
from .mesh import GAUSS_GRADS, GAUSS_WEIGHTS, CrossSectionMesh


# --- load descriptions ------------------------------------------------------

@dataclass(frozen=True)
class InflateToPressure:
    p_max: float          # kPa
    n_steps: int = 8


@dataclass(frozen=True)
class InflateToMeanRadius:
    r_target: float       # mm
    n_steps: int = 8


@dataclass(frozen=True)
class Unload:
    n_steps: int = 8
    r_stent: float | None = None   # mm, rigid-circle scaffold left in place
    k_penalty: float | None = None  # kPa/mm, defaults to program penalty


@dataclass(frozen=True)
class LoadProgram:
    phases: tuple
    outer_spring_stiffness: float = 10.0   # kPa/mm per unit boundary length
    penalty_stiffness: float = 2.0e4       # kPa/mm, stent scaffold circle
    balloon_stiffness: float = 2.0e3       # kPa/mm, expansion-target circle
    max_radius_increment: float = 0.06     # mm of circle travel per load step

    def __post_init__(self):
        for ph in self.phases:
            if ph.n_steps < 1:
                raise ValueError("each phase needs n_steps >= 1")
            if isinstance(ph, InflateToPressure) and ph.p_max < 0:
                raise ValueError("p_max must be non-negative")
            if isinstance(ph, InflateToMeanRadius) and ph.r_target <= 0:
                raise ValueError("r_target must be positive")
            if isinstance(ph, Unload) and ph.r_stent is not None and ph.r_stent <= 0:
                raise ValueError("r_stent must be positive")


@dataclass(frozen=True)
class LoadSet:
    """Instantaneous loading: lumen pressure plus rigid penalty circles."""

    pressure: float = 0.0
    circles: tuple[tuple[float, float], ...] = ()  # (radius, stiffness)


@dataclass
class SolveState:
    u: np.ndarray               # (n_nodes, 2) displacements, mm
    qp_F: np.ndarray            # (n_elem, 4, 2, 2) in-plane deformation gradient
    qp_stress: np.ndarray       # (n_elem, 4, 3, 3) Cauchy stress, kPa
    loads: LoadSet
    converged: bool
    iterations: int
    residual_norm: float


@dataclass(frozen=True)
class TraceEntry:
    phase: int
    step_fraction: float
    iterations: int
    residual_norm: float
    pressure: float


@dataclass
class ProgramResult:
    state_max: SolveState       # end of the last inflate phase
    state_residual: SolveState  # end of the last unload phase (or final state)
    trace: list[TraceEntry] = field(default_factory=list)


def contact_gap(position, r_stent: float, k_penalty: float = 2.0e4,
                center=(0.0, 0.0)) -> tuple[float, float]:
    """Gap to a rigid circle and the penalty force per unit boundary length.

    gap = r_stent - |x - center|; force = k_penalty * max(gap, 0), directed
    along +radial (applied to lumen nodes by the assembler).
    """
    rel = np.asarray(position, dtype=float) - np.asarray(center, dtype=float)
    gap = r_stent - float(np.linalg.norm(rel))
    return gap, k_penalty * max(gap, 0.0)


# --- discrete system --------------------------------------------------------

def _loop_tributary_lengths(nodes: np.ndarray, loop: np.ndarray) -> np.ndarray:
    pts = nodes[loop]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


class PlaneStrainSystem:
    """Assembled view of one slice: geometry, materials and boundary data."""

    def __init__(self, mesh: CrossSectionMesh,
                 materials: dict[int, MaterialParams] | None = None,
                 spring_stiffness: float = 10.0):
        self.mesh = mesh
        self.materials = material_table() if materials is None else materials
        self.spring_stiffness = float(spring_stiffness)

        nodes, elements = mesh.nodes, mesh.elements
        self.n_dof = 2 * mesh.n_nodes
        coords = nodes[elements]                                     # (E,4,2)
        # J[i,o] = dx_i/dxi_o
        jac = np.einsum("eai,qao->eqio", coords, GAUSS_GRADS)        # (E,q,2,2)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        # dN_a/dX_j = dN_a/dxi_o * dxi_o/dX_j
        self.dNdX = np.einsum("qao,eqoj->eqaj", GAUSS_GRADS, inv)
        self.wdet = det * GAUSS_WEIGHTS                              # (E,q)

        dof = np.empty((elements.shape[0], 8), dtype=np.int64)
        dof[:, 0::2] = 2 * elements
        dof[:, 1::2] = 2 * elements + 1
        self.elem_dofs = dof

        circ = mesh.element_circumferential()
        self.groups = []
        for mid in np.unique(mesh.element_material):
            sel = np.nonzero(mesh.element_material == mid)[0]
            self.groups.append((self.materials[int(mid)], sel, circ[sel]))

        # lumen loop: follower pressure edges + contact lumping
        loop = mesh.lumen_boundary_nodes
        self.lumen_nodes = loop
        self.lumen_edges = np.column_stack([loop, np.roll(loop, -1)])
        self.lumen_length = _loop_tributary_lengths(nodes, loop)
        self.center = mesh.center

        # outer loop: radial springs
        outer = mesh.outer_boundary_nodes
        self.outer_nodes = outer
        rel = nodes[outer] - mesh.center
        self.outer_rhat = rel / np.linalg.norm(rel, axis=1, keepdims=True)
        self.outer_length = _loop_tributary_lengths(nodes, outer)

        self._fixed = self._gauge_anchors()
        self._build_patterns()

    # deterministic rigid-mode anchors, chosen on the outer loop
    def _gauge_anchors(self) -> np.ndarray:
        nodes = self.mesh.nodes
        outer = self.outer_nodes
        rel = nodes[outer] - self.center
        a = outer[int(np.argmax(rel[:, 0]))]       # +x node: fix u_y (rotation)
        fixed = [2 * a + 1]
        if self.spring_stiffness <= 0.0:
            b = outer[int(np.argmin(rel[:, 0]))]   # -x node: fix u_y
            c = outer[int(np.argmax(rel[:, 1]))]   # +y node: fix u_x
            fixed += [2 * b + 1, 2 * c]
        return np.unique(np.array(fixed, dtype=np.int64))

    @property
    def fixed_dofs(self) -> np.ndarray:
        return self._fixed

    def _build_patterns(self):
        E = self.mesh.n_elements
        rows_int = np.repeat(self.elem_dofs, 8, axis=1).ravel()
        cols_int = np.tile(self.elem_dofs, (1, 8)).ravel()

        # springs: 2x2 blocks on outer nodes, values constant
        on = self.outer_nodes
        srows = np.column_stack([2 * on, 2 * on, 2 * on + 1, 2 * on + 1]).ravel()
        scols = np.column_stack([2 * on, 2 * on + 1, 2 * on, 2 * on + 1]).ravel()
        k = self.spring_stiffness * self.outer_length
        rr = self.outer_rhat
        blocks = np.einsum("n,ni,nj->nij", k, rr, rr)
        self._spring_vals = blocks.reshape(-1, 4).ravel()
        self._spring_rows, self._spring_cols = srows, scols

        # pressure: 2x2 blocks for each (node_a, node_b) pair of each edge
        ea, eb = self.lumen_edges[:, 0], self.lumen_edges[:, 1]
        prow, pcol = [], []
        for a in (ea, eb):
            for b in (ea, eb):
                prow.append(np.column_stack([2 * a, 2 * a, 2 * a + 1, 2 * a + 1]).ravel())
                pcol.append(np.column_stack([2 * b, 2 * b + 1, 2 * b, 2 * b + 1]).ravel())
        self._press_rows = np.concatenate(prow)
        self._press_cols = np.concatenate(pcol)

        # contact: 2x2 blocks on lumen nodes
        ln = self.lumen_nodes
        self._contact_rows = np.column_stack([2 * ln, 2 * ln, 2 * ln + 1, 2 * ln + 1]).ravel()
        self._contact_cols = np.column_stack([2 * ln, 2 * ln + 1, 2 * ln, 2 * ln + 1]).ravel()

        self._rows_all = np.concatenate([rows_int, self._spring_rows,
                                         self._press_rows, self._contact_rows])
        self._cols_all = np.concatenate([cols_int, self._spring_cols,
                                         self._press_cols, self._contact_cols])
        fixed_mask = np.zeros(self.n_dof, dtype=bool)
        fixed_mask[self._fixed] = True
        self._keep = ~(fixed_mask[self._rows_all] | fixed_mask[self._cols_all])
        self._rows_kept = np.concatenate([self._rows_all[self._keep], self._fixed])
        self._cols_kept = np.concatenate([self._cols_all[self._keep], self._fixed])

    # -- kinematics ------------------------------------------------------

    def deformation_gradients(self, u: np.ndarray) -> np.ndarray:
        """In-plane F at every quadrature point, shape (E, 4, 2, 2)."""
        ue = u.reshape(-1, 2)[self.mesh.elements]        # (E,4,2)
        H = np.einsum("eai,eqaj->eqij", ue, self.dNdX, optimize=True)
        F = H.copy()
        F[..., 0, 0] += 1.0
        F[..., 1, 1] += 1.0
        return F

    def _check_positive(self, F: np.ndarray):
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        if det.min() <= 0.0:
            e = int(np.unravel_index(det.argmin(), det.shape)[0])
            raise NonPositiveJacobianError(e)

    def quadrature_stress(self, F: np.ndarray) -> np.ndarray:
        """Cauchy stress (E, 4, 3, 3) for in-plane gradients F."""
        out = np.zeros(F.shape[:2] + (3, 3))
        for mat, sel, circ in self.groups:
            state = DeformationState.from_plane_strain(
                F[sel], circ=np.broadcast_to(circ[:, None, :], (sel.size, 4, 2)))
            out[sel] = cauchy_stress(state, mat)
        return out

    # -- assembly ----------------------------------------------------------

    def residual(self, u: np.ndarray, loads: LoadSet) -> np.ndarray:
        """Out-of-balance force R = f_int - f_ext (kPa*mm); fixed dofs zeroed."""
        R = np.zeros(self.n_dof)
        F = self.deformation_gradients(u)
        self._check_positive(F)
        for mat, sel, circ in self.groups:
            P2 = plane_strain_piola(F[sel], mat, circ[:, None, :])
            fe = np.einsum("eqij,eqaj,eq->eai", P2, self.dNdX[sel], self.wdet[sel],
                           optimize=True)
            np.add.at(R, self.elem_dofs[sel], fe.reshape(-1, 8))

        x = self.mesh.nodes + u.reshape(-1, 2)
        if loads.pressure != 0.0:
            x1 = x[self.lumen_edges[:, 0]]
            x2 = x[self.lumen_edges[:, 1]]
            e = x2 - x1
            f = 0.5 * loads.pressure * np.column_stack([e[:, 1], -e[:, 0]])
            for col in (0, 1):
                nid = self.lumen_edges[:, col]
                np.add.at(R, 2 * nid, -f[:, 0])
                np.add.at(R, 2 * nid + 1, -f[:, 1])

        if self.spring_stiffness > 0.0:
            un = u.reshape(-1, 2)[self.outer_nodes]
            ur = np.einsum("ni,ni->n", un, self.outer_rhat)
            fs = (self.spring_stiffness * self.outer_length * ur)[:, None] * self.outer_rhat
            np.add.at(R, 2 * self.outer_nodes, fs[:, 0])
            np.add.at(R, 2 * self.outer_nodes + 1, fs[:, 1])

        for r_c, k_c in loads.circles:
            rel = x[self.lumen_nodes] - self.center
            rn = np.linalg.norm(rel, axis=1)
            g = r_c - rn
            act = g > 0.0
            if np.any(act):
                fmag = k_c * self.lumen_length[act] * g[act]
                xhat = rel[act] / rn[act, None]
                nid = self.lumen_nodes[act]
                np.add.at(R, 2 * nid, -fmag * xhat[:, 0])
                np.add.at(R, 2 * nid + 1, -fmag * xhat[:, 1])

        R[self._fixed] = 0.0
        return R

    def residual_and_tangent(self, u: np.ndarray, loads: LoadSet
                             ) -> tuple[np.ndarray, sp.csc_matrix]:
        R = self.residual(u, loads)
        E = self.mesh.n_elements
        kvals = np.zeros((E, 8, 8))
        F = self.deformation_gradients(u)
        for mat, sel, circ in self.groups:
            A2 = plane_strain_tangent(F[sel], mat, circ[:, None, :])
            A2 *= self.wdet[sel][..., None, None, None, None]
            g = sel.size
            # ke[a,i,b,k] = sum_qJL G[a,J] A2[i,J,k,L] G[b,L] via batched matmul
            G = self.dNdX[sel].reshape(g * 4, 4, 2)
            D = A2.transpose(0, 1, 3, 2, 4, 5).reshape(g * 4, 2, 8)
            t1 = (G @ D).reshape(g * 4, 16, 2)           # (gq, a*i*k, L)
            t2 = t1 @ G.transpose(0, 2, 1)               # (gq, a*i*k, b)
            ke = t2.reshape(g, 4, 4, 2, 2, 4).sum(axis=1)  # (g, a, i, k, b)
            kvals[sel] = ke.transpose(0, 1, 2, 4, 3).reshape(g, 8, 8)

        press_vals = np.zeros(self._press_rows.size)
        if loads.pressure != 0.0:
            m = 0.5 * loads.pressure * np.array([[0.0, 1.0], [-1.0, 0.0]])
            n_edge = self.lumen_edges.shape[0]
            blocks = []
            # K[a,b] = -d f_a / d x_b; f depends on x2 - x1
            for _ in (0, 1):           # rows: node1, node2 (same force)
                blocks.append(np.tile(m.ravel(), n_edge))        # b = node1: -(-m) = +m
                blocks.append(np.tile(-m.ravel(), n_edge))       # b = node2: -(+m) = -m
            press_vals = np.concatenate(blocks)

        contact_vals = np.zeros(self._contact_rows.size)
        if loads.circles:
            x = self.mesh.nodes + u.reshape(-1, 2)
            rel = x[self.lumen_nodes] - self.center
            rn = np.linalg.norm(rel, axis=1)
            xhat = rel / rn[:, None]
            eye = np.eye(2)
            kblk = np.zeros((self.lumen_nodes.size, 2, 2))
            for r_c, k_c in loads.circles:
                g = r_c - rn
                act = g > 0.0
                if np.any(act):
                    kl = k_c * self.lumen_length[act]
                    proj = np.einsum("ni,nj->nij", xhat[act], xhat[act])
                    tang = (eye - proj) * (g[act] / rn[act])[:, None, None]
                    kblk[act] += kl[:, None, None] * (proj - tang)
            contact_vals = kblk.reshape(-1, 4).ravel()

        vals = np.concatenate([kvals.ravel(), self._spring_vals,
                               press_vals, contact_vals])
        vals = np.concatenate([vals[self._keep], np.ones(self._fixed.size)])
        K = sp.coo_matrix((vals, (self._rows_kept, self._cols_kept)),
                          shape=(self.n_dof, self.n_dof)).tocsc()
        return R, K

    def potential_energy(self, u: np.ndarray, loads: LoadSet) -> float:
        """Conservative part of the potential: strain energy + springs +
        penalty circles (pressure excluded)."""
        F = self.deformation_gradients(u)
        self._check_positive(F)
        total = 0.0
        for mat, sel, circ in self.groups:
            state = DeformationState.from_plane_strain(
                F[sel], circ=np.broadcast_to(circ[:, None, :], (sel.size, 4, 2)))
            total += float(np.sum(strain_energy(state, mat) * self.wdet[sel]))
        if self.spring_stiffness > 0.0:
            un = u.reshape(-1, 2)[self.outer_nodes]
            ur = np.einsum("ni,ni->n", un, self.outer_rhat)
            total += 0.5 * float(np.sum(self.spring_stiffness * self.outer_length * ur * ur))
        x = self.mesh.nodes + u.reshape(-1, 2)
        for r_c, k_c in loads.circles:
            rn = np.linalg.norm(x[self.lumen_nodes] - self.center, axis=1)
            g = np.maximum(r_c - rn, 0.0)
            total += 0.5 * float(np.sum(k_c * self.lumen_length * g * g))
        return total

    def snapshot(self, u: np.ndarray, loads: LoadSet, iterations: int,
                 residual_norm: float) -> SolveState:
        F = self.deformation_gradients(u)
        return SolveState(u=u.reshape(-1, 2).copy(), qp_F=F,
                          qp_stress=self.quadrature_stress(F), loads=loads,
                          converged=True, iterations=iterations,
                          residual_norm=residual_norm)

    def mean_lumen_radius(self, u: np.ndarray) -> float:
        x = self.mesh.nodes + u.reshape(-1, 2)
        return float(np.linalg.norm(x[self.lumen_nodes] - self.center, axis=1).mean())

    def min_lumen_radius(self, u: np.ndarray) -> float:
        x = self.mesh.nodes + u.reshape(-1, 2)
        return float(np.linalg.norm(x[self.lumen_nodes] - self.center, axis=1).min())


def assemble(mesh: CrossSectionMesh, materials, u: np.ndarray,
             loads: LoadSet = LoadSet(), spring_stiffness: float = 10.0
             ) -> tuple[np.ndarray, sp.csc_matrix]:
    """One-shot residual + tangent for a displacement field."""
    system = PlaneStrainSystem(mesh, materials, spring_stiffness=spring_stiffness)
    return system.residual_and_tangent(np.asarray(u, dtype=float).ravel(), loads)


# --- Newton iteration -------------------------------------------------------

def newton_solve(system: PlaneStrainSystem, u0: np.ndarray, loads: LoadSet,
                 abs_tol: float = 1e-10, rel_tol: float = 1e-8,
                 max_iter: int = 25, max_line_cuts: int = 10
                 ) -> tuple[np.ndarray, int, float]:
    """Solve equilibrium at fixed loads; returns (u, iterations, |R|).

    Convergence: |R| <= max(abs_tol, rel_tol * |R0|) in the Euclidean norm.
    Backtracking halves the step up to ``max_line_cuts`` times until the
    residual norm decreases.
    """
    u = np.asarray(u0, dtype=float).ravel().copy()
    R = system.residual(u, loads)
    rnorm = float(np.linalg.norm(R))
    tol = max(abs_tol, rel_tol * rnorm)

    for it in range(1, max_iter + 2):
        if rnorm <= tol:
            return u, it, rnorm
        if it > max_iter:
            break
        R, K = system.residual_and_tangent(u, loads)
        try:
            lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A")
            d = lu.solve(-R)
        except RuntimeError as exc:
            raise SingularSystemError(str(exc)) from exc
        if not np.all(np.isfinite(d)):
            raise SingularSystemError("non-finite Newton correction")

        alpha = 1.0
        accepted = False
        for _ in range(max_line_cuts + 1):
            u_try = u + alpha * d
            try:
                R_try = system.residual(u_try, loads)
                rn_try = float(np.linalg.norm(R_try))
            except NonPositiveJacobianError:
                rn_try = np.inf
            if rn_try < rnorm or rn_try <= tol:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            raise DivergedNewtonError(
                f"line search stalled at |R| = {rnorm:.3e}")
        u, rnorm = u_try, rn_try
    raise DivergedNewtonError(
        f"no convergence in {max_iter} iterations, |R| = {rnorm:.3e}")


# --- load programs ----------------------------------------------------------

def _phase_loadset(phase, lam: float, start: dict, program: LoadProgram) -> LoadSet:
    """Loads at fraction ``lam`` through a phase, given phase-entry state."""
    circles = []
    if isinstance(phase, InflateToPressure):
        p = start["pressure"] + lam * (phase.p_max - start["pressure"])
        if start["balloon_r"] is not None:
            circles.append((start["balloon_r"], program.balloon_stiffness))
    elif isinstance(phase, InflateToMeanRadius):
        p = start["pressure"]
        r0 = start["balloon_r"] if start["balloon_r"] is not None else start["engage_r"]
        # compliant while travelling, scaffold-grade stiff when fully inflated,
        # so the achieved radius matches what a stent at r_target would hold
        k = program.balloon_stiffness * (program.penalty_stiffness
                                         / program.balloon_stiffness) ** lam
        circles.append((r0 + lam * (phase.r_target - r0), k))
    else:  # Unload
        p = (1.0 - lam) * start["pressure"]
        if start["balloon_r"] is not None and lam < 1.0:
            circles.append(((1.0 - lam) * start["balloon_r"], program.balloon_stiffness))
        if phase.r_stent is not None:
            k = phase.k_penalty if phase.k_penalty is not None else program.penalty_stiffness
            circles.append((phase.r_stent, k))
    return LoadSet(pressure=p, circles=tuple(circles))


def run_program(mesh: CrossSectionMesh, program: LoadProgram,
                materials: dict[int, MaterialParams] | None = None,
                abs_tol: float = 1e-10, rel_tol: float = 1e-8,
                max_newton_iter: int = 25, max_halvings: int = 6
                ) -> ProgramResult:
    """Execute the phases of a load program with adaptive step halving.

    ``state_max`` is captured at the end of the last inflate phase and
    ``state_residual`` at the end of the last unload phase (the final state
    when no unload phase exists).
    """
    system = PlaneStrainSystem(mesh, materials,
                               spring_stiffness=program.outer_spring_stiffness)
    u = np.zeros(system.n_dof)
    trace: list[TraceEntry] = []
    state_max = None
    last_iters, last_rnorm = 0, 0.0
    pressure, balloon_r = 0.0, None
    result_residual = None

    for pi, phase in enumerate(program.phases):
        start = {"pressure": pressure, "balloon_r": balloon_r,
                 "engage_r": system.min_lumen_radius(u)}

        # circle-driven phases step finely enough that the contact set
        # evolves gradually; n_steps is a lower bound
        n_steps = phase.n_steps
        dr_max = program.max_radius_increment
        if isinstance(phase, InflateToMeanRadius) and dr_max > 0:
            r_from = (start["balloon_r"] if start["balloon_r"] is not None
                      else start["engage_r"])
            n_steps = max(n_steps, int(np.ceil(abs(phase.r_target - r_from) / dr_max)))
        elif isinstance(phase, Unload) and start["balloon_r"] is not None and dr_max > 0:
            floor = (phase.r_stent if phase.r_stent is not None
                     else 0.95 * system.mesh.reference_lumen_radius())
            travel = max(start["balloon_r"] - floor, 0.0)
            n_steps = max(n_steps, int(np.ceil(travel / dr_max)))

        accepted: list[tuple[float, np.ndarray]] = [(0.0, u.copy())]

        def solve_at(lam: float, u_from: np.ndarray):
            loads = _phase_loadset(phase, lam, start, program)
            return newton_solve(system, u_from, loads, abs_tol=abs_tol,
                                rel_tol=rel_tol, max_iter=max_newton_iter)

        def predict(lam_b: float, u_a: np.ndarray) -> np.ndarray:
            """Linear continuation guess from the last two accepted states."""
            if len(accepted) < 2:
                return u_a
            (l1, u1), (l2, u2) = accepted[-2], accepted[-1]
            if l2 <= l1:
                return u_a
            return u2 + (u2 - u1) * ((lam_b - l2) / (l2 - l1))

        def advance(lam_a: float, lam_b: float, u_a: np.ndarray, depth: int,
                    step: int) -> np.ndarray:
            nonlocal last_iters, last_rnorm
            try:
                try:
                    u_b, iters, rnorm = solve_at(lam_b, predict(lam_b, u_a))
                except (DivergedNewtonError, SingularSystemError,
                        NonPositiveJacobianError):
                    u_b, iters, rnorm = solve_at(lam_b, u_a)
            except (DivergedNewtonError, SingularSystemError):
                if depth >= max_halvings:
                    raise AbortedStepError(pi, step) from None
                mid = 0.5 * (lam_a + lam_b)
                u_mid = advance(lam_a, mid, u_a, depth + 1, step)
                return advance(mid, lam_b, u_mid, depth + 1, step)
            loads = _phase_loadset(phase, lam_b, start, program)
            trace.append(TraceEntry(pi, lam_b, iters, rnorm, loads.pressure))
            last_iters, last_rnorm = iters, rnorm
            accepted.append((lam_b, u_b.copy()))
            return u_b

        lam = 0.0
        for step in range(1, n_steps + 1):
            lam_next = step / n_steps
            u = advance(lam, lam_next, u, 0, step)
            lam = lam_next

        end_loads = _phase_loadset(phase, 1.0, start, program)
        if isinstance(phase, (InflateToPressure, InflateToMeanRadius)):
            state_max = system.snapshot(u, end_loads, last_iters, last_rnorm)
            if isinstance(phase, InflateToPressure):
                pressure = phase.p_max
            else:
                balloon_r = phase.r_target
        else:
            pressure = 0.0
            balloon_r = None
            result_residual = system.snapshot(u, end_loads, last_iters, last_rnorm)

    final = system.snapshot(u, _phase_loadset(program.phases[-1], 1.0, start, program)
                            if program.phases else LoadSet(), last_iters, last_rnorm)
    if state_max is None:
        state_max = final
    if result_residual is None:
        result_residual = final
    return ProgramResult(state_max=state_max, state_residual=result_residual,
                         trace=trace)


def default_program(mesh: CrossSectionMesh, spring_stiffness: float = 10.0,
                    penalty_stiffness: float = 2.0e4,
                    balloon_stiffness: float = 2.0e3,
                    inflate_factor: float = 1.1, stent_factor: float = 1.1,
                    n_steps_inflate: int = 8, n_steps_unload: int = 8,
                    max_radius_increment: float = 0.06,
                    with_stent: bool = True) -> LoadProgram:
    """Balloon expansion to a mean-radius target, then withdrawal with an
    optional stent scaffold left in place."""
    r0 = mesh.reference_lumen_radius()
    phases = [InflateToMeanRadius(inflate_factor * r0, n_steps_inflate),
              Unload(n_steps_unload,
                     r_stent=stent_factor * r0 if with_stent else None)]
    return LoadProgram(phases=tuple(phases),
                       outer_spring_stiffness=spring_stiffness,
                       penalty_stiffness=penalty_stiffness,
                       balloon_stiffness=balloon_stiffness,
                       max_radius_increment=max_radius_increment)


def max_penetration(mesh: CrossSectionMesh, state: SolveState) -> float:
    """Largest stent-circle penetration of lumen nodes in a state (mm)."""
    if not state.loads.circles:
        return 0.0
    x = mesh.nodes + state.u
    rel = np.linalg.norm(x[mesh.lumen_boundary_nodes] - mesh.center, axis=1)
    worst = 0.0
    for r_c, _ in state.loads.circles:
        worst = max(worst, float(np.max(r_c - rel)))
    return max(worst, 0.0)


def hoop_stress_at_inner_boundary(mesh: CrossSectionMesh, state: SolveState,
                                  n_rings: int = 4) -> float:
    """Circumferential stress recovered at the (deformed) lumen surface.

    Fits the thick-cylinder family sigma_r = A - B/r^2, sigma_theta =
    A + B/r^2 to element-mean stresses of the innermost rings (element means
    filter the quadrature-level pressure oscillation of Q4 elements near
    incompressibility) and evaluates the hoop branch at the deformed inner
    radius.
    """
    sel = mesh.element_ring < n_rings
    elems = mesh.elements[sel]
    coords = mesh.nodes[elems] + state.u[elems]
    from .mesh import GAUSS_POINTS, shape_functions
    N = np.stack([shape_functions(xi, eta) for xi, eta in GAUSS_POINTS])  # (q,4)
    xq = np.einsum("qa,eai->eqi", N, coords) - mesh.center
    r = np.linalg.norm(xq, axis=2)
    rhat = xq / r[..., None]
    that = np.stack([-rhat[..., 1], rhat[..., 0]], axis=-1)
    sig = state.qp_stress[sel][..., :2, :2]
    s_rr = np.einsum("eqi,eqij,eqj->e", rhat, sig, rhat) / r.shape[1]
    s_tt = np.einsum("eqi,eqij,eqj->e", that, sig, that) / r.shape[1]
    r_c = r.mean(axis=1)

    inv2 = 1.0 / (r_c * r_c)
    ones = np.ones_like(r_c)
    basis = np.vstack([np.column_stack([ones, -inv2]),
                       np.column_stack([ones, inv2])])
    rhs = np.concatenate([s_rr, s_tt])
    (A, B), *_ = np.linalg.lstsq(basis, rhs, rcond=None)

    x = mesh.nodes + state.u
    a_def = float(np.linalg.norm(x[mesh.lumen_boundary_nodes] - mesh.center,
                                 axis=1).mean())
    return float(A + B / (a_def * a_def))

import numpy as np
import pytest

from stentmech.errors import (EmptyInputError, NonSymmetricError,
                              UnconvergedStateError)
from stentmech.mesh import build_slice_mesh, element_jacobians
from stentmech.solver import LoadSet, SolveState
from stentmech.stress import (band_classes, global_percentile_thresholds,
                              principal_stresses, slice_summary,
                              weighted_percentile)

from conftest import circle


def make_state(mesh, p1_per_element, converged=True):
    """SolveState whose stress is a uniaxial field with prescribed first
    principal value per element (same at all quadrature points)."""
    E = mesh.n_elements
    qp_stress = np.zeros((E, 4, 3, 3))
    qp_stress[..., 0, 0] = np.asarray(p1_per_element)[:, None]
    qp_F = np.broadcast_to(np.eye(2), (E, 4, 2, 2)).copy()
    return SolveState(u=np.zeros((mesh.n_nodes, 2)), qp_F=qp_F,
                      qp_stress=qp_stress, loads=LoadSet(), converged=converged,
                      iterations=1, residual_norm=0.0)


@pytest.fixture(scope="module")
def mesh():
    return build_slice_mesh(circle(1.5), circle(2.0), n_sectors=8,
                            rings=(1, 1, 1))


# --- principal stresses ---------------------------------------------------------

def test_principal_diagonal():
    assert np.allclose(principal_stresses(np.diag([3.0, 1.0, 2.0])), [3, 2, 1])


def test_principal_pure_shear():
    tau = 7.0
    sig = np.array([[0.0, tau, 0.0], [tau, 0.0, 0.0], [0.0, 0.0, 0.0]])
    assert np.allclose(principal_stresses(sig), [tau, 0.0, -tau], atol=1e-12)


def test_principal_against_characteristic_polynomial():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.standard_normal((3, 3))
        sig = 0.5 * (a + a.T)
        vals = principal_stresses(sig)
        roots = np.sort(np.roots([
            1.0,
            -np.trace(sig),
            0.5 * (np.trace(sig) ** 2 - np.trace(sig @ sig)),
            -np.linalg.det(sig),
        ]).real)[::-1]
        assert np.allclose(vals, roots, atol=1e-10)


def test_principal_rejects_nonsymmetric():
    bad = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(NonSymmetricError):
        principal_stresses(bad)


# --- weighted percentile --------------------------------------------------------

def test_weighted_percentile_conventions():
    v = np.array([10.0, 100.0])
    w = np.array([1.0, 1.0])
    assert weighted_percentile(v, w, 0.80) == 100.0  # upper half-open
    assert weighted_percentile(v, w, 0.50) == 10.0
    assert weighted_percentile(np.full(5, 42.0), np.ones(5), 0.95) == 42.0


# --- slice_summary ---------------------------------------------------------------

def test_uniform_field_summary(mesh):
    state = make_state(mesh, np.full(mesh.n_elements, 50.0))
    sm = slice_summary(mesh, state, thresholds=(30.0, 50.0, 60.0))
    assert sm.mean_p1 == pytest.approx(50.0)
    assert sm.p95_p1 == pytest.approx(50.0)
    assert sm.area_fraction_above[30.0] == pytest.approx(1.0)
    assert sm.area_fraction_above[50.0] == 0.0  # strict > at the threshold
    assert sm.area_fraction_above[60.0] == pytest.approx(0.0)
    ref_area = float(element_jacobians(mesh.nodes, mesh.elements).sum())
    assert sm.total_area == pytest.approx(ref_area)


def test_two_region_arithmetic(mesh):
    """Equal-area halves at 20 and 60 kPa."""
    p1 = np.full(mesh.n_elements, 20.0)
    # sectors 0..3 are one half, 4..7 the other; equal areas by symmetry
    p1[mesh.element_sector >= 4] = 60.0
    state = make_state(mesh, p1)
    sm = slice_summary(mesh, state, thresholds=(30.0,))
    assert sm.mean_p1 == pytest.approx(40.0)
    assert sm.area_fraction_above[30.0] == pytest.approx(0.5)


def test_brute_force_aggregation_oracle(mesh):
    rng = np.random.default_rng(5)
    E = mesh.n_elements
    qp_stress = np.zeros((E, 4, 3, 3))
    diag = rng.uniform(-30, 90, size=(E, 4, 3))
    for k in range(3):
        qp_stress[..., k, k] = diag[..., k]
    detF = rng.uniform(0.9, 1.3, size=(E, 4))
    qp_F = np.zeros((E, 4, 2, 2))
    qp_F[..., 0, 0] = detF
    qp_F[..., 1, 1] = 1.0
    state = SolveState(u=np.zeros((mesh.n_nodes, 2)), qp_F=qp_F,
                       qp_stress=qp_stress, loads=LoadSet(), converged=True,
                       iterations=1, residual_norm=0.0)
    taus = (0.0, 20.0, 50.0)
    sm = slice_summary(mesh, state, thresholds=taus)

    p1 = diag.max(axis=-1)
    w = element_jacobians(mesh.nodes, mesh.elements) * detF
    assert sm.mean_p1 == pytest.approx(float((p1 * w).sum() / w.sum()), abs=1e-12)
    for t in taus:
        frac = float(w[p1 > t].sum() / w.sum())
        assert sm.area_fraction_above[t] == pytest.approx(frac, abs=1e-12)
    # sorted-cumulative oracle for the weighted p95
    order = np.argsort(p1.ravel())
    cum = np.cumsum(w.ravel()[order])
    expect = p1.ravel()[order][np.searchsorted(cum, 0.95 * cum[-1], "left")]
    assert sm.p95_p1 == expect


def test_fraction_monotonicity_and_scaling(mesh):
    rng = np.random.default_rng(9)
    p1 = rng.uniform(0, 100, mesh.n_elements)
    state = make_state(mesh, p1)
    taus = tuple(np.linspace(0, 120, 25))
    sm = slice_summary(mesh, state, thresholds=taus)
    fr = [sm.area_fraction_above[t] for t in taus]
    assert all(a >= b for a, b in zip(fr, fr[1:]))
    c = 3.7
    scaled = slice_summary(mesh, make_state(mesh, c * p1),
                           thresholds=tuple(c * t for t in taus))
    assert scaled.mean_p1 == pytest.approx(c * sm.mean_p1, rel=1e-12)
    assert scaled.p95_p1 == pytest.approx(c * sm.p95_p1, rel=1e-12)
    for t in taus:
        assert scaled.area_fraction_above[c * t] == pytest.approx(
            sm.area_fraction_above[t], abs=1e-12)


def test_layers_and_mask_selection(mesh):
    p1 = np.where(mesh.intima_mask(), 80.0, 10.0)
    state = make_state(mesh, p1)
    sm_all = slice_summary(mesh, state)
    sm_int = slice_summary(mesh, state, layers="intima")
    assert sm_int.mean_p1 == pytest.approx(80.0)
    assert 10.0 < sm_all.mean_p1 < 80.0
    sm_masked = slice_summary(mesh, state, element_mask=~mesh.intima_mask())
    assert sm_masked.mean_p1 == pytest.approx(10.0)


def test_unconverged_state_rejected(mesh):
    state = make_state(mesh, np.zeros(mesh.n_elements), converged=False)
    with pytest.raises(UnconvergedStateError):
        slice_summary(mesh, state)


def test_summary_invariant_under_element_reordering(mesh):
    import dataclasses
    rng = np.random.default_rng(13)
    p1 = rng.uniform(0, 80, mesh.n_elements)
    state = make_state(mesh, p1)
    taus = (10.0, 40.0)
    ref = slice_summary(mesh, state, thresholds=taus)

    perm = rng.permutation(mesh.n_elements)
    mesh_p = dataclasses.replace(
        mesh, elements=mesh.elements[perm],
        element_layer=mesh.element_layer[perm],
        element_material=mesh.element_material[perm],
        element_sector=mesh.element_sector[perm],
        element_ring=mesh.element_ring[perm])
    state_p = dataclasses.replace(state, qp_F=state.qp_F[perm],
                                  qp_stress=state.qp_stress[perm])
    got = slice_summary(mesh_p, state_p, thresholds=taus)
    assert got.mean_p1 == pytest.approx(ref.mean_p1, rel=1e-12)
    assert got.p95_p1 == ref.p95_p1
    for t in taus:
        assert got.area_fraction_above[t] == pytest.approx(
            ref.area_fraction_above[t], rel=1e-12)


# --- global thresholds -----------------------------------------------------------

def test_global_thresholds_uniform():
    t80, t95 = global_percentile_thresholds([(np.full(8, 33.0), np.ones(8))])
    assert t80 == 33.0 and t95 == 33.0


def test_global_thresholds_two_slices_convention():
    fields = [(np.array([10.0]), np.array([1.0])),
              (np.array([100.0]), np.array([1.0]))]
    t80, t95 = global_percentile_thresholds(fields)
    assert t80 == 100.0 and t95 == 100.0


def test_global_thresholds_sort_oracle():
    rng = np.random.default_rng(2)
    fields = [(rng.uniform(0, 120, 50), rng.uniform(0.5, 2.0, 50))
              for _ in range(4)]
    t80, t95 = global_percentile_thresholds(fields)
    v = np.concatenate([f[0] for f in fields])
    w = np.concatenate([f[1] for f in fields])
    order = np.argsort(v)
    cum = np.cumsum(w[order])
    assert t80 == v[order][np.searchsorted(cum, 0.80 * cum[-1], "left")]
    assert t95 == v[order][np.searchsorted(cum, 0.95 * cum[-1], "left")]


def test_global_thresholds_empty():
    with pytest.raises(EmptyInputError):
        global_percentile_thresholds([])


def test_band_classes():
    v = np.array([1.0, 5.0, 9.0])
    assert np.array_equal(band_classes(v, 4.0, 8.0), [0, 1, 2])

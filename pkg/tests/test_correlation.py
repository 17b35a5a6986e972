import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stentmech.case_io import CenterlineProfile
from stentmech.correlation import (pearson, rescale_diameters,
                                   restenosis_percent, threshold_sweep)
from stentmech.errors import (ConstantInputError, LengthMismatchError,
                              MissingDiameterError, ZeroReferenceError)
from stentmech.stress import SliceStressSummary


def profile(d_post, d_fu, in_stent=None, d_pre=None):
    n = len(d_post)
    return CenterlineProfile(
        s=np.arange(n, dtype=float),
        d_pre=np.asarray(d_pre if d_pre is not None else d_post, dtype=float),
        d_post=np.asarray(d_post, dtype=float),
        d_followup=np.asarray(d_fu, dtype=float),
        in_stent=np.asarray(in_stent if in_stent is not None else [True] * n))


def summary(i, mean, p95, fractions):
    return SliceStressSummary(slice_index=i, mean_p1=mean, p95_p1=p95,
                              area_fraction_above=fractions, total_area=1.0)


# --- rescale_diameters ---------------------------------------------------------

def test_rescale_identity():
    raw = np.array([3.0, 2.5, 2.0])
    out = rescale_diameters(raw, 0, 3.0)
    assert np.allclose(out, raw)


def test_rescale_halves():
    raw = np.array([6.0, 5.0, 4.0])
    out = rescale_diameters(raw, 0, 3.0)
    assert np.allclose(out, [3.0, 2.5, 2.0])


def test_rescale_idempotent():
    rng = np.random.default_rng(0)
    raw = rng.uniform(1.0, 4.0, 10)
    once = rescale_diameters(raw, 3, 2.8)
    twice = rescale_diameters(once, 3, 2.8)
    assert np.allclose(once, twice)


def test_rescale_zero_reference():
    with pytest.raises(ZeroReferenceError):
        rescale_diameters([0.0, 1.0], 0, 3.0)


# --- restenosis_percent -----------------------------------------------------------

def test_restenosis_values():
    pr = profile([3.0, 3.0, 2.8], [3.0, 1.5, 2.1])
    out = restenosis_percent(pr)
    assert out[0] == pytest.approx(0.0)
    assert out[1] == pytest.approx(50.0)
    assert out[2] == pytest.approx(25.0)


def test_restenosis_clamped_at_zero():
    pr = profile([3.0], [3.3])  # lumen gain
    assert restenosis_percent(pr)[0] == 0.0


def test_restenosis_scale_invariance():
    pr1 = profile([3.0, 2.5], [2.4, 2.0])
    pr2 = profile([6.0, 5.0], [4.8, 4.0])
    assert np.allclose(restenosis_percent(pr1), restenosis_percent(pr2))


def test_restenosis_missing_diameter():
    pr = profile([3.0, np.nan], [2.0, 2.0])
    with pytest.raises(MissingDiameterError):
        restenosis_percent(pr)


def test_restenosis_outside_stent_is_nan():
    pr = profile([3.0, 3.0], [2.0, np.nan], in_stent=[True, False])
    out = restenosis_percent(pr)
    assert np.isnan(out[1]) and out[0] > 0


# --- pearson ----------------------------------------------------------------------

def test_pearson_exact_lines():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)


def test_pearson_hand_value():
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)


def test_pearson_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = rng.integers(3, 40)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        r = pearson(x, y)
        # direct covariance formula
        cov = np.mean((x - x.mean()) * (y - y.mean()))
        ref = cov / (x.std() * y.std())
        assert abs(r - ref) < 1e-12
        assert abs(r) <= 1.0 + 1e-12


def test_pearson_errors():
    with pytest.raises(LengthMismatchError):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(LengthMismatchError):
        pearson([1, 2], [1, 2])
    with pytest.raises(ConstantInputError):
        pearson([1, 1, 1], [1, 2, 3])


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.01, 100.0), b=st.floats(-50.0, 50.0))
def test_pearson_affine_invariance(a, b):
    rng = np.random.default_rng(7)
    x = rng.standard_normal(20)
    y = rng.standard_normal(20)
    r = pearson(x, y)
    assert pearson(a * x + b, y) == pytest.approx(r, abs=1e-12)
    assert pearson(-a * x + b, y) == pytest.approx(-r, abs=1e-12)


# --- threshold_sweep ----------------------------------------------------------------

def test_sweep_constructed_correlation():
    """Restenosis equal to 100 * frac_above(30) makes tau=30 the exact peak."""
    rng = np.random.default_rng(3)
    taus = tuple(float(t) for t in range(5, 105, 5))
    summaries = []
    for i in range(12):
        base = rng.uniform(0.2, 0.9)
        fracs = {t: float(np.clip(base - 0.006 * t + 0.1 * rng.uniform(-1, 1)
                                  * (t != 30.0), 0, 1)) for t in taus}
        summaries.append(summary(i, rng.uniform(10, 50), rng.uniform(30, 90),
                                 fracs))
    resten = np.array([100.0 * s.area_fraction_above[30.0] for s in summaries])
    rep = threshold_sweep(summaries, resten, taus)
    assert rep.argmax_tau == 30.0
    r30 = dict(rep.sweep)[30.0]
    assert r30 == pytest.approx(1.0, abs=1e-12)
    assert rep.n_points == 12


def test_sweep_independent_noise_stays_small():
    rng = np.random.default_rng(12345)
    taus = tuple(float(t) for t in range(5, 105, 5))
    n = 200
    summaries = []
    for i in range(n):
        base = rng.uniform(0, 1)
        fracs = {t: float(np.clip(base + 0.05 * rng.standard_normal(), 0, 1))
                 for t in taus}
        summaries.append(summary(i, rng.uniform(5, 60), rng.uniform(20, 90), fracs))
    resten = rng.uniform(0, 60, n)  # independent of the stress columns
    rep = threshold_sweep(summaries, resten, taus)
    for tau, r in rep.sweep:
        assert r is None or abs(r) < 0.2
    assert rep.r_mean is None or abs(rep.r_mean) < 0.2


def test_sweep_permutation_invariance():
    rng = np.random.default_rng(4)
    taus = (10.0, 30.0, 50.0)
    summaries = [summary(i, rng.uniform(1, 9), rng.uniform(10, 90),
                         {t: rng.uniform(0, 1) for t in taus}) for i in range(8)]
    resten = rng.uniform(0, 50, 8)
    rep = threshold_sweep(summaries, resten, taus)
    perm = rng.permutation(8)
    rep2 = threshold_sweep([summaries[p] for p in perm], resten[perm], taus)
    assert rep.sweep == rep2.sweep
    assert rep.r_mean == pytest.approx(rep2.r_mean, abs=1e-14)


def test_sweep_constant_column_recorded_missing():
    taus = (10.0, 30.0)
    summaries = [summary(i, float(i), float(i) + 5,
                         {10.0: 0.5, 30.0: float(i) / 10}) for i in range(5)]
    resten = np.array([0.0, 10.0, 20.0, 30.0, 40.0])
    rep = threshold_sweep(summaries, resten, taus)
    sweep = dict(rep.sweep)
    assert sweep[10.0] is None            # constant fraction column
    assert sweep[30.0] == pytest.approx(1.0)
    assert rep.argmax_tau == 30.0


def test_sweep_ties_resolve_to_lower_tau():
    taus = (10.0, 20.0)
    summaries = [summary(i, float(i), float(i),
                         {10.0: i / 10, 20.0: i / 10}) for i in range(5)]
    resten = np.arange(5, dtype=float)
    rep = threshold_sweep(summaries, resten, taus)
    assert rep.argmax_tau == 10.0


def test_sweep_validations():
    with pytest.raises(ValueError):
        threshold_sweep([], [], ())
    with pytest.raises(LengthMismatchError):
        threshold_sweep([summary(0, 1, 2, {5.0: 0.1})], [1.0, 2.0], (5.0,))

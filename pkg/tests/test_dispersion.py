import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from breathlink.dispersion import (
    Continuous,
    Impulse,
    MediumParams,
    Probe,
    Schedule,
    SourceSpec,
    field_snapshot,
    impulse_response,
    plume_concentration,
    plume_sigma,
    puff_cell_average,
    puff_concentration,
    source_concentration,
    steady_point_source,
    superpose,
    total_mass,
)
from breathlink.errors import (
    ConfigError,
    InvalidTimeError,
    ModelInapplicableError,
    OutOfPlumeError,
    ResourceError,
)
from breathlink.fields import GridSpec

from .conftest import CASE_K, CASE_Q, H


def direct_puff(Q, u, K, x, y, z, t, H, reflect=False):
    # written out independently of the package
    s = 4 * K * t
    c = Q / (math.pi * s) ** 1.5 * math.exp(-((x - u * t) ** 2 + y**2) / s)
    v = math.exp(-((z - H) ** 2) / s)
    if reflect:
        v += math.exp(-((z + H) ** 2) / s)
    return c * v


# --- puff ---------------------------------------------------------------


def test_puff_case_peak_value(case_source, case_medium):
    c = puff_concentration(case_source, case_medium, (0.05, 0.0, H), 0.05)
    assert c == pytest.approx(1.5456e7, rel=1e-4)
    assert c == pytest.approx(CASE_Q / (4 * math.pi * CASE_K * 0.05) ** 1.5, rel=1e-14)


def test_puff_peak_decays_by_eight(case_source, case_medium):
    c1 = puff_concentration(case_source, case_medium, (0.05, 0.0, H), 0.05)
    c2 = puff_concentration(case_source, case_medium, (0.2, 0.0, H), 0.2)
    assert c1 / c2 == pytest.approx(8.0, rel=1e-12)


def test_puff_matches_direct_formula():
    med = MediumParams(0.7, 0.05, reflect_ground=True)
    src = SourceSpec(Impulse(123.0, t0=0.3), origin=(0.2, -0.1), height_H=0.4)
    for (x, y, z), t in zip([(0.5, 0.0, 0.1), (0.9, 0.2, 0.4), (0.3, -0.3, 0.0)], [0.5, 1.0, 2.0]):
        expect = direct_puff(123.0, 0.7, 0.05, x - 0.2, y + 0.1, z, t - 0.3, 0.4, reflect=True)
        assert puff_concentration(src, med, (x, y, z), t) == pytest.approx(expect, rel=1e-13)


def test_puff_far_tail_underflows_to_zero(case_source, case_medium):
    c = puff_concentration(case_source, case_medium, (0.05 + 10.0, 0.0, H), 0.05)
    assert c == 0.0


@pytest.mark.parametrize("t", [0.0, -1.0])
def test_puff_rejects_non_positive_time(case_source, case_medium, t):
    with pytest.raises(InvalidTimeError):
        puff_concentration(case_source, case_medium, (0.0, 0.0, H), t)


@pytest.mark.parametrize("bad", [math.nan, math.inf])
def test_puff_rejects_non_finite_inputs(case_source, case_medium, bad):
    with pytest.raises(ConfigError):
        puff_concentration(case_source, case_medium, (bad, 0.0, H), 0.1)
    with pytest.raises(ConfigError):
        puff_concentration(case_source, case_medium, (0.0, 0.0, H), bad)


def test_puff_needs_impulse(case_medium):
    with pytest.raises(ConfigError):
        puff_concentration(SourceSpec(Continuous(1.0)), case_medium, (1, 0, 1), 1.0)


def test_puff_vectorised(case_source, case_medium):
    xs = np.linspace(0, 0.1, 5)
    c = puff_concentration(case_source, case_medium, (xs, 0.0, H), 0.05)
    assert c.shape == (5,)
    assert c[0] == pytest.approx(puff_concentration(case_source, case_medium, (0.0, 0.0, H), 0.05))


media = st.builds(
    MediumParams,
    wind_u=st.floats(0.0, 5.0),
    diffusivity_K=st.floats(1e-3, 1.0),
    reflect_ground=st.booleans(),
)
coords = st.floats(-3.0, 3.0)


@settings(max_examples=200, deadline=None)
@given(med=media, q=st.floats(1.0, 1e9), x=coords, y=coords, z=st.floats(0.0, 4.0),
       t=st.floats(1e-3, 20.0), h=st.floats(0.0, 3.0))
def test_puff_properties(med, q, x, y, z, t, h):
    src = SourceSpec(Impulse(q), height_H=h)
    c = puff_concentration(src, med, (x, y, z), t)
    assert c >= 0 and math.isfinite(c)
    # y-symmetry, exact
    assert puff_concentration(src, med, (x, -y, z), t) == c
    # advection shift, exact
    still = MediumParams(0.0, med.diffusivity_K, med.reflect_ground)
    assert puff_concentration(src, still, (x - med.wind_u * t, y, z), t) == c
    # scaling linearity; subnormal results carry too few bits for a relative check
    src3 = SourceSpec(Impulse(3 * q), height_H=h)
    assert puff_concentration(src3, med, (x, y, z), t) == pytest.approx(3 * c, rel=1e-14, abs=1e-300)
    # reflection never lowers the value above ground
    free = MediumParams(med.wind_u, med.diffusivity_K, False)
    mirr = MediumParams(med.wind_u, med.diffusivity_K, True)
    assert puff_concentration(src, mirr, (x, y, z), t) >= puff_concentration(src, free, (x, y, z), t)


@settings(max_examples=100, deadline=None)
@given(K=st.floats(1e-3, 1.0), t1=st.floats(1e-3, 10.0), t2=st.floats(1e-3, 10.0))
def test_peak_decay_law(K, t1, t2):
    med = MediumParams(1.0, K)
    src = SourceSpec(Impulse(CASE_Q), height_H=H)
    p1 = puff_concentration(src, med, (t1, 0.0, H), t1)
    p2 = puff_concentration(src, med, (t2, 0.0, H), t2)
    assert p1 == pytest.approx(CASE_Q / (4 * math.pi * K * t1) ** 1.5, rel=1e-13)
    assert p2 / p1 == pytest.approx((t2 / t1) ** -1.5, rel=1e-12)


# --- plume ----------------------------------------------------------------


def test_plume_centerline_value():
    src = SourceSpec(Continuous(100.0), height_H=H)
    med = MediumParams(1.0, 0.03)
    c = plume_concentration(src, med, (1.0, 0.0, H))
    assert c == pytest.approx(100.0 / (2 * math.pi * 0.06), rel=1e-13)
    assert c == pytest.approx(265.26, abs=0.01)


def test_plume_linear_in_rate():
    med = MediumParams(1.0, 0.03)
    a = SourceSpec(Continuous(100.0), height_H=H)
    b = SourceSpec(Continuous(200.0), height_H=H)
    pts = [(0.5, 0.1, H), (2.0, -0.3, 1.0), (1.0, 0.0, H)]
    for p in pts:
        assert plume_concentration(b, med, p) == pytest.approx(2 * plume_concentration(a, med, p), rel=1e-14)


def test_plume_one_sigma_off_axis():
    med = MediumParams(1.0, 0.03)
    src = SourceSpec(Continuous(100.0), height_H=H)
    sig = float(plume_sigma(med, 1.0))
    ratio = plume_concentration(src, med, (1.0, sig, H)) / plume_concentration(src, med, (1.0, 0.0, H))
    assert ratio == pytest.approx(math.exp(-0.5), rel=1e-12)


def test_plume_sigma_increases_downwind():
    med = MediumParams(1.0, 0.03)
    sig = plume_sigma(med, np.linspace(0.01, 10, 100))
    assert np.all(np.diff(sig) > 0)


def test_plume_errors():
    src = SourceSpec(Continuous(100.0), height_H=H)
    with pytest.raises(OutOfPlumeError):
        plume_concentration(src, MediumParams(1.0, 0.03), (0.0, 0.0, H))
    with pytest.raises(OutOfPlumeError):
        plume_concentration(src, MediumParams(1.0, 0.03), (-1.0, 0.0, H))
    with pytest.raises(ModelInapplicableError):
        plume_concentration(src, MediumParams(0.0, 0.03), (1.0, 0.0, H))


def test_plume_on_centerline_equals_exact_steady_source():
    med = MediumParams(1.0, 0.03)
    src = SourceSpec(Continuous(100.0), height_H=H)
    for x in (0.5, 1.0, 3.0):
        exact = steady_point_source(100.0, med, x, 0.0, 0.0)
        assert plume_concentration(src, med, (x, 0.0, H)) == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("p", [(1.0, 0.0, H), (1.0, 0.05, H), (2.0, 0.1, H + 0.05), (0.5, 0.0, H)])
def test_time_integrated_puff_matches_plume(p):
    # slender-plume regime u x / K >= 10; quadrature of the puff over release time
    med = MediumParams(1.0, 0.03)
    qdot = 100.0
    puff = SourceSpec(Impulse(1.0), height_H=H)
    plume = SourceSpec(Continuous(qdot), height_H=H)
    x = p[0]
    assert med.wind_u * x / med.diffusivity_K >= 10
    val, _ = integrate.quad(
        lambda t: puff_concentration(puff, med, p, t), 0.0, 50.0 * x,
        points=[0.5 * x, x, 2 * x], limit=500, epsabs=0, epsrel=1e-10,
    )
    assert qdot * val == pytest.approx(plume_concentration(plume, med, p), rel=0.02)


# --- superposition ----------------------------------------------------------


def test_superpose_colocated_doubles(case_source, case_medium):
    single = superpose([case_source], case_medium, (0.1, 0.02, H), 0.1)
    double = superpose([case_source, case_source], case_medium, (0.1, 0.02, H), 0.1)
    assert double["virus"] == 2 * single["virus"]


def test_superpose_keeps_species_apart(case_medium):
    a = SourceSpec(Impulse(1000.0), species="A", height_H=H)
    b = SourceSpec(Impulse(5000.0), origin=(0.1, 0.0), species="B", height_H=H)
    p, t = (0.2, 0.0, H), 0.15
    out = superpose([a, b], case_medium, p, t)
    assert set(out) == {"A", "B"}
    assert out["A"] == puff_concentration(a, case_medium, p, t)
    assert out["B"] == puff_concentration(b, case_medium, p, t)


def test_superpose_identity(case_source, case_medium):
    p, t = (0.3, -0.1, 1.6), 0.4
    assert superpose([case_source], case_medium, p, t)["virus"] == puff_concentration(case_source, case_medium, p, t)
    plume = SourceSpec(Continuous(10.0), height_H=H)
    assert superpose([plume], case_medium, p, t)["virus"] == plume_concentration(plume, case_medium, p)


def test_superpose_empty_rejected(case_medium):
    with pytest.raises(ConfigError):
        superpose([], case_medium, (0, 0, 0), 1.0)


def test_schedule_is_causal_sum(case_medium):
    sched = SourceSpec(Schedule(((0.0, 100.0), (0.5, 300.0))), height_H=H)
    p = (0.6, 0.0, H)
    a = SourceSpec(Impulse(100.0, 0.0), height_H=H)
    b = SourceSpec(Impulse(300.0, 0.5), height_H=H)
    assert source_concentration(sched, case_medium, p, 0.4) == puff_concentration(a, case_medium, p, 0.4)
    assert source_concentration(sched, case_medium, p, 0.9) == pytest.approx(
        puff_concentration(a, case_medium, p, 0.9) + puff_concentration(b, case_medium, p, 0.9), rel=1e-14
    )


def test_schedule_validation():
    with pytest.raises(ConfigError):
        Schedule(((1.0, 10.0), (1.0, 10.0)))
    with pytest.raises(ConfigError):
        Schedule(((1.0, -10.0),))


def test_domain_types_validate():
    with pytest.raises(ConfigError):
        MediumParams(-1.0, 0.03)
    with pytest.raises(ConfigError):
        MediumParams(1.0, -0.03)
    with pytest.raises(ConfigError):
        Impulse(0.0)
    with pytest.raises(ConfigError):
        Continuous(-1.0)
    with pytest.raises(ConfigError):
        SourceSpec(Impulse(1.0), height_H=-1.0)
    with pytest.raises(ConfigError):
        Probe((0, 0, 0), [0.2, 0.1])


# --- impulse response -------------------------------------------------------


def test_impulse_response_peak_time(case_source, case_medium):
    times = np.round(np.arange(0.1, 3.0 + 1e-9, 0.01), 10)
    series = impulse_response(case_source, case_medium, Probe((1.0, 0.0, H), times))
    peak_t = series.times[np.argmax(series.values)]
    assert 0.9 <= peak_t <= 1.0
    # single peak: increasing then decreasing
    k = int(np.argmax(series.values))
    assert np.all(np.diff(series.values[: k + 1]) > 0)
    assert np.all(np.diff(series.values[k:]) < 0)


def test_impulse_response_pure_diffusion_decays():
    med = MediumParams(0.0, 0.03)
    src = SourceSpec(Impulse(1000.0), height_H=H)
    series = impulse_response(src, med, Probe((0.0, 0.0, H), np.linspace(0.01, 5, 200)))
    assert np.all(np.diff(series.values) < 0)


def test_impulse_response_linear_in_q(case_medium):
    probe = Probe((1.0, 0.0, H), np.linspace(0.1, 3, 50))
    a = impulse_response(SourceSpec(Impulse(40000.0), height_H=H), case_medium, probe)
    b = impulse_response(SourceSpec(Impulse(400000.0), height_H=H), case_medium, probe)
    np.testing.assert_allclose(b.values, 10 * a.values, rtol=1e-14)


def test_impulse_response_needs_positive_times(case_source, case_medium):
    with pytest.raises(InvalidTimeError):
        impulse_response(case_source, case_medium, Probe((1.0, 0.0, H), [0.0, 0.1]))


# --- snapshots ----------------------------------------------------------------


def test_snapshot_peak_location(case_source, case_medium):
    grid = GridSpec.plane((-0.5, 1.0, 0.005), (-0.3, 0.3, 0.005), H)
    f = field_snapshot(case_source, case_medium, grid, 0.05)
    value, (x, y, z) = f.peak()
    assert x == pytest.approx(0.05, abs=0.005)
    assert y == pytest.approx(0.0, abs=0.005)
    late = field_snapshot(case_source, case_medium, grid, 0.8)
    assert late.peak()[0] < value
    assert np.all(f.values >= 0) and np.all(np.isfinite(f.values))


def test_snapshot_empty_grid(case_source, case_medium):
    grid = GridSpec.plane((1.0, 0.0, 0.01), (-0.1, 0.1, 0.01), H)
    f = field_snapshot(case_source, case_medium, grid, 0.1)
    assert f.values.size == 0


def test_snapshot_cell_cap(case_source, case_medium):
    grid = GridSpec.from_ranges((0, 1, 0.01), (0, 1, 0.01), (0, 1, 0.01))
    with pytest.raises(ResourceError):
        field_snapshot(case_source, case_medium, grid, 0.1, max_cells=1000)


def test_snapshot_rejects_bad_time(case_source, case_medium):
    grid = GridSpec.plane((0, 1, 0.1), (0, 1, 0.1), H)
    with pytest.raises(InvalidTimeError):
        field_snapshot(case_source, case_medium, grid, 0.0)


def test_grid_spacing_must_be_positive():
    with pytest.raises(ConfigError):
        GridSpec.from_ranges((0, 1, 0.0), (0, 1, 0.1), (0, 1, 0.1))


# --- mass ------------------------------------------------------------------------


def test_total_mass_all_space(case_source, case_medium):
    for t in (0.01, 0.2, 5.0):
        assert total_mass(case_source, case_medium, t) == CASE_Q


def test_total_mass_half_space_with_reflection(case_source):
    med = MediumParams(1.0, 0.03, reflect_ground=True)
    big = ((-1000, 1000), (-100, 100), (-100, 100))
    for t in (0.2, 50.0, 500.0):
        assert total_mass(case_source, med, t, box=big) == pytest.approx(CASE_Q, rel=1e-12)


def test_total_mass_by_quadrature_in_8_sigma_box(case_source, case_medium):
    # independent route: tensor Gauss-Legendre quadrature of the point values
    t = 0.2
    sig = math.sqrt(2 * CASE_K * t)
    hw = 8 * sig
    nodes, weights = np.polynomial.legendre.leggauss(80)
    xs = 0.2 + hw * nodes
    ys = hw * nodes
    zs = H + hw * nodes
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    vals = puff_concentration(case_source, case_medium, (X, Y, Z), t)
    w = hw * weights
    mass = np.einsum("ijk,i,j,k->", vals, w, w, w)
    assert mass >= 0.999 * CASE_Q
    box = ((0.2 - hw, 0.2 + hw), (-hw, hw), (H - hw, H + hw))
    assert mass == pytest.approx(total_mass(case_source, case_medium, t, box=box), rel=1e-9)


def test_cell_average_conserves_mass(case_source, case_medium):
    t = 0.2
    grid = GridSpec.centered((0.2, 0.0, H), (0.6, 0.6, 0.6), (0.02, 0.02, 0.02))
    f = puff_cell_average(case_source, case_medium, grid, t)
    box = tuple((e[0], e[-1]) for e in grid.edges())
    assert f.total() == pytest.approx(total_mass(case_source, case_medium, t, box=box), rel=1e-12)
    assert f.total() > 0.9999 * CASE_Q

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import slab_matching, slab_roots_dense
from wgpdc.dispersion import PolingGrating, default_model, refractive_index
from wgpdc.modesolver import (
    AIR_INDEX,
    CutoffError,
    Grid,
    GridError,
    GuidedMode,
    ModeLabel,
    WaveguideSpec,
    analytic_norm,
    beta,
    covering_grid,
    find_mode,
    mode_profile,
    slab_branch_index,
    slab_mode_count,
    slab_residual,
    solve_modes,
    solve_slab,
)

LAM_DEG = 806.6
N_SUB_Y = refractive_index(default_model(), "Y", LAM_DEG)

slab_problem = st.tuples(
    st.floats(1.4, 2.3),  # lower cladding
    st.floats(1e-4, 0.05),  # contrast above the higher cladding
    st.floats(0.0, 1.0),  # position of the other cladding between air and the first
    st.floats(0.5, 20.0),  # thickness
    st.floats(400.0, 1600.0),  # wavelength
)


def _slab(p):
    n1, dn, frac, t, lam = p
    n3 = 1.0 + frac * (n1 - 1.0)
    return n1, n1 + dn, n3, t, lam


# ----------------------------------------------------------------- slab solver


def test_fitted_vertical_slab_against_dense_oracle():
    args = (N_SUB_Y, N_SUB_Y + 0.008, AIR_INDEX, 9.3, LAM_DEG)
    got = solve_slab(*args)
    want = slab_roots_dense(*args)
    assert len(got) == len(want) == slab_mode_count(*args)
    assert np.allclose(got, want, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(slab_problem)
def test_slab_roots_residual_and_bracket(p):
    n1, n2, n3, t, lam = _slab(p)
    roots = solve_slab(n1, n2, n3, t, lam)
    assert roots == sorted(roots, reverse=True)
    for m, r in enumerate(roots):
        assert max(n1, n3) < r < n2
        assert abs(slab_residual(r, n1, n2, n3, t, lam, m)) < 1e-10
        h = 1e-9 * (n2 - max(n1, n3))
        lo, hi = max(r - h, max(n1, n3)), min(r + h, n2)
        assert slab_matching(lo, n1, n2, n3, t, lam) * slab_matching(hi, n1, n2, n3, t, lam) <= 0


@settings(max_examples=100, deadline=None)
@given(slab_problem)
def test_mode_count_matches_v_parameter(p):
    n1, n2, n3, t, lam = _slab(p)
    count = slab_mode_count(n1, n2, n3, t, lam)
    # keep clear of exact cutoffs, where either count is a coin toss
    v = 2e3 * math.pi / lam * t * math.sqrt(n2**2 - max(n1, n3) ** 2)
    asym = math.atan(math.sqrt((max(n1, n3) ** 2 - min(n1, n3) ** 2) / (n2**2 - max(n1, n3) ** 2)))
    assume(min(abs((v - asym) / math.pi - k) for k in range(count + 2)) > 1e-6)
    assert len(solve_slab(n1, n2, n3, t, lam)) == count


@settings(max_examples=60, deadline=None)
@given(st.floats(1.4, 2.3), st.floats(1e-5, 0.05), st.floats(0.1, 20.0), st.floats(400.0, 1600.0))
def test_symmetric_slab_always_guides(n, dn, t, lam):
    assert len(solve_slab(n, n + dn, n, t, lam)) >= 1


def test_vanishing_contrast():
    n = 1.8
    assert len(solve_slab(n, n + 1e-12, n, 9.3, LAM_DEG)) <= 1
    assert solve_slab(n, n, n, 9.3, LAM_DEG) == []
    assert solve_slab(n, n - 0.01, n, 9.3, LAM_DEG) == []


def test_asymmetric_slab_below_cutoff_is_empty():
    # very thin film on a strongly asymmetric slab
    assert solve_slab(1.8, 1.801, 1.0, 0.05, LAM_DEG) == []


def test_nonpositive_thickness_rejected():
    with pytest.raises(ValueError):
        solve_slab(1.8, 1.81, 1.8, 0.0, LAM_DEG)


@settings(max_examples=40, deadline=None)
@given(slab_problem)
def test_branch_index_agrees_with_scan(p):
    n1, n2, n3, t, lam = _slab(p)
    roots = solve_slab(n1, n2, n3, t, lam)
    for m, r in enumerate(roots):
        assert slab_branch_index(n1, n2, n3, t, lam, m) == pytest.approx(r, abs=1e-12)
    assert math.isnan(slab_branch_index(n1, n2, n3, t, lam, len(roots) + 1))


# ----------------------------------------------------------------- 2D modes


@pytest.fixture(scope="module")
def spec():
    return WaveguideSpec(4.1, 9.3, 0.008, PolingGrating(8.92))


@pytest.fixture(scope="module")
def modes_y(spec):
    return solve_modes(spec, "Y", LAM_DEG)


def test_reference_labels_guided_at_degeneracy(modes_y):
    labels = {md.label for md in modes_y}
    assert {ModeLabel(0, 0), ModeLabel(0, 1), ModeLabel(0, 2), ModeLabel(1, 0)} <= labels


def test_pump_modes_guided(spec):
    labels = {md.label for md in solve_modes(spec, "Y", 403.3)}
    assert {ModeLabel(0, 0), ModeLabel(0, 1)} <= labels


def test_modes_sorted_and_bounded(spec, modes_y):
    n_eff = [md.n_eff for md in modes_y]
    assert n_eff == sorted(n_eff, reverse=True)
    for md in modes_y:
        assert spec.substrate_index("Y", LAM_DEG) < md.n_eff < spec.core_index("Y", LAM_DEG)


def test_max_label_limits_result(spec):
    modes = solve_modes(spec, "Y", LAM_DEG, max_label=(0, 1))
    assert {md.label for md in modes} == {ModeLabel(0, 0), ModeLabel(0, 1)}


def test_doubling_size_keeps_mode_count(spec):
    for lam, pol in [(LAM_DEG, "Y"), (LAM_DEG, "Z"), (403.3, "Y")]:
        small = len(solve_modes(spec, pol, lam))
        big = len(solve_modes(spec.replace(width_um=8.2, depth_um=18.6), pol, lam))
        assert big >= small


def test_zero_contrast_guides_nothing(spec):
    assert solve_modes(spec.replace(delta_n=0.0), "Y", LAM_DEG) == []


def test_beta_definition(modes_y):
    md = find_mode(modes_y, (0, 0))
    for lam in (790.0, LAM_DEG, 830.0):
        assert beta(md, lam) == pytest.approx(2 * math.pi * md.effective_index(lam) / lam, rel=1e-15)
    assert beta(md, LAM_DEG) == pytest.approx(2 * math.pi * md.n_eff / LAM_DEG, rel=1e-13)


def test_beta_ordering(modes_y):
    b = [beta(find_mode(modes_y, lab), LAM_DEG) for lab in [(0, 0), (0, 1), (0, 2)]]
    assert b[0] > b[1] > b[2]


def test_beta_against_slab_oracle_chain(modes_y):
    vert = slab_roots_dense(N_SUB_Y, N_SUB_Y + 0.008, 1.0, 9.3, LAM_DEG)
    horiz = slab_roots_dense(N_SUB_Y, vert[0], N_SUB_Y, 4.1, LAM_DEG)
    want = 2 * math.pi * horiz[0] / LAM_DEG
    assert beta(find_mode(modes_y, (0, 0)), LAM_DEG) == pytest.approx(want, rel=1e-13)


def test_cutoff_error_names_mode_and_wavelength(spec, modes_y):
    top = modes_y[-1]
    with pytest.raises(CutoffError, match=r"\(\d,\d\).*cut off at 1500"):
        beta(top, 1500.0)
    assert np.isnan(top.beta(1500.0, strict=False))


def test_effective_index_decreasing_780_to_880(spec):
    lam = np.arange(780.0, 881.0, 1.0)
    for pol in ("Y", "Z"):
        for md in solve_modes(spec, pol, LAM_DEG):
            n = md.effective_index(lam, strict=False)
            ok = np.isfinite(n)
            assert np.all(np.diff(n[ok]) < 0), md.label


def test_from_label_matches_enumeration(spec, modes_y):
    for md in modes_y:
        again = GuidedMode.from_label(spec, "Y", md.label, LAM_DEG)
        assert again.n_eff == pytest.approx(md.n_eff, abs=1e-12)


# ----------------------------------------------------------------- profiles


@pytest.fixture(scope="module")
def grid(modes_y):
    return covering_grid(modes_y, n=512)


def test_profile_norm(modes_y, grid):
    for md in modes_y:
        u = mode_profile(md, grid)
        assert grid.integrate(u**2) == pytest.approx(1.0, abs=1e-8)


def test_discrete_norm_vs_analytic(modes_y, grid):
    for md in modes_y:
        raw = mode_profile(md, grid, normalize=False)
        assert grid.integrate(raw**2) == pytest.approx(analytic_norm(md, grid), abs=1e-6)


def test_node_counts(modes_y):
    for md in modes_y:
        horiz, vert = md.fields()
        assert horiz.nodes() == md.label.m
        assert vert.nodes() == md.label.n


def test_fundamental_is_single_lobe(modes_y, grid):
    u = mode_profile(find_mode(modes_y, (0, 0)), grid)
    assert np.all(u >= -1e-12) or np.all(u <= 1e-12)
    iy, ix = np.unravel_index(np.argmax(np.abs(u)), u.shape)
    # the lobe is inside the core
    assert -4.1 / 2 <= grid.x[ix] <= 4.1 / 2
    assert -9.3 <= grid.y[iy] <= 0.0


def test_first_vertical_order_has_one_horizontal_nodal_line(modes_y, grid):
    u = mode_profile(find_mode(modes_y, (0, 1)), grid)
    column = u[:, grid.nx // 2]
    assert np.count_nonzero(np.sign(column[:-1]) * np.sign(column[1:]) < 0) == 1
    row = u[np.argmax(np.abs(column)), :]
    assert np.count_nonzero(np.sign(row[:-1]) * np.sign(row[1:]) < 0) == 0


def test_profiles_orthogonal(modes_y, grid):
    profiles = [mode_profile(md, grid) for md in modes_y]
    for a in range(len(profiles)):
        for b in range(a):
            assert abs(grid.integrate(profiles[a] * profiles[b])) < 1e-3


def test_small_grid_rejected(modes_y):
    with pytest.raises(GridError):
        mode_profile(modes_y[0], Grid(-2.0, 2.0, -9.0, 0.0, 64, 64))


def test_grid_validation_and_refinement():
    with pytest.raises(GridError):
        Grid(1.0, 0.0, 0.0, 1.0)
    with pytest.raises(GridError):
        Grid(0.0, 1.0, 0.0, 1.0, 1, 4)
    g = Grid(0.0, 1.0, 0.0, 2.0, 11, 21)
    with pytest.raises(GridError):
        g.integrate(np.ones((11, 21)))
    assert g.integrate(np.ones((21, 11))) == pytest.approx(2.0)
    r = g.refined(4)
    assert (r.nx, r.ny) == (41, 81)
    assert np.allclose(r.x[::4], g.x)


def test_slab_field_integrates_to_one(modes_y):
    for md in modes_y:
        for f in md.fields():
            assert f.integral_sq(-1e3, 1e3) == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------------- types


def test_mode_label_parsing():
    assert ModeLabel.parse("(1,2)") == ModeLabel(1, 2)
    assert ModeLabel.parse(" 0, 3 ") == ModeLabel(0, 3)
    assert ModeLabel.parse([2, 0]) == ModeLabel(2, 0)
    assert str(ModeLabel(1, 0)) == "(1,0)"
    with pytest.raises(ValueError):
        ModeLabel.parse("(-1,0)")


@pytest.mark.parametrize(
    "kwargs",
    [dict(width_um=0), dict(depth_um=-1), dict(delta_n=0.1), dict(delta_n=-0.001), dict(length_mm=0), dict(orientation="diagonal")],
)
def test_spec_validation(kwargs):
    base = dict(width_um=4.1, depth_um=9.3, delta_n=0.008, poling=PolingGrating(8.92))
    base.update(kwargs)
    with pytest.raises(ValueError):
        WaveguideSpec(**base)


def test_core_index_is_substrate_plus_contrast(spec):
    lam = np.linspace(700, 900, 11)
    assert np.allclose(spec.core_index("Z", lam) - spec.substrate_index("Z", lam), 0.008, atol=1e-15)


def test_orientation_swap(spec):
    rotated = spec.replace(orientation="width_vertical")
    assert (rotated.horizontal_um, rotated.vertical_um) == (9.3, 4.1)

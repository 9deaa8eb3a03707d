import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import K_DIR, K_NEU, L_DIR, L_NEU
from delaypde.errors import ValidationError
from delaypde.linalg import eig_general, kalman_rank
from delaypde.model import (PlantConfig, TruncatedModel, assemble_truncated, build_reduction,
                            build_shape_functions, choose_N0, residual_norm)
from delaypde.spectral import Coefficient, SLProblem, compute_eigenbasis, project_all


# --- shape functions ------------------------------------------------------

def test_shape_functions_reference_plant(plant_dir, ref_sl):
    x = ref_sl.grid
    a, b = build_shape_functions(plant_dir)
    np.testing.assert_allclose(a, 2 + x**2, atol=1e-14)
    np.testing.assert_allclose(b, -(x**2), atol=1e-14)


def test_shape_functions_neumann_actuation():
    sl = SLProblem(Coefficient.constant(1.0), Coefficient.constant(1.0), 1.0, np.pi / 4,
                   np.pi / 2, 201)
    plant = PlantConfig(sl, 1.0, 1.0, "dirichlet")
    a, b = build_shape_functions(plant)
    np.testing.assert_allclose(a, 1.0, atol=1e-14)
    np.testing.assert_allclose(b, -sl.grid**2 / 2, atol=1e-14)


def test_shape_function_derivative_route_for_tables():
    x = np.linspace(0, 1, 41)
    poly = Coefficient.polynomial([1.0, 0.5, 0.25])
    tab = Coefficient.from_table(x, poly(x))
    mk = lambda p: PlantConfig(SLProblem(p, Coefficient.constant(1.0), 2.0, 1.0, 0.3, 801), 1.0, 1.0)  # noqa: E731
    a_poly, _ = build_shape_functions(mk(poly))
    a_tab, _ = build_shape_functions(mk(tab))
    np.testing.assert_allclose(a_tab, a_poly, atol=1e-6)


def test_norm_of_b(red_dir, ref_basis):
    w = ref_basis.weights
    assert np.sum(w * red_dir.b_fn**2) == pytest.approx(0.2, abs=1e-7)


# --- beta_n ---------------------------------------------------------------

def test_beta_dual_formula(red_dir, ref_basis):
    n = np.arange(1, len(ref_basis) + 1)
    dx = ref_basis.grid[1] - ref_basis.grid[0]
    tol = (1e-5 + (n * np.pi * dx) ** 2) * np.abs(red_dir.beta_n)
    assert np.all(np.abs(red_dir.beta_n - red_dir.beta_n_projection) <= tol)


def test_beta_grows_like_sqrt_lambda(red_dir, ref_basis):
    ratio = np.abs(red_dir.beta_n) / np.sqrt(ref_basis.lambdas)
    assert ratio.max() <= 10 * np.median(ratio)
    assert ratio.min() > 0


# --- residual norms -------------------------------------------------------

def test_residual_of_a_mode_is_zero(ref_basis):
    f = ref_basis.modes[0]
    coeffs = project_all(f, ref_basis)
    assert residual_norm(f, coeffs, 1, ref_basis.grid) == pytest.approx(0.0, abs=1e-12)


def test_residual_tail_monotone(red_dir):
    r = red_dir.residual_b
    assert r[0] == pytest.approx(0.2, abs=1e-7)
    assert np.all(np.diff(r) <= 1e-15)
    # b(1) != 0 under the Dirichlet end condition, so the tail decays like 1/N
    assert r[400] < r[100] / 3 < r[25] / 9
    assert r[400] * 400 == pytest.approx(r[200] * 200, rel=0.05)


def test_residual_against_explicit_reconstruction(red_dir, ref_basis):
    N = 2
    rec = red_dir.b_fn - red_dir.b_n[:N] @ ref_basis.modes[:N]
    direct = float(np.sum(ref_basis.weights * rec**2))
    got = residual_norm(red_dir.b_fn, red_dir.b_n, N, ref_basis.grid)
    assert got == pytest.approx(direct, rel=1e-9)
    assert red_dir.residuals(N)[1] == pytest.approx(got, rel=1e-12)


def test_residual_needs_enough_coefficients(ref_basis):
    with pytest.raises(ValidationError):
        residual_norm(ref_basis.grid, np.zeros(3), 4, ref_basis.grid)


@settings(max_examples=20, deadline=None)
@given(u=st.floats(-5, 5), seed=st.integers(0, 2**31 - 1))
def test_lift_projection_consistency(u, seed, plant_dir, red_dir, ref_basis):
    # projecting w = z - x^2 u / d gives z_n + b_n u, mode by mode
    rng = np.random.default_rng(seed)
    x = ref_basis.grid
    z = rng.normal() * np.sin(3 * x) + rng.normal() * x**3 + rng.normal()
    w = z - x**2 * u / plant_dir.lift_denominator
    lhs = project_all(w, ref_basis)
    rhs = project_all(z, ref_basis) + red_dir.b_n * u
    np.testing.assert_allclose(lhs, rhs, atol=1e-11 * (1 + abs(u)))


# --- N0 -------------------------------------------------------------------

def test_choose_N0_examples(ref_basis):
    assert choose_N0(ref_basis, 2.0, 3.0) == 1
    assert ref_basis.lambdas[1] > 5
    assert choose_N0(ref_basis, -10.0, 1.0) == 1
    assert choose_N0([1.0, 2.0, 50.0, 60.0, 70.0], 0.0, 3.0) == 2
    with pytest.raises(ValidationError):
        choose_N0([1.0, 2.0, 3.0], 0.0, 5.0)


# --- truncated model ------------------------------------------------------

def test_F1_scalar_structure(plant_dir, ref_basis, red_dir):
    m = assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR], [L_DIR], 1, 2)
    lam1, b1, g1 = ref_basis.lambdas[0], red_dir.beta_n[0], ref_basis.phi0[0]
    want = np.array([[-lam1 + 2 + b1 * K_DIR, L_DIR * g1], [0.0, -lam1 + 2 - L_DIR * g1]])
    np.testing.assert_allclose(m.F1, want, rtol=1e-14)
    assert m.F1.shape == (2, 2) and m.F3.shape == (1, 1)


def test_F1_spectrum_is_union_of_blocks(plant_neu, ref_basis, red_neu):
    K, L = [-1.0, 0.5], [2.0, -1.0]
    m = assemble_truncated(plant_neu, ref_basis, red_neu, K, L, 2, 6)
    want = np.concatenate([eig_general(m.A0 + m.B0 @ m.K), eig_general(m.A0 - m.L @ m.C0)])
    got = eig_general(m.F1)
    np.testing.assert_allclose(np.sort_complex(got), np.sort_complex(want), atol=1e-10)
    np.testing.assert_array_equal(m.F1[2:, :2], 0.0)


@pytest.mark.parametrize("meas, K, L", [("dirichlet", K_DIR, L_DIR), ("neumann", K_NEU, L_NEU)])
def test_reference_gains_place_F1_left_of_minus_c(meas, K, L, ref_sl, ref_basis):
    plant = PlantConfig(ref_sl, 3.0, 1.0, meas)
    red = build_reduction(plant, ref_basis)
    m = assemble_truncated(plant, ref_basis, red, [K], [L], 1, 2)
    assert np.all(eig_general(m.F1).real < -3)


def test_C1_scaling(plant_dir, plant_neu, ref_basis, red_dir, red_neu):
    lam = ref_basis.lambdas
    md = assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR], [L_DIR], 1, 20)
    np.testing.assert_allclose(md.C1t.ravel(), ref_basis.phi0[1:20] / np.sqrt(lam[1:20]), rtol=1e-14)
    mn = assemble_truncated(plant_neu, ref_basis, red_neu, [K_NEU], [L_NEU], 1, 20)
    np.testing.assert_allclose(mn.C1t.ravel(), ref_basis.dphi0[1:20] / lam[1:20], rtol=1e-14)


@pytest.mark.parametrize("meas", ["dirichlet", "neumann"])
def test_C1_entries_shrink_with_n(meas, ref_sl, ref_basis):
    plant = PlantConfig(ref_sl, 3.0, 1.0, meas)
    red = build_reduction(plant, ref_basis)
    c = np.abs(assemble_truncated(plant, ref_basis, red, [-1.0], [1.0], 1, 300).C1t.ravel())
    windows = [c[1:49].max(), c[49:99].max(), c[99:199].max(), c[199:299].max()]
    assert all(a >= b for a, b in zip(windows, windows[1:]))


def test_E_and_gain_blocks(plant_dir, ref_basis, red_dir):
    m = assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR], [L_DIR], 1, 5)
    np.testing.assert_allclose(m.E, m.Ktilde @ np.hstack([m.F1, m.F2, m.Lcal]), rtol=1e-14)
    np.testing.assert_allclose(m.Lcal.ravel(), [L_DIR, -L_DIR])
    np.testing.assert_allclose(m.Ktilde.ravel(), [K_DIR, 0.0])
    np.testing.assert_allclose(m.F2, np.vstack([m.L @ m.C1t, -m.L @ m.C1t]))
    assert m.F3.shape == (4, 4) and np.allclose(m.F3, np.diag(np.diag(m.F3)))


def test_assemble_rejects_bad_dimensions(plant_dir, ref_basis, red_dir):
    with pytest.raises(ValidationError):
        assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR], [L_DIR], 1, 1)
    with pytest.raises(ValidationError):
        assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR, 1.0], [L_DIR], 1, 3)
    with pytest.raises(ValidationError):
        assemble_truncated(plant_dir, ref_basis, red_dir, [K_DIR], [L_DIR], 1, 10_000)


def test_dump_round_trip(plant_neu, ref_basis, red_neu):
    m = assemble_truncated(plant_neu, ref_basis, red_neu, [-1.0, 0.3], [2.0, 0.1], 2, 5)
    text = m.dump()
    assert text.startswith("# TruncatedModel N0=2 N=5 measurement=neumann")
    blocks = TruncatedModel.parse_dump(text)
    assert set(blocks) == set(TruncatedModel._BLOCKS)
    for name, arr in blocks.items():
        np.testing.assert_array_equal(arr, np.atleast_2d(getattr(m, name)))


def test_kalman_conditions(plant_dir, ref_basis, red_dir):
    for N0 in (1, 2, 3):
        A0 = np.diag(-ref_basis.lambdas[:N0] + 2.0)
        rc, sc = kalman_rank(A0, red_dir.beta_n[:N0])
        ro, so = kalman_rank(A0.T, ref_basis.phi0[:N0])
        assert rc == N0 and ro == N0
        assert sc > 1e-8 and so > 1e-8


# --- plant validation -----------------------------------------------------

def test_plant_config_validation(ref_sl):
    with pytest.raises(ValidationError):
        PlantConfig(ref_sl, 0.0, 1.0)
    with pytest.raises(ValidationError):
        PlantConfig(ref_sl, 3.0, 0.0)
    dd = SLProblem(Coefficient.constant(1.0), Coefficient.constant(1.0), 0.0, 0.0, 0.0, 101)
    with pytest.raises(ValidationError):
        PlantConfig(dd, 3.0, 1.0, "dirichlet")
    nd = SLProblem(Coefficient.constant(1.0), Coefficient.constant(1.0), 0.0, np.pi / 2, 0.0, 101)
    with pytest.raises(ValidationError):
        PlantConfig(nd, 3.0, 1.0, "neumann")
    zero_q = SLProblem(Coefficient.constant(1.0), Coefficient.constant(0.0), 0.0, 1.0, 0.0, 101)
    with pytest.raises(ValidationError):
        PlantConfig(zero_q, 3.0, 1.0)
    with pytest.raises(ValueError):
        PlantConfig(ref_sl, 3.0, 1.0, "robin")


def test_output_traces_select_measurement(plant_dir, plant_neu, ref_basis):
    np.testing.assert_array_equal(plant_dir.output_traces(ref_basis), ref_basis.phi0)
    np.testing.assert_array_equal(plant_neu.output_traces(ref_basis), ref_basis.dphi0)


def test_reduction_on_neumann_actuation_matches_dual_formula():
    sl = SLProblem(Coefficient.polynomial([1.0, 0.2]), Coefficient.constant(2.0), 1.0, 0.7, 1.1, 2001)
    plant = PlantConfig(sl, 1.5, 1.0)
    basis = compute_eigenbasis(sl, 30)
    red = build_reduction(plant, basis)
    n = np.arange(1, 31)
    dx = basis.grid[1]
    tol = (1e-5 + (n * np.pi * dx) ** 2) * np.abs(red.beta_n)
    assert np.all(np.abs(red.beta_n - red.beta_n_projection) <= tol)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from detreflect.kernels import (KernelError, ReflectionKernel, SymmetryError, Variant, angle_from_mass,
                                check_symmetry, cosine_grid, format_kernel_spec, kernel_mass_matrix,
                                knudsen_kernel, load_kernel, parse_kernel_spec, retro_kernel,
                                sample_exit, sine_mass, specular_kernel)


def quad_mass(a, b):
    return integrate.quad(lambda t: -math.sin(t), a, b, epsabs=1e-13)[0]


@pytest.mark.parametrize("m", range(0, 7))
def test_grid_cells_have_equal_quadrature_mass(m):
    g = cosine_grid(m)
    assert g.n_cells == 2 ** (m + 1)
    assert g.gamma[0] == -math.pi and g.gamma[-1] == 0.0
    masses = [quad_mass(a, b) for a, b in zip(g.gamma[:-1], g.gamma[1:])]
    assert np.allclose(masses, 2.0 ** -m, atol=1e-12, rtol=0)


def test_level_one_grid_values():
    g = cosine_grid(1)
    assert np.allclose(g.gamma, [-math.pi, -2 * math.pi / 3, -math.pi / 2, -math.pi / 3, 0.0], atol=1e-15)


def test_negative_level_rejected():
    with pytest.raises(KernelError):
        cosine_grid(-1)


@given(st.floats(0, 2))
def test_angle_from_mass_inverts_sine_mass(y):
    a = float(angle_from_mass(y))
    assert -math.pi <= a <= 0.0
    assert sine_mass(-math.pi, a) == pytest.approx(y, abs=1e-14)


def test_cells_nest_under_refinement():
    for m in range(6):
        coarse, fine = cosine_grid(m).gamma, cosine_grid(m + 1).gamma
        assert np.allclose(fine[::2], coarse, atol=1e-15)


def test_cell_of_is_right_closed():
    g = cosine_grid(2)
    assert g.cell_of(g.gamma[3]) == 2
    assert g.cell_of(np.nextafter(g.gamma[3], 0.0)) == 3


@pytest.mark.parametrize("make", [retro_kernel, specular_kernel, knudsen_kernel])
@pytest.mark.parametrize("m", [0, 2, 4])
def test_builtin_matrices(make, m):
    mat = kernel_mass_matrix(make(), m)
    n = 2 ** (m + 1)
    assert mat.shape == (n, n)
    assert np.allclose(mat.sum(axis=1), 2.0 ** -m, atol=1e-15)
    assert np.array_equal(mat, mat.T)
    assert check_symmetry(make(), m).passed


def test_knudsen_matrix_is_product_of_marginals():
    mat = kernel_mass_matrix(knudsen_kernel(), 2)
    assert np.allclose(mat, 0.25 * 0.25 / 2)


def test_strip_width_scales_masses():
    k = specular_kernel((0.0, 0.5, 2.0))
    assert kernel_mass_matrix(k, 1, (0.5, 2.0)).sum() == pytest.approx(1.5 * 2.0)


def test_matrix_kernel_aggregates_to_coarser_level():
    m = kernel_mass_matrix(knudsen_kernel(), 3)
    k = ReflectionKernel(Variant.MATRIX, (0.0, 1.0), 3, (m,))
    assert np.allclose(kernel_mass_matrix(k, 1), kernel_mass_matrix(knudsen_kernel(), 1), atol=1e-15)
    with pytest.raises(KernelError):
        kernel_mass_matrix(k, 4)


def test_asymmetric_matrix_rejected():
    m = np.array([[0.5, 0.5], [0.0, 1.0]]) * 1.0
    # rows sum to the cell mass 1 at level 0 but a(0,1) != a(1,0)
    with pytest.raises(SymmetryError):
        ReflectionKernel(Variant.MATRIX, (0.0, 1.0), 0, (m,))


def test_bad_row_sums_rejected():
    with pytest.raises(KernelError):
        ReflectionKernel(Variant.MATRIX, (0.0, 1.0), 0, (np.full((2, 2), 0.3),))


def test_bad_strips_rejected():
    with pytest.raises(KernelError):
        ReflectionKernel(Variant.KNUDSEN, (1.0, 0.0))


def test_check_symmetry_flags_override():
    rep = check_symmetry(knudsen_kernel(), 0, [np.array([[0.5, 0.6], [0.4, 0.5]])])
    assert not rep.passed and rep.max_asymmetry == pytest.approx(0.2)


def test_sample_exit_builtins():
    assert sample_exit(retro_kernel(), -1.0, 0.3) == -1.0
    assert sample_exit(specular_kernel(), -1.0, 0.3) == pytest.approx(-math.pi + 1.0)
    assert sample_exit(knudsen_kernel(), -1.0, 0.5) == pytest.approx(-math.pi / 2)


def test_sample_exit_matrix_follows_row_law():
    k = ReflectionKernel(Variant.MATRIX, (0.0, 1.0), 1, (kernel_mass_matrix(specular_kernel(), 1),))
    g = cosine_grid(1)
    for i in range(4):
        a = 0.5 * (g.gamma[i] + g.gamma[i + 1])
        b = sample_exit(k, a, 0.5)
        assert g.cell_of(b) == 3 - i


@pytest.mark.parametrize("make", [retro_kernel, specular_kernel, knudsen_kernel])
def test_spec_round_trip_builtin(make):
    k = make((0.0, 0.25, 1.0))
    k2 = parse_kernel_spec(format_kernel_spec(k))
    assert k2.variant == k.variant and k2.strips == k.strips
    assert format_kernel_spec(k2) == format_kernel_spec(k)


def test_spec_round_trip_matrix(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.random((4, 4))
    a = a + a.T
    # Sinkhorn to the required row sums while staying symmetric
    for _ in range(500):
        r = 0.5 / a.sum(axis=1)
        a = a * np.sqrt(np.outer(r, r))
    a = 0.5 * (a + a.T)
    k = ReflectionKernel(Variant.MATRIX, (0.0, 1.0), 1, (a,))
    path = tmp_path / "k.txt"
    path.write_text(format_kernel_spec(k))
    k2 = load_kernel(path)
    assert np.array_equal(k2.masses[0], k.masses[0])


@pytest.mark.parametrize("text", [
    "",
    "not-a-kernel 1\n",
    "detreflect-kernel 9\nvariant = knudsen\n",
    "detreflect-kernel 1\nvariant = lambertian\n",
    "detreflect-kernel 1\nvariant = matrix\nstrips = 0 1\n",
    "detreflect-kernel 1\nvariant = matrix\nstrips = 0 1\nlevel = 0\nmatrix 0\n1 x\n",
    "detreflect-kernel 1\nvariant = matrix\nstrips = 0 1\nlevel = 0\n",
    "detreflect-kernel 1\nvariant = knudsen\nstrips = 1 0\n",
])
def test_malformed_specs_raise(text):
    with pytest.raises(KernelError):
        parse_kernel_spec(text)

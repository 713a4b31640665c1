import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stripres.errors import NotInvertible
from stripres.floquet import (
    FloquetField,
    GridFunction,
    coeffs_to_grid,
    floquet_forward,
    floquet_inverse,
    grid_to_coeffs,
    inner,
    strip_resolvent_check,
)
from stripres.medium import ModeBasis

TWO_PI = 2.0 * np.pi


def random_grid(rng, cells, g1=6, g2=5):
    shape = (cells[0] * g1, cells[1] * g2)
    return GridFunction(rng.standard_normal(shape) + 1j * rng.standard_normal(shape), g1, g2, cells)


def slices_norm2(field):
    return sum(field.slice(j).norm() ** 2 for j in range(len(field.ks)))


class TestGridFunction:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            GridFunction(np.zeros((8, 8)), 4, 4, (3, 1))

    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            GridFunction(np.zeros((3, 4)), 3, 4)

    def test_inner_weight(self):
        f = GridFunction(np.ones((8, 4)), 4, 4, (2, 1))
        assert inner(f, f) == pytest.approx(2.0)


class TestForward:
    def test_single_cell_is_identity(self, rng):
        f = random_grid(rng, (1, 1))
        fld = floquet_forward("x1", f)
        np.testing.assert_allclose(fld.slices[0], f.values, atol=1e-15)

    @pytest.mark.parametrize("direction", ["x1", "x2"])
    def test_one_cell_support(self, rng, direction):
        L = 5
        cells = (L, 1) if direction == "x1" else (1, L)
        f = random_grid(rng, cells)
        vals = np.zeros_like(f.values)
        if direction == "x1":
            vals[: f.g1] = f.values[: f.g1]
            base, x = vals[: f.g1], np.arange(f.g1) / f.g1
            phase = lambda k: np.exp(-1j * k * x)[:, None]
        else:
            vals[:, : f.g2] = f.values[:, : f.g2]
            base, x = vals[:, : f.g2], np.arange(f.g2) / f.g2
            phase = lambda k: np.exp(-1j * k * x)[None, :]
        fld = floquet_forward(direction, GridFunction(vals, f.g1, f.g2, cells))
        for j, k in enumerate(fld.ks):
            np.testing.assert_allclose(fld.slices[j], phase(k) * base / np.sqrt(L), atol=1e-14)

    def test_direction_checked(self, rng):
        with pytest.raises(ValueError):
            floquet_forward("x3", random_grid(rng, (2, 1)))


class TestIsometry:
    @pytest.mark.parametrize("direction,cells", [("x1", (4, 1)), ("x2", (1, 6)), ("x1", (3, 2))])
    def test_parseval_and_round_trip(self, direction, cells):
        rng = np.random.default_rng(7)
        for _ in range(100):
            f = random_grid(rng, cells)
            fld = floquet_forward(direction, f)
            assert abs(slices_norm2(fld) - f.norm() ** 2) <= 1e-12 * f.norm() ** 2
            back = floquet_inverse(fld)
            assert np.abs(back.values - f.values).max() <= 1e-12 * np.abs(f.values).max()
            assert back.cells == f.cells

    def test_inverse_of_single_zero_slice(self, rng):
        L, g = 4, 6
        s = np.zeros((L, g, g), dtype=complex)
        s[0] = rng.standard_normal((g, g))
        fld = FloquetField("x1", TWO_PI * np.arange(L) / L, s, g, g)
        out = floquet_inverse(fld).values
        for c in range(L):
            np.testing.assert_allclose(out[c * g : (c + 1) * g], s[0] / np.sqrt(L), atol=1e-15)

    @given(st.complex_numbers(max_magnitude=10), st.integers(0, 2**32 - 1))
    def test_linear(self, alpha, seed):
        rng = np.random.default_rng(seed)
        f, g = random_grid(rng, (3, 1)), random_grid(rng, (3, 1))
        h = GridFunction(alpha * f.values + g.values, f.g1, f.g2, f.cells)
        lhs = floquet_forward("x1", h).slices
        rhs = alpha * floquet_forward("x1", f).slices + floquet_forward("x1", g).slices
        assert np.abs(lhs - rhs).max() <= 1e-12 * (1 + np.abs(lhs).max())

    def test_commutes_with_periodic_multiplier(self, rng):
        L, g1, g2 = 4, 6, 5
        f = random_grid(rng, (L, 1), g1, g2)
        eps = rng.uniform(1, 3, size=(g1, g2))
        ef = GridFunction(np.tile(eps, (L, 1)) * f.values, g1, g2, (L, 1))
        a = floquet_forward("x1", ef).slices
        b = eps[None] * floquet_forward("x1", f).slices
        assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()


class TestCoefficients:
    def test_round_trip(self, rng):
        b = ModeBasis.symmetric(3, 2)
        c = rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size)
        grid = coeffs_to_grid(c, b.n1, b.n2, (8, 6))
        np.testing.assert_allclose(grid_to_coeffs(grid, b.n1, b.n2), c, atol=1e-14)


class TestStripResolvent:
    @pytest.fixture
    def f(self, rng):
        g = 18
        return GridFunction(rng.standard_normal((g, g)) + 1j * rng.standard_normal((g, g)), g, g)

    def test_free_identity(self, free, f):
        res = strip_resolvent_check(0.7, -1.0, free, ModeBasis.symmetric(4, 4), 8, f)
        assert res.rel_err <= 1e-10
        assert res.lhs.shape == f.values.shape

    def test_rect_identity_small(self, rect, f):
        res = strip_resolvent_check(1.9, -1.0, rect, ModeBasis.symmetric(4, 3), 4, f)
        assert res.rel_err <= 1e-8

    def test_refinement_in_L(self, rect, f):
        b = ModeBasis.symmetric(3, 3)
        errs = [strip_resolvent_check(0.4, -1.0, rect, b, L, f).rel_err for L in (2, 4, 8)]
        assert all(e2 <= max(e1, 1e-8) for e1, e2 in zip(errs, errs[1:]))

    def test_zero_input(self, free):
        z = GridFunction(np.zeros((10, 10)), 10, 10)
        res = strip_resolvent_check(0.7, -1.0, free, ModeBasis.symmetric(2, 2), 4, z)
        assert not np.any(res.lhs) and not np.any(res.rhs) and res.rel_err == 0

    def test_input_checks(self, free, f):
        with pytest.raises(ValueError):
            strip_resolvent_check(0.7, -1.0, free, ModeBasis.symmetric(12, 2), 4, f)
        two = GridFunction(np.zeros((36, 18)), 18, 18, (2, 1))
        with pytest.raises(ValueError):
            strip_resolvent_check(0.7, -1.0, free, ModeBasis.symmetric(2, 2), 4, two)

    def test_singular_supercell(self, free, f):
        # λ = k2² puts the constant mode of the free supercell on the spectrum.
        with pytest.raises(NotInvertible):
            strip_resolvent_check(0.5, 0.25, free, ModeBasis.symmetric(2, 2), 4, f)

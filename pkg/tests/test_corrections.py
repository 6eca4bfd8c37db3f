"""
Tests for the axis corrections χ, η and the vanishing-order fits

Scenarios:
  - radial quadrature is exact on low-order polynomials, including the axis value
  - the staggered rule telescopes to u − u(0); flux_inverse undoes the solver's radial flux
  - χ built from u − u(0) agrees with its defining integral; χ − (u − u(0)) is the remainder
  - with c0 = 0 both remainders vanish
  - η on a solved ψ₁ closes the radial equation; off the walls it matches the expanded form
  - for solved fields the χ remainder vanishes to order four, the η remainder to order three or more
  - vanishing orders: r² fits slope 2, zero rows give +inf, coarse grids are refused
  - chain norm: smooth fields stay bounded, r² under H³₀ diverges, non-vanishing fields are refused
"""

import numpy as np
import pytest

from src.calculation.corrections import (
    CorrectionKind,
    build_chi,
    build_eta,
    chi_quadrature,
    cumulative_moment,
    cumulative_radial,
    eta_theorem_form,
    flux_inverse,
    lemma_form_gap,
    model_rhs,
    staggered_radial,
    vanishing_order,
    weighted_chain_norm,
)
from src.calculation.fields_norms import Field, Parity, axis_trace
from src.calculation.solver import radial_flux_part
from src.geometry.domain_grid import Grid, build_cutoff
from src.utils.errors import NonFiniteError, PreconditionError
from src.verification.cases import get_case
from src.verification.estimates import minus_trace, solve_case


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def poly_psi1(grid):
    return Field.from_function(grid, lambda r, z: (1 - r ** 2) * (1 - z ** 2),
                               Parity.EVEN, True, True, "psi1")


def poly_omega1(grid):
    return Field.from_function(grid, lambda r, z: 8 * (1 - z ** 2) + 2 * (1 - r ** 2),
                               Parity.EVEN, False, False, "omega1")


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def grid():
    return Grid(nr=64, nz=32)


@pytest.fixture
def cutoff():
    return build_cutoff(1.0, 0.2)


@pytest.fixture
def no_cutoff():
    return build_cutoff(0.0, 0.2)


@pytest.fixture(scope="module")
def solved_poly():
    return solve_case(get_case("polynomial"), Grid(nr=64, nz=32))


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

class TestQuadrature:
    def test_odd_integrand(self, grid):
        r = grid.r_nodes[:, None] * np.ones((1, grid.nz))
        result = cumulative_radial(2.0 * r, grid, Parity.ODD)
        assert np.allclose(result, r ** 2, atol=1e-14)

    def test_even_integrand_uses_axis_value(self, grid):
        ones = np.ones(grid.shape)
        result = cumulative_radial(ones, grid, Parity.EVEN)
        assert np.allclose(result[:, 0], grid.r_nodes)

    def test_moment(self, grid):
        ones = np.ones(grid.shape)
        result = cumulative_moment(ones, grid, Parity.EVEN)
        assert np.allclose(result[:, 3], grid.r_nodes ** 2 / 2)

    def test_non_finite_integrand(self, grid):
        values = np.ones(grid.shape)
        values[0, 0] = np.inf
        with pytest.raises(NonFiniteError):
            cumulative_radial(values, grid, Parity.EVEN)

    def test_staggered_rule_telescopes(self, grid):
        field = Field.from_function(grid, lambda r, z: np.cos(3 * r) * (2 + z), Parity.EVEN)
        result = staggered_radial(field, np.ones((grid.nr - 1, 1)), 1.0)
        expected = field.values - axis_trace(field).values[None, :]
        assert np.allclose(result, expected, atol=1e-13)

    def test_flux_inverse_of_constant(self, grid):
        result = flux_inverse(np.ones(grid.shape), grid)
        expected = (grid.r_nodes ** 2 - grid.r_nodes[0] ** 2) / 8.0
        assert np.allclose(result, expected[:, None], atol=1e-14)

    def test_flux_inverse_undoes_radial_operator(self, grid):
        rhs = Field.from_function(grid, lambda r, z: np.exp(-r) * (1 + z ** 2), Parity.EVEN).values
        w = Field(grid, flux_inverse(rhs, grid), Parity.EVEN, False, False, "w")
        # the last row carries the r = R closure
        assert np.allclose(radial_flux_part(w)[:-1], rhs[:-1], rtol=1e-10, atol=1e-10)

    def test_flux_inverse_rejects_non_finite(self, grid):
        rhs = np.ones(grid.shape)
        rhs[3, 3] = np.nan
        with pytest.raises(NonFiniteError):
            flux_inverse(rhs, grid)


# ---------------------------------------------------------------------------
# χ
# ---------------------------------------------------------------------------

class TestChi:
    def test_matches_defining_integral(self, grid, cutoff):
        psi1 = poly_psi1(grid)
        chi = build_chi(psi1, cutoff)
        direct = chi_quadrature(psi1, cutoff)
        gap = np.max(np.abs(chi.values.values - direct.values))
        assert gap < 1e-12 * chi.values.max_abs(), f"χ forms differ by {gap:.2e}"
        assert chi.kind is CorrectionKind.CHI

    def test_remainder_closes_decomposition(self, grid, cutoff):
        psi1 = poly_psi1(grid)
        chi = build_chi(psi1, cutoff)
        base = psi1.values - axis_trace(psi1).values[None, :]
        assert np.allclose(base - chi.values.values, chi.remainder.values, atol=1e-14)

    def test_zero_cutoff_has_no_remainder(self, grid, no_cutoff):
        chi = build_chi(poly_psi1(grid), no_cutoff)
        assert chi.remainder.is_zero()
        expected = -(grid.r_nodes[:, None] ** 2) * (1 - grid.z_nodes[None, :] ** 2)
        assert np.allclose(chi.values.values, expected, atol=1e-12)

    def test_vanishes_quadratically(self, grid, cutoff):
        order = vanishing_order(build_chi(poly_psi1(grid), cutoff).values).min_slope
        assert order >= 1.9, f"χ vanishes like r^{order:.2f}"

    def test_remainder_is_fourth_order_for_solved_field(self, solved_poly):
        chi = chi_quadrature(solved_poly.psi1, solved_poly.cutoff)
        order = vanishing_order(minus_trace(solved_poly.psi1) - chi).min_slope
        assert order >= 3.5, f"u − u(0) − χ vanishes like r^{order:.2f}"

    def test_odd_field_rejected(self, grid, cutoff):
        psi = Field.from_function(grid, lambda r, z: r * (1 - z ** 2), Parity.ODD)
        with pytest.raises(PreconditionError):
            build_chi(psi, cutoff)


# ---------------------------------------------------------------------------
# η
# ---------------------------------------------------------------------------

class TestEta:
    def test_model_rhs_is_u_rr_for_exact_fields(self, grid):
        g = model_rhs(poly_psi1(grid), poly_omega1(grid))
        expected = -2.0 * (1 - grid.z_nodes ** 2)
        assert np.allclose(g.values, expected[None, :], atol=1e-10)

    def test_equation_gap_vanishes_for_solved_field(self, solved_poly):
        eta = build_eta(solved_poly.psi1, solved_poly.omega1, solved_poly.cutoff)
        assert eta.equation_gap < 1e-3, f"equation gap {eta.equation_gap:.2e}"
        assert eta.kind is CorrectionKind.ETA
        assert eta.to_dict()["equation_gap"] == eta.equation_gap

    def test_equation_gap_sees_the_wall_closure(self, grid, cutoff):
        # the analytic polynomial misses the solver's r = R and z = ±a closures
        eta = build_eta(poly_psi1(grid), poly_omega1(grid), cutoff)
        assert eta.equation_gap > 5e-3

    def test_matches_expanded_form_off_the_walls(self, grid, cutoff):
        psi1, omega1 = poly_psi1(grid), poly_omega1(grid)
        eta = build_eta(psi1, omega1, cutoff).values.values
        expanded = eta_theorem_form(psi1, omega1, cutoff).values
        assert np.allclose(eta[:, 1:-1], expanded[:, 1:-1], atol=1e-10)

    def test_lemma_and_theorem_forms_agree(self, grid, cutoff):
        assert lemma_form_gap(poly_psi1(grid), poly_omega1(grid), cutoff) < 1e-12

    def test_remainder_closes_decomposition(self, grid, cutoff):
        psi1 = poly_psi1(grid)
        eta = build_eta(psi1, poly_omega1(grid), cutoff)
        base = psi1.values - axis_trace(psi1).values[None, :]
        assert np.allclose(base - eta.values.values, eta.remainder.values, atol=1e-10)

    def test_zero_cutoff_reduces_to_u_minus_axis(self, grid, no_cutoff):
        psi1 = poly_psi1(grid)
        eta = build_eta(psi1, poly_omega1(grid), no_cutoff)
        base = psi1.values - axis_trace(psi1).values[None, :]
        assert np.allclose(eta.remainder.values[:, 1:-1], 0.0, atol=1e-10)
        assert np.allclose(eta.values.values[:, 1:-1], base[:, 1:-1], atol=1e-10)

    def test_remainder_reaches_third_order_for_solved_field(self, solved_poly):
        eta = build_eta(solved_poly.psi1, solved_poly.omega1, solved_poly.cutoff)
        remainder = minus_trace(solved_poly.psi1) - eta.values
        order = vanishing_order(remainder).min_slope
        assert order >= 2.9, f"u − u(0) − η vanishes like r^{order:.2f}"


# ---------------------------------------------------------------------------
# Vanishing order and chain norm
# ---------------------------------------------------------------------------

class TestVanishingOrder:
    def test_quadratic_slope(self, grid):
        field = Field.from_function(grid, lambda r, z: r ** 2 * (2 + z), Parity.EVEN)
        fit = vanishing_order(field)
        assert np.allclose(fit.slopes, 2.0)

    def test_subtract_trace(self, grid):
        field = Field.from_function(grid, lambda r, z: 1 + r ** 2 + 0 * z, Parity.EVEN)
        assert vanishing_order(field).min_slope == pytest.approx(0.0, abs=1e-2)
        assert vanishing_order(field, subtract_trace=True).min_slope == pytest.approx(2.0, abs=1e-6)

    def test_zero_rows_are_infinite(self, grid):
        fit = vanishing_order(Field.zeros(grid))
        assert np.all(np.isinf(fit.slopes))
        assert fit.to_dict()["slope"][0] == "inf"

    def test_needs_enough_cells(self):
        with pytest.raises(PreconditionError):
            vanishing_order(Field.zeros(Grid(nr=4, nz=4)))


class TestChainNorm:
    def test_smooth_field_is_bounded(self, grid):
        field = Field.from_function(grid, lambda r, z: r ** 2 * (1 - r ** 2) * (1 - z ** 2),
                                    Parity.EVEN, True, True)
        chain = weighted_chain_norm(field, k=2)
        assert not chain.diverging, f"growth {chain.growth:.3f}"
        assert chain.lhs > 0 and chain.rhs > 0 and np.isfinite(chain.ratio)

    def test_cubic_bump_is_bounded_in_h3(self, grid):
        field = Field.from_function(grid, lambda r, z: r ** 3 * (1 - r ** 2) ** 2 * (1 - z ** 2),
                                    Parity.ODD, True, True)
        chain = weighted_chain_norm(field, k=3)
        assert not chain.diverging, f"growth {chain.growth:.3f}"
        assert np.isfinite(chain.lhs) and chain.rhs > 0

    def test_quadratic_profile_diverges_in_h3(self):
        # |u/r³|² r ~ 1/r: the H³₀ norm grows like the log of the first radius
        grid = Grid(nr=16, nz=16)
        field = Field.from_function(grid, lambda r, z: r ** 2 * (1 - z ** 2), Parity.EVEN)
        chain = weighted_chain_norm(field, k=3)
        assert chain.diverging, f"growth {chain.growth:.3f}"
        assert chain.to_dict()["diverging"] is True

    def test_zero_field(self, grid):
        chain = weighted_chain_norm(Field.zeros(grid), k=2)
        assert (chain.lhs, chain.rhs, chain.ratio) == (0.0, 0.0, 0.0)

    def test_non_vanishing_field_refused(self, grid):
        field = Field.from_function(grid, lambda r, z: 1 + 0 * r * z, Parity.EVEN)
        with pytest.raises(PreconditionError):
            weighted_chain_norm(field, k=2)

    @pytest.mark.parametrize("k", [0, 4])
    def test_order_range(self, grid, k):
        with pytest.raises(PreconditionError):
            weighted_chain_norm(Field.zeros(grid), k=k)

    def test_odd_radial_count_refused(self):
        grid = Grid(nr=33, nz=16)
        field = Field.from_function(grid, lambda r, z: r ** 2 + 0 * z, Parity.EVEN)
        with pytest.raises(PreconditionError):
            weighted_chain_norm(field, k=1)

"""
Tests for the discrete ψ₁ / ψ operators and their solves

Scenarios:
  - ψ₁ operator is exact on R² − r² (value 8) up to and including the axis cell
  - W·A is symmetric; the ψ operator annihilates ψ = r away from the walls
  - polynomial manufactured solution converges at second order
  - zero forcing gives exact zeros; solves are linear in the forcing
  - differenced vs direct routes for ψ₁,z, with the z = ±a compatibility guard
  - velocity reconstruction: interior divergence and vorticity defects of the solved pair
    decay at second order; the wall cells dominate the full-domain measure
  - energy identities close on the polynomial case, with the zz axis term at coefficient 1
"""

import numpy as np
import pytest

from src.calculation.fields_norms import Field, Parity, axis_trace, derivative
from src.calculation.solver import (
    IdentityCheck,
    assemble,
    assemble_psi,
    check_compatibility,
    divergence_defect,
    energy_identities,
    fit_axis_asymptotics,
    l2_norm,
    reconstruct_velocity,
    solve,
    solve_differentiated,
    solve_psi,
    vorticity_consistency,
)
from src.geometry.domain_grid import CylinderDomain, Grid
from src.utils.errors import PreconditionError, SolverError


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

DOMAIN = CylinderDomain(R=1.0, a=1.0, r0=0.25)


def poly_psi1(r, z):
    return (1 - r ** 2) * (1 - z ** 2)


def poly_omega1(r, z):
    return 8 * (1 - z ** 2) + 2 * (1 - r ** 2)


def sep_psi1(r, z):
    return (1 - r ** 2) ** 2 * np.sin(np.pi * z)


def sep_omega1(r, z):
    return (16 - 24 * r ** 2 + np.pi ** 2 * (1 - r ** 2) ** 2) * np.sin(np.pi * z)


def forcing(grid, fn, z_dirichlet=False):
    return Field.from_function(grid, fn, Parity.EVEN, False, z_dirichlet, "omega1")


def exact_psi1(grid, fn=poly_psi1):
    return Field.from_function(grid, fn, Parity.EVEN, True, True)


def exact_psi(grid, fn=poly_psi1):
    return Field.from_function(grid, lambda r, z: r * fn(r, z), Parity.ODD, True, True)


def poly_error(n):
    grid = Grid(nr=n, nz=n)
    result = solve(assemble(DOMAIN, grid), forcing(grid, poly_omega1))
    return np.max(np.abs(result.psi1.values - exact_psi1(grid).values))


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def grid():
    return Grid(nr=32, nz=32)


@pytest.fixture
def op(grid):
    return assemble(DOMAIN, grid)


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

class TestAssembly:
    def test_exact_on_radial_quadratic(self, op, grid):
        u = Field.from_function(grid, lambda r, z: 1 - r ** 2 + 0 * z, Parity.EVEN)
        au = op.apply(u).values
        interior = au[:-1, 1:-1]
        assert np.allclose(interior, 8.0, atol=1e-8), f"max deviation {np.max(np.abs(interior - 8))}"

    def test_weighted_matrix_is_symmetric(self, op):
        s = op.symmetric_matrix()
        asym = abs(s - s.T).max()
        assert asym <= 1e-12 * abs(s).max(), f"asymmetry {asym}"

    def test_symmetry_defect_on_random_vectors(self, op):
        rng = np.random.default_rng(7)
        u, v = rng.standard_normal(op.size), rng.standard_normal(op.size)
        assert op.symmetry_defect(u, v) < 1e-12

    def test_psi_operator_annihilates_r(self, grid):
        op_psi = assemble_psi(DOMAIN, grid)
        u = Field.from_function(grid, lambda r, z: r + 0 * z, Parity.ODD)
        au = op_psi.apply(u).values
        assert np.allclose(au[:-1, 1:-1], 0.0, atol=1e-9)

    def test_neumann_variant(self, grid):
        op_n = assemble(DOMAIN, grid, z_boundary="neumann")
        one = Field.from_function(grid, lambda r, z: 1 - r ** 2 + 0 * z, Parity.EVEN)
        assert np.allclose(op_n.apply(one).values[:-1], 8.0, atol=1e-8), "constant in z is Neumann-exact"
        assert op_n.to_dict()["z_boundary"] == "neumann"

    def test_bad_boundary_kind(self, grid):
        with pytest.raises(PreconditionError):
            assemble(DOMAIN, grid, z_boundary="periodic")

    def test_domain_mismatch(self):
        with pytest.raises(PreconditionError):
            assemble(DOMAIN, Grid(nr=8, nz=8, R=2.0))


# ---------------------------------------------------------------------------
# Solves
# ---------------------------------------------------------------------------

class TestSolve:
    def test_polynomial_case_accuracy(self, op, grid):
        result = solve(op, forcing(grid, poly_omega1))
        error = np.max(np.abs(result.psi1.values - exact_psi1(grid).values))
        assert error < 1e-2, f"max error {error}"
        assert result.residual_norm <= 1e-10
        assert result.psi.parity is Parity.ODD and result.psi1.parity is Parity.EVEN

    def test_second_order_convergence(self):
        coarse, fine = poly_error(16), poly_error(32)
        order = np.log2(coarse / fine)
        assert order >= 1.7, f"observed order {order:.2f}"

    def test_zero_forcing_gives_zero(self, op, grid):
        result = solve(op, Field.zeros(grid))
        assert result.psi1.is_zero() and result.psi.is_zero()
        assert result.iterations == 0 and result.residual_norm == 0.0

    def test_psi_is_r_times_psi1(self, op, grid):
        result = solve(op, forcing(grid, poly_omega1))
        assert np.allclose(result.psi.values, result.psi1.values * grid.r_nodes[:, None])

    def test_superposition(self, op, grid):
        a = forcing(grid, poly_omega1)
        b = forcing(grid, sep_omega1)
        combined = solve(op, a + b).psi1.values
        separate = solve(op, a).psi1.values + solve(op, b).psi1.values
        scale = np.max(np.abs(combined))
        assert np.max(np.abs(combined - separate)) <= 1e-8 * scale

    def test_scaling_is_exact(self, op, grid):
        a = forcing(grid, poly_omega1)
        assert np.allclose(solve(op, 2.0 * a).psi1.values, 2.0 * solve(op, a).psi1.values,
                           rtol=1e-12, atol=0.0)

    @pytest.mark.parametrize("tol", [0.0, 1e-3])
    def test_tolerance_range(self, op, grid, tol):
        with pytest.raises(PreconditionError):
            solve(op, forcing(grid, poly_omega1), tol=tol)

    def test_iteration_cap(self):
        grid = Grid(nr=64, nz=64)
        with pytest.raises(SolverError):
            solve(assemble(DOMAIN, grid), forcing(grid, poly_omega1), max_iter_factor=1)

    def test_operator_kind_checked(self, grid):
        with pytest.raises(PreconditionError):
            solve(assemble_psi(DOMAIN, grid), forcing(grid, poly_omega1))
        with pytest.raises(PreconditionError):
            solve_psi(assemble(DOMAIN, grid), forcing(grid, poly_omega1))

    def test_direct_psi_solve(self, grid):
        omega = Field.from_function(grid, lambda r, z: r * poly_omega1(r, z), Parity.ODD)
        result = solve_psi(assemble_psi(DOMAIN, grid), omega)
        error = np.max(np.abs(result.psi.values - exact_psi(grid).values))
        assert error < 1e-2, f"direct ψ error {error}"
        assert result.operator_kind == "psi"

    def test_result_dict(self, op, grid):
        data = solve(op, forcing(grid, poly_omega1)).to_dict()
        assert data["operator"] == "psi1" and data["grid"]["nr"] == 32


# ---------------------------------------------------------------------------
# z-differentiated problem
# ---------------------------------------------------------------------------

class TestDifferentiated:
    def test_differenced_route_accepts_any_forcing(self, op, grid):
        psi1_z = solve_differentiated(op, forcing(grid, poly_omega1))
        expected = Field.from_function(grid, lambda r, z: -2 * z * (1 - r ** 2), Parity.EVEN)
        assert np.max(np.abs(psi1_z.values - expected.values)) < 2e-2

    def test_direct_route_needs_compatible_forcing(self, op, grid):
        with pytest.raises(PreconditionError):
            solve_differentiated(op, forcing(grid, poly_omega1), route="direct")

    def test_routes_agree_on_admissible_data(self, op, grid):
        omega1 = forcing(grid, sep_omega1, z_dirichlet=True)
        differenced = solve_differentiated(op, omega1)
        direct = solve_differentiated(op, omega1, route="direct")
        scale = np.max(np.abs(differenced.values))
        gap = np.max(np.abs(differenced.values - direct.values)) / scale
        assert gap < 5e-2, f"routes differ by {gap:.3e}"

    def test_compatibility_gap_is_small_for_sine(self, grid):
        assert check_compatibility(forcing(grid, sep_omega1)) < 1e-2

    def test_unknown_route(self, op, grid):
        with pytest.raises(PreconditionError):
            solve_differentiated(op, forcing(grid, sep_omega1), route="spectral")


# ---------------------------------------------------------------------------
# Velocity
# ---------------------------------------------------------------------------

class TestVelocity:
    @staticmethod
    def _defects(n):
        grid = Grid(nr=n, nz=n)
        result = solve(assemble(DOMAIN, grid), forcing(grid, poly_omega1))
        v_r, v_z = reconstruct_velocity(result.psi, result.psi1)
        omega = Field.from_function(grid, lambda r, z: r * poly_omega1(r, z), Parity.ODD)
        return divergence_defect(v_r, v_z), vorticity_consistency(v_r, v_z, omega)

    def test_defects_are_second_order(self):
        defects = np.array([self._defects(n) for n in (32, 64, 128)])
        orders = np.log2(defects[:-1] / defects[1:])
        assert np.all(orders[:, 0] >= 1.9), f"divergence defects {defects[:, 0]}, orders {orders[:, 0]}"
        assert np.all(orders[:, 1] >= 1.9), f"vorticity defects {defects[:, 1]}, orders {orders[:, 1]}"

    def test_wall_cells_dominate_full_domain_defect(self):
        grid = Grid(nr=32, nz=32)
        result = solve(assemble(DOMAIN, grid), forcing(grid, poly_omega1))
        v_r, v_z = reconstruct_velocity(result.psi, result.psi1)
        omega = Field.from_function(grid, lambda r, z: r * poly_omega1(r, z), Parity.ODD)
        interior = vorticity_consistency(v_r, v_z, omega)
        assert vorticity_consistency(v_r, v_z, omega, margin=0.0) > 10 * interior

    def test_margin_must_leave_an_interior(self, grid):
        v_r, v_z = reconstruct_velocity(exact_psi(grid), exact_psi1(grid))
        with pytest.raises(PreconditionError):
            divergence_defect(v_r, v_z, margin=0.6)

    def test_velocity_components(self, grid):
        v_r, v_z = reconstruct_velocity(exact_psi(grid), exact_psi1(grid))
        r, z = grid.mesh()
        expected_vr = 2 * z * r * (1 - r ** 2)
        assert np.max(np.abs(v_r.values - expected_vr)) < 1e-2
        assert v_r.name == "v_r" and v_z.name == "v_z"

    def test_needs_odd_psi(self, grid):
        with pytest.raises(PreconditionError):
            reconstruct_velocity(exact_psi1(grid))

    def test_axis_asymptotics(self, grid):
        a1, a3, residual = fit_axis_asymptotics(exact_psi(grid))
        assert np.allclose(a1.values, 1 - grid.z_nodes ** 2, atol=1e-8)
        assert np.allclose(a3.values, -(1 - grid.z_nodes ** 2), atol=1e-6)
        assert residual < 1e-10


# ---------------------------------------------------------------------------
# Energy identities
# ---------------------------------------------------------------------------

class TestIdentities:
    @staticmethod
    def _checks(n, admissible=False, omega_fn=poly_omega1):
        grid = Grid(nr=n, nz=n)
        omega1 = forcing(grid, omega_fn, z_dirichlet=admissible)
        result = solve(assemble(DOMAIN, grid), omega1)
        return {c.name: c for c in energy_identities(result, omega1, admissible)}

    def test_names(self):
        assert set(self._checks(16)) == {"zz", "r_over_r", "stream"}
        assert set(self._checks(16, True, sep_omega1)) == {"zz", "r_over_r", "zzz", "stream"}

    def test_polynomial_identities_close(self):
        coarse, fine = self._checks(16), self._checks(32)
        for name, check in fine.items():
            assert check.gap < 0.05, f"{name}: lhs={check.lhs:.6f} rhs={check.rhs:.6f}"
            assert check.gap <= coarse[name].gap + 1e-3, f"{name} gap grew under refinement"

    def test_zz_identity_value(self):
        check = self._checks(32)["zz"]
        assert check.rhs == pytest.approx(20.0 / 3.0, rel=2e-2)

    def test_zz_axis_term_has_unit_coefficient(self):
        grid = Grid(nr=32, nz=32)
        omega1 = forcing(grid, poly_omega1)
        result = solve(assemble(DOMAIN, grid), omega1)
        check = next(c for c in energy_identities(result, omega1) if c.name == "zz")
        axis = axis_trace(derivative(result.psi1, 0, 1)).integral_of_square()
        assert axis == pytest.approx(8.0 / 3.0, rel=2e-2), "∫ 4z² dz on the axis"
        assert check.gap < 0.05
        for coefficient in (0.0, 2.0):
            shifted = check.lhs + (coefficient - 1.0) * axis
            assert abs(shifted - check.rhs) > 0.3 * check.rhs, f"coefficient {coefficient} also closes"

    def test_gap_definition(self):
        assert IdentityCheck("x", 1.0, 1.0).gap == 0.0
        assert IdentityCheck("x", 0.0, 0.0).gap == 0.0
        assert IdentityCheck("x", 2.0, 1.0).gap == pytest.approx(0.5)

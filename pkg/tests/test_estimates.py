"""
Tests for the estimate harness

Scenarios:
  - each estimate id reports finite, non-negative sides for the polynomial case
  - μ ranges: T1.x need μ ∈ (0, 1), L4.1 accepts μ = 0 with a zero prefactor
  - z-differentiated lemmas are skipped (with a reason) for inadmissible forcing
  - the zero case gives ratio 0 everywhere
  - T1.3 and T1.4 measure u − u(0) − χ and u − u(0) − η on the grid, at orders 2 and 3
  - refinement: polynomial T1.1 is stable; a broken axis closure makes T1.4 diverge
  - sweeps solve once per (case, mesh) and do not depend on the thread count
"""

import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp

from src.calculation.corrections import build_eta, vanishing_order
from src.calculation.solver import assemble as solver_assemble
from src.geometry.domain_grid import Grid
from src.utils.errors import GridMismatchError, PreconditionError
from src.verification import estimates
from src.verification.cases import get_case
from src.verification.estimates import (
    ESTIMATES,
    LEMMAS,
    MU_DEPENDENT,
    classify_ratios,
    evaluate_estimate,
    evaluate_identities,
    evaluate_lemmas,
    evaluate_theorem_1,
    evaluate_theorem_3,
    evaluate_theorem_4,
    minus_trace,
    refinement_study,
    run_sweep,
    solve_case,
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def broken_axis_assemble(domain, grid, z_boundary="dirichlet"):
    """Axis row with an odd ghost instead of the zero-flux face (u₀ ≈ u₁/2)."""
    op = solver_assemble(domain, grid, z_boundary)
    extra = np.zeros(grid.shape)
    extra[0, :] = 4.0 / grid.hr ** 2
    matrix = (op.matrix + sp.diags(extra.ravel())).tocsr()
    return dataclasses.replace(op, matrix=matrix)


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def polynomial():
    return get_case("polynomial")


@pytest.fixture(scope="module")
def separable():
    return get_case("separable")


@pytest.fixture(scope="module")
def grid():
    return Grid(nr=32, nz=32)


@pytest.fixture(scope="module")
def solved_poly(polynomial, grid):
    return solve_case(polynomial, grid)


@pytest.fixture
def broken_axis(monkeypatch):
    monkeypatch.setattr(estimates, "assemble", broken_axis_assemble)


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

class TestSolveCase:
    def test_error_is_small(self, solved_poly):
        assert solved_poly.max_error() < 1e-2
        assert solved_poly.residual <= 1e-10

    def test_direct_psi_agrees(self, polynomial, grid, solved_poly):
        direct = solve_case(polynomial, grid, direct_psi=True)
        gap = np.max(np.abs(direct.psi.values - solved_poly.psi.values))
        assert gap < 1e-2, f"direct ψ differs from r·ψ₁ by {gap:.2e}"

    def test_shared_solve_needs_same_grid(self, polynomial, solved_poly):
        with pytest.raises(GridMismatchError):
            evaluate_estimate("L2.3", polynomial, 0.0, Grid(nr=16, nz=16), solved=solved_poly)


# ---------------------------------------------------------------------------
# Theorems and lemmas
# ---------------------------------------------------------------------------

class TestEstimates:
    @pytest.mark.parametrize("estimate_id", list(ESTIMATES))
    def test_sides_are_finite(self, polynomial, grid, solved_poly, estimate_id):
        report = evaluate_estimate(estimate_id, polynomial, 0.5, grid, solved=solved_poly)
        if report.skipped:
            assert report.reason, f"{estimate_id} skipped without a reason"
            return
        assert report.lhs >= 0 and report.rhs > 0, f"{estimate_id}: {report.lhs}, {report.rhs}"
        assert np.isfinite(report.ratio)
        expected_mu = 0.5 if estimate_id in MU_DEPENDENT else 0.0
        assert report.mu == expected_mu

    def test_theorem_1_prefactor(self, polynomial, grid, solved_poly):
        report = evaluate_theorem_1(polynomial, 0.5, grid, solved=solved_poly)
        assert report.prefactor == pytest.approx(1.0)
        assert set(report.terms) == {"slice_h2_mu", "psi1_zr", "psi1_zz", "weighted_z"}
        lhs = (report.terms["slice_h2_mu"] + report.terms["psi1_zr"] + report.terms["psi1_zz"]
               + report.prefactor * report.terms["weighted_z"])
        assert report.lhs == pytest.approx(lhs)

    @pytest.mark.parametrize("mu", [0.0, 1.0, -0.2])
    def test_theorem_1_mu_range(self, polynomial, grid, solved_poly, mu):
        with pytest.raises(PreconditionError):
            evaluate_theorem_1(polynomial, mu, grid, solved=solved_poly)

    def test_lemma_4_1_at_zero_mu(self, polynomial, grid, solved_poly):
        report = evaluate_estimate("L4.1", polynomial, 0.0, grid, solved=solved_poly)
        assert report.prefactor == 0.0 and report.terms["weighted_z"] == 0.0

    def test_negative_mu_for_outer_weighted(self, polynomial, grid, solved_poly):
        with pytest.raises(PreconditionError):
            evaluate_estimate("E3.51u", polynomial, -0.1, grid, solved=solved_poly)

    def test_theorem_3_records_vanishing_order(self, polynomial):
        report = evaluate_theorem_3(polynomial, Grid(nr=64, nz=32))
        assert report.terms["vanishing_order"] >= 1.9
        assert report.reason == ""

    def test_theorem_4_reports_gaps(self, separable):
        report = evaluate_theorem_4(separable, Grid(nr=64, nz=32))
        assert report.terms["lemma_form_gap"] < 1e-10
        assert 0.0 <= report.terms["equation_gap"] < 1e-3
        assert 0.0 < report.terms["theorem_form_gap"] < 1.0
        assert report.mu == 0.0

    def test_theorem_4_measures_the_grid_remainder(self, polynomial):
        grid = Grid(nr=64, nz=32)
        solved = solve_case(polynomial, grid)
        report = evaluate_theorem_4(polynomial, grid, solved=solved)
        eta = build_eta(solved.psi1, solved.omega1, solved.cutoff)
        remainder = minus_trace(solved.psi1) - eta.values
        assert report.terms["vanishing_order"] == pytest.approx(vanishing_order(remainder).min_slope)
        assert report.terms["vanishing_order"] >= 2.9
        assert report.reason == ""

    @pytest.mark.parametrize("n", [32, 64])
    def test_axis_bump_chi_remainder_order(self, n):
        report = evaluate_theorem_3(get_case("axis_bump"), Grid(nr=n, nz=n))
        assert report.terms["vanishing_order"] >= 1.9, f"order {report.terms['vanishing_order']:.2f}"
        assert report.reason == ""

    def test_axis_bump_eta_remainder_order(self):
        report = evaluate_theorem_4(get_case("axis_bump"), Grid(nr=64, nz=64))
        assert report.terms["vanishing_order"] >= 2.9, f"order {report.terms['vanishing_order']:.2f}"
        assert report.reason == ""

    def test_unknown_estimate(self, polynomial, grid, solved_poly):
        with pytest.raises(PreconditionError):
            evaluate_estimate("T9.9", polynomial, 0.5, grid, solved=solved_poly)


class TestLemmas:
    def test_all_lemmas_reported(self, polynomial, grid, solved_poly):
        reports = evaluate_lemmas(polynomial, 0.5, grid, solved=solved_poly)
        assert [r.estimate_id for r in reports] == list(LEMMAS)

    def test_inadmissible_forcing_skips_z_lemmas(self, polynomial, grid, solved_poly):
        reports = {r.estimate_id: r for r in evaluate_lemmas(polynomial, 0.5, grid, solved=solved_poly)}
        for estimate_id in ("L3.8b", "L4.2"):
            assert reports[estimate_id].skipped, f"{estimate_id} should be skipped"
            assert "z = ±a" in reports[estimate_id].reason
            assert reports[estimate_id].ratio == 0.0

    def test_admissible_forcing_runs_z_lemmas(self, separable):
        reports = {r.estimate_id: r for r in evaluate_lemmas(separable, 0.5, Grid(nr=32, nz=32))}
        assert not reports["L3.8b"].skipped and not reports["L4.2"].skipped
        assert reports["L4.2"].rhs > 0

    def test_zero_case_gives_zero_ratios(self):
        case = get_case("zero")
        grid = Grid(nr=16, nz=16)
        solved = solve_case(case, grid)
        for estimate_id in ESTIMATES:
            report = evaluate_estimate(estimate_id, case, 0.5, grid, solved=solved)
            assert report.ratio == 0.0, f"{estimate_id}: ratio {report.ratio}"

    def test_identities(self, polynomial, grid, solved_poly):
        checks = evaluate_identities(polynomial, grid, solved=solved_poly)
        assert [c.name for c in checks] == ["zz", "r_over_r", "stream"]
        assert all(c.gap < 0.05 for c in checks)


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

class TestClassifyRatios:
    @pytest.mark.parametrize("ratios, verdict", [
        ([1.0, 1.01, 1.02], "stable"),
        ([1.0, 1.2, 1.5], "drifting"),
        ([1.0, 2.5, 2.6], "diverging"),
        ([1.0, 1.1, float("inf")], "diverging"),
        ([0.0, 0.0, 0.0], "stable"),
    ])
    def test_verdicts(self, ratios, verdict):
        assert classify_ratios(ratios) == verdict


class TestRefinementStudy:
    @pytest.mark.parametrize("meshes", [[16, 32], [16, 24, 48]])
    def test_mesh_sequence_checked(self, polynomial, meshes):
        with pytest.raises(PreconditionError):
            refinement_study(polynomial, "T1.1", meshes)

    @pytest.mark.slow
    def test_polynomial_theorem_1_is_stable(self, polynomial):
        table = refinement_study(polynomial, "T1.1", [16, 32, 64], mu=0.5)
        assert table.verdict == "stable", table.frame.to_string()
        assert table.observed_order is not None and table.observed_order >= 1.7
        assert list(table.frame.columns) == ["nr", "nz", "h", "lhs", "rhs", "ratio", "error", "order"]

    @pytest.mark.slow
    def test_broken_axis_closure_diverges(self, polynomial, broken_axis):
        table = refinement_study(polynomial, "T1.4", [16, 32, 64])
        assert table.verdict == "diverging", table.frame.to_string()


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

class TestRunSweep:
    def test_reports_and_identities(self, polynomial, separable):
        reports, identities = run_sweep([polynomial, separable], ["T1.1", "L2.3"],
                                        [0.3, 0.5], [16])
        assert len(reports) == 6
        assert set(identities) == {"polynomial@16x16", "separable@16x16"}
        assert [r.sort_key for r in reports] == sorted(r.sort_key for r in reports)
        assert {r.mu for r in reports if r.estimate_id == "L2.3"} == {0.0}

    def test_threads_do_not_change_results(self, polynomial, separable):
        args = ([polynomial, separable], ["L2.5a", "T1.1"], [0.5], [16, (16, 32)])
        serial, _ = run_sweep(*args, threads=1)
        threaded, _ = run_sweep(*args, threads=3)
        assert [r.to_row() for r in serial] == [r.to_row() for r in threaded]

    def test_unknown_id(self, polynomial):
        with pytest.raises(PreconditionError):
            run_sweep([polynomial], ["T1.1", "nope"], [0.5], [16])

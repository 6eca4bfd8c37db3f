"""
Estimate harness: both sides of every inequality for manufactured cases.

Each evaluator takes a solved case and returns an EstimateReport whose lhs
and rhs are squared norms assembled from weighted_norm, axis_trace and
derivative calls. Weighted terms carry the prefactor stated with each
estimate id (2μ(2−2μ) for T1.x, 2μ(1−μ) for L4.x) on top of one shared
evaluator for ∫ f² r^{2μ−2} dx.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.calculation.corrections import (
    build_eta,
    chi_quadrature,
    eta_theorem_form,
    lemma_form_gap,
    vanishing_order,
)
from src.calculation.fields_norms import (
    Field,
    Parity,
    Region,
    WeightedNormSpec,
    axis_trace,
    derivative,
    norm_squared,
)
from src.calculation.solver import (
    DEFAULT_TOL,
    MAX_ITER_FACTOR,
    IdentityCheck,
    SolveResult,
    assemble,
    assemble_psi,
    energy_identities,
    solve,
    solve_psi,
)
from src.geometry.domain_grid import (
    DEFAULT_C0,
    DEFAULT_R0,
    DEFAULT_RHO,
    CutoffK,
    CylinderDomain,
    Grid,
    build_cutoff,
    build_partition,
)
from src.utils.errors import PreconditionError
from src.verification.cases import ManufacturedCase
from src.verification.reports import ConvergenceTable, EstimateReport

logger = logging.getLogger(__name__)

STABLE_DRIFT = 0.05
DIVERGING_GROWTH = 2.0
ORDER_SLACK = 0.1

MU_DEPENDENT = ("T1.1", "T1.2", "L3.1", "L4.1", "L4.2", "E3.51u")


# ---------------------------------------------------------------------------
# Solved cases
# ---------------------------------------------------------------------------

@dataclass
class SolvedCase:
    """One solve of a manufactured case, shared by all estimates on that mesh."""
    case: ManufacturedCase
    domain: CylinderDomain
    cutoff: CutoffK
    result: SolveResult
    omega1: Field
    psi: Field

    @property
    def grid(self) -> Grid:
        return self.result.grid

    @property
    def psi1(self) -> Field:
        return self.result.psi1

    @property
    def residual(self) -> float:
        return self.result.residual_norm

    def max_error(self) -> float:
        """Max-norm distance from the analytic ψ₁."""
        exact = self.case.psi1_field(self.grid)
        return float(np.max(np.abs(self.psi1.values - exact.values)))


def default_domain(case: ManufacturedCase, r0: float = DEFAULT_R0) -> CylinderDomain:
    return CylinderDomain(R=case.R, a=case.a, r0=r0)


def solve_case(case: ManufacturedCase, grid: Grid, domain: Optional[CylinderDomain] = None,
               cutoff: Optional[CutoffK] = None, tol: float = DEFAULT_TOL,
               direct_psi: bool = False, max_iter_factor: int = MAX_ITER_FACTOR) -> SolvedCase:
    """Assemble and solve for ψ₁; ψ is r·ψ₁ unless `direct_psi` asks for the separate solve."""
    domain = domain or default_domain(case)
    cutoff = cutoff or build_cutoff(DEFAULT_C0, DEFAULT_RHO)
    omega1 = case.omega1_field(grid)
    result = solve(assemble(domain, grid), omega1, tol, max_iter_factor)
    psi = result.psi
    if direct_psi:
        omega = omega1.with_values(omega1.values * grid.r_nodes[:, None], parity=Parity.ODD)
        psi = solve_psi(assemble_psi(domain, grid), omega, tol, max_iter_factor).psi
    logger.debug("case %s on %dx%d solved (residual %.2e)",
                 case.name, grid.nr, grid.nz, result.residual_norm)
    return SolvedCase(case, domain, cutoff, result, omega1, psi)


# ---------------------------------------------------------------------------
# Shared terms
# ---------------------------------------------------------------------------

def _sq(field: Field, k: int = 0, mu: float = 0.0, region: Region = Region(),
        weighted: bool = True) -> float:
    return norm_squared(field, WeightedNormSpec(k=k, mu=mu, weighted=weighted), region)


def weighted_term(field: Field, mu: float) -> float:
    """∫ field² r^{2μ−2} dx, the singular term shared by T1.x and L4.x."""
    return _sq(field, 0, mu - 1.0)


def minus_trace(psi1: Field) -> Field:
    """ψ₁ − ψ₁(0), with the axis value taken per z."""
    values = psi1.values - axis_trace(psi1).values[None, :]
    return psi1.with_values(values, r_dirichlet=False, name="psi1_minus_trace")


def _report(estimate_id: str, solved: SolvedCase, mu: float, lhs: float, rhs: float,
            terms: Dict[str, float], prefactor: Optional[float] = None,
            reason: str = "") -> EstimateReport:
    grid = solved.grid
    report = EstimateReport(
        estimate_id=estimate_id, case=solved.case.name, lhs=lhs, rhs=rhs, mu=mu,
        nr=grid.nr, nz=grid.nz, residual=solved.residual, prefactor=prefactor,
        terms=terms, reason=reason,
    )
    if not math.isfinite(report.ratio):
        logger.warning("%s for %s on %dx%d has a non-finite ratio", estimate_id,
                       solved.case.name, grid.nr, grid.nz)
    return report


def _check_mu(mu: float, low_open: bool = True) -> None:
    ok = (0.0 < mu < 1.0) if low_open else (0.0 <= mu < 1.0)
    if not ok:
        interval = "(0, 1)" if low_open else "[0, 1)"
        raise PreconditionError(f"mu must lie in {interval}, got {mu}")


def _skip_inadmissible(estimate_id: str, solved: SolvedCase, mu: float) -> Optional[EstimateReport]:
    if solved.case.admissible:
        return None
    grid = solved.grid
    return EstimateReport.skip(estimate_id, solved.case.name, mu, grid.nr, grid.nz,
                               "ω₁ does not vanish on z = ±a, so ω₁,z data is not admissible")


# ---------------------------------------------------------------------------
# Theorems
# ---------------------------------------------------------------------------

def _theorem_1(solved: SolvedCase, mu: float) -> EstimateReport:
    _check_mu(mu)
    psi1 = solved.psi1
    prefactor = 2.0 * mu * (2.0 - 2.0 * mu)
    terms = {
        "slice_h2_mu": _sq(minus_trace(psi1), 2, mu, Region.radial()),
        "psi1_zr": _sq(derivative(psi1, 1, 1), 0, mu),
        "psi1_zz": _sq(derivative(psi1, 0, 2), 0, mu),
        "weighted_z": weighted_term(derivative(psi1, 0, 1), mu),
    }
    lhs = terms["slice_h2_mu"] + terms["psi1_zr"] + terms["psi1_zz"] + prefactor * terms["weighted_z"]
    return _report("T1.1", solved, mu, lhs, _sq(solved.omega1, 0, mu), terms, prefactor)


def _theorem_2(solved: SolvedCase, mu: float) -> EstimateReport:
    _check_mu(mu)
    psi1 = solved.psi1
    prefactor = 2.0 * mu * (2.0 - 2.0 * mu)
    terms = {
        "slice_h3_mu": _sq(minus_trace(psi1), 3, mu, Region.radial()),
        "psi1_zzz": _sq(derivative(psi1, 0, 3), 0, mu),
        "psi1_zzr": _sq(derivative(psi1, 1, 2), 0, mu),
        "weighted_zz": weighted_term(derivative(psi1, 0, 2), mu),
    }
    lhs = (terms["slice_h3_mu"] + terms["psi1_zzz"] + terms["psi1_zzr"]
           + prefactor * terms["weighted_zz"])
    return _report("T1.2", solved, mu, lhs, _sq(solved.omega1, 1, mu), terms, prefactor)


def _theorem_3(solved: SolvedCase, mu: float = 0.0) -> EstimateReport:
    psi1 = solved.psi1
    chi = chi_quadrature(psi1, solved.cutoff)
    remainder = minus_trace(psi1) - chi
    order = vanishing_order(remainder).min_slope if not remainder.is_zero() else math.inf
    terms = {
        "remainder_h2_0": _sq(remainder, 2, 0.0, Region.radial()),
        "psi1_zr": _sq(derivative(psi1, 1, 1)),
        "psi1_zz": _sq(derivative(psi1, 0, 2)),
        "vanishing_order": order,
    }
    reason = ""
    if order < 2.0 - ORDER_SLACK:
        reason = f"u - u(0) - chi vanishes to order {order:.2f} < 2 at the axis"
        logger.warning("T1.3 for %s: %s", solved.case.name, reason)
    lhs = terms["remainder_h2_0"] + terms["psi1_zr"] + terms["psi1_zz"]
    return _report("T1.3", solved, 0.0, lhs, _sq(solved.omega1), terms, reason=reason)


def _theorem_4(solved: SolvedCase, mu: float = 0.0) -> EstimateReport:
    psi1 = solved.psi1
    eta = build_eta(psi1, solved.omega1, solved.cutoff)
    remainder = minus_trace(psi1) - eta.values
    order = vanishing_order(remainder).min_slope if not remainder.is_zero() else math.inf
    theorem = eta_theorem_form(psi1, solved.omega1, solved.cutoff)
    scale = theorem.max_abs()
    terms = {
        "remainder_h3_0": _sq(remainder, 3, 0.0, Region.radial()),
        "psi1_zzz": _sq(derivative(psi1, 0, 3)),
        "psi1_zzr": _sq(derivative(psi1, 1, 2)),
        "psi1_zz": _sq(derivative(psi1, 0, 2)),
        "vanishing_order": order,
        "equation_gap": eta.equation_gap,
        "theorem_form_gap": (eta.values - theorem).max_abs() / scale if scale > 0 else 0.0,
        "lemma_form_gap": lemma_form_gap(psi1, solved.omega1, solved.cutoff),
    }
    reason = ""
    if order < 3.0 - ORDER_SLACK:
        reason = f"u - u(0) - eta vanishes to order {order:.2f} < 3 at the axis"
        logger.warning("T1.4 for %s: %s", solved.case.name, reason)
    lhs = terms["remainder_h3_0"] + terms["psi1_zzz"] + terms["psi1_zzr"] + terms["psi1_zz"]
    rhs = _sq(solved.omega1, 1, 0.0, weighted=False)
    return _report("T1.4", solved, 0.0, lhs, rhs, terms, reason=reason)


# ---------------------------------------------------------------------------
# Lemmas
# ---------------------------------------------------------------------------

def _lemma_2_3(solved: SolvedCase, mu: float) -> EstimateReport:
    psi1 = solved.psi1
    terms = {
        "psi1_h1": _sq(psi1, 1, weighted=False),
        "axis_trace": axis_trace(psi1).integral_of_square(),
    }
    return _report("L2.3", solved, 0.0, sum(terms.values()), _sq(solved.omega1), terms)


def _lemma_2_3_outer(solved: SolvedCase, mu: float) -> EstimateReport:
    outer = Region.outer(solved.domain.r0)
    terms = {"psi1_h2_outer": _sq(solved.psi1, 2, region=outer, weighted=False)}
    return _report("L2.3b", solved, 0.0, terms["psi1_h2_outer"], _sq(solved.omega1), terms)


def _omega(solved: SolvedCase) -> Field:
    grid = solved.grid
    return solved.omega1.with_values(solved.omega1.values * grid.r_nodes[:, None],
                                     parity=Parity.ODD, name="omega")


def _over_r2(field: Field) -> float:
    r = field.grid.r_nodes[:, None]
    return _sq(field.with_values(field.values / r, parity=field.parity.flipped()))


def _lemma_2_5a(solved: SolvedCase, mu: float) -> EstimateReport:
    psi = solved.psi
    terms = {"psi_h1": _sq(psi, 1, weighted=False), "psi_over_r": _over_r2(psi)}
    return _report("L2.5a", solved, 0.0, sum(terms.values()), _sq(_omega(solved)), terms)


def _lemma_2_5b(solved: SolvedCase, mu: float) -> EstimateReport:
    psi = solved.psi
    terms = {
        "psi_rz": _sq(derivative(psi, 1, 1)),
        "psi_zz": _sq(derivative(psi, 0, 2)),
        "psi_z_over_r": _over_r2(derivative(psi, 0, 1)),
    }
    return _report("L2.5b", solved, 0.0, sum(terms.values()), _sq(_omega(solved)), terms)


def _lemma_3_1(solved: SolvedCase, mu: float) -> EstimateReport:
    _check_mu(mu)
    psi1 = solved.psi1
    data = solved.omega1 + derivative(psi1, 0, 2)
    terms = {"slice_h2_mu": _sq(minus_trace(psi1), 2, mu, Region.radial())}
    return _report("L3.1", solved, mu, terms["slice_h2_mu"], _sq(data, 0, mu), terms)


def _lemma_3_8a(solved: SolvedCase, mu: float) -> EstimateReport:
    psi1 = solved.psi1
    terms = {
        "psi1_rr": _sq(derivative(psi1, 2, 0)),
        "psi1_rz": _sq(derivative(psi1, 1, 1)),
        "psi1_zz": _sq(derivative(psi1, 0, 2)),
        "psi1_r_over_r": _over_r2(derivative(psi1, 1, 0)),
    }
    return _report("L3.8a", solved, 0.0, sum(terms.values()), _sq(solved.omega1), terms)


def _lemma_3_8b(solved: SolvedCase, mu: float) -> EstimateReport:
    skipped = _skip_inadmissible("L3.8b", solved, 0.0)
    if skipped:
        return skipped
    psi1 = solved.psi1
    terms = {
        "psi1_zzr": _sq(derivative(psi1, 1, 2)),
        "psi1_zzz": _sq(derivative(psi1, 0, 3)),
    }
    rhs = _sq(solved.case.omega1_z_field(solved.grid))
    return _report("L3.8b", solved, 0.0, sum(terms.values()), rhs, terms)


def _lemma_4_1(solved: SolvedCase, mu: float) -> EstimateReport:
    _check_mu(mu, low_open=False)
    psi1 = solved.psi1
    prefactor = 2.0 * mu * (1.0 - mu)
    terms = {
        "psi1_zz": _sq(derivative(psi1, 0, 2), 0, mu),
        "psi1_zr": _sq(derivative(psi1, 1, 1), 0, mu),
        "weighted_z": weighted_term(derivative(psi1, 0, 1), mu) if prefactor else 0.0,
    }
    lhs = terms["psi1_zz"] + terms["psi1_zr"] + prefactor * terms["weighted_z"]
    return _report("L4.1", solved, mu, lhs, _sq(solved.omega1, 0, mu), terms, prefactor)


def _lemma_4_2(solved: SolvedCase, mu: float) -> EstimateReport:
    skipped = _skip_inadmissible("L4.2", solved, mu)
    if skipped:
        return skipped
    _check_mu(mu, low_open=False)
    psi1 = solved.psi1
    prefactor = 2.0 * mu * (1.0 - mu)
    terms = {
        "psi1_zzz": _sq(derivative(psi1, 0, 3), 0, mu),
        "psi1_rzz": _sq(derivative(psi1, 1, 2), 0, mu),
        "weighted_zz": weighted_term(derivative(psi1, 0, 2), mu) if prefactor else 0.0,
    }
    lhs = terms["psi1_zzz"] + terms["psi1_rzz"] + prefactor * terms["weighted_zz"]
    rhs = _sq(solved.case.omega1_z_field(solved.grid), 0, mu)
    return _report("L4.2", solved, mu, lhs, rhs, terms, prefactor)


def _outer_pair(solved: SolvedCase) -> Tuple[Field, Region]:
    pou = build_partition(solved.domain)
    _, w = pou.localize(solved.psi1)
    return w, Region.outer(solved.domain.r0)


def _outer_regularity(solved: SolvedCase, mu: float) -> EstimateReport:
    w, outer = _outer_pair(solved)
    terms = {"w_h2_outer": _sq(w, 2, region=outer, weighted=False)}
    rhs = _sq(solved.omega1, 0, region=outer, weighted=False)
    return _report("E3.50u", solved, 0.0, terms["w_h2_outer"], rhs, terms)


def _outer_regularity_k1(solved: SolvedCase, mu: float) -> EstimateReport:
    w, outer = _outer_pair(solved)
    terms = {"w_h3_outer": _sq(w, 3, region=outer, weighted=False)}
    rhs = _sq(solved.omega1, 1, region=outer, weighted=False)
    return _report("E3.50u.k1", solved, 0.0, terms["w_h3_outer"], rhs, terms)


def _outer_regularity_weighted(solved: SolvedCase, mu: float) -> EstimateReport:
    if mu < 0:
        raise PreconditionError(f"mu must be non-negative, got {mu}")
    w, outer = _outer_pair(solved)
    terms = {"w_h2_mu_outer": _sq(w, 2, mu, region=outer)}
    rhs = _sq(solved.omega1, 0, mu, region=outer)
    return _report("E3.51u", solved, mu, terms["w_h2_mu_outer"], rhs, terms)


Evaluator = Callable[[SolvedCase, float], EstimateReport]

THEOREMS: Dict[str, Evaluator] = {
    "T1.1": _theorem_1,
    "T1.2": _theorem_2,
    "T1.3": _theorem_3,
    "T1.4": _theorem_4,
}

LEMMAS: Dict[str, Evaluator] = {
    "L2.3": _lemma_2_3,
    "L2.3b": _lemma_2_3_outer,
    "L2.5a": _lemma_2_5a,
    "L2.5b": _lemma_2_5b,
    "L3.1": _lemma_3_1,
    "L3.8a": _lemma_3_8a,
    "L3.8b": _lemma_3_8b,
    "L4.1": _lemma_4_1,
    "L4.2": _lemma_4_2,
    "E3.50u": _outer_regularity,
    "E3.50u.k1": _outer_regularity_k1,
    "E3.51u": _outer_regularity_weighted,
}

ESTIMATES: Dict[str, Evaluator] = {**THEOREMS, **LEMMAS}


# ---------------------------------------------------------------------------
# Public evaluators
# ---------------------------------------------------------------------------

def _solved(case: ManufacturedCase, grid: Grid, solved: Optional[SolvedCase], **kwargs) -> SolvedCase:
    if solved is not None:
        solved.grid.require_same(grid)
        return solved
    return solve_case(case, grid, **kwargs)


def evaluate_theorem_1(case: ManufacturedCase, mu: float, grid: Grid,
                       solved: Optional[SolvedCase] = None, **kwargs) -> EstimateReport:
    """Slice H²_μ norm of ψ₁ − ψ₁(0) plus z-derivative terms against ‖ω₁‖²_{L₂,μ}."""
    _check_mu(mu)
    return _theorem_1(_solved(case, grid, solved, **kwargs), mu)


def evaluate_theorem_2(case: ManufacturedCase, mu: float, grid: Grid,
                       solved: Optional[SolvedCase] = None, **kwargs) -> EstimateReport:
    """H³_μ slice norm plus third z-derivative terms against ‖ω₁‖²_{H¹_μ}."""
    _check_mu(mu)
    return _theorem_2(_solved(case, grid, solved, **kwargs), mu)


def evaluate_theorem_3(case: ManufacturedCase, grid: Grid,
                       solved: Optional[SolvedCase] = None, **kwargs) -> EstimateReport:
    return _theorem_3(_solved(case, grid, solved, **kwargs))


def evaluate_theorem_4(case: ManufacturedCase, grid: Grid,
                       solved: Optional[SolvedCase] = None, **kwargs) -> EstimateReport:
    return _theorem_4(_solved(case, grid, solved, **kwargs))


def evaluate_lemmas(case: ManufacturedCase, mu: float, grid: Grid,
                    solved: Optional[SolvedCase] = None, **kwargs) -> List[EstimateReport]:
    """One report per lemma id; lemmas whose data assumption fails are skipped with a reason."""
    solved = _solved(case, grid, solved, **kwargs)
    reports = []
    for estimate_id, evaluator in LEMMAS.items():
        lemma_mu = mu if estimate_id in MU_DEPENDENT else 0.0
        reports.append(evaluator(solved, lemma_mu))
    return reports


def evaluate_estimate(estimate_id: str, case: ManufacturedCase, mu: float, grid: Grid,
                      solved: Optional[SolvedCase] = None, **kwargs) -> EstimateReport:
    if estimate_id not in ESTIMATES:
        raise PreconditionError(f"unknown estimate id '{estimate_id}'")
    solved = _solved(case, grid, solved, **kwargs)
    return ESTIMATES[estimate_id](solved, mu if estimate_id in MU_DEPENDENT else 0.0)


def evaluate_identities(case: ManufacturedCase, grid: Grid,
                        solved: Optional[SolvedCase] = None, **kwargs) -> List[IdentityCheck]:
    solved = _solved(case, grid, solved, **kwargs)
    return energy_identities(solved.result, solved.omega1, admissible=case.admissible)


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _normalize_meshes(meshes: Sequence) -> List[Tuple[int, int]]:
    out = [(m, m) if isinstance(m, int) else (int(m[0]), int(m[1])) for m in meshes]
    if len(out) < 3:
        raise PreconditionError("a refinement study needs at least 3 meshes")
    for (nr0, nz0), (nr1, nz1) in zip(out, out[1:]):
        if (nr1, nz1) != (2 * nr0, 2 * nz0):
            raise PreconditionError(f"meshes must be successive 2x refinements, got {out}")
    return out


def classify_ratios(ratios: Sequence[float]) -> str:
    """diverging if any step grows ≥ 2×, stable if the last step drifts ≤ 5 %, else drifting."""
    ratios = list(ratios)
    for prev, nxt in zip(ratios, ratios[1:]):
        if prev > 0 and nxt / prev >= DIVERGING_GROWTH:
            return "diverging"
        if not math.isfinite(nxt):
            return "diverging"
    prev, last = ratios[-2], ratios[-1]
    if prev == 0.0:
        return "stable" if last == 0.0 else "drifting"
    return "stable" if abs(last - prev) / abs(prev) <= STABLE_DRIFT else "drifting"


def refinement_study(case: ManufacturedCase, estimate_id: str, meshes: Sequence,
                     mu: float = 0.5, **kwargs) -> ConvergenceTable:
    """
    Ratio of one estimate on successively 2× refined meshes, with the
    observed order of the max-norm solution error.
    """
    rows = []
    for nr, nz in _normalize_meshes(meshes):
        grid = Grid(nr=nr, nz=nz, R=case.R, a=case.a)
        solved = solve_case(case, grid, **kwargs)
        report = evaluate_estimate(estimate_id, case, mu, grid, solved=solved)
        rows.append({
            "nr": nr, "nz": nz, "h": grid.hr,
            "lhs": report.lhs, "rhs": report.rhs, "ratio": report.ratio,
            "error": solved.max_error(),
        })
    frame = pd.DataFrame(rows)
    errors = frame["error"].to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log2(errors[:-1] / errors[1:])
    frame["order"] = np.concatenate([[np.nan], np.where(np.isfinite(orders), orders, np.nan)])
    verdict = classify_ratios(frame["ratio"].tolist())
    last_order = frame["order"].iloc[-1]
    observed = float(last_order) if np.isfinite(last_order) else None
    logger.info("refinement %s/%s: verdict %s, order %s", case.name, estimate_id, verdict, observed)
    return ConvergenceTable(case.name, estimate_id, frame, verdict, observed)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _job(case: ManufacturedCase, grid: Grid, estimate_ids: Sequence[str],
         mus: Sequence[float], kwargs: Dict) -> Tuple[List[EstimateReport], List[IdentityCheck]]:
    solved = solve_case(case, grid, **kwargs)
    reports = []
    for estimate_id in estimate_ids:
        targets = mus if estimate_id in MU_DEPENDENT else [0.0]
        for mu in targets:
            reports.append(evaluate_estimate(estimate_id, case, mu, grid, solved=solved))
    identities = evaluate_identities(case, grid, solved=solved)
    return reports, identities


def run_sweep(cases: Iterable[ManufacturedCase], estimate_ids: Sequence[str],
              mus: Sequence[float], meshes: Sequence, threads: int = 1,
              **kwargs) -> Tuple[List[EstimateReport], Dict[str, List[IdentityCheck]]]:
    """
    Evaluate every (case, mesh) job, solving once per job.

    Returns the reports sorted by (case, estimate_id, nr, nz, mu) and the
    identity checks keyed by "case@nrxnz".
    """
    unknown = [eid for eid in estimate_ids if eid not in ESTIMATES]
    if unknown:
        raise PreconditionError(f"unknown estimate ids: {', '.join(unknown)}")
    jobs = []
    for case in cases:
        for mesh in meshes:
            nr, nz = (mesh, mesh) if isinstance(mesh, int) else mesh
            jobs.append((case, Grid(nr=nr, nz=nz, R=case.R, a=case.a)))

    if threads <= 1:
        results = [_job(case, grid, estimate_ids, mus, kwargs) for case, grid in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_job, case, grid, estimate_ids, mus, kwargs) for case, grid in jobs]
            results = [future.result() for future in futures]

    reports: List[EstimateReport] = []
    identities: Dict[str, List[IdentityCheck]] = {}
    for (case, grid), (job_reports, job_identities) in zip(jobs, results):
        reports.extend(job_reports)
        identities[f"{case.name}@{grid.nr}x{grid.nz}"] = job_identities
    reports.sort(key=lambda rep: rep.sort_key)
    return reports, identities

"""
streamfn command line.

    python -m src.cli solve        solve one manufactured case, write fields
    python -m src.cli verify       estimate sweep over cases, ids, μ and meshes
    python -m src.cli convergence  refinement tables per (case, estimate)
    python -m src.cli mellin       model problem on the half-line in log variables
    python -m src.cli hardy        ratio sweep for the weighted Hardy inequality

Exit codes: 0 ok, 1 drifting ratios or unexpected error, 2 configuration or
precondition error, 3 solver failure, 4 estimate divergence, 5 pole guard.
"""

import argparse
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.calculation.fields_norms import HardyProfile, Region, hardy_check
from src.calculation.mellin import (
    MellinProblem,
    band_difference,
    contour_table,
    guard_height,
    k1_band_difference,
    model_residual,
    parseval_check,
    residue_constant,
    solve_model,
)
from src.calculation.solver import l2_norm, reconstruct_velocity
from src.cli.config import RunConfig, cli_overrides, ensure_out_dir, load_config
from src.geometry.domain_grid import Grid
from src.utils.errors import (
    EXIT_OK,
    ConfigError,
    DivergenceError,
    PreconditionError,
    StreamFnError,
    exit_code_for,
)
from src.utils.logging_setup import configure_logging
from src.verification import estimates
from src.verification.cases import CASE_NAMES, get_case
from src.verification.reports import (
    EstimateReport,
    constants_by_estimate,
    reports_frame,
    write_convergence,
    write_field_csv,
    write_json,
    write_plot_data,
    write_reports,
)

logger = logging.getLogger(__name__)

EXIT_DRIFTING = 1
BANNER = "=" * 60


def _banner(title: str) -> None:
    print("\n" + BANNER)
    print(title)
    print(BANNER)


def _out(config: RunConfig, name: str) -> str:
    return os.path.join(config.out_dir, name)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(config: RunConfig, case_name: str = "polynomial") -> int:
    """Write ψ₁, ψ, v_r, v_z as r,z,value CSVs plus a JSON sidecar."""
    case = get_case(case_name, config.domain.R, config.domain.a)
    grid = Grid(nr=config.grid.nr, nz=config.grid.nz, R=config.domain.R, a=config.domain.a)
    solved = estimates.solve_case(case, grid, **config.harness_kwargs())
    v_r, v_z = reconstruct_velocity(solved.psi, solved.psi1)

    written = [
        write_field_csv(solved.psi1, _out(config, "psi1.csv")),
        write_field_csv(solved.psi, _out(config, "psi.csv")),
        write_field_csv(v_r, _out(config, "v_r.csv")),
        write_field_csv(v_z, _out(config, "v_z.csv")),
    ]
    norms = {
        "psi1_l2": l2_norm(solved.psi1),
        "omega1_l2": l2_norm(solved.omega1),
        "psi1_inner_l2": l2_norm(solved.psi1, Region.inner(config.domain.r0)),
        "max_error": solved.max_error(),
    }
    sidecar = {
        "case": case.to_dict(),
        "grid": grid.to_dict(),
        "domain": solved.domain.to_dict(),
        "solve": solved.result.to_dict(),
        "direct_psi": config.solver.direct_psi,
        "norms": norms,
        "files": [os.path.basename(path) for path in written],
    }
    write_json(sidecar, _out(config, "solve.json"))

    _banner(f"SOLVE {case.name} on {grid.nr}x{grid.nz}")
    print(f"  residual:   {solved.residual:.3e} ({solved.result.iterations} iterations)")
    for key, value in norms.items():
        print(f"  {key}: {value:.6e}")
    print(f"  wrote {len(written)} field files to {config.out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def verdict_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Refinement verdict per (case, estimate_id, mu) over the meshes of a sweep."""
    frame = frame[~frame["skipped"]]
    rows = []
    for (case, estimate_id, mu), group in frame.groupby(["case", "estimate_id", "mu"], sort=True):
        group = group.assign(cells=group["nr"] * group["nz"]).sort_values("cells")
        ratios = group["ratio"].tolist()
        rows.append({
            "case": case,
            "estimate_id": estimate_id,
            "mu": mu,
            "finest_ratio": ratios[-1],
            "verdict": estimates.classify_ratios(ratios),
        })
    return pd.DataFrame(rows, columns=["case", "estimate_id", "mu", "finest_ratio", "verdict"])


def _verdict_exit(verdicts: pd.Series, unmet: int = 0) -> int:
    if (verdicts == "diverging").any():
        return DivergenceError.exit_code
    if unmet:
        return PreconditionError.exit_code
    if (verdicts == "drifting").any():
        return EXIT_DRIFTING
    return EXIT_OK


def unmet_preconditions(reports: List[EstimateReport]) -> List[EstimateReport]:
    """Reports that were skipped or carry a reason: the estimate's hypotheses did not hold."""
    return [rep for rep in reports if rep.skipped or rep.reason]


def cmd_verify(config: RunConfig) -> int:
    """
    Exit 0 only when every verdict is stable and every report met its
    preconditions; 4 when any verdict diverges, 2 when some report was
    skipped or flagged, 1 when ratios drift.
    """
    meshes = config.sweep.mesh_pairs()
    if len(meshes) < 2:
        raise ConfigError("verify needs at least two meshes to judge refinement behaviour")
    reports, identities = estimates.run_sweep(
        config.cases(), config.sweep.estimates, config.sweep.mus, meshes,
        threads=config.threads, **config.harness_kwargs(),
    )
    write_reports(reports, _out(config, "estimates.csv"), _out(config, "estimates.json"))
    write_json({key: [check.to_dict() for check in checks] for key, checks in identities.items()},
               _out(config, "identities.json"))

    verdicts = verdict_table(reports_frame(reports))
    verdicts.to_csv(_out(config, "verdicts.csv"), index=False)
    constants = constants_by_estimate(reports)
    constants.to_csv(_out(config, "constants.csv"), index=False)

    _banner("ESTIMATE VERDICTS")
    for row in verdicts.itertuples(index=False):
        print(f"  {row.case:<15} {row.estimate_id:<10} mu={row.mu:.2f}  "
              f"ratio={row.finest_ratio:.4e}  {row.verdict}")
    unmet = unmet_preconditions(reports)
    if unmet:
        print(f"\n  {len(unmet)} evaluations did not meet their preconditions:")
        for rep in unmet:
            status = "skipped" if rep.skipped else "flagged"
            print(f"    {rep.case:<15} {rep.estimate_id:<10} {rep.nr}x{rep.nz} {status}: {rep.reason}")
    print("\nCONSTANTS (finest mesh, max over cases):")
    for row in constants.itertuples(index=False):
        print(f"  {row.estimate_id:<10} C = {row.constant:.4e} ({row.cases} cases)")
    return _verdict_exit(verdicts["verdict"], len(unmet))


# ---------------------------------------------------------------------------
# convergence
# ---------------------------------------------------------------------------

def _study_mu(config: RunConfig) -> float:
    mus = sorted(config.sweep.mus)
    return mus[len(mus) // 2]


def cmd_convergence(config: RunConfig) -> int:
    meshes = config.sweep.mesh_pairs()
    mu = _study_mu(config)
    kwargs = config.harness_kwargs()
    verdicts = []
    _banner(f"REFINEMENT STUDY (mu={mu:.2f} where the estimate is weighted)")
    for case in config.cases():
        for estimate_id in config.sweep.estimates:
            table = estimates.refinement_study(case, estimate_id, meshes, mu=mu, **kwargs)
            write_convergence(table, config.out_dir)
            verdicts.append(table.verdict)
            order = f"{table.observed_order:.2f}" if table.observed_order is not None else "n/a"
            print(f"  {case.name:<15} {estimate_id:<10} {table.verdict:<10} order={order}")
    return _verdict_exit(pd.Series(verdicts, dtype=object))


# ---------------------------------------------------------------------------
# mellin
# ---------------------------------------------------------------------------

def gaussian_gprime(center: float, width: float) -> Callable[[np.ndarray], np.ndarray]:
    """exp(-((τ - center)/width)²); width 1 at center 6 stays below 1e-12 outside [0, 12]."""
    def gprime(tau: np.ndarray) -> np.ndarray:
        return np.exp(-(((tau - center) / width) ** 2))

    return gprime


def cmd_mellin(config: RunConfig) -> int:
    section = config.mellin
    for h in (section.h, section.h1, section.h2, section.hbar1, section.hbar2):
        guard_height(h)
    gprime = gaussian_gprime(section.gaussian_center, section.gaussian_width)
    problem = MellinProblem.from_gprime(gprime, section.h)
    solution = solve_model(problem)
    residual = model_residual(solution)
    tau_side, contour_side, parseval_gap = parseval_check(problem, 0)

    sigmas = np.linspace(section.sigma_min, section.sigma_max, section.points)
    for label, h in (("h", section.h), ("h1", section.h1), ("h2", section.h2)):
        contour_table(h, sigmas).to_csv(_out(config, f"contour_{label}.csv"), index=False)
    solution.to_frame().to_csv(_out(config, "mellin_solution.csv"), index=False)
    write_plot_data(solution.tau, solution.u, _out(config, "mellin_solution.dat"),
                    header=f"tau u (h={section.h})")

    band = band_difference(gprime, section.h1, section.h2)
    band_k1 = k1_band_difference(gprime, section.hbar1, section.hbar2)
    write_plot_data(band.tau, band.difference, _out(config, "band_difference.dat"),
                    header=f"tau u1-u2 (h1={section.h1}, h2={section.h2})")
    report = {
        "problem": problem.to_dict(),
        "model_residual": residual,
        "parseval": {"tau_side": tau_side, "contour_side": contour_side, "gap": parseval_gap},
        "residue": residue_constant(problem),
        "band": band.to_dict(),
        "band_k1": band_k1.to_dict(),
    }
    write_json(report, _out(config, "mellin_c0.json"))

    _banner(f"MELLIN MODEL PROBLEM (h={section.h})")
    print(f"  ODE residual (inner 80%): {residual:.3e}")
    print(f"  Parseval gap:             {parseval_gap:.3e}")
    print(f"  c0 from u1 - u2:          {band.c0_estimate:.10f}")
    print(f"  u1 near the axis:         {band.u1_at_zero:.10f}")
    print(f"  residue formula:          {band.residue:.10f}")
    print(f"  constancy stddev:         {band.constancy_stddev:.3e}")
    print(f"  k=1 axis slope:           {band_k1.axis_slope:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# hardy
# ---------------------------------------------------------------------------

def power_law_ratio(alpha: float, beta: float) -> float:
    """Closed-form ratio for f = x^β; 1 when both sides diverge."""
    if 2.0 * beta + alpha - 1.0 <= 0:
        return 1.0
    return (1.0 - alpha) ** 2 / (4.0 * beta ** 2)


def cmd_hardy(config: RunConfig) -> int:
    alphas, betas = config.hardy.alphas, config.hardy.betas
    if not alphas or not betas:
        raise ConfigError("hardy sweep needs at least one alpha and one beta")
    rows: List[Dict] = []
    _banner("HARDY RATIO SWEEP (f = x^beta on (0, 1))")
    for alpha in alphas:
        if alpha >= 1:
            print(f"  alpha={alpha}: skipped, the inequality needs alpha < 1")
            logger.warning("hardy sweep: alpha=%s skipped", alpha)
            continue
        ratios = []
        for beta in betas:
            profile = HardyProfile.from_function(
                lambda x, b=beta: x ** b, lambda x, b=beta: b * x ** (b - 1.0)
            )
            result = hardy_check(profile, alpha)
            closed = power_law_ratio(alpha, beta)
            rows.append({"alpha": alpha, "beta": beta, "lhs": result.lhs, "rhs": result.rhs,
                         "ratio": result.ratio, "closed_form": closed})
            ratios.append(result.ratio)
            print(f"  alpha={alpha:+.2f} beta={beta:.3f}  ratio={result.ratio:.6f}  "
                  f"closed form={closed:.6f}")
        write_plot_data(betas, ratios, _out(config, f"hardy_alpha_{alpha:+.2f}.dat"),
                        header=f"beta ratio (alpha={alpha})")
    if not rows:
        raise ConfigError("hardy sweep has no admissible alpha (< 1)")
    pd.DataFrame(rows).to_csv(_out(config, "hardy.csv"), index=False)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

COMMANDS: Dict[str, Callable[..., int]] = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
    "mellin": cmd_mellin,
    "hardy": cmd_hardy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML or INI run configuration")
    common.add_argument("--out", default=None, help="Output directory")
    common.add_argument("--threads", type=int, default=None, help="Worker threads for sweeps")
    common.add_argument("--tol", type=float, default=None, help="Relative CG residual tolerance")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ...")

    parser = argparse.ArgumentParser(
        prog="streamfn",
        description="Axisymmetric stream-function solver and estimate verification harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    solve_parser = sub.add_parser("solve", parents=[common], help="Solve one manufactured case")
    solve_parser.add_argument("--case", default="polynomial", choices=CASE_NAMES)
    sub.add_parser("verify", parents=[common], help="Run the estimate sweep")
    sub.add_parser("convergence", parents=[common], help="Refinement tables")
    sub.add_parser("mellin", parents=[common], help="Model problem demos and c0 report")
    sub.add_parser("hardy", parents=[common], help="Hardy ratio sweep")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config, cli_overrides(args.out, args.threads, args.tol))
        ensure_out_dir(config)
        if args.command == "solve":
            return cmd_solve(config, args.case)
        return COMMANDS[args.command](config)
    except StreamFnError as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())

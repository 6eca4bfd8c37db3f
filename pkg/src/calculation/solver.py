"""
Axisymmetric stream-function solver.

Discretizes −ψ₁,rr − (3/r)ψ₁,r − ψ₁,zz = ω₁ on the cell-centered grid with
the conservative radial flux −r⁻³(r³u,r),r. Each radial row is normalized
by the exact cell moment V_i, so the axis face (r = 0) carries no flux and
the system W·A (W = V_i·hr·hz) is symmetric positive definite.

Also provides the direct solve of −r⁻¹(rψ,r),r + ψ/r² − ψ,zz = ω, velocity
reconstruction, the vorticity consistency check, axis asymptotics and the
discrete energy identities.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from src.calculation.fields_norms import (
    Field,
    Parity,
    Region,
    TraceCurve,
    WeightedNormSpec,
    axis_trace,
    derivative,
    outer_trace,
    weighted_norm,
)
from src.geometry.domain_grid import CylinderDomain, Grid
from src.utils.errors import PreconditionError, SolverError

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_TOL = 1e-6
MAX_ITER_FACTOR = 50
AXIS_FIT_CELLS = 6
COMPATIBILITY_TOL = 1e-2
INTERIOR_FRACTION = 0.25

# Extrapolation weights to a face from the three nearest cell centers.
_FACE_WEIGHTS = np.array([15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0])


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """
    Sparse operator over grid unknowns k = i·nz + j.

    `matrix` is A itself; `weights` is the diagonal W that makes W·A
    symmetric (the discrete r³ dr dz, or r dr dz for the ψ operator).
    """
    matrix: sp.csr_matrix
    weights: np.ndarray
    grid: Grid
    domain: CylinderDomain
    kind: str = "psi1"
    z_boundary: str = "dirichlet"

    @property
    def size(self) -> int:
        return self.grid.nr * self.grid.nz

    @property
    def unknown_parity(self) -> Parity:
        return Parity.ODD if self.kind == "psi" else Parity.EVEN

    def apply(self, field: Field) -> Field:
        self.grid.require_same(field.grid)
        values = (self.matrix @ field.values.ravel()).reshape(self.grid.shape)
        return field.with_values(values, r_dirichlet=False, z_dirichlet=False, name="")

    def symmetric_matrix(self) -> sp.csr_matrix:
        return sp.diags(self.weights).dot(self.matrix).tocsr()

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(u.ravel() * v.ravel() * self.weights))

    def symmetry_defect(self, u: np.ndarray, v: np.ndarray) -> float:
        """|⟨Au, v⟩ − ⟨u, Av⟩| relative to the larger of the two."""
        au = self.matrix @ u.ravel()
        av = self.matrix @ v.ravel()
        left, right = self.inner(au, v), self.inner(u, av)
        scale = max(abs(left), abs(right))
        return abs(left - right) / scale if scale > 0 else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "z_boundary": self.z_boundary,
            "unknowns": self.size,
            "nonzeros": int(self.matrix.nnz),
            "grid": self.grid.to_dict(),
            "domain": self.domain.to_dict(),
        }


def _build(grid: Grid, east: np.ndarray, west: np.ndarray, reaction: np.ndarray,
           z_boundary: str) -> sp.csr_matrix:
    """
    Assemble radial flux coefficients (per radial cell) and the z second
    difference into one CSR matrix. The last radial cell eliminates the zero
    value on r = R at distance hr/2.
    """
    if z_boundary not in ("dirichlet", "neumann"):
        raise PreconditionError(f"z_boundary must be 'dirichlet' or 'neumann', got {z_boundary}")
    nr, nz = grid.shape
    idx = np.arange(nr * nz).reshape(nr, nz)
    inv_hz2 = 1.0 / grid.hz ** 2

    diag = np.zeros((nr, nz))
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []

    east_full = east.copy()
    east_full[-1] = 0.0
    diag += (east_full + west + reaction)[:, None]
    diag[-1, :] += 2.0 * east[-1]

    # radial neighbours
    for offset, coeff in ((1, east_full[:-1]), (-1, west[1:])):
        src = idx[:-1] if offset == 1 else idx[1:]
        dst = idx[1:] if offset == 1 else idx[:-1]
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.repeat(-coeff, nz))

    # axial neighbours
    diag += 2.0 * inv_hz2
    end = 1.0 if z_boundary == "dirichlet" else -1.0
    diag[:, 0] += end * inv_hz2
    diag[:, -1] += end * inv_hz2
    for src, dst in ((idx[:, :-1], idx[:, 1:]), (idx[:, 1:], idx[:, :-1])):
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(np.full(src.size, -inv_hz2))

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    n = nr * nz
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()


def assemble(domain: CylinderDomain, grid: Grid, z_boundary: str = "dirichlet") -> DiscreteOperator:
    """
    Operator for −ψ₁,rr − (3/r)ψ₁,r − ψ₁,zz with zero data on r = R.

    Args:
        domain: Cylinder the grid discretizes
        grid: Cell-centered grid
        z_boundary: "dirichlet" (ψ₁ = 0 on z = ±a) or "neumann" (u,z = 0,
            used for the differentiated problem)
    """
    if grid.R != domain.R or grid.a != domain.a:
        raise PreconditionError("grid extents do not match the domain")
    faces = grid.r_faces
    moments = grid.cell_volumes_r3()
    scale = grid.hr ** 2 * moments
    east = faces[1:] ** 3 / scale
    west = faces[:-1] ** 3 / scale
    matrix = _build(grid, east, west, np.zeros(grid.nr), z_boundary)
    weights = np.repeat(moments * grid.hr * grid.hz, grid.nz)
    logger.debug("assembled psi1 operator %dx%d (%s in z)", grid.nr, grid.nz, z_boundary)
    return DiscreteOperator(matrix, weights, grid, domain, "psi1", z_boundary)


def assemble_psi(domain: CylinderDomain, grid: Grid) -> DiscreteOperator:
    """Operator for −r⁻¹(rψ,r),r + ψ/r² − ψ,zz (odd unknown), normalized by r_i."""
    if grid.R != domain.R or grid.a != domain.a:
        raise PreconditionError("grid extents do not match the domain")
    faces = grid.r_faces
    r = grid.r_nodes
    scale = grid.hr ** 2 * r
    matrix = _build(grid, faces[1:] / scale, faces[:-1] / scale, 1.0 / r ** 2, "dirichlet")
    weights = np.repeat(r * grid.hr * grid.hz, grid.nz)
    return DiscreteOperator(matrix, weights, grid, domain, "psi", "dirichlet")


def radial_flux_part(field: Field) -> np.ndarray:
    """
    r⁻³(r³u,r),r exactly as the ψ₁ operator discretizes it: zero flux
    through r = 0, ghost −u beyond r = R, rows divided by hr²·V_i.
    """
    grid = field.grid
    u = field.values
    faces = grid.r_faces[:, None]
    flux = np.zeros((grid.nr + 1, grid.nz))
    flux[1:-1] = faces[1:-1] ** 3 * np.diff(u, axis=0)
    flux[-1] = -2.0 * faces[-1] ** 3 * u[-1]
    return np.diff(flux, axis=0) / (grid.hr ** 2 * grid.cell_volumes_r3()[:, None])


def axial_second_difference(field: Field, z_boundary: str = "dirichlet") -> np.ndarray:
    """u,zz with the operator's closure: ghost −u (dirichlet) or +u (neumann) beyond z = ±a."""
    if z_boundary not in ("dirichlet", "neumann"):
        raise PreconditionError(f"z_boundary must be 'dirichlet' or 'neumann', got {z_boundary}")
    sign = -1.0 if z_boundary == "dirichlet" else 1.0
    v = field.values
    padded = np.concatenate([sign * v[:, :1], v, sign * v[:, -1:]], axis=1)
    return (padded[:, 2:] - 2.0 * padded[:, 1:-1] + padded[:, :-2]) / field.grid.hz ** 2


# ---------------------------------------------------------------------------
# Solves
# ---------------------------------------------------------------------------

@dataclass
class SolveResult:
    psi1: Field
    psi: Field
    residual_norm: float
    iterations: int
    tol: float
    operator_kind: str = "psi1"

    @property
    def grid(self) -> Grid:
        return self.psi1.grid

    def to_dict(self) -> dict:
        return {
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "tol": self.tol,
            "operator": self.operator_kind,
            "grid": self.grid.to_dict(),
        }


def _check_tol(tol: float) -> None:
    if not 0 < tol <= MAX_TOL:
        raise PreconditionError(f"tol must be in (0, {MAX_TOL}], got {tol}")


def _cg(op: DiscreteOperator, rhs: np.ndarray, tol: float,
        max_iter_factor: int = MAX_ITER_FACTOR) -> Tuple[np.ndarray, float, int]:
    """Jacobi-preconditioned CG on W·A x = W·rhs."""
    matrix = op.symmetric_matrix()
    b = op.weights * rhs.ravel()
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(op.size), 0.0, 0

    inv_diag = 1.0 / matrix.diagonal()
    precond = LinearOperator(matrix.shape, matvec=lambda x: inv_diag * x, dtype=float)
    cap = max_iter_factor * (op.grid.nr + op.grid.nz)
    count = {"n": 0}

    def _tick(_xk):
        count["n"] += 1

    x, info = cg(matrix, b, rtol=tol, atol=0.0, maxiter=cap, M=precond, callback=_tick)
    residual = float(np.linalg.norm(b - matrix @ x) / b_norm)
    if info != 0 or not np.isfinite(residual):
        raise SolverError(
            f"CG did not reach tol={tol:.1e} within {cap} iterations "
            f"(residual {residual:.2e}); check the assembly"
        )
    return x, residual, count["n"]


def solve(op: DiscreteOperator, omega1: Field, tol: float = DEFAULT_TOL,
          max_iter_factor: int = MAX_ITER_FACTOR) -> SolveResult:
    """
    Solve A ψ₁ = ω₁ and set ψ = r·ψ₁.

    Raises:
        PreconditionError: tol outside (0, 1e−6] or grid mismatch
        SolverError: CG did not converge within 50·(nr + nz) iterations
    """
    if op.kind != "psi1":
        raise PreconditionError("solve expects the psi1 operator; use solve_psi for psi")
    _check_tol(tol)
    op.grid.require_same(omega1.grid)
    x, residual, iterations = _cg(op, omega1.values, tol, max_iter_factor)
    grid = op.grid
    z_dirichlet = op.z_boundary == "dirichlet"
    psi1 = Field(grid, x.reshape(grid.shape), Parity.EVEN, True, z_dirichlet, "psi1")
    psi = Field(grid, psi1.values * grid.r_nodes[:, None], Parity.ODD, True, z_dirichlet, "psi")
    logger.info("solved %dx%d: %d iterations, residual %.2e",
                grid.nr, grid.nz, iterations, residual)
    return SolveResult(psi1, psi, residual, iterations, tol, op.kind)


def solve_psi(op: DiscreteOperator, omega: Field, tol: float = DEFAULT_TOL,
              max_iter_factor: int = MAX_ITER_FACTOR) -> SolveResult:
    """Direct solve for ψ with vorticity ω (odd); ψ₁ is recovered as ψ/r."""
    if op.kind != "psi":
        raise PreconditionError("solve_psi expects the operator from assemble_psi")
    _check_tol(tol)
    op.grid.require_same(omega.grid)
    x, residual, iterations = _cg(op, omega.values, tol, max_iter_factor)
    grid = op.grid
    psi = Field(grid, x.reshape(grid.shape), Parity.ODD, True, True, "psi")
    psi1 = Field(grid, psi.values / grid.r_nodes[:, None], Parity.EVEN, True, True, "psi1")
    logger.info("solved psi directly %dx%d: %d iterations, residual %.2e",
                grid.nr, grid.nz, iterations, residual)
    return SolveResult(psi1, psi, residual, iterations, tol, op.kind)


def z_face_trace(field: Field) -> np.ndarray:
    """Values extrapolated to z = −a and z = +a, shape (2, nr)."""
    v = field.values
    low = _FACE_WEIGHTS @ v[:, :3].T
    high = _FACE_WEIGHTS @ v[:, ::-1][:, :3].T
    return np.vstack([low, high])


def check_compatibility(omega1: Field, rel_tol: float = COMPATIBILITY_TOL) -> float:
    """
    Largest |ω₁| on z = ±a relative to max|ω₁|.

    Raises:
        PreconditionError: the trace exceeds rel_tol
    """
    scale = omega1.max_abs()
    if scale == 0.0:
        return 0.0
    gap = float(np.max(np.abs(z_face_trace(omega1)))) / scale
    if gap > rel_tol:
        raise PreconditionError(
            f"forcing does not vanish on z = ±a (relative trace {gap:.2e} > {rel_tol:.0e})"
        )
    return gap


def solve_differentiated(op: DiscreteOperator, omega1: Field, tol: float = DEFAULT_TOL,
                         route: str = "differenced") -> Field:
    """
    ψ₁,z by one of two routes.

    "differenced" differentiates the solution of the ψ₁ problem. "direct"
    solves the differentiated problem with ψ₁,z = 0 on r = R and ψ₁,zz = 0 on
    z = ±a, which requires ω₁ = 0 on z = ±a.
    """
    if route == "differenced":
        result = solve(op, omega1, tol)
        psi1_z = derivative(result.psi1, 0, 1)
        return psi1_z.with_values(psi1_z.values, name="psi1_z")
    if route != "direct":
        raise PreconditionError(f"route must be 'differenced' or 'direct', got {route}")

    check_compatibility(omega1)
    forcing = derivative(omega1.with_values(omega1.values, z_dirichlet=True), 0, 1)
    neumann = assemble(op.domain, op.grid, z_boundary="neumann")
    result = solve(neumann, forcing, tol)
    return result.psi1.with_values(result.psi1.values, name="psi1_z")


# ---------------------------------------------------------------------------
# Velocity and vorticity
# ---------------------------------------------------------------------------

def _times_r(field: Field) -> Field:
    r = field.grid.r_nodes[:, None]
    return field.with_values(field.values * r, parity=field.parity.flipped(), name="")


def reconstruct_velocity(psi: Field, psi1: Optional[Field] = None) -> Tuple[Field, Field]:
    """
    v_r = −ψ,z and v_z = ψ,r + ψ/r, with ψ/r taken from ψ₁ when given.
    """
    if psi.parity is not Parity.ODD:
        raise PreconditionError("psi must have odd axis parity")
    if psi1 is None:
        psi1 = psi.with_values(psi.values / psi.grid.r_nodes[:, None], parity=Parity.EVEN)
    else:
        psi.grid.require_same(psi1.grid)
    v_r = -derivative(psi, 0, 1)
    v_z = derivative(psi, 1, 0) + psi1
    return v_r.with_values(v_r.values, name="v_r"), v_z.with_values(v_z.values, name="v_z")


def divergence(v_r: Field, v_z: Field) -> Field:
    """(r v_r),r + (r v_z),z as a grid field."""
    return derivative(_times_r(v_r), 1, 0) + derivative(_times_r(v_z), 0, 1)


def _interior(grid: Grid, margin: Optional[float]) -> Region:
    if margin is None:
        margin = INTERIOR_FRACTION * min(grid.R, grid.a)
    if margin == 0.0:
        return Region.full()
    return Region.interior(grid.R, grid.a, margin)


def divergence_defect(v_r: Field, v_z: Field, margin: Optional[float] = None) -> float:
    """L₂ norm of the discrete divergence on the interior region (margin=0: all of Ω)."""
    v_r.grid.require_same(v_z.grid)
    return l2_norm(divergence(v_r, v_z), _interior(v_r.grid, margin))


def vorticity_consistency(v_r: Field, v_z: Field, omega: Field,
                          margin: Optional[float] = None) -> float:
    """
    ‖v_r,z − v_z,r − ω‖ / ‖ω‖ in L₂ over the cells at least `margin` from
    the axis, r = R and z = ±a (default a quarter of min(R, a); 0 measures
    all of Ω).

    The discrete ψ₁ carries an O(1) stencil defect in the wall cells, which
    alone limits the full-domain measure to order ½.

    Raises:
        PreconditionError: ω ≡ 0 while the curl is not, or the margin
            leaves no interior
    """
    v_r.grid.require_same(v_z.grid)
    v_r.grid.require_same(omega.grid)
    region = _interior(v_r.grid, margin)
    curl = derivative(v_r, 0, 1) - derivative(v_z, 1, 0)
    gap = curl.with_values(curl.values - omega.values)
    numerator = l2_norm(gap, region)
    denominator = l2_norm(omega, region)
    if denominator == 0.0:
        if numerator == 0.0:
            return 0.0
        raise PreconditionError("vorticity is zero but the velocity field has nonzero curl")
    return numerator / denominator


def fit_axis_asymptotics(psi: Field) -> Tuple[TraceCurve, TraceCurve, float]:
    """Least-squares ψ ≈ a₁(z)·r + a₃(z)·r³ over the first six radial cells."""
    if psi.parity is not Parity.ODD:
        raise PreconditionError("axis asymptotics need an odd-parity field")
    if psi.grid.nr < AXIS_FIT_CELLS:
        raise PreconditionError(f"need at least {AXIS_FIT_CELLS} radial cells, got {psi.grid.nr}")
    r = psi.grid.r_nodes[:AXIS_FIT_CELLS]
    design = np.column_stack([r, r ** 3])
    data = psi.values[:AXIS_FIT_CELLS]
    coeffs, *_ = np.linalg.lstsq(design, data, rcond=None)
    fitted = design @ coeffs
    scale = np.linalg.norm(data)
    residual = float(np.linalg.norm(fitted - data) / scale) if scale > 0 else 0.0
    z = psi.grid.z_nodes
    return TraceCurve(z, coeffs[0], "axis"), TraceCurve(z, coeffs[1], "axis"), residual


# ---------------------------------------------------------------------------
# Energy identities
# ---------------------------------------------------------------------------

@dataclass
class IdentityCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return abs(self.lhs - self.rhs) / scale if scale > 0 else 0.0

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "gap": self.gap}


def _dot_values(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    """Midpoint rule for ∫ a·b dx."""
    return float(np.sum(a * b * grid.r_nodes[:, None]) * grid.hr * grid.hz)


def _dot(a: Field, b: Field) -> float:
    return _dot_values(a.values, b.values, a.grid)


def _sq(field: Field) -> float:
    return _dot(field, field)


def energy_identities(result: SolveResult, omega1: Field,
                      admissible: bool = False) -> List[IdentityCheck]:
    """
    Both sides of the discrete energy identities for a solved ψ₁.

    In the zz identity the axis term ∫ψ₁,z²|_{r=0} dz carries coefficient 1:
    with dx = r dr dz the (3/r)ψ₁,r·ψ₁,zz product gives +3/2 of it and the
    ψ₁,rr·ψ₁,zz product gives −1/2.

    The third-derivative identity needs ω₁ = 0 on z = ±a and is only
    evaluated when `admissible` is set.
    """
    psi1, psi = result.psi1, result.psi
    grid = psi1.grid
    r = grid.r_nodes[:, None]
    checks = []

    p_z = derivative(psi1, 0, 1)
    p_rz = derivative(psi1, 1, 1)
    p_zz = derivative(psi1, 0, 2)
    axis_z = axis_trace(p_z).integral_of_square()
    checks.append(IdentityCheck(
        "zz",
        _sq(p_rz) + _sq(p_zz) + axis_z,
        -_dot(omega1, p_zz),
    ))

    p_r_over_r = derivative(psi1, 1, 0).values / r
    outer_r = outer_trace(psi1, derivative_order=1).integral_of_square()
    checks.append(IdentityCheck(
        "r_over_r",
        3.0 * _dot_values(p_r_over_r, p_r_over_r, grid) + 0.5 * outer_r + 0.5 * axis_z,
        -_dot_values(omega1.values, p_r_over_r, grid),
    ))

    if admissible:
        p_rzz = derivative(psi1, 1, 2)
        p_zzz = derivative(psi1, 0, 3)
        omega1_z = derivative(omega1.with_values(omega1.values, z_dirichlet=True), 0, 1)
        checks.append(IdentityCheck(
            "zzz",
            _sq(p_rzz) + _sq(p_zzz) + axis_trace(p_zz).integral_of_square(),
            -_dot(omega1_z, p_zzz),
        ))

    omega = _times_r(omega1)
    s_rz = derivative(psi, 1, 1)
    s_zz = derivative(psi, 0, 2)
    s_z_over_r = derivative(psi, 0, 1).values / r
    checks.append(IdentityCheck(
        "stream",
        _sq(s_rz) + _sq(s_zz) + _dot_values(s_z_over_r, s_z_over_r, grid),
        -_dot(omega, s_zz),
    ))
    for check in checks:
        logger.debug("identity %s: lhs=%.6e rhs=%.6e gap=%.2e",
                     check.name, check.lhs, check.rhs, check.gap)
    return checks


def l2_norm(field: Field, region: Region = Region()) -> float:
    return weighted_norm(field, WeightedNormSpec(k=0, weighted=False), region)

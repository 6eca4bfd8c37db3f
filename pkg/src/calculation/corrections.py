"""
Axis correction functions χ and η, vanishing-order fits and the Hardy chain.

With u = ψ₁ and K the axis cutoff:

    χ(r, z) = ∫₀ʳ u,τ (1 + K(τ)) dτ
    η(r, z) = ∫₀ʳ (r − τ) g (1 + K(τ)) dτ,   g = −(3/r·u,r + u,zz + ω₁)

The unweighted parts are integrated on the solver's staggering so that they
reproduce u − u(0) without a quadrature defect: χ uses the face differences
u_{m+1} − u_m, and η inverts the conservative radial flux r⁻³(r³·),r. The
K-weighted part of η is a per-z trapezoid rule on [0, r_0, r_1, ...].
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from src.calculation.fields_norms import (
    Field,
    Parity,
    Region,
    WeightedNormSpec,
    axis_trace,
    derivative,
    norm_squared,
    radial_ghosts,
)
from src.calculation.solver import axial_second_difference, radial_flux_part
from src.geometry.domain_grid import CutoffK, Grid
from src.utils.errors import NonFiniteError, PreconditionError

logger = logging.getLogger(__name__)

FIT_CELLS = 6
ORDER_SLACK = 0.1
DIVERGENCE_GROWTH = 1.05


class CorrectionKind(str, Enum):
    CHI = "chi"
    ETA = "eta"


@dataclass(frozen=True, eq=False)
class CorrectionField:
    """
    A correction together with u − u(0) − correction.

    `remainder` is that difference as computed on the grid. `equation_gap`
    is ‖r⁻³(r³u,r),r − G‖/‖G‖ with G = −(u,zz + ω₁), the amount by which ψ₁
    misses the discrete radial equation (η only; the solver residual for a
    solved ψ₁).
    """
    kind: CorrectionKind
    values: Field
    cutoff: CutoffK
    remainder: Field
    equation_gap: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "cutoff": self.cutoff.to_dict(),
            "max_abs": self.values.max_abs(),
            "remainder_max_abs": self.remainder.max_abs(),
            "equation_gap": self.equation_gap,
        }


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def _axis_value(values: np.ndarray, parity: Parity) -> np.ndarray:
    if parity is Parity.ODD:
        return np.zeros(values.shape[1])
    # quadratic in r² through r = hr/2 and 3hr/2
    return (9.0 * values[0] - values[1]) / 8.0


def cumulative_radial(values: np.ndarray, grid: Grid, parity: Parity) -> np.ndarray:
    """∫₀^{r_i} F(τ, z) dτ at every cell center, per z."""
    if not np.all(np.isfinite(values)):
        raise NonFiniteError("non-finite integrand near the axis; check the field parity")
    nodes = np.concatenate([[0.0], grid.r_nodes])
    stacked = np.vstack([_axis_value(values, parity)[None, :], values])
    return cumulative_trapezoid(stacked, nodes, axis=0, initial=0.0)[1:]


def cumulative_moment(values: np.ndarray, grid: Grid, parity: Parity) -> np.ndarray:
    """∫₀^{r_i} (r_i − τ) F(τ, z) dτ = r_i·∫F − ∫τF."""
    r = grid.r_nodes[:, None]
    first = cumulative_radial(values, grid, parity)
    # τ·F has the opposite parity and vanishes on the axis
    second = cumulative_radial(values * r, grid, parity.flipped())
    return r * first - second


def _axis_step(psi1: Field) -> np.ndarray:
    """u(r_0) − u(0) per z."""
    return psi1.values[0] - axis_trace(psi1).values


def staggered_radial(psi1: Field, face_weight: np.ndarray, axis_weight: float) -> np.ndarray:
    """
    ∫₀^{r_i} u,τ·w(τ) dτ by the staggered midpoint rule.

    On [r_m, r_{m+1}] the integrand is (u_{m+1} − u_m)/hr·w(r_{m+½}); on the
    axis half-cell [0, r_0], where u − u(0) grows like τ², it is
    (u(r_0) − u(0))·axis_weight. With w ≡ 1 the sum telescopes to u − u(0).
    """
    steps = np.diff(psi1.values, axis=0) * face_weight
    if not np.all(np.isfinite(steps)):
        raise NonFiniteError("non-finite radial differences; check the field")
    first = _axis_step(psi1) * axis_weight
    return first[None, :] + np.vstack([np.zeros((1, psi1.grid.nz)), np.cumsum(steps, axis=0)])


def flux_inverse(rhs: np.ndarray, grid: Grid) -> np.ndarray:
    """
    w with r⁻³(r³w,r),r = rhs, zero flux at r = 0 and w(r_0) = 0, using the
    faces and cell moments of the ψ₁ operator:

        r³_{i+½}(w_{i+1} − w_i)/hr = hr·Σ_{l≤i} V_l·rhs_l
    """
    if not np.all(np.isfinite(rhs)):
        raise NonFiniteError("non-finite radial right-hand side")
    moments = grid.cell_volumes_r3()[:, None]
    flux = grid.hr * np.cumsum(moments * rhs, axis=0)[:-1]
    steps = grid.hr * flux / grid.r_faces[1:-1, None] ** 3
    return np.vstack([np.zeros((1, grid.nz)), np.cumsum(steps, axis=0)])


def _cutoff_column(cutoff: CutoffK, grid: Grid) -> np.ndarray:
    return cutoff(grid.r_nodes)[:, None]


def _cutoff_faces(cutoff: CutoffK, grid: Grid) -> np.ndarray:
    return cutoff(grid.r_faces[1:-1])[:, None]


def model_rhs(psi1: Field, omega1: Field) -> Field:
    """g = −(3/r·ψ₁,r + ψ₁,zz + ω₁), even in r."""
    psi1.grid.require_same(omega1.grid)
    r = psi1.grid.r_nodes[:, None]
    values = -(3.0 * derivative(psi1, 1, 0).values / r
               + derivative(psi1, 0, 2).values
               + omega1.values)
    return Field(psi1.grid, values, Parity.EVEN, False, False, "g")


def equation_radial_part(psi1: Field, omega1: Field) -> np.ndarray:
    """
    G = −(u,zz + ω₁), the value of r⁻³(r³u,r),r the equation asks for.

    u,zz uses the solver's Dirichlet closure when ψ₁ carries the z = ±a
    flag and cubic extrapolation otherwise.
    """
    psi1.grid.require_same(omega1.grid)
    if psi1.z_dirichlet:
        u_zz = axial_second_difference(psi1, "dirichlet")
    else:
        u_zz = derivative(psi1, 0, 2).values
    return -(u_zz + omega1.values)


# ---------------------------------------------------------------------------
# Corrections
# ---------------------------------------------------------------------------

def build_chi(psi1: Field, cutoff: CutoffK) -> CorrectionField:
    """χ = (u − u(0)) + ∫₀ʳ u,τ K dτ, so that χ,r = u,r(1 + K)."""
    if psi1.parity is not Parity.EVEN:
        raise PreconditionError("psi1 must have even axis parity")
    grid = psi1.grid
    tail = staggered_radial(psi1, _cutoff_faces(cutoff, grid), 0.5 * float(cutoff(grid.r_nodes[0])))
    base = psi1.values - axis_trace(psi1).values[None, :]
    chi = Field(grid, base + tail, Parity.EVEN, False, psi1.z_dirichlet, "chi")
    remainder = Field(grid, base - chi.values, Parity.EVEN, False, psi1.z_dirichlet, "chi_remainder")
    return CorrectionField(CorrectionKind.CHI, chi, cutoff, remainder)


def chi_quadrature(psi1: Field, cutoff: CutoffK) -> Field:
    """χ straight from its defining integral ∫₀ʳ u,τ (1 + K) dτ."""
    grid = psi1.grid
    values = staggered_radial(psi1, 1.0 + _cutoff_faces(cutoff, grid),
                              1.0 + 0.5 * float(cutoff(grid.r_nodes[0])))
    return Field(grid, values, Parity.EVEN, False, psi1.z_dirichlet, "chi")


def eta_theorem_form(psi1: Field, omega1: Field, cutoff: CutoffK) -> Field:
    """η = −∫₀ʳ (r − τ)(3/τ·u,τ + u,zz + ω₁)(1 + K) dτ, trapezoid rule throughout."""
    grid = psi1.grid
    r = grid.r_nodes[:, None]
    bracket = (3.0 * derivative(psi1, 1, 0).values / r
               + derivative(psi1, 0, 2).values + omega1.values)
    values = -cumulative_moment(bracket * (1.0 + _cutoff_column(cutoff, grid)), grid, Parity.EVEN)
    return Field(grid, values, Parity.EVEN, False, False, "eta")


def build_eta(psi1: Field, omega1: Field, cutoff: CutoffK) -> CorrectionField:
    """
    η = ∫₀ʳ(r−τ)g dτ + ∫₀ʳ(r−τ)gK dτ with g = G − (3/r)u,r.

    The first integral equals ∫₀ʳ s⁻³∫₀ˢ τ³G dτ ds and is taken through
    flux_inverse, plus u(r_0) − u(0) for the axis half-cell. For a solved
    ψ₁ it differs from u − u(0) only by the solver residual, so the
    remainder u − u(0) − η is the K term up to that residual.
    """
    if psi1.parity is not Parity.EVEN:
        raise PreconditionError("psi1 must have even axis parity")
    psi1.grid.require_same(omega1.grid)
    grid = psi1.grid
    r = grid.r_nodes[:, None]
    k = _cutoff_column(cutoff, grid)
    G = equation_radial_part(psi1, omega1)
    g = G - 3.0 * derivative(psi1, 1, 0).values / r
    values = (_axis_step(psi1)[None, :]
              + flux_inverse(G, grid)
              + cumulative_moment(g * k, grid, Parity.EVEN))
    base = psi1.values - axis_trace(psi1).values[None, :]

    g_norm = float(np.linalg.norm(G))
    miss = float(np.linalg.norm(radial_flux_part(psi1) - G))
    gap = miss / g_norm if g_norm > 0 else miss
    logger.debug("eta built: equation gap %.3e", gap)
    eta = Field(grid, values, Parity.EVEN, False, False, "eta")
    rem = Field(grid, base - values, Parity.EVEN, False, False, "eta_remainder")
    return CorrectionField(CorrectionKind.ETA, eta, cutoff, rem, gap)


def lemma_form_gap(psi1: Field, omega1: Field, cutoff: CutoffK) -> float:
    """
    max|η_lemma − η_theorem| / max|η_theorem|, where the first integrates
    +(r−τ)g(1+K) with g from model_rhs and the second integrates the
    expanded bracket with the opposite sign.
    """
    grid = psi1.grid
    g = model_rhs(psi1, omega1).values
    lemma = cumulative_moment(g * (1.0 + _cutoff_column(cutoff, grid)), grid, Parity.EVEN)
    theorem = eta_theorem_form(psi1, omega1, cutoff).values
    scale = float(np.max(np.abs(theorem)))
    if scale == 0.0:
        return float(np.max(np.abs(lemma)))
    return float(np.max(np.abs(lemma - theorem))) / scale


# ---------------------------------------------------------------------------
# Vanishing order
# ---------------------------------------------------------------------------

@dataclass
class VanishingOrder:
    z: np.ndarray
    slopes: np.ndarray
    window: int = FIT_CELLS

    @property
    def min_slope(self) -> float:
        return float(np.min(self.slopes)) if self.slopes.size else float("inf")

    def to_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "slope": [s if np.isfinite(s) else "inf" for s in self.slopes.tolist()],
            "window": self.window,
        }


def vanishing_order(field: Field, subtract_trace: bool = False,
                    cells: int = FIT_CELLS) -> VanishingOrder:
    """
    Slope of log|field| against log r over the first `cells` radial cells, per z.

    A row that vanishes identically gets slope +inf.
    """
    if field.grid.nr < cells:
        raise PreconditionError(f"need at least {cells} radial cells, got {field.grid.nr}")
    values = field.values
    if subtract_trace:
        values = values - axis_trace(field).values[None, :]
    log_r = np.log(field.grid.r_nodes[:cells])
    slopes = np.empty(field.grid.nz)
    for j in range(field.grid.nz):
        column = np.abs(values[:cells, j])
        keep = column > 0
        if keep.sum() < 2:
            slopes[j] = np.inf
            continue
        slopes[j] = np.polyfit(log_r[keep], np.log(column[keep]), 1)[0]
    return VanishingOrder(field.grid.z_nodes, slopes, cells)


# ---------------------------------------------------------------------------
# Hardy chain
# ---------------------------------------------------------------------------

@dataclass
class ChainNorm:
    lhs: float
    rhs: float
    k: int
    growth: float = 1.0
    diverging: bool = False

    @property
    def ratio(self) -> float:
        if self.rhs == 0.0:
            return 0.0
        return self.lhs / self.rhs

    def to_dict(self) -> dict:
        return {"k": self.k, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio,
                "growth": self.growth, "diverging": self.diverging}


def _coarsened(field: Field) -> Field:
    """
    Restrict to half the radial cells with the cubic midpoint rule
    (−v₋ + 9v + 9v₊ − v₊₊)/16, using the parity ghost at the axis.
    """
    grid = field.grid
    if grid.nr % 2:
        raise PreconditionError("divergence check needs an even radial cell count")
    p = radial_ghosts(field)
    left, right = p[1:-1:2], p[2::2]
    before, after = p[0:-2:2], p[3::2]
    v = (9.0 * (left + right) - before - after) / 16.0
    coarse = Grid(nr=grid.nr // 2, nz=grid.nz, R=grid.R, a=grid.a)
    return Field(coarse, v, field.parity, field.r_dirichlet, field.z_dirichlet, field.name)


def _chain_sides(field: Field, k: int) -> Tuple[float, float]:
    lhs = norm_squared(field, WeightedNormSpec(k=k, mu=0.0), Region.radial())
    top = derivative(field, k - 1, 0) if k > 1 else field
    rhs = norm_squared(top, WeightedNormSpec(k=1, mu=0.0), Region.radial())
    return float(np.sqrt(lhs)), float(np.sqrt(rhs))


def weighted_chain_norm(field: Field, k: int, cells: int = FIT_CELLS) -> ChainNorm:
    """
    ‖field‖_{H^k₀} against ‖∂ᵣ^{k−1} field‖_{H¹₀} on L₂(−a, a; ·).

    The field must vanish to order k − 1 at the axis. A lhs that grows by
    more than 5 % between the pairwise-coarsened and the given grid is
    reported as diverging.
    """
    if k < 1 or k > 3:
        raise PreconditionError(f"chain norm needs k in 1..3, got {k}")
    if field.is_zero():
        return ChainNorm(0.0, 0.0, k)
    order = vanishing_order(field, cells=cells).min_slope
    if order < k - 1 - ORDER_SLACK:
        raise PreconditionError(
            f"field vanishes to order {order:.2f} at the axis, need {k - 1}"
        )
    lhs, rhs = _chain_sides(field, k)
    coarse_lhs, _ = _chain_sides(_coarsened(field), k)
    growth = lhs / coarse_lhs if coarse_lhs > 0 else 1.0
    diverging = growth > DIVERGENCE_GROWTH
    if diverging:
        logger.warning("H^%d_0 chain norm grows %.3fx under refinement", k, growth)
    return ChainNorm(lhs, rhs, k, growth, diverging)

"""
Manufactured solutions for the ψ₁ problem.

Each case fixes an analytic ψ₁ vanishing on r = R and z = ±a and derives
ω₁ = −ψ₁,rr − (3/r)ψ₁,r − ψ₁,zz symbolically. A case is admissible for the
z-differentiated estimates when ω₁ vanishes on z = ±a.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional

import numpy as np
import sympy as sp

from src.calculation.fields_norms import Field, Parity
from src.geometry.domain_grid import DEFAULT_A, DEFAULT_R, Grid
from src.utils.errors import PreconditionError

logger = logging.getLogger(__name__)

r_sym, z_sym = sp.symbols("r z", real=True)

AXIS_BUMP_WIDTH = 0.2
BOUNDARY_LAYER_FRACTION = 0.1


def induced_forcing(psi1: sp.Expr) -> sp.Expr:
    """ω₁ for a given ψ₁."""
    return sp.simplify(
        -sp.diff(psi1, r_sym, 2) - 3 / r_sym * sp.diff(psi1, r_sym) - sp.diff(psi1, z_sym, 2)
    )


def _vanishes(expr: sp.Expr, symbol: sp.Symbol, value) -> bool:
    return sp.simplify(expr.subs(symbol, value)) == 0


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """
    Analytic ψ₁ with its forcing.

    Args:
        name: Case identifier used in reports
        psi1_expr: ψ₁(r, z) in the module symbols r_sym, z_sym
        R, a: Cylinder the case is built for
        description: One-line summary for reports
    """
    name: str
    psi1_expr: sp.Expr
    R: float = DEFAULT_R
    a: float = DEFAULT_A
    description: str = ""

    def __post_init__(self):
        psi1 = self.psi1_expr
        if not (_vanishes(psi1, r_sym, self.R)
                and _vanishes(psi1, z_sym, self.a)
                and _vanishes(psi1, z_sym, -self.a)):
            raise PreconditionError(f"case {self.name}: ψ₁ must vanish on r=R and z=±a")

    @cached_property
    def omega1_expr(self) -> sp.Expr:
        return induced_forcing(self.psi1_expr)

    @cached_property
    def admissible(self) -> bool:
        """ω₁ = 0 on z = ±a, needed by the z-differentiated problem."""
        omega1 = self.omega1_expr
        return _vanishes(omega1, z_sym, self.a) and _vanishes(omega1, z_sym, -self.a)

    @property
    def is_zero(self) -> bool:
        return sp.simplify(self.psi1_expr) == 0

    # -- numeric views -------------------------------------------------

    def _lambdify(self, expr: sp.Expr) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
        fn = sp.lambdify((r_sym, z_sym), expr, modules="numpy")

        def evaluate(r, z):
            return np.broadcast_to(np.asarray(fn(r, z), dtype=float), np.broadcast(r, z).shape)

        return evaluate

    @cached_property
    def psi1_fn(self):
        return self._lambdify(self.psi1_expr)

    @cached_property
    def omega1_fn(self):
        return self._lambdify(self.omega1_expr)

    @cached_property
    def omega1_z_fn(self):
        return self._lambdify(sp.diff(self.omega1_expr, z_sym))

    def _check_grid(self, grid: Grid) -> None:
        if (grid.R, grid.a) != (self.R, self.a):
            raise PreconditionError(
                f"case {self.name} is built for R={self.R}, a={self.a}; grid has R={grid.R}, a={grid.a}"
            )

    def psi1_field(self, grid: Grid) -> Field:
        self._check_grid(grid)
        return Field.from_function(grid, self.psi1_fn, Parity.EVEN, True, True, "psi1_exact")

    def omega1_field(self, grid: Grid) -> Field:
        self._check_grid(grid)
        return Field.from_function(grid, self.omega1_fn, Parity.EVEN, False,
                                   self.admissible, "omega1")

    def omega1_z_field(self, grid: Grid) -> Field:
        self._check_grid(grid)
        return Field.from_function(grid, self.omega1_z_fn, Parity.EVEN, False, False, "omega1_z")

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "psi1": str(self.psi1_expr),
            "omega1": str(self.omega1_expr),
            "admissible": bool(self.admissible),
            "description": self.description,
        }


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def _definitions(R: float, a: float) -> Dict[str, tuple]:
    r, z = r_sym, z_sym
    R_, a_ = sp.nsimplify(R), sp.nsimplify(a)
    width = sp.nsimplify(AXIS_BUMP_WIDTH)
    delta = sp.nsimplify(BOUNDARY_LAYER_FRACTION) * R_ ** 2
    return {
        "zero": (sp.Integer(0), "ω₁ ≡ 0"),
        "polynomial": ((R_ ** 2 - r ** 2) * (a_ ** 2 - z ** 2), "(R²−r²)(a²−z²)"),
        "separable": ((R_ ** 2 - r ** 2) ** 2 * sp.sin(sp.pi * z / a_), "(R²−r²)²·sin(πz/a)"),
        "axis_bump": (
            (R_ ** 2 - r ** 2) * sp.exp(-(r / width) ** 2) * (a_ ** 2 - z ** 2),
            "axis-localized Gaussian times (a²−z²)",
        ),
        "boundary_layer": (
            (R_ ** 2 - r ** 2) * sp.exp((r ** 2 - R_ ** 2) / delta) * sp.cos(sp.pi * z / (2 * a_)),
            "layer of width 0.1·R² at r = R",
        ),
        "oscillatory": ((R_ ** 2 - r ** 2) * sp.sin(3 * sp.pi * z / a_), "(R²−r²)·sin(3πz/a)"),
    }


CASE_NAMES = ("zero", "polynomial", "separable", "axis_bump", "boundary_layer", "oscillatory")


def get_case(name: str, R: float = DEFAULT_R, a: float = DEFAULT_A) -> ManufacturedCase:
    definitions = _definitions(R, a)
    if name not in definitions:
        raise PreconditionError(f"unknown case '{name}', expected one of {', '.join(CASE_NAMES)}")
    expr, description = definitions[name]
    return ManufacturedCase(name, expr, R, a, description)


def case_suite(R: float = DEFAULT_R, a: float = DEFAULT_A,
               names: Optional[List[str]] = None) -> List[ManufacturedCase]:
    """All manufactured cases (or the named subset) for the cylinder (R, a)."""
    cases = [get_case(name, R, a) for name in (names or CASE_NAMES)]
    for case in cases:
        if not case.admissible:
            logger.debug("case %s: ω₁ does not vanish on z = ±a", case.name)
    return cases

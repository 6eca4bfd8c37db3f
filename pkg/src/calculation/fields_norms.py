"""
Grid fields, finite-difference stencils and weighted Sobolev norms.

Norm convention (no 2π factor, measure r dr dz):

    ‖u‖²_{H^k_μ} = Σ_{|α|≤k} ∫ |D^α u|² r^{2(μ+|α|−k)} r dr dz

Near the axis a field is extended by its parity (even: ghost = mirror,
odd: ghost = −mirror); at r = R and z = ±a the ghost either carries a zero
Dirichlet value or is a cubic extrapolation of the interior.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from src.geometry.domain_grid import Grid
from src.utils.errors import NonFiniteError, PreconditionError

logger = logging.getLogger(__name__)

MAX_DERIVATIVE_ORDER = 3
LOG_TAU_MAX = 12.0


class Parity(str, Enum):
    EVEN = "even"
    ODD = "odd"

    def flipped(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN


# ---------------------------------------------------------------------------
# Field
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Field:
    """
    Samples at cell centers, indexed (i, j) = (r, z).

    Args:
        grid: Grid the samples live on
        values: Array of shape (nr, nz)
        parity: Behavior under r → −r
        r_dirichlet: Field vanishes on r = R
        z_dirichlet: Field vanishes on z = ±a
    """
    grid: Grid
    values: np.ndarray
    parity: Parity = Parity.EVEN
    r_dirichlet: bool = False
    z_dirichlet: bool = False
    name: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise PreconditionError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"field '{self.name}' has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "parity", Parity(self.parity))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_function(
        cls,
        grid: Grid,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        parity: Parity = Parity.EVEN,
        r_dirichlet: bool = False,
        z_dirichlet: bool = False,
        name: str = "",
    ) -> "Field":
        r, z = grid.mesh()
        values = np.broadcast_to(np.asarray(fn(r, z), dtype=float), grid.shape)
        return cls(grid, values, parity, r_dirichlet, z_dirichlet, name)

    @classmethod
    def zeros(cls, grid: Grid, parity: Parity = Parity.EVEN, name: str = "") -> "Field":
        return cls(grid, np.zeros(grid.shape), parity, True, True, name)

    def with_values(self, values: np.ndarray, **changes) -> "Field":
        return replace(self, values=values, **changes)

    def scaled(self, factor) -> "Field":
        """Multiply by a scalar or an array broadcastable to the grid (parity kept)."""
        return replace(self, values=self.values * factor)

    # -- arithmetic --------------------------------------------------------

    def _combine(self, other: "Field", values: np.ndarray) -> "Field":
        self.grid.require_same(other.grid)
        if self.parity is not other.parity:
            raise PreconditionError("cannot combine fields of different axis parity")
        return replace(
            self,
            values=values,
            r_dirichlet=self.r_dirichlet and other.r_dirichlet,
            z_dirichlet=self.z_dirichlet and other.z_dirichlet,
            name="",
        )

    def __add__(self, other: "Field") -> "Field":
        return self._combine(other, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return self._combine(other, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return replace(self, values=self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self * -1.0

    # -- views -------------------------------------------------------------

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def radial_slice(self, j: int) -> "RadialProfile":
        return RadialProfile(r=self.grid.r_nodes, values=self.values[:, j], parity=self.parity)

    def to_frame(self) -> pd.DataFrame:
        """Row-major (r outer, z inner) table with columns r, z, value."""
        r, z = self.grid.mesh()
        return pd.DataFrame({"r": r.ravel(), "z": z.ravel(), "value": self.values.ravel()})


# ---------------------------------------------------------------------------
# Ghost cells and stencils
# ---------------------------------------------------------------------------

def _outer_ghost(edge: np.ndarray, dirichlet: bool) -> np.ndarray:
    """
    Ghost beyond the last cell from the three/four cells nearest the face.

    `edge` holds cells ordered from the face inward (u_l, u_{l−1}, ...).
    """
    if dirichlet:
        return -3.0 * edge[0] + edge[1] - 0.2 * edge[2]
    return 4.0 * edge[0] - 6.0 * edge[1] + 4.0 * edge[2] - edge[3]


def _pad(values: np.ndarray, axis: int, low: str, high_dirichlet: bool,
         low_dirichlet: bool = False) -> np.ndarray:
    """
    Add one ghost layer on both ends of `axis`.

    low: "even" / "odd" for the axis side, "wall" for a physical boundary.
    """
    v = np.moveaxis(values, axis, 0)
    if v.shape[0] < 4:
        raise PreconditionError("stencils need at least 4 cells per direction")
    if low == "even":
        lo = v[0]
    elif low == "odd":
        lo = -v[0]
    else:
        lo = _outer_ghost(v[:4], low_dirichlet)
    hi = _outer_ghost(v[::-1][:4], high_dirichlet)
    padded = np.concatenate([lo[None], v, hi[None]], axis=0)
    return np.moveaxis(padded, 0, axis)


def radial_ghosts(field: Field) -> np.ndarray:
    """Values with one parity ghost below r_0 and one boundary ghost beyond r_{nr−1}."""
    return _pad(field.values, 0, field.parity.value, field.r_dirichlet)


def _first(padded: np.ndarray, axis: int, h: float) -> np.ndarray:
    p = np.moveaxis(padded, axis, 0)
    return np.moveaxis((p[2:] - p[:-2]) / (2.0 * h), 0, axis)


def _second(padded: np.ndarray, axis: int, h: float) -> np.ndarray:
    p = np.moveaxis(padded, axis, 0)
    return np.moveaxis((p[2:] - 2.0 * p[1:-1] + p[:-2]) / h ** 2, 0, axis)


def _diff_r(f: Field, order: int) -> Field:
    pad = _pad(f.values, 0, f.parity.value, f.r_dirichlet)
    if order == 1:
        values = _first(pad, 0, f.grid.hr)
    else:
        values = _second(pad, 0, f.grid.hr)
    parity = f.parity.flipped() if order % 2 else f.parity
    return replace(f, values=values, parity=parity, r_dirichlet=False, name="")


def _diff_z(f: Field, order: int) -> Field:
    pad = _pad(f.values, 1, "wall", f.z_dirichlet, low_dirichlet=f.z_dirichlet)
    if order == 1:
        values = _first(pad, 1, f.grid.hz)
    else:
        values = _second(pad, 1, f.grid.hz)
    return replace(f, values=values, z_dirichlet=False, name="")


def _apply(f: Field, order: int, step: Callable[[Field, int], Field]) -> Field:
    if order == 0:
        return f
    if order == 1:
        return step(f, 1)
    if order == 2:
        return step(f, 2)
    return step(step(f, 2), 1)


def derivative(field: Field, dr_order: int, dz_order: int) -> Field:
    """
    D^α field with second-order central differences.

    Each r-derivative flips the axis parity; an r-derivative drops the
    r = R Dirichlet flag and a z-derivative drops the z = ±a flag.
    """
    if dr_order < 0 or dz_order < 0:
        raise PreconditionError("derivative orders must be non-negative")
    if dr_order + dz_order > MAX_DERIVATIVE_ORDER:
        raise PreconditionError(
            f"derivative order {dr_order + dz_order} exceeds {MAX_DERIVATIVE_ORDER}"
        )
    out = _apply(field, dr_order, _diff_r)
    out = _apply(out, dz_order, _diff_z)
    return out


# ---------------------------------------------------------------------------
# Weighted norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedNormSpec:
    """(k, μ) selecting H^k_μ; weighted=False gives the classical H^k norm."""
    k: int
    mu: float = 0.0
    weighted: bool = True

    def __post_init__(self):
        if self.k not in range(MAX_DERIVATIVE_ORDER + 1):
            raise PreconditionError(f"k must be in 0..{MAX_DERIVATIVE_ORDER}, got {self.k}")

    @property
    def h(self) -> float:
        """Contour height of the log-variable chart, h = k + 1 − μ."""
        return self.k + 1 - self.mu

    def power(self, order: int) -> float:
        """Exponent of r multiplying |D^α u|² for |α| = order."""
        if not self.weighted:
            return 0.0
        return 2.0 * (self.mu + order - self.k)


@dataclass(frozen=True)
class Region:
    """
    Integration region.

    kind: "full" (Ω), "inner" (r ≤ 2r0), "outer" (r ≥ r0), "interior"
    (a fixed margin away from every boundary), "radial" (only radial
    derivatives, all z) or "radial_slice" (one z row, dr only).
    """
    kind: str = "full"
    r_min: float = 0.0
    r_max: float = np.inf
    z: Optional[float] = None
    z_max: Optional[float] = None

    @classmethod
    def full(cls) -> "Region":
        return cls("full")

    @classmethod
    def inner(cls, r0: float) -> "Region":
        return cls("inner", 0.0, 2.0 * r0)

    @classmethod
    def outer(cls, r0: float) -> "Region":
        return cls("outer", r0, np.inf)

    @classmethod
    def interior(cls, R: float, a: float, margin: float) -> "Region":
        """margin ≤ r ≤ R − margin and |z| ≤ a − margin."""
        if not 0 < 2 * margin < min(R, 2 * a):
            raise PreconditionError(f"margin {margin} leaves no interior")
        return cls("interior", margin, R - margin, z_max=a - margin)

    @classmethod
    def radial(cls) -> "Region":
        return cls("radial")

    @classmethod
    def radial_slice(cls, z: float) -> "Region":
        return cls("radial_slice", z=z)

    @property
    def radial_only(self) -> bool:
        return self.kind in ("radial", "radial_slice")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("inner", "outer", "interior"):
            out.update(r_min=self.r_min, r_max=self.r_max)
        if self.z_max is not None:
            out["z_max"] = self.z_max
        if self.z is not None:
            out["z"] = self.z
        return out


def _cell_mask(grid: Grid, region: Region) -> np.ndarray:
    r = grid.r_nodes
    rows = (r >= region.r_min) & (r <= region.r_max)
    mask = np.repeat(rows[:, None], grid.nz, axis=1)
    if region.kind == "radial_slice":
        j = int(np.argmin(np.abs(grid.z_nodes - region.z)))
        cols = np.zeros(grid.nz, dtype=bool)
        cols[j] = True
        mask &= cols[None, :]
    if region.z_max is not None:
        mask &= (np.abs(grid.z_nodes) <= region.z_max)[None, :]
    if not mask.any():
        raise PreconditionError(f"region {region.kind} does not intersect the grid")
    return mask


def weighted_integral(values: np.ndarray, grid: Grid, power: float = 0.0,
                      region: Region = Region()) -> float:
    """Midpoint rule for ∫ values · r^power · r dr dz (dz dropped on a radial slice)."""
    mask = _cell_mask(grid, region)
    r = grid.r_nodes[:, None]
    integrand = values * r ** power * r
    if not np.all(np.isfinite(integrand[mask])):
        raise NonFiniteError("non-finite weighted integrand (check axis parity)")
    cell = grid.hr if region.kind == "radial_slice" else grid.hr * grid.hz
    return float(np.sum(integrand[mask]) * cell)


def integral(field: Field, region: Region = Region()) -> float:
    """Signed ∫ field dx with dx = r dr dz."""
    return weighted_integral(field.values, field.grid, 0.0, region)


def multi_indices(k: int, radial_only: bool) -> Iterator[Tuple[int, int]]:
    for total in range(k + 1):
        if radial_only:
            yield total, 0
            continue
        for dr in range(total, -1, -1):
            yield dr, total - dr


def norm_squared(field: Field, spec: WeightedNormSpec, region: Region = Region()) -> float:
    """Squared H^k_μ norm over `region`."""
    if field.is_zero():
        return 0.0
    total = 0.0
    for dr, dz in multi_indices(spec.k, region.radial_only):
        d = derivative(field, dr, dz)
        total += weighted_integral(d.values ** 2, field.grid, spec.power(dr + dz), region)
    return total


def weighted_norm(field: Field, spec: WeightedNormSpec, region: Region = Region()) -> float:
    """H^k_μ norm by midpoint quadrature of the weighted sum of squared derivatives."""
    return float(np.sqrt(norm_squared(field, spec, region)))


def norm_record(field: Field, spec: WeightedNormSpec, region: Region = Region()) -> dict:
    return {"k": spec.k, "mu": spec.mu, "region": region.kind,
            "value": weighted_norm(field, spec, region)}


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

# Interpolation in s = r² through r = hr/2, 3hr/2, 5hr/2, evaluated at s = 0.
_AXIS_WEIGHTS = np.array([225.0 / 192.0, -25.0 / 128.0, 9.0 / 384.0])
_OUTER_WEIGHTS = np.array([15.0 / 8.0, -5.0 / 4.0, 3.0 / 8.0])


@dataclass(frozen=True, eq=False)
class TraceCurve:
    """Values of a field on r = 0 (location="axis") or r = R ("outer"), indexed by z."""
    z: np.ndarray
    values: np.ndarray
    location: str = "axis"

    def __post_init__(self):
        if self.values.shape != self.z.shape or not np.all(np.isfinite(self.values)):
            raise NonFiniteError("trace must be finite with one value per z node")

    def integral_of_square(self) -> float:
        dz = self.z[1] - self.z[0] if self.z.size > 1 else 0.0
        return float(np.sum(self.values ** 2) * dz)

    def as_field(self, grid: Grid, parity: Parity = Parity.EVEN) -> Field:
        """Broadcast the trace along r."""
        values = np.broadcast_to(self.values[None, :], grid.shape)
        return Field(grid, values, parity, False, False, f"{self.location}_trace")


def axis_trace(field: Field) -> TraceCurve:
    """
    Value at r = 0 per z.

    Even fields: interpolation in r² through the first three cell centers.
    Odd fields vanish on the axis; their trace is returned as exact zeros.
    """
    z = field.grid.z_nodes
    if field.parity is Parity.ODD:
        return TraceCurve(z, np.zeros_like(z), "axis")
    if field.grid.nr < 3:
        raise PreconditionError("axis trace needs at least 3 radial cells")
    values = _AXIS_WEIGHTS @ field.values[:3]
    return TraceCurve(z, values, "axis")


def outer_trace(field: Field, derivative_order: int = 0) -> TraceCurve:
    """Value (or r-derivative) on r = R per z from the last three cells."""
    grid = field.grid
    z = grid.z_nodes
    edge = field.values[::-1][:3]
    if derivative_order == 0:
        values = np.zeros_like(z) if field.r_dirichlet else _OUTER_WEIGHTS @ edge
    elif derivative_order == 1:
        if field.r_dirichlet:
            values = -(9.0 * edge[0] - edge[1]) / (3.0 * grid.hr)
        else:
            values = (2.0 * edge[0] - 3.0 * edge[1] + edge[2]) / grid.hr
    else:
        raise PreconditionError("outer trace supports value or first derivative only")
    return TraceCurve(z, values, "outer")


# ---------------------------------------------------------------------------
# Radial profiles and the log-variable chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial samples at fixed z, optionally backed by an exact callable."""
    r: np.ndarray
    values: np.ndarray
    parity: Parity = Parity.EVEN
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], R: float = 1.0,
                      n: int = 20000, parity: Parity = Parity.EVEN) -> "RadialProfile":
        r = (np.arange(n) + 0.5) * R / n
        return cls(r=r, values=np.asarray(fn(r), dtype=float), parity=parity, fn=fn)

    @property
    def R(self) -> float:
        return float(self.r[-1] + 0.5 * (self.r[1] - self.r[0]))

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        if self.fn is not None:
            return np.asarray(self.fn(r), dtype=float)
        out = np.interp(r, self.r, self.values, right=0.0)
        below = r < self.r[0]
        if self.parity is Parity.ODD:
            out[below] = self.values[0] * r[below] / self.r[0]
        return out

    def is_zero(self) -> bool:
        return not np.any(self.values)


def _radial_derivatives(profile: RadialProfile, k: int) -> List[np.ndarray]:
    """[u, u_r, ..., ∂ᵣᵏu] on the profile grid, via the 2D stencils with nz = 4."""
    n = profile.r.size
    grid = Grid(nr=n, nz=4, R=profile.R, a=1.0)
    column = np.repeat(profile.values[:, None], 4, axis=1)
    f = Field(grid, column, profile.parity)
    return [derivative(f, i, 0).values[:, 0] for i in range(k + 1)]


def log_norm_equivalence_check(profile: RadialProfile, spec: WeightedNormSpec,
                               n_tau: int = 20000,
                               tau_max: float = LOG_TAU_MAX) -> Tuple[float, float, float]:
    """
    Compare the r-chart norm with its τ = −ln r counterpart.

    rhs = Σ_{i≤k} ∫ |∂τⁱ u|² e^{2hτ} dτ with h = k + 1 − μ on τ ∈ [−ln R + ln 2, tau_max].
    lhs = Σ_{i≤k} ∫ |∂ᵣⁱ u|² r^{2(μ−2−k+i)} r dr, the r-side weight that this
    chart reproduces exactly for k ≤ 1 (k = 0: ∫|u|² r^{2μ−4} r dr).

    Returns:
        (lhs, rhs, lhs/rhs); a zero profile gives (0, 0, 1).
    """
    if spec.k > 2:
        raise PreconditionError("log-chart equivalence is checked for k <= 2")
    if profile.is_zero():
        return 0.0, 0.0, 1.0
    R = profile.R
    far = profile.r > 0.5 * R
    if np.any(np.abs(profile.values[far]) > 1e-12 * np.max(np.abs(profile.values))):
        raise PreconditionError("profile must vanish on (R/2, R) to avoid boundary effects")

    hr = profile.r[1] - profile.r[0]
    lhs = 0.0
    for i, d in enumerate(_radial_derivatives(profile, spec.k)):
        power = 2.0 * (spec.mu - 2.0 - spec.k + i)
        lhs += float(np.sum(d ** 2 * profile.r ** power * profile.r) * hr)

    tau = np.linspace(-np.log(R) + np.log(2.0), tau_max, n_tau)
    u = profile.evaluate(np.exp(-tau))
    rhs = 0.0
    d = u
    for i in range(spec.k + 1):
        if i:
            d = np.gradient(d, tau)
        rhs += float(trapezoid(d ** 2 * np.exp(2.0 * spec.h * tau), tau))
    ratio = lhs / rhs if rhs > 0 else float("inf")
    logger.debug("log-chart check k=%d mu=%.3f: lhs=%.6e rhs=%.6e", spec.k, spec.mu, lhs, rhs)
    return lhs, rhs, ratio


# ---------------------------------------------------------------------------
# Hardy inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HardyProfile:
    """f and f′ on a geometric grid x = x_max·e^{−t}, increasing in x."""
    x: np.ndarray
    f: np.ndarray
    df: np.ndarray

    @staticmethod
    def _geometric(x_max: float, t_max: float, n: int) -> np.ndarray:
        return x_max * np.exp(-np.linspace(t_max, 0.0, n))

    @classmethod
    def from_function(cls, fn: Callable, dfn: Callable, x_max: float = 1.0,
                      t_max: float = 40.0, n: int = 8001) -> "HardyProfile":
        x = cls._geometric(x_max, t_max, n)
        return cls(x=x, f=np.asarray(fn(x), float), df=np.asarray(dfn(x), float))

    @classmethod
    def from_density(cls, g: np.ndarray, x_max: float = 1.0,
                     t_max: float = 30.0, n: int = 8001) -> "HardyProfile":
        """f(x) = ∫₀ˣ g for a piecewise-constant density g on uniform cells of (0, x_max)."""
        g = np.asarray(g, dtype=float)
        if np.any(g < 0):
            raise PreconditionError("density must be non-negative")
        edges = np.linspace(0.0, x_max, g.size + 1)
        cumulative = np.concatenate([[0.0], np.cumsum(g * np.diff(edges))])
        x = cls._geometric(x_max, t_max, n)
        cell = np.minimum((x / (x_max / g.size)).astype(int), g.size - 1)
        return cls(x=x, f=np.interp(x, edges, cumulative), df=g[cell])


@dataclass
class HardyResult:
    lhs: float
    rhs: float
    ratio: float
    alpha: float

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio}


def _power_tails(x0: float, x1: float, f0: float, f1: float,
                 alpha: float) -> Tuple[float, float]:
    """
    (∫₀^{x0} x^{α−2}f², ∫₀^{x0} x^α f′²) for the power law f ≈ A·x^p through
    the first two samples.
    """
    if f0 == 0.0 or f1 == 0.0 or np.sign(f0) != np.sign(f1):
        return 0.0, 0.0
    p = np.log(f1 / f0) / np.log(x1 / x0)
    e = 2.0 * p + alpha - 1.0
    if e <= 0:
        return float("inf"), float("inf")
    base = f0 ** 2 * x0 ** (alpha - 1.0) / e
    return float(base), float(p ** 2 * base)


def hardy_check(profile: HardyProfile, alpha: float) -> HardyResult:
    """
    Both sides of ∫ x^{α−2} f² dx ≤ 4/(1−α)² ∫ x^α f′² dx.

    Integration runs in t = −ln x; the interval below the first sample is
    closed with the power law fitted through the first two samples.
    """
    if alpha >= 1:
        raise PreconditionError(f"alpha must be < 1, got {alpha}")
    x, f, df = profile.x, profile.f, profile.df
    if not np.any(f) and not np.any(df):
        return HardyResult(0.0, 0.0, 0.0, alpha)
    t = -np.log(x)
    # ∫ F dx = ∫ F·x dt, t decreasing along the array
    lhs = -float(trapezoid(x ** (alpha - 2.0) * f ** 2 * x, t))
    rhs_integral = -float(trapezoid(x ** alpha * df ** 2 * x, t))

    tail_lhs, tail_rhs = _power_tails(x[0], x[1], f[0], f[1], alpha)
    lhs += tail_lhs
    rhs_integral += tail_rhs
    rhs = 4.0 / (1.0 - alpha) ** 2 * rhs_integral
    if np.isinf(lhs) and np.isinf(rhs):
        ratio = 1.0
    else:
        ratio = lhs / rhs if rhs > 0 else 0.0
    return HardyResult(lhs=lhs, rhs=rhs, ratio=ratio, alpha=alpha)

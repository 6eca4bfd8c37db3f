"""
Cylinder geometry, axis-safe grid, partition of unity and the axis cutoff K.

The grid is cell-centered in both directions: r_i = (i + 1/2)·hr and
z_j = −a + (j + 1/2)·hz, so no sample ever sits on the axis r = 0 and every
1/r, 3/r or 1/r² factor is evaluated at a strictly positive radius.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Tuple

import numpy as np

from src.utils.errors import GridMismatchError, PreconditionError

if TYPE_CHECKING:
    from src.calculation.fields_norms import Field


DEFAULT_R = 1.0
DEFAULT_A = 1.0
DEFAULT_R0 = 0.25
DEFAULT_RHO = 0.2
DEFAULT_C0 = 1.0


@dataclass(frozen=True)
class CylinderDomain:
    """
    Ω = {r < R, |z| < a} with the localization radius r0.

    Args:
        R: Cylinder radius
        a: Half-height
        r0: Plateau radius of ζ⁽¹⁾; the blend lives on (r0, 2·r0)
    """
    R: float = DEFAULT_R
    a: float = DEFAULT_A
    r0: float = DEFAULT_R0

    def __post_init__(self):
        if not self.R > 0:
            raise PreconditionError(f"R must be positive, got {self.R}")
        if not self.a > 0:
            raise PreconditionError(f"a must be positive, got {self.a}")
        if not 0 < 2 * self.r0 < self.R:
            raise PreconditionError(
                f"need 0 < 2*r0 < R, got r0={self.r0}, R={self.R}"
            )

    def to_dict(self) -> dict:
        return {"R": self.R, "a": self.a, "r0": self.r0}


@dataclass(frozen=True)
class Grid:
    """Cell-centered tensor grid over (0, R) × (−a, a)."""
    nr: int
    nz: int
    R: float = DEFAULT_R
    a: float = DEFAULT_A

    def __post_init__(self):
        if self.nr < 1 or self.nz < 1:
            raise PreconditionError(f"grid needs positive cell counts, got {self.nr}x{self.nz}")
        if not (self.R > 0 and self.a > 0):
            raise PreconditionError("grid extents must be positive")

    @classmethod
    def from_domain(cls, domain: CylinderDomain, nr: int, nz: int) -> "Grid":
        return cls(nr=nr, nz=nz, R=domain.R, a=domain.a)

    @property
    def hr(self) -> float:
        return self.R / self.nr

    @property
    def hz(self) -> float:
        return 2.0 * self.a / self.nz

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nr, self.nz)

    @cached_property
    def r_nodes(self) -> np.ndarray:
        return (np.arange(self.nr) + 0.5) * self.hr

    @cached_property
    def z_nodes(self) -> np.ndarray:
        return -self.a + (np.arange(self.nz) + 0.5) * self.hz

    @cached_property
    def r_faces(self) -> np.ndarray:
        """Face radii r_{i−1/2}, i = 0..nr (first face is the axis)."""
        return np.arange(self.nr + 1) * self.hr

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """(r, z) arrays of shape (nr, nz), r varying along axis 0."""
        return np.meshgrid(self.r_nodes, self.z_nodes, indexing="ij")

    def cell_volumes_r3(self) -> np.ndarray:
        """Cell moments (r_{i+½}⁴ − r_{i−½}⁴)/(4·hr), the r³ weight of each radial cell."""
        faces = self.r_faces
        return (faces[1:] ** 4 - faces[:-1] ** 4) / (4.0 * self.hr)

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(nr=self.nr * factor, nz=self.nz * factor, R=self.R, a=self.a)

    def same_as(self, other: "Grid") -> bool:
        return (self.nr, self.nz, self.R, self.a) == (other.nr, other.nz, other.R, other.a)

    def require_same(self, other: "Grid") -> None:
        if not self.same_as(other):
            raise GridMismatchError(
                f"grid mismatch: {self.nr}x{self.nz} vs {other.nr}x{other.nz}"
            )

    def to_dict(self) -> dict:
        return {"nr": self.nr, "nz": self.nz, "hr": self.hr, "hz": self.hz}


# ---------------------------------------------------------------------------
# Partition of unity
# ---------------------------------------------------------------------------

def _smoothstep(s: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic Hermite step S(s) = 10s³ − 15s⁴ + 6s⁵ on [0, 1] with S′ and S″."""
    s = np.clip(s, 0.0, 1.0)
    value = s ** 3 * (10.0 - 15.0 * s + 6.0 * s ** 2)
    first = 30.0 * s ** 2 * (1.0 - s) ** 2
    second = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
    return value, first, second


@dataclass(frozen=True)
class PartitionOfUnity:
    """ζ⁽¹⁾ + ζ⁽²⁾ = 1, ζ⁽¹⁾ = 1 on [0, r0], ζ⁽¹⁾ = 0 on [2·r0, R]."""
    r0: float
    R: float

    def _blend(self, r) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        r = np.asarray(r, dtype=float)
        inside = (r > self.r0) & (r < 2.0 * self.r0)
        s = (r - self.r0) / self.r0
        value, first, second = _smoothstep(s)
        value = np.where(r >= 2.0 * self.r0, 1.0, np.where(inside, value, 0.0))
        first = np.where(inside, first / self.r0, 0.0)
        second = np.where(inside, second / self.r0 ** 2, 0.0)
        return r, value, first, second

    def zeta1(self, r) -> np.ndarray:
        _, step, _, _ = self._blend(r)
        return 1.0 - step

    def zeta2(self, r) -> np.ndarray:
        _, step, _, _ = self._blend(r)
        return step

    def dzeta1(self, r) -> np.ndarray:
        return -self._blend(r)[2]

    def dzeta2(self, r) -> np.ndarray:
        return self._blend(r)[2]

    def ddzeta1(self, r) -> np.ndarray:
        return -self._blend(r)[3]

    def ddzeta2(self, r) -> np.ndarray:
        return self._blend(r)[3]

    def profiles(self, which: int):
        """(ζ, ζ̇, ζ̈) callables for ζ⁽¹⁾ (which=1) or ζ⁽²⁾ (which=2)."""
        if which == 1:
            return self.zeta1, self.dzeta1, self.ddzeta1
        if which == 2:
            return self.zeta2, self.dzeta2, self.ddzeta2
        raise ValueError(f"partition index must be 1 or 2, got {which}")

    def localize(self, field: "Field") -> Tuple["Field", "Field"]:
        """Split a field into (field·ζ⁽¹⁾, field·ζ⁽²⁾)."""
        r = field.grid.r_nodes[:, None]
        return field.scaled(self.zeta1(r)), field.scaled(self.zeta2(r))


def build_partition(domain: CylinderDomain) -> PartitionOfUnity:
    """Build ζ⁽¹⁾/ζ⁽²⁾ with a quintic blend on (r0, 2·r0)."""
    if not 0 < 2 * domain.r0 < domain.R:
        raise PreconditionError(f"need 2*r0 < R, got r0={domain.r0}, R={domain.R}")
    return PartitionOfUnity(r0=domain.r0, R=domain.R)


# ---------------------------------------------------------------------------
# Cutoff K
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CutoffK:
    """
    K(r) = c0·r²·B(r): B ≡ 1 on [0, ρ/2], B ≡ 0 beyond ρ.

    The transition uses the mollifier exp(1 − 1/(1 − q²)) with q the quintic
    step of (r − ρ/2)/(ρ/2), which keeps K twice continuously differentiable
    at both ends of the transition.
    """
    c0: float
    rho: float

    def bump(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        half = 0.5 * self.rho
        q, _, _ = _smoothstep((r - half) / half)
        with np.errstate(divide="ignore", over="ignore"):
            inner = 1.0 - 1.0 / np.maximum(1.0 - q ** 2, 1e-300)
            transition = np.exp(inner)
        return np.where(r <= half, 1.0, np.where(r >= self.rho, 0.0, transition))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.c0 == 0.0:
            return np.zeros_like(r)
        return self.c0 * r ** 2 * self.bump(r)

    def axis_ratio(self, r) -> np.ndarray:
        """K(r)/r², which tends to c0 as r → 0⁺."""
        r = np.asarray(r, dtype=float)
        return self.c0 * self.bump(r)

    def to_dict(self) -> dict:
        return {"c0": self.c0, "rho": self.rho}


def build_cutoff(c0: float, rho: float) -> CutoffK:
    """Build the axis cutoff K with K(r)/r² → c0."""
    if not rho > 0:
        raise PreconditionError(f"rho must be positive, got {rho}")
    if not np.isfinite(c0):
        raise PreconditionError(f"c0 must be finite, got {c0}")
    return CutoffK(c0=float(c0), rho=float(rho))


def localize_rhs(psi1: "Field", omega1: "Field", pou: PartitionOfUnity) -> Tuple["Field", "Field"]:
    """
    Right-hand sides of the two localized problems.

    f = ω₁ζ⁽¹⁾ − 2ψ₁,r ζ̇⁽¹⁾ − ψ₁ζ̈⁽¹⁾ − (3/r)ψ₁ζ̇⁽¹⁾ and g likewise with ζ⁽²⁾,
    so that ψ₁ζ⁽ⁱ⁾ solves −Δu − (2/r)u,r with that data. The coefficient
    is 3/r rather than 2/r because Δ contributes its own (1/r)u,r: the
    operator is −r⁻³(r³u,r),r − u,zz. Because
    ζ̇⁽¹⁾ = −ζ̇⁽²⁾ and ζ̈⁽¹⁾ = −ζ̈⁽²⁾ the cross terms cancel and f + g = ω₁.
    """
    from src.calculation.fields_norms import derivative

    psi1.grid.require_same(omega1.grid)
    r = psi1.grid.r_nodes[:, None]
    psi1_r = derivative(psi1, 1, 0).values
    out = []
    for which in (1, 2):
        zeta, dzeta, ddzeta = pou.profiles(which)
        z0, z1, z2 = zeta(r), dzeta(r), ddzeta(r)
        values = (
            omega1.values * z0
            - 2.0 * psi1_r * z1
            - psi1.values * z2
            - 3.0 / r * psi1.values * z1
        )
        out.append(omega1.with_values(values))
    return out[0], out[1]

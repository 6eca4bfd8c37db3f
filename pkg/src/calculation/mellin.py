"""
Radial model problem in the log variable τ = −ln r.

−u,rr − (3/r)u,r = F becomes −u″ + 2u′ = g′(τ) with g′ = r²F at r = e^{−τ}.
With the transform û(λ) = (2π)^{−1/2} ∫ e^{−iλτ} u dτ the solution on the
line Im λ = h is û = R(λ)·ĝ′ with R(λ) = 1/(λ(λ + 2i)); numerically

    u = e^{−hτ} · IFFT[ R(σ + ih) · FFT(e^{hτ} g′) ].

The FFT runs on the window [−4, 16] padded by 40 on both sides; every
public array is restricted to the window.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import fft as sfft

from src.calculation.fields_norms import RadialProfile
from src.utils.errors import CoverageError, PoleGuardError, PreconditionError

logger = logging.getLogger(__name__)

WINDOW: Tuple[float, float] = (-4.0, 16.0)
PADDING = 40.0
N_POINTS = 2 ** 14
MAX_SPACING = 0.01
POLE_GUARD = 0.05
SUPPORT_MARGIN = 4.0
COVERAGE_TOL = 1e-12
PARSEVAL_TOL = 1e-8
POLES = (0j, -2j)


# ---------------------------------------------------------------------------
# Resolvent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Resolvent:
    """R(λ) = 1/(λ(λ + 2i)), poles at 0 and −2i."""

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=complex)
        return 1.0 / (lam * (lam + 2j))

    def on_line(self, sigma: np.ndarray, h: float) -> np.ndarray:
        guard_height(h)
        return self(np.asarray(sigma) + 1j * h)

    @staticmethod
    def decay_bound(h: float) -> float:
        """Upper bound for |R(σ + ih)| over σ ∈ ℝ."""
        return 1.0 / (abs(h) * abs(h + 2.0))


def guard_height(h: float) -> None:
    """Reject contour heights within POLE_GUARD of the poles (Im λ = 0 or −2)."""
    if abs(h) < POLE_GUARD or abs(h + 2.0) < POLE_GUARD:
        raise PoleGuardError(f"contour height h={h} is within {POLE_GUARD} of a pole")


def resolvent_values(lambdas: Sequence[complex]) -> np.ndarray:
    """Exact R(λ) for each λ; a λ on a pole raises PoleGuardError."""
    lam = np.atleast_1d(np.asarray(lambdas, dtype=complex))
    for pole in POLES:
        if np.any(np.abs(lam - pole) < 1e-14):
            raise PoleGuardError(f"resolvent evaluated at its pole {pole}")
    return Resolvent()(lam)


def contour_table(h: float, sigmas: Sequence[float]) -> pd.DataFrame:
    """R(σ + ih) as a table with columns sigma, reR, imR."""
    sigmas = np.asarray(sigmas, dtype=float)
    values = Resolvent().on_line(sigmas, h)
    return pd.DataFrame({"sigma": sigmas, "reR": values.real, "imR": values.imag})


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------

def padded_tau(window: Tuple[float, float] = WINDOW, padding: float = PADDING,
               n: int = N_POINTS) -> np.ndarray:
    start, stop = window[0] - padding, window[1] + padding
    tau = start + (stop - start) * np.arange(n) / n
    if tau[1] - tau[0] > MAX_SPACING:
        raise PreconditionError(f"τ spacing {tau[1] - tau[0]:.4f} exceeds {MAX_SPACING}")
    return tau


@dataclass(frozen=True, eq=False)
class MellinProblem:
    """
    Model data g′ on the padded periodic τ-grid with a contour height h.

    Args:
        tau: Uniform padded grid (length N_POINTS)
        gprime: g′(τ) on that grid, zero outside the window
        h: Contour height Im λ
        z: Axial position the data was taken at, when it came from a field
    """
    tau: np.ndarray
    gprime: np.ndarray
    h: float
    window: Tuple[float, float] = WINDOW
    z: Optional[float] = None

    def __post_init__(self):
        if self.tau.shape != self.gprime.shape:
            raise PreconditionError("tau and gprime must have the same shape")
        steps = np.diff(self.tau)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise PreconditionError("tau grid must be uniform")
        if not np.all(np.isfinite(self.gprime)):
            raise PreconditionError("g′ has non-finite samples")

    @property
    def dtau(self) -> float:
        return float(self.tau[1] - self.tau[0])

    @property
    def window_mask(self) -> np.ndarray:
        return (self.tau >= self.window[0]) & (self.tau <= self.window[1])

    def inner_mask(self, fraction: float = 0.8) -> np.ndarray:
        lo, hi = self.window
        pad = 0.5 * (1.0 - fraction) * (hi - lo)
        return (self.tau >= lo + pad) & (self.tau <= hi - pad)

    def with_height(self, h: float) -> "MellinProblem":
        return replace(self, h=h)

    def is_zero(self) -> bool:
        return not np.any(self.gprime)

    def to_dict(self) -> Dict:
        return {"h": self.h, "window": list(self.window), "points": int(self.tau.size),
                "dtau": self.dtau, "z": self.z}

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_gprime(cls, fn: Callable[[np.ndarray], np.ndarray], h: float,
                    window: Tuple[float, float] = WINDOW) -> "MellinProblem":
        tau = padded_tau(window)
        values = np.zeros_like(tau)
        inside = (tau >= window[0]) & (tau <= window[1])
        values[inside] = np.asarray(fn(tau[inside]), dtype=float)
        problem = cls(tau, values, h, window)
        _require_coverage(problem)
        return problem

    @classmethod
    def from_samples(cls, tau_samples: np.ndarray, values: np.ndarray, h: float,
                     window: Tuple[float, float] = WINDOW) -> "MellinProblem":
        tau_samples = np.asarray(tau_samples, dtype=float)
        values = np.asarray(values, dtype=float)
        return cls.from_gprime(
            lambda t: np.interp(t, tau_samples, values, left=0.0, right=0.0), h, window
        )


def _require_coverage(problem: MellinProblem) -> None:
    """g′ must be negligible within SUPPORT_MARGIN of either window edge."""
    scale = float(np.max(np.abs(problem.gprime))) if problem.gprime.size else 0.0
    if scale == 0.0:
        return
    lo, hi = problem.window
    edge = problem.window_mask & (
        (problem.tau < lo + SUPPORT_MARGIN) | (problem.tau > hi - SUPPORT_MARGIN)
    )
    if np.any(np.abs(problem.gprime[edge]) > COVERAGE_TOL * scale):
        raise CoverageError(
            f"g′ is not negligible within {SUPPORT_MARGIN} of the window {problem.window}"
        )


def to_log_problem(f_plus_uzz: Union[RadialProfile, Callable[[np.ndarray], np.ndarray]],
                   h: float, z: Optional[float] = None,
                   window: Tuple[float, float] = WINDOW) -> MellinProblem:
    """
    g′(τ) = r²·(f + u,zz) at r = e^{−τ}.

    Raises:
        CoverageError: the data reaches the window margins
    """
    evaluate = f_plus_uzz.evaluate if isinstance(f_plus_uzz, RadialProfile) else f_plus_uzz

    def gprime(tau: np.ndarray) -> np.ndarray:
        r = np.exp(-tau)
        return r ** 2 * np.asarray(evaluate(r), dtype=float)

    problem = MellinProblem.from_gprime(gprime, h, window)
    return replace(problem, z=z)


# ---------------------------------------------------------------------------
# Solve
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelSolution:
    """u_h on the padded grid together with its tilted spectrum."""
    problem: MellinProblem
    sigma: np.ndarray
    u_hat: np.ndarray  # spectrum of e^{hτ}u on the line Im λ = h
    u_full: np.ndarray

    @property
    def h(self) -> float:
        return self.problem.h

    @property
    def tau(self) -> np.ndarray:
        return self.problem.tau[self.problem.window_mask]

    @property
    def u(self) -> np.ndarray:
        return self.u_full[self.problem.window_mask]

    @property
    def r(self) -> np.ndarray:
        return np.exp(-self.tau)

    def derivatives(self, order: int) -> np.ndarray:
        """∂τ^order u on the padded grid, spectrally through the tilt."""
        tilt = np.exp(self.h * self.problem.tau)
        v = [np.real(sfft.ifft((1j * self.sigma) ** m * self.u_hat)) for m in range(order + 1)]
        if order == 0:
            tilted = v[0]
        elif order == 1:
            tilted = v[1] - self.h * v[0]
        elif order == 2:
            tilted = v[2] - 2.0 * self.h * v[1] + self.h ** 2 * v[0]
        else:
            raise PreconditionError("spectral derivatives are provided up to order 2")
        return tilted / tilt

    def at_radii(self, r: np.ndarray) -> np.ndarray:
        return np.interp(-np.log(r), self.problem.tau, self.u_full)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"tau": self.tau, "r": self.r, "u": self.u})


def _spectrum(problem: MellinProblem) -> Tuple[np.ndarray, np.ndarray]:
    sigma = 2.0 * np.pi * sfft.fftfreq(problem.tau.size, d=problem.dtau)
    tilted = np.exp(problem.h * problem.tau) * problem.gprime
    return sigma, sfft.fft(tilted)


def solve_model(problem: MellinProblem) -> ModelSolution:
    """
    Multiply the tilted spectrum by R(σ + ih) and undo the tilt.

    Raises:
        PoleGuardError: h within 0.05 of 0 or −2
    """
    guard_height(problem.h)
    sigma, g_hat = _spectrum(problem)
    if problem.is_zero():
        zeros = np.zeros_like(problem.tau)
        return ModelSolution(problem, sigma, np.zeros_like(g_hat), zeros)
    u_hat = Resolvent().on_line(sigma, problem.h) * g_hat
    u_full = np.real(sfft.ifft(u_hat)) * np.exp(-problem.h * problem.tau)
    logger.debug("model solve h=%.3f: max|u|=%.3e", problem.h, np.max(np.abs(u_full)))
    return ModelSolution(problem, sigma, u_hat, u_full)


def model_residual(solution: ModelSolution, fraction: float = 0.8) -> float:
    """max |−u″ + 2u′ − g′| / max |g′| over the inner part of the window."""
    problem = solution.problem
    scale = float(np.max(np.abs(problem.gprime)))
    if scale == 0.0:
        return float(np.max(np.abs(solution.u_full)))
    residual = -solution.derivatives(2) + 2.0 * solution.derivatives(1) - problem.gprime
    mask = problem.inner_mask(fraction)
    return float(np.max(np.abs(residual[mask])) / scale)


def residue_constant(problem: MellinProblem) -> float:
    """c₀ = √(2π)/2 · ĝ′(0) = ½ ∫ g′ dτ, the jump across the pole λ = 0."""
    g_hat0 = np.sum(problem.gprime) * problem.dtau / np.sqrt(2.0 * np.pi)
    return float(np.sqrt(2.0 * np.pi) / 2.0 * g_hat0)


# ---------------------------------------------------------------------------
# Norms on the contour
# ---------------------------------------------------------------------------

def _contour_norm(spectrum: np.ndarray, sigma: np.ndarray, h: float, k: int,
                  dtau: float) -> float:
    """Σ_{i≤k} ∫ |λ|^{2i} |û(σ + ih)|² dσ from the discrete spectrum."""
    lam = sigma + 1j * h
    weight = sum(np.abs(lam) ** (2 * i) for i in range(k + 1))
    n = sigma.size
    # discrete Parseval: Σ|x|²Δτ = Σ|X|²Δτ/n
    return float(np.sum(weight * np.abs(spectrum) ** 2) * dtau / n)


# antisymmetric eighth-order first-derivative stencil, offsets 1..4
_CENTRAL_D1 = ((1, 4.0 / 5.0), (2, -1.0 / 5.0), (3, 4.0 / 105.0), (4, -1.0 / 280.0))


def tau_derivative(values: np.ndarray, dtau: float) -> np.ndarray:
    """∂τ by eighth-order central differences on the periodic τ-grid."""
    out = np.zeros_like(values)
    for offset, weight in _CENTRAL_D1:
        out += weight * (np.roll(values, -offset) - np.roll(values, offset))
    return out / dtau


def parseval_check(problem: MellinProblem, k: int = 0) -> Tuple[float, float, float]:
    """
    Weighted τ-norm Σ_{i≤k} ∫|∂τⁱg′|² e^{2hτ} dτ against its contour form.

    The τ side differentiates g′ on the grid and applies the weight there;
    the contour side weights the tilted spectrum by |λ|^{2i}. For data
    resolved by the grid the two agree to 1e−8 relative.

    Returns:
        (tau_side, contour_side, relative gap)
    """
    guard_height(problem.h)
    sigma, g_hat = _spectrum(problem)
    weight = np.exp(problem.h * problem.tau)
    current = problem.gprime
    tau_side = 0.0
    for i in range(k + 1):
        if i:
            current = tau_derivative(current, problem.dtau)
        tau_side += float(np.sum((weight * current) ** 2) * problem.dtau)
    contour_side = _contour_norm(g_hat, sigma, problem.h, k, problem.dtau)
    scale = max(tau_side, contour_side)
    gap = abs(tau_side - contour_side) / scale if scale > 0 else 0.0
    if gap > PARSEVAL_TOL:
        logger.warning("Parseval gap %.2e at h=%.2f, k=%d: g′ is under-resolved", gap, problem.h, k)
    return tau_side, contour_side, gap


def lemma_bound(problem: MellinProblem, k: int = 0) -> Tuple[float, float, float]:
    """
    ‖u‖²_{H^{k+2}} against ‖g′‖²_{H^k} in the τ-weighted norms on Im λ = h.

    Returns:
        (lhs, rhs, lhs/rhs); zero data gives (0, 0, 0).
    """
    solution = solve_model(problem)
    if problem.is_zero():
        return 0.0, 0.0, 0.0
    sigma, g_hat = _spectrum(problem)
    lhs = _contour_norm(solution.u_hat, sigma, problem.h, k + 2, problem.dtau)
    rhs = _contour_norm(g_hat, sigma, problem.h, k, problem.dtau)
    return lhs, rhs, lhs / rhs


# ---------------------------------------------------------------------------
# Band differences
# ---------------------------------------------------------------------------

@dataclass
class BandDifference:
    h1: float
    h2: float
    tau: np.ndarray
    difference: np.ndarray
    c0_estimate: float
    u1_at_zero: float
    residue: float
    constancy_stddev: float
    axis_slope: Optional[float] = None

    def to_dict(self) -> Dict:
        out = {
            "h1": self.h1,
            "h2": self.h2,
            "c0": self.c0_estimate,
            "u1_at_zero": self.u1_at_zero,
            "residue": self.residue,
            "constancy_stddev": self.constancy_stddev,
        }
        if self.axis_slope is not None:
            out["axis_slope"] = self.axis_slope
        return out


def _as_problem(gprime: Union[MellinProblem, Callable[[np.ndarray], np.ndarray]],
                h: float) -> MellinProblem:
    if isinstance(gprime, MellinProblem):
        return gprime.with_height(h)
    return MellinProblem.from_gprime(gprime, h)


def _band_pair(gprime, h1: float, h2: float) -> Tuple[BandDifference, ModelSolution]:
    guard_height(h1)
    guard_height(h2)
    u1 = solve_model(_as_problem(gprime, h1))
    u2 = solve_model(_as_problem(gprime, h2))
    problem = u1.problem
    mask = problem.inner_mask()
    difference = u1.u_full - u2.u_full
    inner = difference[mask]
    c0 = float(np.mean(inner))
    tail = problem.window_mask & (problem.tau >= problem.window[1] - 1.0)
    report = BandDifference(
        h1=h1,
        h2=h2,
        tau=u1.tau,
        difference=difference[problem.window_mask],
        c0_estimate=c0,
        u1_at_zero=float(np.mean(u1.u_full[tail])),
        residue=residue_constant(problem),
        constancy_stddev=float(np.std(inner)),
    )
    logger.info("band difference h1=%.3f h2=%.3f: c0=%.6e (residue %.6e)",
                h1, h2, report.c0_estimate, report.residue)
    return report, u2


def band_difference(gprime, h1: float, h2: float) -> BandDifference:
    """
    u₁ − u₂ for contours below (h1 ∈ (−1, 0)) and above (h2 ∈ (0, 1)) the pole λ = 0.

    The difference is the constant c₀, which also equals u₁ on the axis.
    """
    guard_height(h1)
    guard_height(h2)
    if not (-1.0 < h1 < 0.0 and 0.0 < h2 < 1.0):
        raise PreconditionError(f"need h1 in (-1, 0) and h2 in (0, 1), got {h1}, {h2}")
    report, _ = _band_pair(gprime, h1, h2)
    return report


def k1_band_difference(gprime, hbar1: float, hbar2: float) -> BandDifference:
    """As band_difference for the bands h̄₁ ∈ (−1, 0), h̄₂ ∈ (0, 2), plus ∂ᵣū₂ near the axis."""
    guard_height(hbar1)
    guard_height(hbar2)
    if not (-1.0 < hbar1 < 0.0 and 0.0 < hbar2 < 2.0):
        raise PreconditionError(f"need hbar1 in (-1, 0) and hbar2 in (0, 2), got {hbar1}, {hbar2}")
    report, u2 = _band_pair(gprime, hbar1, hbar2)
    problem = u2.problem
    tail = problem.window_mask & (problem.tau >= problem.window[1] - 1.0)
    # ∂ᵣu = −e^{τ} ∂τu
    slope = np.exp(problem.tau[tail]) * u2.derivatives(1)[tail]
    report.axis_slope = float(np.max(np.abs(slope))) if slope.size else 0.0
    return report

"""Functional-inequality probes and total-variation lower bounds:
Rayleigh-quotient Poincare witnesses, mixture/perturbation log-Sobolev upper
bounds, mass facts for the unimodal target, and the TV lower-bound formulas
with the chi-square ladder control."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from ._quad import integrate_log_segments
from .distributions import (
    GaussianSpec,
    GeometricPath,
    PotentialSpec,
    SmoothedUniformSpec,
    as_potential,
    make_contaminated_target,
)

_SQRT_2LOG2 = math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class TestFunction:
    """Bounded piecewise-linear test function with closed-form derivative.

    Constant extension outside the breakpoint range; the derivative is the
    segment slope, zero outside.
    """

    breakpoints: tuple
    values: tuple
    kind: str = "custom"

    def __post_init__(self):
        xs = np.asarray(self.breakpoints, dtype=float)
        ys = np.asarray(self.values, dtype=float)
        if xs.ndim != 1 or xs.size < 2 or xs.shape != ys.shape:
            raise ValueError("need matching breakpoint/value tables, length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(map(float, xs)))
        object.__setattr__(self, "values", tuple(map(float, ys)))

    def value(self, x):
        xs = np.asarray(self.breakpoints)
        ys = np.asarray(self.values)
        return np.interp(np.asarray(x, dtype=float), xs, ys)

    def derivative(self, x):
        xs = np.asarray(self.breakpoints)
        ys = np.asarray(self.values)
        slopes = np.diff(ys) / np.diff(xs)
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, slopes.size - 1)
        out = np.where((x <= xs[0]) | (x >= xs[-1]), 0.0, slopes[idx])
        return out


def tent(left: float, right: float, high: float = 1.0, low: float = 0.0) -> TestFunction:
    """Value ``high`` before ``left``, linear down to ``low`` at ``right``."""
    return TestFunction(breakpoints=(left, right), values=(high, low), kind="tent")


def unimodal_witness(m: float, a: float = 1.0 / math.sqrt(2.0)) -> TestFunction:
    """The certified witness for the contaminated target: 1 below
    m(1-a)/2, linearly down to 0 at m(1-a)."""
    return tent(m * (1.0 - a) / 2.0, m * (1.0 - a))


DensityLike = Union[PotentialSpec, GaussianSpec, SmoothedUniformSpec, "object"]


def _log_density_window(density, lam: Optional[float]):
    """(vectorized unnormalized log-density, window) for a 1D density."""
    if isinstance(density, GeometricPath):
        if lam is None:
            raise ValueError("a GeometricPath density needs a lambda")
        lo, hi = density.mass_window(lam)
        return (lambda t: density.unnormalized_log_density(lam, t[:, None])), (lo, hi)
    spec = as_potential(density)
    if spec.dim != 1:
        raise ValueError("Rayleigh probes are 1D only")
    r = spec.mass_radius()
    return (lambda t: -spec.potential(t[:, None])), (-r, r)


def rayleigh_poincare_lower(density, psi: TestFunction, lam: Optional[float] = None) -> float:
    """Var_q(psi) / |psi'|^2_{L2(q)} — a certified lower bound on the
    Poincare constant of q, up to quadrature error.

    All moments are computed in log space on a truncated window split at the
    test function's breakpoints; the test function is shifted to be
    nonnegative first (the quotient is shift-invariant).
    """
    logq, (lo, hi) = _log_density_window(density, lam)
    shift = min(psi.values)
    pts = sorted({lo, hi, *(b for b in psi.breakpoints if lo < b < hi)})

    def log_moment(weight_log):
        return integrate_log_segments(lambda t: logq(t) + weight_log(t), pts)

    log_z = integrate_log_segments(logq, pts)
    with np.errstate(divide="ignore"):
        log_m1 = log_moment(lambda t: np.log(np.maximum(psi.value(t) - shift, 0.0)))
        log_m2 = log_moment(lambda t: 2.0 * np.log(np.maximum(psi.value(t) - shift, 0.0)))
        log_energy = log_moment(lambda t: 2.0 * np.log(np.abs(psi.derivative(t))))
    if log_energy == -np.inf:
        raise ValueError("degenerate test function: zero Dirichlet energy")
    var = math.exp(log_m2 - log_z) - math.exp(2.0 * (log_m1 - log_z))
    energy = math.exp(log_energy - log_z)
    return var / energy


def thm3_poincare_bound(m: float, lam: float) -> float:
    """Closed-form Poincare lower bound for the tempered contaminated path:
    (1/(4e4 m)) exp(m^2 (1-lambda)/100) - m^2 (may be negative = vacuous)."""
    if m < 10:
        raise ValueError("requires m >= 10")
    if not 0.5 <= lam <= 1.0:
        raise ValueError("requires lambda in [1/2, 1]")
    return math.exp(m * m * (1.0 - lam) / 100.0) / (4.0e4 * m) - m * m


def lsi_mixture_upper(p: float, c0: float, c1: float, chi2_01: float) -> float:
    """Mixture log-Sobolev upper bound
    max{(1 + (1-p) lam_p) C0, (1 + p lam_p (1 + chi2)) C1} with
    lam_p = (log p - log(1-p))/(2p - 1), lam_{1/2} = 2."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    if c0 < 0 or c1 < 0 or chi2_01 < 0:
        raise ValueError("constants must be nonnegative")
    if p == 0.5:
        lam_p = 2.0
    else:
        lam_p = (math.log(p) - math.log1p(-p)) / (2.0 * p - 1.0)
    return max((1.0 + (1.0 - p) * lam_p) * c0, (1.0 + p * lam_p * (1.0 + chi2_01)) * c1)


def lsi_um_upper(m: float) -> float:
    """Perturbation upper bound on the log-Sobolev constant of u_m at
    r = 1/m: (1/alpha_r) exp(alpha_r (3m/2 + r)^2 + r^2/2) with
    alpha_r = r/(2r + 3m); asserted <= 16 m^2."""
    if m < 1:
        raise ValueError("requires m >= 1")
    r = 1.0 / m
    alpha_r = r / (2.0 * r + 3.0 * m)
    value = math.exp(alpha_r * (1.5 * m + r) ** 2 + 0.5 * r * r) / alpha_r
    if value > 16.0 * m * m:
        raise AssertionError(
            f"perturbation evaluation {value:.6g} exceeds 16 m^2 = {16 * m * m:.6g}; "
            "formula transcription bug"
        )
    return value


def lsi_pi_upper(m: float, a: float) -> float:
    """Log-Sobolev upper bound for the contaminated target:
    81 a^2 m^5 / (1 - 2 exp(-a^2 m^2 / 2)); at a = sqrt(2 log 2)/m the
    denominator vanishes and the printed convention returns 324 m^3."""
    if m < 10:
        raise ValueError("requires m >= 10")
    expo = 0.5 * a * a * m * m
    if abs(a - _SQRT_2LOG2 / m) < 1e-12:
        return 324.0 * m ** 3
    denom = 1.0 - 2.0 * math.exp(-expo)
    if denom <= 0:
        raise ValueError("requires a^2 m^2 > 2 log 2")
    return 81.0 * a * a * m ** 5 / denom


def chi2_gauss_um(m: float) -> float:
    """chi^2(N(m,1), u_m) by log-space quadrature of p^2/q; asserts the
    value + 1 <= 5m."""
    if m < 4:
        raise ValueError("requires m >= 4")
    gauss = GaussianSpec(mean=[m], covariance=[[1.0]]).as_potential()
    um = SmoothedUniformSpec(m=m).as_potential()

    def log_integrand(t):
        x = t[:, None]
        logp = -gauss.potential(x) - gauss.closed_form_partition
        logq = -um.potential(x) - um.closed_form_partition
        return 2.0 * logp - logq

    # integrand decays like exp(-(x-m)^2 + d(x,I_m)^2/2): sub-Gaussian on
    # both sides once the window clears the plateau
    lo, hi = -m - 40.0, 2.0 * m + 40.0
    pts = [lo, -m, 2.0 * m, hi]
    log_ratio = integrate_log_segments(log_integrand, pts)
    value = math.exp(log_ratio) - 1.0
    if value + 1.0 > 5.0 * m:
        raise AssertionError(
            f"chi^2 + 1 = {value + 1.0:.6g} exceeds 5m = {5 * m:.6g}; quadrature bug"
        )
    return value


def chi2_ladder_bound(c: float, lam_k: float) -> float:
    """chi^2(p_0^k, mu_k) <= C^{lambda_k} - 1 under nu <= C pi."""
    if c < 1.0:
        raise ValueError("requires C >= 1 (pointwise domination nu <= C pi)")
    if not 0.0 <= lam_k <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    return c ** lam_k - 1.0


@dataclass(frozen=True)
class TVLowerInput:
    """Ingredients of the general TV lower bound."""

    interval: tuple  # I = [a, b]
    score_bound: float  # B
    delta: Union[float, tuple]  # mass bound, scalar or per level
    levels: tuple  # lambda_k
    inner_times: tuple  # T_k
    chi2_constant: float = 1.0  # C of the ladder lemma

    def __post_init__(self):
        a, b = self.interval
        if not a < b:
            raise ValueError("interval must satisfy a < b")
        if self.score_bound < 0:
            raise ValueError("score bound must be nonnegative")
        levels = tuple(map(float, self.levels))
        times = tuple(map(float, self.inner_times))
        if len(levels) != len(times):
            raise ValueError("levels and inner_times lengths differ")
        if np.any(np.diff(np.asarray(levels)) < -1e-12):
            raise ValueError("levels must be non-decreasing")
        deltas = self.delta if isinstance(self.delta, (tuple, list)) else (self.delta,) * len(levels)
        if len(deltas) != len(levels):
            raise ValueError("delta must be scalar or one per level")
        if any(d < 0 for d in deltas):
            raise ValueError("delta must be nonnegative")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "inner_times", times)
        object.__setattr__(self, "delta", tuple(map(float, deltas)))


def general_tv_lower(
    inp: TVLowerInput,
    pi_upper_mass: float,
    pi_interval_mass: float,
    nu_upper_mass: float,
    chi2_per_level: Sequence[float],
) -> List[float]:
    """Per-level TV lower bound
    pi([b, inf)) - pi(I) - nu([b, inf)) - delta_k
      - (B/(b-a)) sqrt(delta_k) sum_{i<=k} T_i sqrt(chi2_i + 1).

    Raw formula values are returned, negative (vacuous) ones included.
    """
    if len(chi2_per_level) != len(inp.levels):
        raise ValueError("chi2_per_level length must match the ladder")
    a, b = inp.interval
    coef = inp.score_bound / (b - a)
    running = 0.0
    out = []
    for t_k, chi2, delta in zip(inp.inner_times, chi2_per_level, inp.delta):
        running += t_k * math.sqrt(chi2 + 1.0)
        out.append(
            pi_upper_mass
            - pi_interval_mass
            - nu_upper_mass
            - delta
            - coef * math.sqrt(delta) * running
        )
    return out


def thm5_value(m: float, total_time: float) -> float:
    """Bimodal specialization: 1/20 - 16 exp(-m^2/64) * sum T_k (m >= 11)."""
    if m < 11:
        raise ValueError("requires m >= 11")
    return 0.05 - 16.0 * math.exp(-m * m / 64.0) * total_time


def thm6_value(m: float, lam_k: float, cum_time: float) -> float:
    """Unimodal specialization with delta_k = 6 m^3 exp(-(1-lambda_k) m^2/10):
    1/5 - delta_k - 10 m sqrt(delta_k) * sum_{i<=k} T_i (m >= 4)."""
    if m < 4:
        raise ValueError("requires m >= 4")
    delta = 6.0 * m ** 3 * math.exp(-(1.0 - lam_k) * m * m / 10.0)
    return 0.2 - delta - 10.0 * m * math.sqrt(delta) * cum_time


@dataclass(frozen=True)
class FactCheck:
    name: str
    applicable: bool
    log_computed: float
    log_bound: float
    direction: str  # "<=" or ">="

    @property
    def satisfied(self) -> bool:
        if not self.applicable:
            return True
        if self.direction == "<=":
            return self.log_computed <= self.log_bound + 1e-9
        return self.log_computed >= self.log_bound - 1e-9


@dataclass(frozen=True)
class UnimodalFactReport:
    m: float
    a: float
    lam: float
    log_c: float
    log_left: float
    log_mid: float
    log_right: float
    facts: tuple

    @property
    def all_satisfied(self) -> bool:
        return all(f.satisfied for f in self.facts)


def verify_unimodal_facts(m: float, a: float, lam: float) -> UnimodalFactReport:
    """Quadrature check of the four mass facts for the tempered contaminated
    target, each reported with its applicability condition."""
    target = make_contaminated_target(m, a)
    path = GeometricPath.from_specs(GaussianSpec(mean=[0.0], covariance=[[1.0]]), target)
    log_c = path.log_partition(lam)
    left_edge = m * (1.0 - a) / 2.0
    right_edge = m * (1.0 - a)
    lo, hi = path.mass_window(lam)
    kinks = (-m, 2.0 * m)
    log_left = path.log_mass(lam, lo, left_edge, breakpoints=kinks)
    log_mid = path.log_mass(lam, left_edge, right_edge, breakpoints=kinks)
    log_right = path.log_mass(lam, right_edge, hi, breakpoints=kinks)

    am2 = 0.5 * lam * a * a * m * m
    facts = []
    facts.append(
        FactCheck(
            name="interval_mass_upper",
            applicable=True,
            log_computed=log_mid,
            log_bound=math.log(5.0 * a * m * m)
            + log_c
            - am2
            - (1.0 - lam) * (1.0 - a) ** 2 * m * m / 8.0,
            direction="<=",
        )
    )
    facts.append(
        FactCheck(
            name="left_mass_lower",
            applicable=1.0 >= a + 2.0 / m,
            log_computed=log_left,
            log_bound=log_c - am2 - math.log(10.0 * m),
            direction=">=",
        )
    )
    facts.append(
        FactCheck(
            name="right_mass_lower",
            applicable=1.0 <= a + 2.0 * lam - 2.0 / m,
            log_computed=log_right,
            log_bound=log_c - math.log(2.0) - 0.5 * lam * (1.0 - lam) * m * m,
            direction=">=",
        )
    )
    sandwich_lo = -float(
        logsumexp([-am2, -0.5 * lam * (1.0 - lam) * m * m]) + math.log(4.0)
    )
    facts.append(
        FactCheck(
            name="partition_lower",
            applicable=True,
            log_computed=log_c,
            log_bound=sandwich_lo,
            direction=">=",
        )
    )
    facts.append(
        FactCheck(
            name="partition_upper",
            applicable=True,
            log_computed=log_c,
            log_bound=math.log(10.0 * m) + am2,
            direction="<=",
        )
    )
    return UnimodalFactReport(
        m=m,
        a=a,
        lam=lam,
        log_c=log_c,
        log_left=log_left,
        log_mid=log_mid,
        log_right=log_right,
        facts=tuple(facts),
    )

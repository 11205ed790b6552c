"""Tempering schedules: continuous lambda(t) with a weak derivative, the
optimal and linear schedules, the Phi-parametrization, and discretization
into temperature ladders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._quad import _panel_nodes
from .errors import QuadratureError


@dataclass(frozen=True)
class Schedule:
    """Non-decreasing map s in [0, horizon] -> lambda in [0, 1].

    ``derivative`` is the weak derivative (piecewise continuous, >= 0);
    ``knots`` lists the points where it may jump, so integrators can split
    panels there.
    """

    horizon: float
    kind: str
    value_fn: Callable[[np.ndarray], np.ndarray]
    derivative_fn: Callable[[np.ndarray], np.ndarray]
    knots: tuple = ()

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    def _check_range(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < -1e-12) or np.any(s > self.horizon * (1 + 1e-12) + 1e-12):
            raise ValueError(f"time outside [0, {self.horizon}]")
        return s

    def value(self, s):
        s = self._check_range(s)
        out = np.clip(self.value_fn(s), 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        s = self._check_range(s)
        out = self.derivative_fn(s)
        return float(out) if np.ndim(out) == 0 else out

    def segment_points(self, t: float) -> list:
        """Sorted [0, t] boundary points including interior knots."""
        pts = [0.0] + [k for k in self.knots if 0.0 < k < t] + [float(t)]
        return sorted(set(pts))


def constant_schedule(level: float, horizon: float, kind: str = "constant") -> Schedule:
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    return Schedule(
        horizon=horizon,
        kind=kind,
        value_fn=lambda s: np.full_like(np.asarray(s, dtype=float), level),
        derivative_fn=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
    )


def linear_schedule(t_end: float) -> Schedule:
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    return Schedule(
        horizon=t_end,
        kind="linear",
        value_fn=lambda s: np.asarray(s, dtype=float) / t_end,
        derivative_fn=lambda s: np.full_like(np.asarray(s, dtype=float), 1.0 / t_end),
    )


def optimal_schedule(alpha_nu: float, alpha_pi: float, horizon: float = 1.0) -> Schedule:
    """Schedule minimizing the G-functional under strong log-concavity.

    lambda(s) = min(alpha_nu/(alpha_nu - alpha_pi) * (1 + alpha_nu s)/(2 + alpha_nu s), 1),
    clamped to the constant-1 (vanilla) schedule whenever alpha_pi >= alpha_nu/2.
    The shape does not depend on the horizon; ``horizon`` only sets the domain.
    """
    if alpha_nu <= 0 or alpha_pi <= 0:
        raise ValueError("alpha_nu and alpha_pi must be positive")
    if alpha_pi >= alpha_nu:
        return constant_schedule(1.0, horizon, kind="vanilla")
    c = alpha_nu / (alpha_nu - alpha_pi)
    if alpha_pi >= alpha_nu / 2.0:
        # c/2 >= 1: clamped from s = 0 onward
        return constant_schedule(1.0, horizon, kind="optimal")
    s_clamp = (alpha_nu - 2.0 * alpha_pi) / (alpha_nu * alpha_pi)

    def value(s):
        s = np.asarray(s, dtype=float)
        return np.minimum(c * (1.0 + alpha_nu * s) / (2.0 + alpha_nu * s), 1.0)

    def derivative(s):
        s = np.asarray(s, dtype=float)
        raw = c * alpha_nu / (2.0 + alpha_nu * s) ** 2
        # weak derivative: 0 at and past the clamp point
        return np.where(s < s_clamp, raw, 0.0)

    knots = (s_clamp,) if s_clamp < horizon else ()
    return Schedule(
        horizon=horizon,
        kind="optimal",
        value_fn=value,
        derivative_fn=derivative,
        knots=knots,
    )


def piecewise_linear_schedule(
    s_points: Sequence[float], lam_points: Sequence[float], kind: str = "custom"
) -> Schedule:
    """Monotone piecewise-linear schedule through (s_i, lambda_i) tables."""
    s = np.asarray(s_points, dtype=float)
    lam = np.asarray(lam_points, dtype=float)
    if s.ndim != 1 or s.size < 2 or s.shape != lam.shape:
        raise ValueError("need matching 1D tables with at least two points")
    if np.any(np.diff(s) <= 0):
        raise ValueError("s points must be strictly increasing")
    if np.any(np.diff(lam) < -1e-12):
        raise ValueError("lambda values must be non-decreasing")
    if lam.min() < -1e-12 or lam.max() > 1 + 1e-12:
        raise ValueError("lambda values must lie in [0, 1]")
    if s[0] != 0.0:
        raise ValueError("schedule table must start at s = 0")
    slopes = np.diff(lam) / np.diff(s)

    def value(t):
        return np.interp(np.asarray(t, dtype=float), s, lam)

    def derivative(t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(s, t, side="right") - 1, 0, slopes.size - 1)
        return np.maximum(slopes[idx], 0.0)

    return Schedule(
        horizon=float(s[-1]),
        kind=kind,
        value_fn=value,
        derivative_fn=derivative,
        knots=tuple(s[1:-1]),
    )


def alpha_along(schedule: Schedule, alpha_nu: float, alpha_pi: float, s):
    """Affine strong-log-concavity lower bound (1-lambda_s) a_nu + lambda_s a_pi."""
    lam = schedule.value(s)
    return (1.0 - lam) * alpha_nu + lam * alpha_pi


@dataclass(frozen=True)
class TemperatureLadder:
    """Discrete levels lambda_1 <= ... <= lambda_K with per-level budgets.

    ``budget_kind`` distinguishes step sizes h_k (one discrete step per
    level) from inner times T_k (a stretch of fixed-level dynamics per
    level).  ``lambda0`` is the level the initial law is compared against.
    """

    levels: tuple
    inner_budgets: tuple
    budget_kind: str = "step_size"
    lambda0: float = 0.0

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        budgets = tuple(float(b) for b in self.inner_budgets)
        if len(levels) != len(budgets):
            raise ValueError("levels and inner_budgets lengths differ")
        if not levels:
            raise ValueError("ladder needs at least one level")
        if any(b <= 0 for b in budgets):
            raise ValueError("inner budgets must be positive")
        arr = np.asarray((self.lambda0,) + levels)
        if np.any(np.diff(arr) < -1e-12):
            raise ValueError("levels must be non-decreasing")
        if arr.min() < 0 or arr.max() > 1:
            raise ValueError("levels must lie in [0, 1]")
        if self.budget_kind not in ("step_size", "inner_time"):
            raise ValueError(f"unknown budget kind {self.budget_kind!r}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "inner_budgets", budgets)

    def __len__(self) -> int:
        return len(self.levels)


def discretize(schedule: Schedule, n_steps: int) -> TemperatureLadder:
    """Uniform right-endpoint sampling: lambda_k = value(k h), h = horizon/n."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    h = schedule.horizon / n_steps
    levels = [float(schedule.value(k * h)) for k in range(1, n_steps + 1)]
    return TemperatureLadder(
        levels=tuple(levels),
        inner_budgets=(h,) * n_steps,
        budget_kind="step_size",
        lambda0=float(schedule.value(0.0)),
    )


@dataclass(frozen=True)
class PhiCurve:
    """Phi_s = exp(-int_s^t alpha), with Phi(t) = 1 and derivative alpha*Phi."""

    horizon: float
    value: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    alpha: Optional[Callable[[np.ndarray], np.ndarray]] = None
    alpha_nu: Optional[float] = None
    alpha_pi: Optional[float] = None


def alpha_antiderivative(
    schedule: Schedule, alpha_fn: Callable[[np.ndarray], np.ndarray], t: float, n_panels: int = 4096
) -> Callable[[np.ndarray], np.ndarray]:
    """Cached antiderivative A(s) = int_0^s alpha, built once per schedule.

    Panels are aligned with schedule knots, so the per-panel Gauss rule sees
    a smooth integrand and the table is accurate to machine precision.
    """
    pts = schedule.segment_points(t)
    edges = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        n = max(8, int(round(n_panels * (hi - lo) / t)))
        edges.append(np.linspace(lo, hi, n + 1)[:-1])
    edges = np.concatenate(edges + [np.asarray([t])])
    order_nodes, order_weights = np.polynomial.legendre.leggauss(12)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    x = mids[:, None] + half[:, None] * order_nodes[None, :]
    w = half[:, None] * order_weights[None, :]
    panel_ints = (alpha_fn(x.ravel()).reshape(x.shape) * w).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(panel_ints)])

    def anti(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, edges.size - 2)
        out = cum[idx].copy()
        # remainder integral from the panel edge to s, same Gauss rule
        lo = edges[idx]
        h2 = 0.5 * (s - lo)
        xs = lo[:, None] + h2[:, None] * (order_nodes[None, :] + 1.0)
        out += (alpha_fn(xs.ravel()).reshape(xs.shape) * h2[:, None] * order_weights[None, :]).sum(
            axis=1
        )
        return out

    return anti


def schedule_to_phi(schedule: Schedule, alpha_nu: float, alpha_pi: float) -> PhiCurve:
    """Phi_s = exp(-int_s^t alpha) along the schedule's affine alpha."""
    if not alpha_pi < alpha_nu:
        raise ValueError("requires alpha_pi < alpha_nu")
    t = schedule.horizon

    def alpha(s):
        return alpha_along(schedule, alpha_nu, alpha_pi, s)

    anti = alpha_antiderivative(schedule, alpha, t)
    total = float(anti(t)[0])

    def value(s):
        out = np.exp(anti(s) - total)
        return float(out[0]) if np.ndim(s) == 0 else out

    def derivative(s):
        out = np.atleast_1d(alpha(s)) * np.atleast_1d(value(s))
        return float(out[0]) if np.ndim(s) == 0 else out

    return PhiCurve(
        horizon=t,
        value=value,
        derivative=derivative,
        alpha=alpha,
        alpha_nu=alpha_nu,
        alpha_pi=alpha_pi,
    )


def phi_to_lambda(phi: PhiCurve, alpha_nu: float, alpha_pi: float):
    """Recover lambda_s = (alpha_nu - Phi'/Phi)/(alpha_nu - alpha_pi)."""

    def lam(s):
        return (alpha_nu - np.atleast_1d(phi.derivative(s)) / np.atleast_1d(phi.value(s))) / (
            alpha_nu - alpha_pi
        )

    return lam


def schedule_to_csv(schedule: Schedule, out_path, n_rows: int = 257) -> None:
    s = np.linspace(0.0, schedule.horizon, n_rows)
    lam = schedule.value(s)
    with open(out_path, "w", newline="") as fh:
        fh.write("s,lambda\n")
        for si, li in zip(s, lam):
            fh.write(f"{si:.17g},{li:.17g}\n")


def schedule_from_csv(path) -> Schedule:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.size < 2:
        raise ValueError("schedule table needs at least two rows")
    names = data.dtype.names
    if names is None or "s" not in names or "lambda" not in names:
        raise ValueError("schedule CSV must have header s,lambda")
    return piecewise_linear_schedule(data["s"], data["lambda"])

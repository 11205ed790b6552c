"""Tempered Langevin simulation (Euler-Maruyama under continuous schedules
and temperature ladders) plus exact Gaussian-law oracles.

Randomness is counter-based: the Gaussian increments for global step k come
from a Philox stream keyed by (seed, k), drawn as one (N, d) block with
numpy's standard_normal transform and a fixed particle ordering.  The noise
for a given (seed, step, particle slot) therefore never depends on how the
drift evaluation is partitioned across threads.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .distributions import GaussianSpec, GeometricPath
from .errors import ExplosionError, GuardViolationError
from .schedules import Schedule, TemperatureLadder

# Dedicated counter value for drawing the initial ensemble, far above any
# reachable step index.
_INIT_STREAM = 1 << 62


def noise_block(seed: int, step_index: int, n: int, d: int) -> np.ndarray:
    """Standard-normal (n, d) block for one global step, counter-keyed."""
    key = (int(seed) & ((1 << 64) - 1)) << 64 | (int(step_index) & ((1 << 64) - 1))
    gen = np.random.Generator(np.random.Philox(key=key))
    return gen.standard_normal((n, d))


def thread_count() -> int:
    """Parallelism cap from TEMPER_LAB_THREADS (default 1)."""
    raw = os.environ.get("TEMPER_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _sharded(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Evaluate a pure per-particle map, optionally sharded across threads.

    The result is assembled in particle order, so it is bit-identical for
    every shard count.
    """
    n_threads = thread_count()
    if n_threads == 1 or x.shape[0] < 4 * n_threads:
        return fn(x)
    from concurrent.futures import ThreadPoolExecutor

    shards = np.array_split(np.arange(x.shape[0]), n_threads)
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        parts = list(pool.map(lambda idx: fn(x[idx]), shards))
    return np.concatenate(parts, axis=0)


@dataclass
class ParticleEnsemble:
    """N particle states in d dimensions plus the stream bookkeeping."""

    states: np.ndarray
    seed: int
    step_count: int = 0
    clock: float = 0.0

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if self.states.shape[0] < 1:
            raise ValueError("need at least one particle")

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(
            states=self.states.copy(),
            seed=self.seed,
            step_count=self.step_count,
            clock=self.clock,
        )


def initial_ensemble(p0: GaussianSpec, n_particles: int, seed: int) -> ParticleEnsemble:
    """Draw X_0 ~ p0 from the dedicated init stream."""
    z = noise_block(seed, _INIT_STREAM, n_particles, p0.dim)
    chol = np.linalg.cholesky(p0.covariance)
    return ParticleEnsemble(states=p0.mean + z @ chol.T, seed=seed)


def step_tempered(
    ensemble: ParticleEnsemble,
    path: GeometricPath,
    lam_next: float,
    h: float,
    noise: Optional[np.ndarray] = None,
) -> ParticleEnsemble:
    """One Euler-Maruyama step toward mu_{lam_next}:
    X <- X + h * tempered_score(X) + sqrt(2h) * eps."""
    if h < 0:
        raise ValueError("step size must be nonnegative")
    if not 0.0 <= lam_next <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    x = ensemble.states
    if h == 0.0:
        return ensemble.copy()
    if noise is None:
        noise = noise_block(ensemble.seed, ensemble.step_count, *x.shape)
    # overflow here is the explosion signal itself, reported just below
    with np.errstate(over="ignore", invalid="ignore"):
        drift = _sharded(lambda pts: path.tempered_score(lam_next, pts), x)
        new = x + h * drift + math.sqrt(2.0 * h) * noise
    if not np.all(np.isfinite(new)):
        bad = int(np.nonzero(~np.isfinite(new).all(axis=1))[0][0])
        raise ExplosionError(bad, ensemble.step_count, ensemble.clock + h)
    return ParticleEnsemble(
        states=new,
        seed=ensemble.seed,
        step_count=ensemble.step_count + 1,
        clock=ensemble.clock + h,
    )


def step_ula(
    ensemble: ParticleEnsemble,
    target_score: Callable[[np.ndarray], np.ndarray],
    h: float,
    noise: Optional[np.ndarray] = None,
) -> ParticleEnsemble:
    """Plain unadjusted Langevin step toward a fixed target (reference
    implementation; a constant-1 tempered step must match it bitwise)."""
    x = ensemble.states
    if noise is None:
        noise = noise_block(ensemble.seed, ensemble.step_count, *x.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        new = x + h * target_score(x) + math.sqrt(2.0 * h) * noise
    if not np.all(np.isfinite(new)):
        bad = int(np.nonzero(~np.isfinite(new).all(axis=1))[0][0])
        raise ExplosionError(bad, ensemble.step_count, ensemble.clock + h)
    return ParticleEnsemble(
        states=new,
        seed=ensemble.seed,
        step_count=ensemble.step_count + 1,
        clock=ensemble.clock + h,
    )


def _tempered_constants(path: GeometricPath, lam: float) -> Tuple[float, float]:
    """(alpha_k lower bound, L_k) from the endpoint constants."""
    a_nu = path.proposal.strong_convexity
    a_pi = path.target.strong_convexity
    if a_nu is None or a_pi is None:
        raise GuardViolationError(
            "guarded policy needs strong-convexity constants on both endpoints"
        )
    alpha = (1.0 - lam) * a_nu + lam * a_pi
    lk = (1.0 - lam) * path.proposal.lipschitz + lam * path.target.lipschitz
    return alpha, lk


def _check_guard(path: GeometricPath, lam: float, h: float) -> None:
    alpha, lk = _tempered_constants(path, lam)
    a_min = min(path.proposal.dissipativity[0], path.target.dissipativity[0])
    l_sum = path.proposal.lipschitz + path.target.lipschitz
    cap = min(alpha / (4.0 * lk * lk), a_min / (2.0 * l_sum * l_sum), 1.0)
    if h > cap * (1.0 + 1e-12):
        raise GuardViolationError(
            f"step size {h:.6g} exceeds the guard {cap:.6g} at lambda={lam:.6g}"
        )


@dataclass
class SimConfig:
    """Simulation setup shared by the schedule and ladder runners."""

    path: GeometricPath
    schedule: Union[Schedule, TemperatureLadder]
    n_particles: int
    seed: int
    initial: GaussianSpec
    step_size: Optional[float] = None
    guarded: bool = False
    snapshot_times: Tuple[float, ...] = ()
    # fixed inner step for ladder levels with time budgets; default
    # 1e-3 * min(1, 1/L_k) per level when None
    inner_step: Optional[float] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if isinstance(self.schedule, Schedule):
            for t in self.snapshot_times:
                if not 0.0 <= t <= self.schedule.horizon * (1 + 1e-9):
                    raise ValueError(f"snapshot time {t} outside horizon")


def run_schedule(config: SimConfig) -> List[Tuple[float, ParticleEnsemble]]:
    """Simulate under a continuous schedule; snapshots at the step times
    nearest each requested snapshot time (always including the final time)."""
    sched = config.schedule
    if not isinstance(sched, Schedule):
        raise TypeError("run_schedule needs a continuous Schedule")
    if config.step_size is None:
        raise ValueError("run_schedule needs an explicit step size")
    h = float(config.step_size)
    n_steps = max(1, int(round(sched.horizon / h)))
    want = sorted({min(n_steps, int(round(t / h))) for t in config.snapshot_times} | {n_steps})
    ens = initial_ensemble(config.initial, config.n_particles, config.seed)
    out: List[Tuple[float, ParticleEnsemble]] = []
    if 0 in want:
        out.append((0.0, ens.copy()))
    for k in range(1, n_steps + 1):
        lam = float(sched.value(min(k * h, sched.horizon)))
        if config.guarded:
            _check_guard(config.path, lam, h)
        ens = step_tempered(ens, config.path, lam, h)
        if k in want:
            out.append((ens.clock, ens.copy()))
    return out


def run_ladder(config: SimConfig) -> List[Tuple[int, ParticleEnsemble]]:
    """Simulate a temperature ladder level by level.

    Step-size budgets run one discrete step per level; inner-time budgets run
    a stretch of fixed-level dynamics with a small fixed inner step.
    """
    ladder = config.schedule
    if not isinstance(ladder, TemperatureLadder):
        raise TypeError("run_ladder needs a TemperatureLadder")
    ens = initial_ensemble(config.initial, config.n_particles, config.seed)
    out: List[Tuple[int, ParticleEnsemble]] = []
    for k, (lam, budget) in enumerate(zip(ladder.levels, ladder.inner_budgets), start=1):
        if ladder.budget_kind == "step_size":
            if config.guarded:
                _check_guard(config.path, lam, budget)
            ens = step_tempered(ens, config.path, lam, budget)
        else:
            h = config.inner_step
            if h is None:
                _, lk = _tempered_constants(config.path, lam)
                h = 1e-3 * min(1.0, 1.0 / lk)
            n_inner = max(1, int(round(budget / h)))
            for _ in range(n_inner):
                if config.guarded:
                    _check_guard(config.path, lam, h)
                ens = step_tempered(ens, config.path, lam, h)
        out.append((k, ens.copy()))
    return out


@dataclass(frozen=True)
class GaussianLaw:
    """Exact Gaussian law of the dynamics at a given time."""

    mean: np.ndarray
    covariance: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-10):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size


def _affine_drift(nu: GaussianSpec, pi: GaussianSpec, lam: float):
    """A, b of the tempered drift -A x + b for Gaussian endpoints."""
    pn, pt = nu.precision, pi.precision
    a_mat = (1.0 - lam) * pn + lam * pt
    b_vec = (1.0 - lam) * (pn @ nu.mean) + lam * (pt @ pi.mean)
    return a_mat, b_vec


def gaussian_moment_flow(
    nu: GaussianSpec,
    pi: GaussianSpec,
    schedule: Schedule,
    p0: GaussianLaw,
    t: float,
    rtol: float = 1e-10,
) -> GaussianLaw:
    """Exact law of the continuous dynamics for Gaussian endpoints:
    dm/dt = -A_t m + b_t, dSigma/dt = -A_t Sigma - Sigma A_t + 2I,
    integrated by fixed-step RK4 with step halving until converged."""
    d = nu.dim
    eye = np.eye(d)
    pts = schedule.segment_points(t)

    def deriv(s, m, sig):
        lam = float(schedule.value(min(s, schedule.horizon)))
        a_mat, b_vec = _affine_drift(nu, pi, lam)
        return -a_mat @ m + b_vec, -a_mat @ sig - sig @ a_mat + 2.0 * eye

    def solve(n_per_unit):
        m = p0.mean.astype(float).copy()
        sig = p0.covariance.astype(float).copy()
        for lo, hi in zip(pts[:-1], pts[1:]):
            n = max(4, int(math.ceil((hi - lo) * n_per_unit)))
            h = (hi - lo) / n
            s = lo
            for _ in range(n):
                k1m, k1s = deriv(s, m, sig)
                k2m, k2s = deriv(s + h / 2, m + h / 2 * k1m, sig + h / 2 * k1s)
                k3m, k3s = deriv(s + h / 2, m + h / 2 * k2m, sig + h / 2 * k2s)
                k4m, k4s = deriv(s + h, m + h * k3m, sig + h * k3s)
                m = m + h / 6 * (k1m + 2 * k2m + 2 * k3m + k4m)
                sig = sig + h / 6 * (k1s + 2 * k2s + 2 * k3s + k4s)
                s += h
        return m, sig

    scale = max(
        1.0,
        float(np.linalg.eigvalsh(nu.precision).max()),
        float(np.linalg.eigvalsh(pi.precision).max()),
    )
    n_per_unit = 16.0 * scale
    prev = None
    for _ in range(12):
        cur = solve(n_per_unit)
        if prev is not None:
            err = max(
                float(np.abs(cur[0] - prev[0]).max()),
                float(np.abs(cur[1] - prev[1]).max()),
            )
            norm = max(1.0, float(np.abs(cur[1]).max()))
            if err <= rtol * norm:
                break
        prev = cur
        n_per_unit *= 2.0
    else:
        raise RuntimeError("moment ODE integrator did not converge")
    m, sig = cur
    return GaussianLaw(mean=m, covariance=0.5 * (sig + sig.T), time=t)


def gaussian_moment_recursion(
    nu: GaussianSpec,
    pi: GaussianSpec,
    ladder: TemperatureLadder,
    p0: GaussianLaw,
) -> List[GaussianLaw]:
    """Exact law after each discrete step:
    m+ = (I - h A_k) m + h b_k, Sigma+ = (I - h A_k) Sigma (I - h A_k)^T + 2h I."""
    if ladder.budget_kind != "step_size":
        raise ValueError("moment recursion needs step-size budgets")
    d = nu.dim
    eye = np.eye(d)
    m = p0.mean.astype(float).copy()
    sig = p0.covariance.astype(float).copy()
    clock = p0.time
    out: List[GaussianLaw] = []
    for lam, h in zip(ladder.levels, ladder.inner_budgets):
        a_mat, b_vec = _affine_drift(nu, pi, lam)
        step_mat = eye - h * a_mat
        m = step_mat @ m + h * b_vec
        sig = step_mat @ sig @ step_mat.T + 2.0 * h * eye
        clock += h
        out.append(GaussianLaw(mean=m, covariance=0.5 * (sig + sig.T), time=clock))
    return out


def ensemble_moments(ensemble: ParticleEnsemble) -> Tuple[np.ndarray, np.ndarray]:
    x = ensemble.states
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, bias=False)
    return mean, np.atleast_2d(cov)


def snapshot_to_csv(ensemble: ParticleEnsemble, out_path, schedule_hash: str = "") -> None:
    """CSV `particle_id,dim_0,...` plus a JSON sidecar with the stream state."""
    d = ensemble.dim
    header = "particle_id," + ",".join(f"dim_{j}" for j in range(d))
    with open(out_path, "w", newline="") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(ensemble.states):
            fh.write(str(i) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")
    sidecar = {
        "seed": int(ensemble.seed),
        "schedule_hash": schedule_hash,
        "clock": float(ensemble.clock),
        "step_count": int(ensemble.step_count),
    }
    with open(str(out_path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def schedule_digest(obj) -> str:
    """Stable digest of a schedule/ladder for snapshot sidecars."""
    if isinstance(obj, TemperatureLadder):
        payload = {
            "levels": list(obj.levels),
            "budgets": list(obj.inner_budgets),
            "kind": obj.budget_kind,
            "lambda0": obj.lambda0,
        }
    elif isinstance(obj, Schedule):
        s = np.linspace(0.0, obj.horizon, 129)
        payload = {"kind": obj.kind, "horizon": obj.horizon, "values": list(map(float, obj.value(s)))}
    else:
        payload = {"repr": repr(obj)}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]

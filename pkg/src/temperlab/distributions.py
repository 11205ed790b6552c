"""Densities of the laboratory: Gaussians, mixtures, the smoothed-uniform
plateau, and geometric interpolants between a proposal and a target.

Conventions
-----------
* Points are arrays of shape (..., dim); potentials map them to shape (...,)
  and scores to shape (..., dim).  For dim=1 a trailing axis is added
  automatically when missing.
* Potentials are defined up to an additive constant.  Anything that needs a
  normalized density goes through ``log_partition`` (or the stored
  closed-form log-normalizer of exp(-V)).
* All mixture/tempered log-densities are computed in log space with
  largest-exponent factoring, so ratios like exp(-m^2/2) at m = 30 survive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ._quad import integrate_log, integrate_log_segments
from .errors import UnsupportedConfigurationError

_LOG_2PI = math.log(2.0 * math.pi)

# Log-density values this far below the running maximum are treated as zero
# when truncating integration windows; exp(-90) ~ 8e-40 relative tail mass.
_WINDOW_DROP = 120.0


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        if dim == 1:
            x = x[..., None]
        else:
            raise ValueError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class PotentialSpec:
    """A log-density known up to a constant, with its regularity constants.

    ``potential`` is V with density proportional to exp(-V); ``score`` is
    -grad V.  ``dissipativity`` is the pair (a, b) with
    <grad V(x), x> >= a|x|^2 - b.  ``closed_form_partition`` is
    log integral exp(-V) when known exactly.
    """

    dim: int
    potential: Callable[[np.ndarray], np.ndarray]
    score: Callable[[np.ndarray], np.ndarray]
    lipschitz: float
    dissipativity: tuple
    strong_convexity: Optional[float] = None
    closed_form_partition: Optional[float] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        a, b = self.dissipativity
        if a <= 0 or b < 0:
            raise ValueError(f"dissipativity pair must have a > 0, b >= 0, got {(a, b)}")

    def potential_at(self, x) -> np.ndarray:
        return np.asarray(self.potential(_as_points(x, self.dim)))

    def score_at(self, x) -> np.ndarray:
        return np.asarray(self.score(_as_points(x, self.dim)))

    def log_density(self, x) -> np.ndarray:
        """Normalized log-density; requires a known log-normalizer."""
        if self.closed_form_partition is None:
            raise UnsupportedConfigurationError(
                "normalized density requires a closed-form log-normalizer"
            )
        return -self.potential_at(x) - self.closed_form_partition

    def mass_radius(self) -> float:
        """Radius beyond which the density is negligible, from dissipativity."""
        a, b = self.dissipativity
        return math.sqrt(b / a) + 25.0 / math.sqrt(min(a, 1.0))


@dataclass(frozen=True)
class GaussianSpec:
    """Mean and covariance of a nondegenerate Gaussian."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.covariance)

    def log_normalizer(self) -> float:
        """log integral of exp(-V) for V = (1/2)(x-mu)^T P (x-mu)."""
        sign, logdet = np.linalg.slogdet(self.covariance)
        return 0.5 * self.dim * _LOG_2PI + 0.5 * logdet

    def as_potential(self) -> PotentialSpec:
        prec = self.precision
        mean = self.mean
        eigs = np.linalg.eigvalsh(prec)
        alpha = float(eigs.min())
        lip = float(eigs.max())
        if np.allclose(mean, 0.0):
            dissip = (alpha, 0.0)
        else:
            # <P(x-mu), x> >= alpha|x|^2 - |P mu||x| >= (alpha/2)|x|^2 - |P mu|^2/(2 alpha)
            pm = float(np.linalg.norm(prec @ mean))
            dissip = (alpha / 2.0, pm * pm / (2.0 * alpha))

        def potential(x):
            d = x - mean
            return 0.5 * np.einsum("...i,ij,...j->...", d, prec, d)

        def score(x):
            return -(x - mean) @ prec

        return PotentialSpec(
            dim=self.dim,
            potential=potential,
            score=score,
            lipschitz=lip,
            dissipativity=dissip,
            strong_convexity=alpha,
            closed_form_partition=self.log_normalizer(),
        )


@dataclass(frozen=True)
class SmoothedUniformSpec:
    """Smoothed uniform on I_m = [-m, 2m]: density prop. to exp(-d(x, I_m)^2 / 2)."""

    m: float

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("m must be positive")

    @property
    def interval(self) -> tuple:
        return (-self.m, 2.0 * self.m)

    def log_normalizer(self) -> float:
        return math.log(3.0 * self.m + math.sqrt(2.0 * math.pi))

    def as_potential(self) -> PotentialSpec:
        lo, hi = self.interval

        def potential(x):
            t = x[..., 0]
            d = np.maximum(lo - t, 0.0) + np.maximum(t - hi, 0.0)
            return 0.5 * d * d

        def score(x):
            t = x[..., 0]
            # One-sided limits give value 0 at the interval endpoints,
            # keeping the score globally 1-Lipschitz.
            s = np.where(t < lo, -(t - lo), 0.0) + np.where(t > hi, -(t - hi), 0.0)
            return s[..., None]

        # <V'(x), x> = 0 on I_m; elsewhere it dominates x^2/2 - 2m^2.
        return PotentialSpec(
            dim=1,
            potential=potential,
            score=score,
            lipschitz=1.0,
            dissipativity=(0.5, 2.0 * self.m * self.m),
            strong_convexity=None,
            closed_form_partition=self.log_normalizer(),
        )


def as_potential(spec) -> PotentialSpec:
    """Coerce any supported density description to a PotentialSpec."""
    if isinstance(spec, PotentialSpec):
        return spec
    if isinstance(spec, (GaussianSpec, SmoothedUniformSpec, MixtureSpec)):
        return spec.as_potential()
    raise TypeError(f"cannot interpret {type(spec).__name__} as a potential")


@dataclass(frozen=True)
class MixtureSpec:
    """Convex combination of normalized components (each with a known
    log-normalizer).  The resulting potential is the exact negative
    log-density, so its own log-normalizer is 0."""

    components: tuple

    def __post_init__(self):
        comps = []
        total = 0.0
        for weight, comp in self.components:
            if not 0.0 < weight <= 1.0:
                raise ValueError(f"component weight {weight} outside (0, 1]")
            pot = as_potential(comp)
            if pot.closed_form_partition is None:
                raise ValueError("mixture components need a closed-form log-normalizer")
            comps.append((float(weight), pot))
            total += weight
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total}, expected 1")
        dims = {pot.dim for _, pot in comps}
        if len(dims) != 1:
            raise ValueError("mixture components must share a dimension")
        object.__setattr__(self, "components", tuple(comps))

    @property
    def dim(self) -> int:
        return self.components[0][1].dim

    def _component_logdensities(self, x: np.ndarray) -> np.ndarray:
        """Stacked normalized component log-densities, shape (C, ...)."""
        rows = [
            math.log(w) - pot.potential(x) - pot.closed_form_partition
            for w, pot in self.components
        ]
        return np.stack(rows, axis=0)

    def as_potential(self) -> PotentialSpec:
        if self.dim != 1:
            raise UnsupportedConfigurationError(
                "mixture regularity constants are only computed in 1D"
            )
        mix = self

        def potential(x):
            return -logsumexp(mix._component_logdensities(x), axis=0)

        def score(x):
            logs = mix._component_logdensities(x)
            # responsibilities via largest-exponent factoring
            logs = logs - logs.max(axis=0, keepdims=True)
            resp = np.exp(logs)
            resp /= resp.sum(axis=0, keepdims=True)
            out = np.zeros_like(x)
            for r, (_, pot) in zip(resp, mix.components):
                out += r[..., None] * pot.score(x)
            return out

        lip, dissip = self._scan_constants(potential, score)
        return PotentialSpec(
            dim=1,
            potential=potential,
            score=score,
            lipschitz=lip,
            dissipativity=dissip,
            strong_convexity=None,
            closed_form_partition=0.0,
        )

    def _scan_constants(self, potential, score):
        """Gradient-Lipschitz and dissipativity constants by dense 1D scan.

        The scan covers the region where any component carries mass (radius
        from each component's dissipativity pair) with generous padding; the
        mixture score is component-dominated beyond that.
        """
        radius = max(
            math.sqrt(pot.dissipativity[1] / pot.dissipativity[0])
            for _, pot in self.components
        )
        lo, hi = -radius - 25.0, radius + 25.0
        grid = np.linspace(lo, hi, 200001)
        x = grid[:, None]
        s = score(x)[:, 0]
        lip = float(np.abs(np.gradient(s, grid)).max()) * (1.0 + 1e-3)
        a = 0.5 * min(pot.dissipativity[0] for _, pot in self.components)
        # b >= a x^2 - <grad V, x> = a x^2 + score(x) * x
        b = float(np.maximum(a * grid * grid + s * grid, 0.0).max()) + 1e-9
        return lip, (a, b)


def make_bimodal_target(m: float) -> MixtureSpec:
    """Equal-weight mixture of N(0, 1) and N(m, 1)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return MixtureSpec(
        components=(
            (0.5, GaussianSpec(mean=[0.0], covariance=[[1.0]])),
            (0.5, GaussianSpec(mean=[float(m)], covariance=[[1.0]])),
        )
    )


def make_contaminated_target(m: float, a: float) -> MixtureSpec:
    """N(m, 1) contaminated by the smoothed uniform u_m.

    Weights are (1 - w, w) with w = exp(-a^2 m^2 / 2); requires
    a*m >= sqrt(2 log 2) so the contamination weight stays <= 1/2.  At
    a = sqrt(2 log 2)/m the weights are exactly (1/2, 1/2).
    """
    if not 0.0 < a <= 1.0:
        raise ValueError("a must lie in (0, 1]")
    if a * m < math.sqrt(2.0 * math.log(2.0)) - 1e-12:
        raise ValueError(
            f"contamination weight exp(-a^2 m^2/2) > 1/2 for a*m = {a * m:.6g}"
        )
    w = math.exp(-0.5 * a * a * m * m)
    return MixtureSpec(
        components=(
            (1.0 - w, GaussianSpec(mean=[float(m)], covariance=[[1.0]])),
            (w, SmoothedUniformSpec(m=float(m))),
        )
    )


@dataclass(frozen=True)
class GeometricPath:
    """Geometric interpolation mu_lambda prop. to nu^(1-lambda) pi^lambda.

    ``proposal`` / ``target`` accept any supported density description; the
    original Gaussian specs, when given, unlock closed-form branches.
    """

    proposal: PotentialSpec
    target: PotentialSpec
    quad_tol: float = 1e-10
    proposal_gaussian: Optional[GaussianSpec] = None
    target_gaussian: Optional[GaussianSpec] = None

    @classmethod
    def from_specs(cls, proposal, target, quad_tol: float = 1e-10) -> "GeometricPath":
        pg = proposal if isinstance(proposal, GaussianSpec) else None
        tg = target if isinstance(target, GaussianSpec) else None
        return cls(
            proposal=as_potential(proposal),
            target=as_potential(target),
            quad_tol=quad_tol,
            proposal_gaussian=pg,
            target_gaussian=tg,
        )

    def __post_init__(self):
        if self.proposal.dim != self.target.dim:
            raise ValueError("proposal and target dimensions differ")

    @property
    def dim(self) -> int:
        return self.proposal.dim

    def _check_lambda(self, lam: float):
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")

    def tempered_potential(self, lam: float, x) -> np.ndarray:
        self._check_lambda(lam)
        x = _as_points(x, self.dim)
        return (1.0 - lam) * self.proposal.potential(x) + lam * self.target.potential(x)

    def tempered_score(self, lam: float, x) -> np.ndarray:
        self._check_lambda(lam)
        x = _as_points(x, self.dim)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input point")
        return (1.0 - lam) * self.proposal.score(x) + lam * self.target.score(x)

    def _endpoint_log_normalizer(self, spec: PotentialSpec) -> float:
        if spec.closed_form_partition is not None:
            return spec.closed_form_partition
        if spec.dim != 1:
            raise UnsupportedConfigurationError(
                "log_partition needs 1D endpoints or Gaussian endpoints"
            )
        r = spec.mass_radius()
        return integrate_log(lambda t: -spec.potential(t[:, None]), -r, r, tol=self.quad_tol)

    def unnormalized_log_density(self, lam: float, x) -> np.ndarray:
        """log of nu^(1-lam) pi^lam with *normalized* endpoint densities."""
        x = _as_points(x, self.dim)
        zn = self._endpoint_log_normalizer(self.proposal)
        zt = self._endpoint_log_normalizer(self.target)
        return -(1.0 - lam) * (self.proposal.potential(x) + zn) - lam * (
            self.target.potential(x) + zt
        )

    def mass_window(self, lam: float) -> tuple:
        """1D interval outside which the tempered density is negligible."""
        if self.dim != 1:
            raise UnsupportedConfigurationError("mass_window is 1D only")
        r = max(self.proposal.mass_radius(), self.target.mass_radius())
        grid = np.linspace(-r, r, 4097)
        g = self.unnormalized_log_density(lam, grid[:, None])
        keep = np.nonzero(g >= g.max() - _WINDOW_DROP)[0]
        pad = grid[1] - grid[0]
        return float(grid[keep[0]] - pad), float(grid[keep[-1]] + pad)

    def log_partition(self, lam: float) -> float:
        """log c_lambda = -log integral of nu^(1-lam) pi^lam."""
        self._check_lambda(lam)
        if lam == 0.0 or lam == 1.0:
            return 0.0
        if self.proposal_gaussian is not None and self.target_gaussian is not None:
            return self._gaussian_log_partition(lam)
        if self.dim != 1:
            raise UnsupportedConfigurationError(
                "log_partition needs 1D endpoints or Gaussian endpoints"
            )
        lo, hi = self.mass_window(lam)
        log_mass = integrate_log(
            lambda t: self.unnormalized_log_density(lam, t[:, None]),
            lo,
            hi,
            tol=self.quad_tol,
        )
        return -log_mass

    def _gaussian_log_partition(self, lam: float) -> float:
        nu, pi = self.proposal_gaussian, self.target_gaussian
        pn, pt = nu.precision, pi.precision
        prec = (1.0 - lam) * pn + lam * pt
        eta = (1.0 - lam) * (pn @ nu.mean) + lam * (pt @ pi.mean)
        # constant from completing the square in the normalized endpoint product
        c0 = (1.0 - lam) * (0.5 * nu.mean @ pn @ nu.mean + nu.log_normalizer()) + lam * (
            0.5 * pi.mean @ pt @ pi.mean + pi.log_normalizer()
        )
        sign, logdet = np.linalg.slogdet(prec)
        log_mass = -c0 + 0.5 * eta @ np.linalg.solve(prec, eta)
        log_mass += 0.5 * self.dim * _LOG_2PI - 0.5 * logdet
        return -float(log_mass)

    def log_density(self, lam: float, x) -> np.ndarray:
        """Normalized tempered log-density."""
        return self.unnormalized_log_density(lam, x) + self.log_partition(lam)

    def log_mass(self, lam: float, lo: float, hi: float,
                 breakpoints: Sequence[float] = ()) -> float:
        """log mu_lambda([lo, hi]) by log-space quadrature (1D)."""
        if self.dim != 1:
            raise UnsupportedConfigurationError("log_mass is 1D only")
        wlo, whi = self.mass_window(lam)
        lo, hi = max(lo, wlo), min(hi, whi)
        if hi <= lo:
            return -np.inf
        pts = sorted({lo, hi, *(p for p in breakpoints if lo < p < hi)})
        log_unnorm = integrate_log_segments(
            lambda t: self.unnormalized_log_density(lam, t[:, None]), pts, tol=self.quad_tol
        )
        return log_unnorm + self.log_partition(lam)


def gaussian_geometric(nu: GaussianSpec, pi: GaussianSpec, lam: float) -> GaussianSpec:
    """Gaussian proportional to nu^(1-lam) pi^lam (precision-space mixing)."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    pn, pt = nu.precision, pi.precision
    prec = (1.0 - lam) * pn + lam * pt
    eta = (1.0 - lam) * (pn @ nu.mean) + lam * (pt @ pi.mean)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    return GaussianSpec(mean=cov @ eta, covariance=cov)


@dataclass
class DensityGrid:
    """Normalized tempered densities tabulated over (lambda, x)."""

    lambdas: np.ndarray
    grid: np.ndarray
    densities: np.ndarray  # shape (n_lambda, n_grid)
    tail_warnings: np.ndarray  # per-lambda flag: mass outside grid > 1e-6


def density_grid(path: GeometricPath, lambdas: Sequence[float], grid: Sequence[float]) -> DensityGrid:
    if path.dim != 1:
        raise UnsupportedConfigurationError("density_grid is 1D only")
    lambdas = np.asarray(lambdas, dtype=float)
    grid = np.asarray(grid, dtype=float)
    rows = []
    warns = []
    for lam in lambdas:
        logc = path.log_partition(float(lam))
        rows.append(np.exp(path.unnormalized_log_density(float(lam), grid[:, None]) + logc))
        inside = math.exp(
            path.log_mass(float(lam), float(grid.min()), float(grid.max()))
        )
        warns.append(1.0 - inside > 1e-6)
    return DensityGrid(
        lambdas=lambdas,
        grid=grid,
        densities=np.asarray(rows),
        tail_warnings=np.asarray(warns),
    )


def density_grid_to_csv(dg: DensityGrid, out_path) -> None:
    """Emit `x,lambda,density` rows, row-major over (lambda, x)."""
    with open(out_path, "w", newline="") as fh:
        fh.write("x,lambda,density\n")
        for lam, row in zip(dg.lambdas, dg.densities):
            for x, dens in zip(dg.grid, row):
                fh.write(f"{x:.17g},{lam:.17g},{dens:.17g}\n")

"""Config-driven experiment runner.

Usage: ``temper-lab <kind> --config <file> --out <dir> [--seed N] [--svg]``.

Configs are JSON with a versioned schema; unknown keys are errors (a silent
typo would invalidate a bound comparison).  Every run writes a manifest with
the full parameter set (defaults included) and a sha256 per emitted file.
CSV files are the artifacts of record; SVG renderings are opt-in.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import bounds as bnd
from . import inequalities as ineq
from . import metrics as met
from . import sampler as smp
from . import schedules as sch
from .distributions import (
    GaussianSpec,
    GeometricPath,
    density_grid,
    density_grid_to_csv,
    gaussian_geometric,
    make_bimodal_target,
    make_contaminated_target,
)
from .errors import ConfigError, ExplosionError, GuardViolationError, QuadratureError

SCHEMA_VERSION = 1

STOCHASTIC_KINDS = {"sample", "reproduce-fig3", "lower-bimodal", "lower-unimodal"}


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    out_dir: Path
    seed: Optional[int] = None
    svg: bool = False


def _merge_defaults(defaults: dict, user: dict, path: str = "") -> dict:
    out = {}
    for key, default in defaults.items():
        if key in user:
            val = user[key]
            if isinstance(default, dict) and isinstance(val, dict):
                out[key] = _merge_defaults(default, val, f"{path}{key}.")
            else:
                out[key] = val
        else:
            out[key] = json.loads(json.dumps(default)) if isinstance(default, dict) else default
    for key in user:
        if key not in defaults:
            raise ConfigError(f"unknown config key {path}{key!r}")
    return out


def _build_gaussian(params: dict, field: str) -> GaussianSpec:
    mean = np.atleast_1d(np.asarray(params["mean"], dtype=float))
    cov = params["covariance"]
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 0:
        cov = cov * np.eye(mean.size)
    try:
        return GaussianSpec(mean=mean, covariance=np.atleast_2d(cov))
    except ValueError as exc:
        raise ConfigError(f"{field}: {exc}") from exc


def _build_target(params: dict, field: str):
    family = params["family"]
    if family == "gaussian":
        return _build_gaussian(params, field)
    if family == "bimodal":
        return make_bimodal_target(params["m"])
    if family == "contaminated":
        a = params["a"]
        if a == "half-weight":
            a = math.sqrt(2.0 * math.log(2.0)) / params["m"]
        return make_contaminated_target(params["m"], a)
    raise ConfigError(f"{field}.family: unknown family {family!r}")


def _build_schedule(params: dict, field: str) -> sch.Schedule:
    kind = params["kind"]
    horizon = params["horizon"]
    if kind == "linear":
        return sch.linear_schedule(horizon)
    if kind == "constant":
        return sch.constant_schedule(params["level"], horizon)
    if kind == "optimal":
        return sch.optimal_schedule(params["alpha_nu"], params["alpha_pi"], horizon)
    if kind == "table":
        return sch.piecewise_linear_schedule(params["s"], params["lambda"])
    raise ConfigError(f"{field}.kind: unknown schedule kind {kind!r}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

_GAUSS_1D = {"family": "gaussian", "mean": [0.0], "covariance": [[1.0]], "m": 0.0, "a": 0.0}

SAMPLE_DEFAULTS = {
    "proposal": dict(_GAUSS_1D),
    "target": dict(_GAUSS_1D, family="bimodal", m=5.0),
    "schedule": {
        "kind": "linear",
        "horizon": 5.0,
        "level": 1.0,
        "alpha_nu": 1.0,
        "alpha_pi": 0.1,
        "s": [],
        "lambda": [],
    },
    "n_particles": 1000,
    "step_size": 0.01,
    "guarded": False,
    "snapshot_times": [],
}


def _run_sample(cfg: ExperimentConfig, p: dict):
    proposal = _build_target(p["proposal"], "proposal")
    target = _build_target(p["target"], "target")
    path = GeometricPath.from_specs(proposal, target)
    schedule = _build_schedule(p["schedule"], "schedule")
    if not isinstance(proposal, GaussianSpec):
        raise ConfigError("proposal must be gaussian (initial law is drawn from it)")
    snaps = tuple(p["snapshot_times"]) or (schedule.horizon,)
    sim = smp.SimConfig(
        path=path,
        schedule=schedule,
        n_particles=int(p["n_particles"]),
        seed=cfg.seed,
        initial=proposal,
        step_size=p["step_size"],
        guarded=bool(p["guarded"]),
        snapshot_times=snaps,
    )
    result = smp.run_schedule(sim)
    digest = smp.schedule_digest(schedule)
    files = []
    for i, (t, ens) in enumerate(result):
        out = cfg.out_dir / f"snapshot_{i:03d}.csv"
        smp.snapshot_to_csv(ens, out, schedule_hash=digest)
        files += [out, Path(str(out) + ".json")]
    return files


BOUNDS_DEFAULTS = {
    "nu": {"mean": [0.0], "covariance": [[1.0]]},
    "pi": {"mean": [0.0], "covariance": [[10.0]]},
    "schedule": {
        "kind": "linear",
        "horizon": 5.0,
        "level": 1.0,
        "alpha_nu": 1.0,
        "alpha_pi": 0.1,
        "s": [],
        "lambda": [],
    },
    "mode": "continuous",
    "t_grid": [0.5, 1.0, 2.0, 5.0],
    "n_steps": 200,
}


def _gaussian_bundle(nu: GaussianSpec, pi: GaussianSpec) -> bnd.RegularityBundle:
    path = GeometricPath.from_specs(nu, pi)
    m2 = float(np.trace(nu.covariance) + nu.mean @ nu.mean)
    return bnd.RegularityBundle.from_path(path, m2_p0=m2)


def _run_bounds_sweep(cfg: ExperimentConfig, p: dict):
    nu = _build_gaussian(p["nu"], "nu")
    pi = _build_gaussian(p["pi"], "pi")
    schedule = _build_schedule(p["schedule"], "schedule")
    bundle = _gaussian_bundle(nu, pi)
    lam0 = float(schedule.value(0.0))
    p0 = smp.GaussianLaw(mean=nu.mean, covariance=nu.covariance)
    mu0 = gaussian_geometric(nu, pi, lam0)
    kl0 = met.kl_gaussians(p0, mu0)
    files = []
    if p["mode"] in ("continuous", "both"):
        rows = []
        for t in p["t_grid"]:
            rep = bnd.continuous_bound(schedule, bundle, kl0, float(t))
            law = smp.gaussian_moment_flow(nu, pi, schedule, p0, float(t))
            kl = met.kl_gaussians(law, pi)
            rows.append((t, rep.u1, rep.u2, rep.u3, rep.total, kl))
        out = cfg.out_dir / "continuous_bound.csv"
        _write_csv(out, "t,u1,u2,u3,total,kl_exact", rows)
        files.append(out)
    if p["mode"] in ("discrete", "both"):
        ladder = sch.discretize(schedule, int(p["n_steps"]))
        laws = smp.gaussian_moment_recursion(nu, pi, ladder, p0)
        rows = []
        for k in range(1, len(ladder) + 1):
            rep = bnd.discrete_bound(ladder, bundle, kl0, k)
            kl = met.kl_gaussians(laws[k - 1], pi)
            rows.append((k, rep.v1, rep.v2, rep.v3, rep.v4, rep.total, kl, rep.guard_all))
        out = cfg.out_dir / "discrete_bound.csv"
        _write_csv(out, "k,v1,v2,v3,v4,total,kl_exact,guard_ok", rows)
        files.append(out)
    if not files:
        raise ConfigError(f"mode: unknown mode {p['mode']!r}")
    return files


COMPARE_DEFAULTS = {
    "alpha_nu": 1.0,
    "alpha_pi": 0.01,
    "t_grid": [1.0, 10.0, 100.0],
}


def _g_triplet(alpha_nu: float, alpha_pi: float, t: float):
    opt = sch.optimal_schedule(alpha_nu, alpha_pi, horizon=t)
    lin = sch.linear_schedule(t)
    van = sch.constant_schedule(1.0, t, kind="vanilla")
    return (
        bnd.g_functional(opt, alpha_nu, alpha_pi, t),
        bnd.g_functional(lin, alpha_nu, alpha_pi, t),
        bnd.g_functional(van, alpha_nu, alpha_pi, t),
    )


def _run_schedule_compare(cfg: ExperimentConfig, p: dict):
    rows = []
    for t in p["t_grid"]:
        g_opt, g_lin, g_van = _g_triplet(p["alpha_nu"], p["alpha_pi"], float(t))
        rows.append((t, g_opt, g_lin, g_van))
    out = cfg.out_dir / "schedule_compare.csv"
    _write_csv(out, "t,g_optimal,g_linear,g_vanilla", rows)
    files = [out]
    if cfg.svg:
        from .plotting import emit_svg_lineplot

        svg = cfg.out_dir / "schedule_compare.svg"
        emit_svg_lineplot(out, "t", ["g_optimal", "g_linear", "g_vanilla"], svg, logx=True, logy=True)
        files.append(svg)
    return files


PROBE_DEFAULTS = {
    "m_values": [10.0, 12.0, 14.0, 16.0],
    "lambdas": [0.75],
    "a": 1.0 / math.sqrt(2.0),
}


def _run_probe(cfg: ExperimentConfig, p: dict):
    a = p["a"]
    rows = []
    for m in p["m_values"]:
        target = make_contaminated_target(float(m), a)
        path = GeometricPath.from_specs(GaussianSpec(mean=[0.0], covariance=[[1.0]]), target)
        psi = ineq.unimodal_witness(float(m), a)
        for lam in p["lambdas"]:
            lower = ineq.rayleigh_poincare_lower(path, psi, lam=float(lam))
            bound = ineq.thm3_poincare_bound(float(m), float(lam))
            rows.append((m, lam, lower, bound))
    out = cfg.out_dir / "probe.csv"
    _write_csv(out, "m,lambda,rayleigh_lower,thm3_bound", rows)
    return [out]


FIG2_DEFAULTS = {
    "alpha_nu": 1.0,
    "alpha_pi": 0.01,
    "t_min": 0.1,
    "t_max": 1000.0,
    "n_points": 25,
}


def _run_fig2(cfg: ExperimentConfig, p: dict):
    t_grid = np.geomspace(p["t_min"], p["t_max"], int(p["n_points"]))
    rows = []
    for t in t_grid:
        g_opt, g_lin, g_van = _g_triplet(p["alpha_nu"], p["alpha_pi"], float(t))
        rows.append((t, g_opt, g_lin, g_van))
    out = cfg.out_dir / "fig2.csv"
    _write_csv(out, "t,g_optimal,g_linear,g_vanilla", rows)
    files = [out]
    if cfg.svg:
        from .plotting import emit_svg_lineplot

        svg = cfg.out_dir / "fig2.svg"
        emit_svg_lineplot(out, "t", ["g_optimal", "g_linear", "g_vanilla"], svg, logx=True, logy=True)
        files.append(svg)
    return files


FIG3_DEFAULTS = {
    "n_particles": 10000,
    "t_end": 5.0,
    "step_size": 0.005,
    "n_checkpoints": 10,
    "n_bootstrap": 200,
    "target_variance": 10.0,
}


def _run_fig3(cfg: ExperimentConfig, p: dict):
    nu = GaussianSpec(mean=np.zeros(2), covariance=np.eye(2))
    pi = GaussianSpec(mean=np.zeros(2), covariance=p["target_variance"] * np.eye(2))
    t_end = float(p["t_end"])
    schedule = sch.linear_schedule(t_end)
    path = GeometricPath.from_specs(nu, pi)
    checkpoints = np.linspace(t_end / p["n_checkpoints"], t_end, int(p["n_checkpoints"]))
    sim = smp.SimConfig(
        path=path,
        schedule=schedule,
        n_particles=int(p["n_particles"]),
        seed=cfg.seed,
        initial=nu,
        step_size=p["step_size"],
        snapshot_times=tuple(checkpoints),
    )
    snaps = smp.run_schedule(sim)
    bundle = _gaussian_bundle(nu, pi)
    a_const = bnd.constant_A(bundle)
    p0 = smp.GaussianLaw(mean=nu.mean, covariance=nu.covariance)
    alpha_nu = float(np.linalg.eigvalsh(nu.precision).min())
    alpha_pi = float(np.linalg.eigvalsh(pi.precision).min())
    boot_rng = np.random.Generator(np.random.Philox(key=(int(cfg.seed) << 64) | (1 << 61)))
    rows = []
    for t, ens in snaps:
        if t == 0.0:
            continue
        fit = met.fit_gaussian(ens, time=t)
        kl_emp = met.kl_gaussians(fit, pi)
        n = ens.n_particles
        boots = []
        for _ in range(int(p["n_bootstrap"])):
            idx = boot_rng.integers(0, n, size=n)
            boots.append(met.kl_gaussians(met.fit_gaussian(ens.states[idx]), pi))
        se = float(np.std(boots, ddof=1))
        law = smp.gaussian_moment_flow(nu, pi, schedule, p0, t)
        kl_exact = met.kl_gaussians(law, pi)
        g_val = bnd.g_functional(schedule, alpha_nu, alpha_pi, t)
        rows.append((t, kl_emp, se, kl_exact, a_const * g_val))
    out = cfg.out_dir / "fig3.csv"
    _write_csv(out, "t,kl_empirical,kl_se,kl_exact,bound", rows)
    files = [out]
    if cfg.svg:
        from .plotting import emit_svg_lineplot

        svg = cfg.out_dir / "fig3.svg"
        emit_svg_lineplot(out, "t", ["kl_empirical", "kl_exact", "bound"], svg, logy=True)
        files.append(svg)
    return files


PATHVIZ_DEFAULTS = {
    "target": dict(_GAUSS_1D, family="bimodal", m=8.0),
    "lambdas": [0.0, 0.25, 0.5, 0.75, 1.0],
    "x_min": -6.0,
    "x_max": 14.0,
    "n_grid": 401,
}


def _run_pathviz(cfg: ExperimentConfig, p: dict):
    target = _build_target(p["target"], "target")
    path = GeometricPath.from_specs(GaussianSpec(mean=[0.0], covariance=[[1.0]]), target)
    grid = np.linspace(p["x_min"], p["x_max"], int(p["n_grid"]))
    dg = density_grid(path, p["lambdas"], grid)
    out = cfg.out_dir / "pathviz.csv"
    density_grid_to_csv(dg, out)
    return [out]


LOWER_BIMODAL_DEFAULTS = {
    "m": 24.0,
    "n_levels": 20,
    "total_time": 10.0,
    "n_particles": 100000,
    "inner_step": 1e-3,
    "bins": 256,
}


def _tv_table(cfg: ExperimentConfig, p: dict, target, lower_of, checkpoint_level=None):
    """Shared ladder runner for the two lower-bound demonstrations."""
    m = float(p["m"])
    k = int(p["n_levels"])
    top = checkpoint_level if checkpoint_level is not None else 1.0
    levels = tuple(np.linspace(top / k, top, k))
    budget = float(p["total_time"]) / k
    ladder = sch.TemperatureLadder(
        levels=levels, inner_budgets=(budget,) * k, budget_kind="inner_time"
    )
    nu = GaussianSpec(mean=[0.0], covariance=[[1.0]])
    path = GeometricPath.from_specs(nu, target)
    sim = smp.SimConfig(
        path=path,
        schedule=ladder,
        n_particles=int(p["n_particles"]),
        seed=cfg.seed,
        initial=nu,
        inner_step=float(p["inner_step"]),
    )
    result = smp.run_ladder(sim)
    rows = []
    cum = 0.0
    for k_idx, _ in result:
        cum += budget
        rows.append((k_idx, levels[k_idx - 1], cum, lower_of(levels[k_idx - 1], cum)))
    out = cfg.out_dir / "tv_table.csv"
    _write_csv(out, "k,lambda_k,sum_T,lower_bound", rows)
    final = result[-1][1]
    # the lower-bound statements are about distance to the target itself,
    # even when the ladder stops at an intermediate checkpoint level
    tv = met.tv_hist(final, path, lam=1.0, bins=int(p["bins"]))
    met_out = cfg.out_dir / "metrics.csv"
    met.metrics_to_csv(
        [
            (
                len(result),
                "tv_hist",
                tv.value,
                f"bins={tv.bins};sensitivity={tv.sensitivity:.6g};stable={tv.stable}",
            )
        ],
        met_out,
    )
    return [out, met_out]


def _run_lower_bimodal(cfg: ExperimentConfig, p: dict):
    target = make_bimodal_target(float(p["m"]))
    m = float(p["m"])
    return _tv_table(cfg, p, target, lambda lam, cum: ineq.thm5_value(m, cum))


LOWER_UNIMODAL_DEFAULTS = {
    "m": 30.0,
    "a": "half-weight",
    "n_levels": 10,
    "checkpoint_level": 0.5,
    "total_time": 5.0,
    "n_particles": 100000,
    "inner_step": 1e-3,
    "bins": 256,
}


def _run_lower_unimodal(cfg: ExperimentConfig, p: dict):
    m = float(p["m"])
    a = p["a"]
    if a == "half-weight":
        a = math.sqrt(2.0 * math.log(2.0)) / m
    target = make_contaminated_target(m, a)
    return _tv_table(
        cfg,
        p,
        target,
        lambda lam, cum: ineq.thm6_value(m, lam, cum),
        checkpoint_level=float(p["checkpoint_level"]),
    )


RUNNERS = {
    "sample": (SAMPLE_DEFAULTS, _run_sample),
    "bounds-sweep": (BOUNDS_DEFAULTS, _run_bounds_sweep),
    "schedule-compare": (COMPARE_DEFAULTS, _run_schedule_compare),
    "probe": (PROBE_DEFAULTS, _run_probe),
    "reproduce-fig2": (FIG2_DEFAULTS, _run_fig2),
    "reproduce-fig3": (FIG3_DEFAULTS, _run_fig3),
    "reproduce-pathviz": (PATHVIZ_DEFAULTS, _run_pathviz),
    "lower-bimodal": (LOWER_BIMODAL_DEFAULTS, _run_lower_bimodal),
    "lower-unimodal": (LOWER_UNIMODAL_DEFAULTS, _run_lower_unimodal),
}


def run_experiment(config: ExperimentConfig) -> dict:
    """Validate, run, and write the manifest; returns the manifest dict."""
    if config.kind not in RUNNERS:
        raise ConfigError(f"unknown experiment kind {config.kind!r}")
    defaults, runner = RUNNERS[config.kind]
    params = _merge_defaults(defaults, config.params)
    if config.kind in STOCHASTIC_KINDS and config.seed is None:
        raise ConfigError("seed: required for stochastic experiments")
    config.out_dir.mkdir(parents=True, exist_ok=True)
    config = ExperimentConfig(
        kind=config.kind, params=params, out_dir=config.out_dir, seed=config.seed, svg=config.svg
    )
    files = runner(config, params)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": config.kind,
        "seed": config.seed,
        "svg": config.svg,
        "parameters": params,
        "files": [{"name": f.name, "sha256": _sha256(Path(f))} for f in files],
    }
    with open(config.out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    version = raw.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
    return raw


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="temper-lab",
        description="Geometric-tempered Langevin laboratory experiment runner",
    )
    parser.add_argument("kind", choices=sorted(RUNNERS))
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--svg", action="store_true")
    args = parser.parse_args(argv)
    try:
        raw = _load_config(args.config)
        seed = args.seed if args.seed is not None else raw.pop("seed", None)
        config = ExperimentConfig(
            kind=args.kind,
            params=raw,
            out_dir=Path(args.out),
            seed=seed,
            svg=args.svg,
        )
        run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GuardViolationError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return 4
    except (QuadratureError, ExplosionError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test (and one printed verdict line) per criterion.

Each test evaluates its criterion exactly at the stated tolerances and prints
`[acceptance NN] <name>: PASS|FAIL` before asserting, so the verdict survives
in captured output either way.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from temperlab.bounds import (
    RegularityBundle,
    continuous_bound,
    discrete_bound,
    g_functional,
    g_linear_closed_form,
)
from temperlab.cli import ExperimentConfig, run_experiment
from temperlab.distributions import (
    GaussianSpec,
    GeometricPath,
    gaussian_geometric,
    make_bimodal_target,
    make_contaminated_target,
)
from temperlab.inequalities import (
    chi2_gauss_um,
    lsi_um_upper,
    rayleigh_poincare_lower,
    thm3_poincare_bound,
    unimodal_witness,
    verify_unimodal_facts,
)
from temperlab.metrics import kl_gaussians, kl_quadrature
from temperlab.sampler import (
    GaussianLaw,
    gaussian_moment_flow,
    gaussian_moment_recursion,
)
from temperlab.schedules import (
    constant_schedule,
    discretize,
    linear_schedule,
    optimal_schedule,
    piecewise_linear_schedule,
)

from conftest import gauss_1d

ROOT_HALF = 1.0 / math.sqrt(2.0)


def _verdict(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[acceptance {num:02d}] {name}: {status}" + (f" ({detail})" if detail else ""))
    assert ok, f"acceptance criterion {num} ({name}) failed {detail}"


def _random_monotone_schedule(rng, horizon):
    n_knots = int(rng.integers(2, 7))
    s = np.concatenate([[0.0], np.sort(rng.uniform(0.0, horizon, n_knots)), [horizon]])
    v = np.sort(rng.uniform(0.0, 1.0, s.size))
    return piecewise_linear_schedule(s.tolist(), v.tolist())


def _law_of(spec: GaussianSpec) -> GaussianLaw:
    return GaussianLaw(mean=np.asarray(spec.mean), covariance=np.asarray(spec.covariance))


def _bundle(nu: GaussianSpec, pi: GaussianSpec) -> RegularityBundle:
    path = GeometricPath.from_specs(nu, pi)
    m2 = float(np.trace(nu.covariance) + np.asarray(nu.mean) @ np.asarray(nu.mean))
    return RegularityBundle.from_path(path, m2_p0=m2)


GAUSS_PAIRS = [
    (gauss_1d(0, 1), gauss_1d(0, 10)),
    (gauss_1d(0, 1), gauss_1d(1, 0.5)),
    (  # the 2D pair of the simulated-trajectory figure
        GaussianSpec(mean=np.zeros(2), covariance=np.eye(2)),
        GaussianSpec(mean=np.zeros(2), covariance=10 * np.eye(2)),
    ),
]


def test_01_closed_form_vs_quadrature():
    start = time.time()
    worst = 0.0
    for alpha_nu in (0.5, 1.0, 2.0):
        for alpha_pi in (0.01, 0.1, 0.4 * alpha_nu):
            for t in (0.1, 1.0, 10.0, 100.0):
                closed = g_linear_closed_form(alpha_nu, alpha_pi, t)
                quad = g_functional(linear_schedule(t), alpha_nu, alpha_pi, t)
                worst = max(worst, abs(quad - closed) / abs(closed))
    elapsed = time.time() - start
    _verdict(
        1,
        "linear-schedule closed form vs quadrature (36-point grid)",
        worst <= 1e-6 and elapsed < 10.0,
        f"worst rel err {worst:.3g}, {elapsed:.1f}s",
    )


def test_02_large_time_asymptote():
    # the criterion fixes alpha_pi but not alpha_nu; alpha_nu = 2 alpha_pi
    # keeps the 1/(2 alpha_pi t) expansion's correction term within 2%
    worst = 0.0
    for alpha_pi in (0.1, 0.5):
        t = 100.0 / alpha_pi
        g = g_linear_closed_form(2.0 * alpha_pi, alpha_pi, t)
        worst = max(worst, abs(2.0 * alpha_pi * t * g - 1.0))
    _verdict(2, "large-time asymptote of the linear schedule", worst <= 0.02, f"worst {worst:.4f}")


def test_03_schedule_comparison_figure():
    start = time.time()
    alpha_nu, alpha_pi = 1.0, 0.01
    t_grid = np.geomspace(0.1, 1000.0, 25)
    ok = True
    for t in t_grid:
        t = float(t)
        g_opt = g_functional(optimal_schedule(alpha_nu, alpha_pi, t), alpha_nu, alpha_pi, t)
        g_lin = g_functional(linear_schedule(t), alpha_nu, alpha_pi, t)
        g_van = g_functional(constant_schedule(1.0, t), alpha_nu, alpha_pi, t)
        ok &= g_opt <= g_lin + 1e-12 and g_opt <= g_van + 1e-12
        if t <= 1.0:
            ok &= g_lin < g_van and g_opt < g_van
        if t >= 1000.0:
            ok &= g_van < g_lin
    elapsed = time.time() - start
    _verdict(3, "schedule-comparison curves ordering and crossover", ok and elapsed < 30.0,
             f"{elapsed:.1f}s")


def test_04_optimality_battery():
    start = time.time()
    rng = np.random.default_rng(2024)
    ok = True
    # optimal-schedule regime: alpha_pi < alpha_nu / 2
    for alpha_nu, alpha_pi, t in [
        (1.0, 0.01, 1.0),
        (1.0, 0.01, 10.0),
        (1.0, 0.1, 10.0),
        (2.0, 0.5, 5.0),
        (0.5, 0.2, 2.0),
        (1.0, 0.4, 20.0),
    ]:
        g_opt = g_functional(optimal_schedule(alpha_nu, alpha_pi, t), alpha_nu, alpha_pi, t)
        for _ in range(100):
            sched = _random_monotone_schedule(rng, t)
            ok &= g_opt <= g_functional(sched, alpha_nu, alpha_pi, t) + 1e-8
    # vanilla regime: alpha_pi >= alpha_nu
    for alpha_nu, alpha_pi, t in [
        (1.0, 1.0, 1.0),
        (1.0, 1.5, 5.0),
        (0.5, 0.6, 10.0),
        (1.0, 2.0, 2.0),
        (2.0, 2.0, 1.0),
        (0.3, 0.5, 10.0),
    ]:
        g_van = g_functional(constant_schedule(1.0, t), alpha_nu, alpha_pi, t)
        for _ in range(100):
            sched = _random_monotone_schedule(rng, t)
            ok &= g_van <= g_functional(sched, alpha_nu, alpha_pi, t) + 1e-8
    elapsed = time.time() - start
    _verdict(4, "schedule-optimality battery (1200 random schedules)", ok and elapsed < 120.0,
             f"{elapsed:.1f}s")


def test_05_continuous_bound_validity():
    start = time.time()
    rng = np.random.default_rng(7)
    violations = 0
    checks = 0
    for nu, pi in GAUSS_PAIRS:
        bundle = _bundle(nu, pi)
        path = GeometricPath.from_specs(nu, pi)
        p0 = _law_of(nu)
        target = _law_of(pi)
        for _ in range(10):
            sched = _random_monotone_schedule(rng, 10.0)
            lam0 = float(sched.value(0.0))
            kl0 = kl_gaussians(p0, _law_of(gaussian_geometric(nu, pi, lam0)))
            for t in (0.5, 1.0, 2.0, 5.0, 10.0):
                law = gaussian_moment_flow(nu, pi, sched, p0, t)
                exact = kl_gaussians(law, target)
                rep = continuous_bound(sched, bundle, kl0, t)
                checks += 1
                if exact > rep.total + 1e-9:
                    violations += 1
    elapsed = time.time() - start
    _verdict(5, "continuous bound dominates the exact Gaussian law",
             violations == 0 and elapsed < 60.0,
             f"{checks} checks, {violations} violations, {elapsed:.1f}s")


def test_06_discrete_bound_validity():
    rng = np.random.default_rng(13)
    violations = 0
    checks = 0
    guard_fail = 0
    for nu, pi in GAUSS_PAIRS:
        bundle = _bundle(nu, pi)
        p0 = _law_of(nu)
        target = _law_of(pi)
        schedules = [linear_schedule(5.0)] + [_random_monotone_schedule(rng, 5.0) for _ in range(2)]
        for sched in schedules:
            ladder = discretize(sched, 200)
            kl0 = kl_gaussians(
                p0, _law_of(gaussian_geometric(nu, pi, float(ladder.lambda0)))
            )
            laws = gaussian_moment_recursion(nu, pi, ladder, p0)
            for k in range(1, 201):
                rep = discrete_bound(ladder, bundle, kl0, k)
                if not rep.guard_all:
                    guard_fail += 1
                    continue
                checks += 1
                if kl_gaussians(laws[k - 1], target) > rep.total + 1e-9:
                    violations += 1
    # v4 halves (within 20%) when h is halved at twice the steps
    sched = linear_schedule(5.0)
    bundle = _bundle(*GAUSS_PAIRS[0])
    v4_coarse = discrete_bound(discretize(sched, 200), bundle, 0.0).v4
    v4_fine = discrete_bound(discretize(sched, 400), bundle, 0.0).v4
    ratio = v4_fine / v4_coarse
    ok = violations == 0 and guard_fail == 0 and 0.4 <= ratio <= 0.6
    _verdict(6, "discrete bound dominates the exact recursion at every guarded step",
             ok, f"{checks} checks, {violations} violations, v4 ratio {ratio:.3f}")


def test_07_simulated_trajectory_figure(tmp_path):
    start = time.time()
    out = tmp_path / "fig3"
    run_experiment(
        ExperimentConfig(kind="reproduce-fig3", params={}, out_dir=out, seed=2024)
    )
    rows = [
        line.split(",")
        for line in (out / "fig3.csv").read_text().strip().splitlines()[1:]
    ]
    ok = len(rows) == 10
    for t, kl_emp, se, kl_exact, bound in ((float(v) for v in r) for r in rows):
        ok &= abs(kl_emp - kl_exact) <= 4.0 * se
        ok &= kl_exact <= bound + 1e-9
    elapsed = time.time() - start
    _verdict(7, "2D trajectory: empirical KL within 4 SE of exact, exact below bound",
             ok and elapsed < 120.0, f"{elapsed:.1f}s")


def test_08_functional_inequality_suite():
    start = time.time()
    from temperlab.inequalities import TestFunction as _PLF

    # (a) Rayleigh probe on the standard normal
    psi = _PLF(breakpoints=(-8.0, 8.0), values=(-8.0, 8.0))
    ratio = rayleigh_poincare_lower(gauss_1d(0, 1), psi)
    ok = abs(ratio - 1.0) <= 0.02
    # (b) probe dominates the closed-form lower bound on the (m, lambda) grid
    probes = {}
    for m in (10.0, 14.0):
        path = GeometricPath.from_specs(gauss_1d(0, 1), make_contaminated_target(m, ROOT_HALF))
        for lam in (0.5, 0.6, 0.75, 0.9):
            probes[(m, lam)] = rayleigh_poincare_lower(path, unimodal_witness(m), lam=lam)
            ok &= probes[(m, lam)] >= thm3_poincare_bound(m, lam) - 1e-6
    # (c) log-probe grows linearly in m^2 at lambda = 0.75
    ms = np.array([10.0, 12.0, 14.0, 16.0])
    logs = []
    for m in ms:
        path = GeometricPath.from_specs(gauss_1d(0, 1), make_contaminated_target(m, ROOT_HALF))
        logs.append(math.log(rayleigh_poincare_lower(path, unimodal_witness(m), lam=0.75)))
    x = ms ** 2
    slope, intercept = np.polyfit(x, logs, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((np.array(logs) - fitted) ** 2))
    ss_tot = float(np.sum((np.array(logs) - np.mean(logs)) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    ok &= slope > 0 and r2 >= 0.95
    # (d) smoothed-uniform LSI cap and chi-squared cap
    for m in (4.0, 10.0, 30.0):
        ok &= lsi_um_upper(m) <= 16 * m * m
        ok &= chi2_gauss_um(m) + 1.0 <= 5 * m
    # (e) the tempered-target mass facts by quadrature
    for lam in (0.5, 0.75, 0.9):
        ok &= verify_unimodal_facts(10.0, ROOT_HALF, lam).all_satisfied
    elapsed = time.time() - start
    _verdict(8, "functional-inequality suite (probe, growth, caps, mass facts)",
             ok and elapsed < 60.0, f"slope {slope:.3g}, R2 {r2:.3f}, {elapsed:.1f}s")


def test_09_partition_sandwich():
    pairs = [
        (gauss_1d(0, 1), gauss_1d(2, 1)),
        (gauss_1d(0, 1), gauss_1d(0, 4)),
        (gauss_1d(1, 2), gauss_1d(-1, 0.5)),
        (gauss_1d(0, 1), gauss_1d(5, 3)),
    ]
    ok = True
    for nu, pi in pairs:
        path = GeometricPath.from_specs(nu.as_potential(), pi.as_potential())
        kl_np = kl_quadrature(nu, pi)
        kl_pn = kl_quadrature(pi, nu)
        for lam in (0.1, 0.3, 0.5, 0.7, 0.9):
            log_c = path.log_partition(lam)
            ok &= -1e-9 <= log_c <= min(lam * kl_np, (1 - lam) * kl_pn) + 1e-6
    bimodal = GeometricPath.from_specs(gauss_1d(0, 1), make_bimodal_target(11.0))
    for lam in (0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
        ok &= 1.0 <= math.exp(bimodal.log_partition(lam)) <= 2.0
    _verdict(9, "partition-function sandwich across 20 configurations", ok)


@pytest.mark.parametrize(
    "kind,tv_floor",
    [("lower-bimodal", 0.3), ("lower-unimodal", None)],
    ids=["bimodal-m24", "unimodal-m30"],
)
def test_10_lower_bound_demonstrations(tmp_path, kind, tv_floor):
    start = time.time()
    out = tmp_path / kind
    run_experiment(ExperimentConfig(kind=kind, params={}, out_dir=out, seed=2024))
    table = [
        line.split(",")
        for line in (out / "tv_table.csv").read_text().strip().splitlines()[1:]
    ]
    lower = float(table[-1][3])
    metrics = (out / "metrics.csv").read_text().strip().splitlines()[1].split(",")
    tv = float(metrics[2])
    ok = tv >= lower
    if tv_floor is not None:
        ok &= tv >= tv_floor and lower > 0.03
    elapsed = time.time() - start
    _verdict(10, f"lower-bound demonstration ({kind})",
             ok and elapsed < 300.0,
             f"tv {tv:.3f} vs lower bound {lower:.3f}, {elapsed:.0f}s")


def test_11_determinism_across_thread_counts(tmp_path):
    params = {
        "n_particles": 500,
        "step_size": 0.02,
        "schedule": {"kind": "linear", "horizon": 1.0},
        "target": {"family": "bimodal", "m": 5.0, "mean": [0.0], "covariance": [[1.0]], "a": 0.0},
    }
    blobs = []
    manifests = []
    for name, threads in (("a", 1), ("b", 1), ("c", 4)):
        os.environ["TEMPER_LAB_THREADS"] = str(threads)
        try:
            out = tmp_path / name
            run_experiment(
                ExperimentConfig(kind="sample", params=dict(params), out_dir=out, seed=99)
            )
            blobs.append((out / "snapshot_000.csv").read_bytes())
            manifest = json.loads((out / "manifest.json").read_text())
            manifests.append([f["sha256"] for f in manifest["files"]])
        finally:
            os.environ.pop("TEMPER_LAB_THREADS", None)
    ok = blobs[0] == blobs[1] == blobs[2] and manifests[0] == manifests[1] == manifests[2]
    _verdict(11, "byte-identical outputs for identical seeds across thread counts", ok)

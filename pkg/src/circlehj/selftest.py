"""Built-in check suites: fast (closed-form cases) and full (golden runs).

Each check returns (ok, detail).  The CLI prints one line per check and
exits nonzero if any fails.  Checks accept an optional model so a
deliberately broken model can be used to exercise the failure paths.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np

from . import flow, periodic
from . import semigroup as sg
from .errors import FlatObjective
from .model import (check_assumptions, constant_drift_model,
                    cosine_potential_model, derivative_consistency,
                    estimate_critical_value, legendre_transform,
                    make_quadratic_model)

EPS_CD = 0.5 / (4.0 * math.pi ** 2)  # subsolution amplitude of CD(1, 0.5)


def check_legendre_closed_form(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    L, p = legendre_transform(model, 0.3, 0.0, 0.0)
    if abs(L - 0.5) > 1e-10 or abs(p + 1.0) > 1e-9:
        return False, f"v=0 expected (0.5, -1), got ({L:g}, {p:g})"
    L, p = legendre_transform(model, 0.0, 1.0, 2.0)
    if abs(L - 1.0) > 1e-10 or abs(p) > 1e-9:
        return False, f"v=1,u=2 expected (1.0, 0), got ({L:g}, {p:g})"
    return True, "constant-drift transforms match the closed form"


def check_h4_margin(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    rep = check_assumptions(model)
    if not rep.h4_ok:
        return False, (f"H4 margin check failed: observed decrease rate "
                       f"{rep.h4_margin:g} vs required delta {model.delta:g}")
    return True, f"H4 margin {rep.h4_margin:g} within [delta, kappa]"


def check_assumption_reports(model=None):
    cd = model or constant_drift_model(1.0, 0.5)
    rep = check_assumptions(cd)
    if not rep.all_ok():
        return False, f"reference model failed assumptions: {rep}"
    bad = constant_drift_model(1.0, -0.5)
    rep_bad = check_assumptions(bad)
    if rep_bad.h4_ok:
        return False, "increasing model was not flagged by the H4 check"
    return True, "margins and failure flags behave as expected"


def check_derivative_consistency(model=None):
    model = model or cosine_potential_model()
    worst = derivative_consistency(model)
    ok = worst <= 1e-5
    return ok, f"worst FD mismatch {worst:.2e} (tol 1e-5)"


def check_orbit_cd(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    orbit = flow.shoot_stationary_orbit(model, guess=(0.1, 0.1))
    if abs(orbit.p0) > 1e-10 or abs(orbit.u0) > 1e-10:
        return False, f"orbit start ({orbit.p0:g}, {orbit.u0:g}) != (0, 0)"
    if abs(orbit.period - 1.0) > 1e-8:
        return False, f"period {orbit.period!r} != 1"
    if abs(orbit.period - abs(orbit.loop_integral)) > 1e-8:
        return False, "period does not match the loop integral"
    return True, f"orbit (0,0), period {orbit.period:.12f}"


def check_step_trivial(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    g = sg.Grid(128)
    w = sg.lax_oleinik_step(model, sg.Field.constant(g, 0.0), 1e-3)
    if np.max(np.abs(w.values)) > 1e-12:
        return False, "zero datum did not stay put"
    w = sg.lax_oleinik_step(model, sg.Field.constant(g, 0.1), 1e-3)
    err = np.max(np.abs(w.values - 0.1 * math.exp(0.5e-3)))
    if err > 1e-7:
        return False, f"constant datum growth off by {err:.2e}"
    return True, "single steps match the value ODE"


def check_subsolution_cd(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    orbit = flow.shoot_stationary_orbit(model, guess=(0.1, 0.1))
    spec = periodic.build_subsolution(model, orbit, x0=0.0)
    if abs(spec.epsilon - EPS_CD) > 1e-9:
        return False, f"amplitude {spec.epsilon!r} != lambda/(4 pi^2)"
    if abs(spec.value(0.0, 0.0) - orbit.u0_at(0.0)) > 1e-12:
        return False, "w(x0, 0) != u0(x0)"
    resid = periodic.verify_subsolution(model, spec, n_x=128, n_t=32)
    if resid > 1e-6:
        return False, f"subsolution residual {resid:.2e} > 1e-6"
    return True, f"amplitude {spec.epsilon:.8f}, residual {resid:.2e}"


def check_minshift_synthetic(model=None):
    g = sg.Grid(64)
    m = 32
    times = np.arange(m + 1) / m
    slices = [sg.Field(g, np.sin(2 * np.pi * (g.nodes - t))) for t in times]
    w = periodic.PeriodicSolution(
        slices=slices, times=times, period=1.0, amplitude=2.0,
        period_residual=0.0, pde_residual=0.0)
    v2 = periodic.min_shift_combine(w, 2)
    expect = -np.abs(np.sin(2 * np.pi * (g.nodes - times[3])))
    err = np.max(np.abs(v2.slices[3].values - expect))
    if err > 1e-12:
        return False, f"shifted-min mismatch {err:.2e}"
    if abs(v2.period - 0.5) > 1e-15 or v2.period_residual > 1e-12:
        return False, "combined period bookkeeping wrong"
    return True, "sin becomes -|sin| with half the period"


def check_detect_period_flat(model=None):
    g = sg.Grid(64)
    times = np.linspace(0.0, 7.0, 141)
    snaps = [sg.Field.constant(g, 0.0) for _ in times]
    trace = sg.EvolutionTrace(times, snaps, "flat", dt=0.05)
    try:
        periodic.detect_period(trace, 1.0)
    except FlatObjective:
        return True, "stationary trace rejected"
    return False, "stationary trace produced a period"


def check_orbit_cdv_golden(model=None):
    from .golden import CDV_ORBIT
    model = model or cosine_potential_model()
    orbit = flow.shoot_stationary_orbit(model)
    errs = (abs(orbit.p0 - CDV_ORBIT["p0"]), abs(orbit.u0 - CDV_ORBIT["u0"]),
            abs(orbit.period - CDV_ORBIT["period"]))
    ok = max(errs) <= 1e-7
    return ok, f"golden deviations {tuple(f'{e:.1e}' for e in errs)} (tol 1e-7)"


def check_weak_kam_consistency(model=None):
    model = model or cosine_potential_model()
    orbit = flow.shoot_stationary_orbit(model)
    g = sg.Grid(256)
    u_plus = sg.weak_kam_forward(model, g)
    err = float(np.max(np.abs(u_plus.values - orbit.u0_at(g.nodes))))
    ok = err <= 2e-2
    return ok, f"||u+ - u0|| = {err:.2e} at N=256 (tol 2e-2)"


def check_action_cross(model=None):
    model = model or cosine_potential_model()
    orbit = flow.shoot_stationary_orbit(model)
    g = sg.Grid(256)
    res = sg.action_function(model, 0.0, float(orbit.u0_at(0.0)), 0.3, 0.7,
                             method="both", grid=g, dt=4e-3)
    gap = res.cross_gap
    ok = gap is not None and gap <= 5e-2
    return ok, f"grid/shooting gap {gap:.2e} (tol 5e-2)"


def check_pinned_limit_cd(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    orbit = flow.shoot_stationary_orbit(model, guess=(0.1, 0.1))
    sol = periodic.pinned_periodic_limit(model, orbit, grid=sg.Grid(256))
    if sol.period_residual > 5e-3:
        return False, f"period residual {sol.period_residual:.2e} > 5e-3"
    if sol.amplitude_at_x0 < 0.5 * EPS_CD:
        return False, f"oscillation {sol.amplitude_at_x0:.3e} below the floor"
    return True, (f"residual {sol.period_residual:.2e}, oscillation "
                  f"{sol.amplitude_at_x0:.3f}")


def check_trichotomy_golden(model=None):
    model = model or constant_drift_model(1.0, 0.5)
    g = sg.Grid(256)
    u_plus = sg.Field.constant(g, 0.0)
    data = [
        (sg.Field.constant(g, 0.1), "D3_plus_infinity"),
        (sg.Field.constant(g, -0.1), "D2_minus_infinity"),
        (sg.Field(g, 0.05 - 0.05 * np.cos(2 * np.pi * g.nodes)), "D1_bounded"),
    ]
    for phi, want in data:
        rep = periodic.classify_trichotomy(model, phi, u_plus, t_budget=20.0)
        if rep.klass != want or not rep.confirmed:
            return False, f"expected confirmed {want}, got {rep.klass} " \
                          f"(confirmed={rep.confirmed})"
    return True, "all three golden data classified and confirmed"


def check_critical_value(model=None):
    model = model or make_quadratic_model(1.0, 0.0, "0.2*cos(2*pi*x)", 0.0)
    c = estimate_critical_value(model)
    ok = abs(c - 0.2) <= 1e-2
    return ok, f"mechanical critical value {c:.4f} (expect 0.2 +- 1e-2)"


FAST_CHECKS = [
    ("legendre-closed-form", check_legendre_closed_form),
    ("h4-margin", check_h4_margin),
    ("assumption-reports", check_assumption_reports),
    ("derivative-consistency", check_derivative_consistency),
    ("orbit-constant-drift", check_orbit_cd),
    ("step-trivial", check_step_trivial),
    ("subsolution-constant-drift", check_subsolution_cd),
    ("min-shift-synthetic", check_minshift_synthetic),
    ("detect-period-flat", check_detect_period_flat),
]

FULL_CHECKS = FAST_CHECKS + [
    ("orbit-cdv-golden", check_orbit_cdv_golden),
    ("weak-kam-consistency", check_weak_kam_consistency),
    ("action-cross-check", check_action_cross),
    ("pinned-limit-constant-drift", check_pinned_limit_cd),
    ("trichotomy-golden", check_trichotomy_golden),
    ("critical-value-mechanical", check_critical_value),
]


def run_selftest(level="fast", stream=None):
    """Run the named check suite; returns the number of failures."""
    import sys

    stream = stream or sys.stdout
    checks = FAST_CHECKS if level == "fast" else FULL_CHECKS
    failures = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name, fn in checks:
            start = time.perf_counter()
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashed check is a failed check
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            took = time.perf_counter() - start
            status = "PASS" if ok else "FAIL"
            stream.write(f"[{status}] {name}: {detail} ({took:.1f}s)\n")
            failures += 0 if ok else 1
    return failures

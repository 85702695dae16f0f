"""Acceptance criteria 1-8.  Each test records a one-line PASS/FAIL verdict
that is printed in the pytest terminal summary."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from test_crane_model import matrix_form, random_state, scalar_equations

from erg_crane.constraints import LinearConstraint, ObstacleConstraint, zero_swing_position
from erg_crane.crane_model import (
    equilibrium_input, equilibrium_state, forward_dynamics, total_energy,
)
from erg_crane.erg import ConstraintSet, GovernorParams, GovernorState, dsm, erg_step
from erg_crane.linearize import linearize
from erg_crane.simulator import ClosedLoop, read_csv, rk4_step
from erg_crane.synthesis import REFERENCE_GAIN, LevelSetCertificate, gamma_threshold

SWING = math.pi / 36
TH3_MIN, TH3_MAX = math.pi / 18, 8 * math.pi / 9


def record(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_equilibrium(params):
    t0 = time.perf_counter()
    worst = 0.0
    for v3 in np.linspace(TH3_MIN, TH3_MAX, 100):
        x = equilibrium_state([v3, 0.0])
        worst = max(worst, np.abs(forward_dynamics(x, equilibrium_input(v3, params), params)).max())
    wall = time.perf_counter() - t0
    record(1, worst < 1e-9 and wall < 1.0,
           f"max |qdd| = {worst:.2e} (< 1e-9), runtime {wall:.3f} s (< 1 s)")


def test_criterion_2_model_consistency(params):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        q, qd = random_state(rng)
        qdd = rng.uniform(-5, 5, 4)
        u = rng.uniform(-80, 80, 2)
        worst = max(worst, np.abs(matrix_form(q, qd, qdd, u, params)
                                  - scalar_equations(q, qd, qdd, u, params)).max())
    x = np.array([0.03, -0.02, math.pi / 3, 0.0, 0.05, 0.1, -0.2, 0.3])
    e0 = total_energy(x, params)
    drift = 0.0
    for _ in range(10000):
        x = rk4_step(x, [0.0, 0.0], 1e-4, params)
        drift = max(drift, abs(total_energy(x, params) - e0) / abs(e0))
    record(2, worst < 1e-10 and drift < 1e-6,
           f"equation residual {worst:.2e} (< 1e-10), relative energy drift {drift:.2e} (< 1e-6)")


def test_criterion_3_stabilization(params):
    report, ok = [], True
    for name, v3 in [("pi/3", math.pi / 3), ("pi/9", math.pi / 9), ("pi/2", math.pi / 2),
                     ("3pi/4", 3 * math.pi / 4)]:
        mod = linearize([v3, 0.0], params)
        top = np.linalg.eigvals(mod.A - mod.B @ REFERENCE_GAIN).real.max()
        ok &= top < 0.0
        report.append(f"{name}: {top:+.3e}")
    record(3, ok, "max Re(eig(A - BK)) " + ", ".join(report) + " (all < 0)")


def test_criterion_4_certificates(system):
    certs = list(system.cs.linear_certs)
    for oc in system.obstacles:
        certs.extend(oc.certificates)
    lyap = max(c.lyap_residual_max_eig for c in certs)
    floor = min(c.floor_margin_min_eig for c in certs)
    # the stored margins are re-derived from the matrices themselves
    for c in certs:
        P, beta = c.P, c.beta
        assert np.linalg.eigvalsh(0.5 * (system.Acl.T @ P + P @ system.Acl
                                         + (system.Acl.T @ P + P @ system.Acl).T)).max() \
            == pytest.approx(c.lyap_residual_max_eig, rel=1e-9, abs=1e-14)
        assert np.linalg.eigvalsh(P - np.outer(beta, beta) / (beta @ beta)).min() \
            == pytest.approx(c.floor_margin_min_eig, rel=1e-6, abs=1e-14)

    rng = np.random.default_rng(11)
    cs, tested, contained = system.cs, 0, True
    while tested < 100:
        v = np.array([rng.uniform(TH3_MIN, TH3_MAX), rng.uniform(-math.pi, math.pi)])
        if cs.steady_admissible_margin(v) <= 0:
            continue
        tested += 1
        for beta, d, P in zip(cs.betas, cs.ds, cs.Ps):
            gamma = gamma_threshold(v, beta, d, P)
            if gamma < 0:          # a non-active tangent of an obstacle union
                continue
            top = beta @ equilibrium_state(v) + math.sqrt(gamma * beta @ np.linalg.solve(P, beta))
            contained &= top <= d + 1e-9
    record(4, lyap < -1e-10 and floor > 1e-10 and contained,
           f"{len(certs)} certificates: max lyap eig {lyap:.2e} (< -1e-10), "
           f"min floor eig {floor:.2e} (> 1e-10), containment on 100 admissible v: {contained}")


def test_criterion_5_paper_scenario(system, governed, simulate_runs):
    x = governed.x
    swing = np.abs(x[:, :2]).max()
    pitch_ok = bool(np.all((x[:, 2] >= TH3_MIN) & (x[:, 2] <= TH3_MAX)))
    ee = zero_swing_position(x[:, 2], x[:, 3], system.params)
    hits = sum(int(box.contains(ee).sum()) for box in system.boxes)
    final_err = np.abs(x[-1, 2:4] - system.scenario.references[-1].r).max()
    min_dsm = governed.dsm.min()
    wall = simulate_runs[0]["wall"]
    ok = swing <= SWING and pitch_ok and hits == 0 and final_err < 1e-2 and min_dsm >= 0 \
        and wall < 30.0
    record(5, ok,
           f"max swing {swing:.4f} (<= {SWING:.4f}), pitch in range {pitch_ok}, "
           f"samples inside boxes {hits}, final error {final_err:.2e} rad (< 1e-2), "
           f"min DSM {min_dsm:.3e} (>= 0), simulate wall time {wall:.1f} s (< 30 s)")


def test_criterion_6_comparison(compare_run):
    assert compare_run["code"] == 0
    gov = read_csv(compare_run["out"] / "governed.csv")
    base = read_csv(compare_run["out"] / "baseline.csv")
    g_swing = max(np.abs(gov["th1"]).max(), np.abs(gov["th2"]).max())
    b_swing = max(np.abs(base["th1"]).max(), np.abs(base["th2"]).max())
    first = (base["r3"] == base["r3"][0]) & (base["r4"] == base["r4"][0])
    b_step = max(np.abs(base["th1"][first]).max(), np.abs(base["th2"][first]).max())
    if b_step > SWING:
        ok = g_swing <= b_swing and g_swing <= SWING
        extra = f"ungoverned step to r1 {b_step:.4f} (> {SWING:.4f})"
    else:
        ok = g_swing <= b_swing
        extra = "ungoverned run within the bound; scenario flagged for stiffer weights"
    record(6, ok, f"governed max swing {g_swing:.4f} <= ungoverned {b_swing:.4f}, "
                  f"governed <= {SWING:.4f}; {extra}")


def _unit(i):
    return LevelSetCertificate(P=np.eye(8), constraint_id=i, lyap_residual_max_eig=-1.0,
                               floor_margin_min_eig=1.0)


def test_criterion_7_erg_units(system):
    gp = GovernorParams()
    checks = {}

    # clamp: a state outside the level set gives a zero applied margin
    beta = np.zeros(8)
    beta[2] = 1.0
    cs = ConstraintSet([LinearConstraint(beta, 2.0)], [_unit(0)])
    x = equilibrium_state([1.5, 0.0])
    x[0] = 0.9
    res = dsm(x, [1.5, 0.0], cs, gp)
    checks["clamp"] = res.raw < 0 and res.delta == 0.0

    # fixed point r = v = equilibrium on the bundled scenario
    v = system.scenario.references[-1].r
    plant = ClosedLoop(system.K, system.params, system.gp.Ts, system.scenario.dt_int)
    out = erg_step(equilibrium_state(v), GovernorState(v=v, r=v), plant, system.gp, system.cs)
    checks["fixed point"] = bool(np.array_equal(out.v, v))

    # rejected candidate: a huge gain pushes the candidate past the pitch limit
    fast = GovernorParams(k=1e6, zeta=2e-3, delta=1e-3)
    lin = system.cs.linear
    cs_lin = ConstraintSet(lin, system.cs.linear_certs)
    v = np.array([TH3_MAX - 0.01, 0.0])
    out = erg_step(equilibrium_state(v), GovernorState(v=v, r=[TH3_MAX + 0.05, 0.0], updates=1),
                   plant, fast, cs_lin)
    checks["hold"] = (not out.accepted) and bool(np.array_equal(out.v, v))

    # union max rule on a two-halfplane obstacle
    b1, b2 = np.zeros(8), np.zeros(8)
    b1[2], b2[3] = -1.0, -1.0
    oc = ObstacleConstraint(halfplanes=((b1, -1.0), (b2, 0.0)), certificates=(_unit(0), _unit(1)))
    cs_u = ConstraintSet([], [], [oc])
    v = [1.3, -0.4]
    res = dsm(equilibrium_state(v), v, cs_u, gp)
    s = -1.0 - b1 @ equilibrium_state(v)
    checks["union max"] = res.raw == s * s and res.delta == gp.k * (s * s) and res.active == (0,)

    record(7, all(checks.values()), ", ".join(f"{k}: {v}" for k, v in checks.items()))


def test_criterion_8_determinism(simulate_runs):
    a, b = (r["out"] / "trajectory.csv" for r in simulate_runs)
    same = a.read_bytes() == b.read_bytes()
    record(8, all(r["code"] == 0 for r in simulate_runs) and same,
           f"two simulate runs byte-identical: {same} ({a.stat().st_size} bytes)")

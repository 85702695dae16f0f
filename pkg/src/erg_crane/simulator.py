"""Closed-loop simulation of the crane under LQR + reference governor."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .crane_model import (
    NQ, CraneParams, equilibrium_input, equilibrium_state, forward_kinematics,
    state_derivative,
)
from .erg import ConstraintSet, GovernorParams, GovernorState, dsm, erg_step

log = logging.getLogger(__name__)

CSV_COLUMNS = ["t", "th1", "th2", "th3", "th4", "dth1", "dth2", "dth3", "dth4",
               "v3", "v4", "r3", "r4", "u3", "u4", "dsm", "margin", "ee_x", "ee_y", "ee_z"]


class ConstraintViolationError(RuntimeError):
    pass


def control_law(x, v, K, p: CraneParams) -> np.ndarray:
    """``u = -K (x - xbar(v)) + u_eq(v3)``."""
    return -np.asarray(K) @ (np.asarray(x, dtype=float) - equilibrium_state(v)) \
        + equilibrium_input(v[0], p)


def rk4_step(x, u, dt: float, p: CraneParams) -> np.ndarray:
    """Classical RK4 step of ``xdot = [qdot; qddot]``.

    ``u`` is either a fixed input or a state feedback ``u(x)`` re-evaluated
    at every stage.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    policy = u if callable(u) else (lambda _x, _u=np.asarray(u, dtype=float): _u)
    k1 = state_derivative(x, policy(x), p)
    x2 = x + 0.5 * dt * k1
    k2 = state_derivative(x2, policy(x2), p)
    x3 = x + 0.5 * dt * k2
    k3 = state_derivative(x3, policy(x3), p)
    x4 = x + dt * k3
    k4 = state_derivative(x4, policy(x4), p)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class ClosedLoop:
    """Nonlinear plant + LQR, integrated over one sampling period at a frozen reference."""

    def __init__(self, K, p: CraneParams, Ts: float, dt_int: float, cs: ConstraintSet | None = None):
        n = Ts / dt_int
        if dt_int > Ts or abs(n - round(n)) > 1e-9:
            raise ValueError("dt_int must divide the sampling period Ts")
        self.K = np.asarray(K, dtype=float)
        self.p = p
        self.dt = dt_int
        self.substeps = int(round(n))
        self.cs = cs
        # worst linear margin over the substeps of the most recent propagate()
        self.last_worst = np.inf

    def __call__(self, x, v):
        return self.propagate(x, v)[0]

    def propagate(self, x, v):
        """State after one period and the worst linear margin over its substeps."""
        v = np.asarray(v, dtype=float)
        xbar = equilibrium_state(v)
        u_eq = equilibrium_input(v[0], self.p)
        K = self.K

        def policy(z):
            return u_eq - K @ (z - xbar)

        worst = np.inf
        for _ in range(self.substeps):
            x = rk4_step(x, policy, self.dt, self.p)
            if self.cs is not None and self.cs.linear_idx.size:
                lin = self.cs.linear_idx
                worst = min(worst, float((self.cs.ds[lin] - self.cs.betas[lin] @ x).min()))
        self.last_worst = worst
        return x, worst


@dataclass(frozen=True)
class Reference:
    r: np.ndarray
    switch: str = "on_convergence"   # or "at_time"
    value: float = 2e-2              # tolerance (rad) or switch time (s)

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(2))
        if self.switch not in ("on_convergence", "at_time"):
            raise ValueError(f"unknown switch rule {self.switch!r}")


@dataclass(frozen=True)
class Scenario:
    x0: np.ndarray
    references: tuple
    duration: float = 60.0
    dt_int: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(2 * NQ))
        refs = tuple(r if isinstance(r, Reference) else Reference(np.asarray(r))
                     for r in self.references)
        if not refs:
            raise ValueError("scenario needs at least one reference")
        object.__setattr__(self, "references", refs)
        if self.duration <= 0 or self.dt_int <= 0:
            raise ValueError("duration and dt_int must be positive")


@dataclass
class TrajectoryLog:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    r: np.ndarray
    u: np.ndarray
    dsm: np.ndarray
    margin: np.ndarray
    ee: np.ndarray
    ref_index: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.v, self.r, self.u,
                                self.dsm, self.margin, self.ee])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.as_array():
                writer.writerow([format(float(val), ".17g") for val in row])


def read_csv(path) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return {name: data[:, i] for i, name in enumerate(header)}


def _converged(x, v, r, tol, governed):
    boom_ok = np.max(np.abs(x[2:4] - r)) < tol
    return boom_ok and (not governed or np.max(np.abs(v - r)) < tol)


def run_scenario(s: Scenario, K, cs: ConstraintSet, gp: GovernorParams, p: CraneParams,
                 governed: bool = True, check_constraints: bool | None = None) -> TrajectoryLog:
    """Simulate the scenario; one governor update then ``Ts/dt_int`` RK4 substeps per period.

    ``governed=False`` applies the target reference directly (plain LQR).
    Linear constraints are checked at every substep of governed runs and a
    :class:`ConstraintViolationError` is raised on the first violation.
    """
    if check_constraints is None:
        check_constraints = governed
    plant = ClosedLoop(K, p, gp.Ts, s.dt_int, cs)
    n_steps = int(round(s.duration / gp.Ts))
    x = s.x0.copy()
    refs = s.references
    ref_i = 0
    v0 = x[2:4].copy() if governed else refs[0].r.copy()
    g = GovernorState(v=v0, r=refs[0].r)

    rows_t, rows_x, rows_v, rows_r, rows_u = [], [], [], [], []
    rows_dsm, rows_margin, rows_ee, rows_ref = [], [], [], []
    for k in range(n_steps + 1):
        t = k * gp.Ts
        # reference switching
        cur = refs[ref_i]
        if ref_i + 1 < len(refs):
            if cur.switch == "at_time":
                advance = t >= cur.value
            else:
                advance = _converged(x, g.v, cur.r, cur.value, governed)
            if advance:
                ref_i += 1
                g = GovernorState(v=g.v if governed else refs[ref_i].r, r=refs[ref_i].r,
                                  updates=g.updates)
                log.info("t=%.2f: switching to reference %d", t, ref_i)

        margin_now = dsm(x, g.v, cs, gp)
        rows_t.append(t)
        rows_x.append(x)
        rows_v.append(g.v)
        rows_r.append(g.r)
        rows_u.append(control_law(x, g.v, K, p))
        rows_dsm.append(margin_now.delta)
        rows_margin.append(cs.steady_admissible_margin(g.v))
        rows_ee.append(forward_kinematics(x[:NQ], p))
        rows_ref.append(ref_i)
        if k == n_steps:
            break

        if governed:
            g = erg_step(x, g, plant, gp, cs)
        # with a deterministic plant the accepted prediction is the next state
        if g.x_pred is not None:
            x_next, worst = g.x_pred, plant.last_worst
        else:
            x_next, worst = plant.propagate(x, g.v)
        if check_constraints and worst < 0.0:
            raise ConstraintViolationError(
                f"linear constraint violated during [{t:.3f}, {t + gp.Ts:.3f}] s "
                f"(margin {worst:.3e})")
        x = x_next

    return TrajectoryLog(
        t=np.array(rows_t), x=np.array(rows_x), v=np.array(rows_v), r=np.array(rows_r),
        u=np.array(rows_u), dsm=np.array(rows_dsm), margin=np.array(rows_margin),
        ee=np.array(rows_ee), ref_index=np.array(rows_ref),
        meta={"governed": governed, "Ts": gp.Ts, "dt_int": s.dt_int},
    )


@dataclass(frozen=True)
class Metrics:
    max_swing1: float
    max_swing2: float
    settling_times: tuple      # per reference; nan if it never settled
    min_dsm: float
    min_margin: float
    max_u3: float
    max_u4: float
    final_boom: tuple

    @property
    def max_swing(self) -> float:
        return max(self.max_swing1, self.max_swing2)

    def as_dict(self) -> dict:
        out = {
            "max_swing1": self.max_swing1,
            "max_swing2": self.max_swing2,
            "max_swing": self.max_swing,
            "min_dsm": self.min_dsm,
            "min_margin": self.min_margin,
            "max_u3": self.max_u3,
            "max_u4": self.max_u4,
            "final_th3": self.final_boom[0],
            "final_th4": self.final_boom[1],
        }
        for i, ts in enumerate(self.settling_times):
            out[f"settling_time_{i + 1}"] = ts
        return out


def metrics(log: TrajectoryLog, tol: float = 2e-2) -> Metrics:
    """Summary of a run.  Settling time of reference ``i`` is measured from its
    activation until the boom stays within ``tol`` of it for the rest of that
    reference's window."""
    if len(log) == 0:
        raise ValueError("empty trajectory log")
    settling = []
    for i in np.unique(log.ref_index):
        sel = np.flatnonzero(log.ref_index == i)
        # the sample at which the next reference takes over belongs to this window
        if sel[-1] + 1 < len(log):
            sel = np.append(sel, sel[-1] + 1)
        err = np.max(np.abs(log.x[sel, 2:4] - log.r[sel[0]]), axis=1)
        outside = np.flatnonzero(err >= tol)
        if outside.size == 0:
            settling.append(0.0)
        elif outside[-1] == sel.size - 1:
            settling.append(float("nan"))
        else:
            settling.append(float(log.t[sel[outside[-1] + 1]] - log.t[sel[0]]))
    return Metrics(
        max_swing1=float(np.abs(log.x[:, 0]).max()),
        max_swing2=float(np.abs(log.x[:, 1]).max()),
        settling_times=tuple(settling),
        min_dsm=float(log.dsm.min()),
        min_margin=float(log.margin.min()),
        max_u3=float(np.abs(log.u[:, 0]).max()),
        max_u4=float(np.abs(log.u[:, 1]).max()),
        final_boom=(float(log.x[-1, 2]), float(log.x[-1, 3])),
    )

"""Explicit reference governor: safety margin, navigation field, reference update.

The governor filters the boom reference ``v = [v3, v4]``.  Each constraint
``beta^T x <= d`` carries a level-set matrix ``P``; the Lyapunov function
``V = (x - xbar(v))^T P (x - xbar(v))`` must stay below the threshold
``Gamma(v)`` for the frozen-reference transient to respect the constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .constraints import PITCH, YAW, LinearConstraint, ObstacleConstraint
from .crane_model import equilibrium_state
from .synthesis import LevelSetCertificate


class InfeasibleStartError(RuntimeError):
    """The governor was started from a state with negative safety margin."""


@dataclass(frozen=True)
class GovernorParams:
    """ERG tuning.  ``zeta`` and ``delta`` are joint-space margins in radians.

    ``omega`` is accepted for configuration compatibility and not used.
    """

    k: float = 30.0
    eta: float = 1e-4
    zeta: float = np.deg2rad(10.0)
    delta: float = np.deg2rad(0.09)
    Ts: float = 0.01
    omega: float = 0.6

    def __post_init__(self):
        if self.k <= 0 or self.eta <= 0 or self.Ts <= 0:
            raise ValueError("k, eta and Ts must be positive")
        if not self.zeta > self.delta > 0:
            raise ValueError(f"need zeta > delta > 0, got zeta={self.zeta}, delta={self.delta}")


@dataclass(frozen=True)
class GovernorState:
    v: np.ndarray
    r: np.ndarray
    updates: int = 0
    last_delta: float = float("nan")
    accepted: bool = True
    x_pred: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(2))
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float).reshape(2))


@dataclass(frozen=True)
class DSMResult:
    delta: float          # clamped, k-scaled
    raw: float            # unclamped min/max of Gamma - V (not k-scaled)
    active: tuple         # per obstacle, global index of its active tangent


class ConstraintSet:
    """Certified linear constraints plus obstacle unions, packed for vector evaluation."""

    def __init__(self, linear: list[LinearConstraint], linear_certs: list[LevelSetCertificate],
                 obstacles: list[ObstacleConstraint] = ()):
        if len(linear) != len(linear_certs):
            raise ValueError("one certificate per linear constraint is required")
        for oc in obstacles:
            if len(oc.certificates) != len(oc.halfplanes):
                raise ValueError(f"obstacle {oc.label!r} has no certificates attached")
        self.linear = list(linear)
        self.linear_certs = list(linear_certs)
        self.obstacles = list(obstacles)

        betas, ds, Ps, groups, labels = [], [], [], [], []
        for c, cert in zip(linear, linear_certs):
            betas.append(c.beta_x)
            ds.append(c.d)
            Ps.append(cert.P)
            groups.append(-1)
            labels.append(c.label)
        for j, oc in enumerate(obstacles):
            for i, ((beta, d), cert) in enumerate(zip(oc.halfplanes, oc.certificates)):
                betas.append(beta)
                ds.append(d)
                Ps.append(cert.P)
                groups.append(j)
                labels.append(f"{oc.label}[{i}]")
        self.betas = np.array(betas)
        self.ds = np.array(ds)
        self.Ps = np.array(Ps)
        self.groups = np.array(groups)
        self.labels = labels
        self.dens = np.einsum("ni,ni->n", self.betas, np.linalg.solve(self.Ps, self.betas[..., None])[..., 0])
        self.beta_norms = np.linalg.norm(self.betas, axis=1)
        planar = self.betas[:, [PITCH, YAW]]
        pnorm = np.linalg.norm(planar, axis=1)
        self.rep_dirs = np.zeros_like(planar)
        has = pnorm > 0
        self.rep_dirs[has] = -planar[has] / pnorm[has, None]
        self.linear_idx = np.flatnonzero(self.groups == -1)
        self.obstacle_idx = [np.flatnonzero(self.groups == j) for j in range(len(obstacles))]

    def __len__(self):
        return len(self.ds)

    def steady_margins(self, v) -> np.ndarray:
        """Margins ``d - beta^T xbar(v)`` for every half-space."""
        return self.ds - self.betas @ equilibrium_state(v)

    def gammas(self, v) -> np.ndarray:
        s = self.steady_margins(v)
        return np.sign(s) * s * s / self.dens

    def lyap_values(self, x, v) -> np.ndarray:
        e = np.asarray(x, dtype=float) - equilibrium_state(v)
        return (self.Ps @ e) @ e

    def steady_admissible_margin(self, v) -> float:
        """Worst steady margin: min over linear, min over obstacles of the best tangent."""
        s = self.steady_margins(v) / self.beta_norms
        worst = s[self.linear_idx].min() if self.linear_idx.size else np.inf
        for idx in self.obstacle_idx:
            worst = min(worst, s[idx].max())
        return float(worst)


def lyap_value(x, v, P) -> float:
    e = np.asarray(x, dtype=float) - equilibrium_state(v)
    return float(e @ np.asarray(P) @ e)


def dsm(x, v, cs: ConstraintSet, gp: GovernorParams) -> DSMResult:
    """Dynamic safety margin with union (max) semantics for each obstacle."""
    terms = cs.gammas(v) - cs.lyap_values(x, v)
    worst = terms[cs.linear_idx].min() if cs.linear_idx.size else np.inf
    active = []
    for idx in cs.obstacle_idx:
        # argmax returns the first maximizer: lowest tangent index wins ties
        best = idx[int(np.argmax(terms[idx]))]
        active.append(int(best))
        worst = min(worst, terms[best])
    return DSMResult(delta=max(gp.k * float(worst), 0.0), raw=float(worst), active=tuple(active))


def nav_attraction(r, v, gp: GovernorParams) -> np.ndarray:
    diff = np.asarray(r, dtype=float) - np.asarray(v, dtype=float)
    return diff / max(np.linalg.norm(diff), gp.eta)


def repulsion_weight(margin, gp: GovernorParams):
    return np.maximum((gp.zeta - margin) / (gp.zeta - gp.delta), 0.0)


def nav_repulsion(x, v, cs: ConstraintSet, gp: GovernorParams, active=None) -> np.ndarray:
    """Sum of linear-constraint repulsions plus one active tangent per obstacle.

    ``active`` defaults to the tangents selected by :func:`dsm` at ``(x, v)``.
    """
    if active is None:
        active = dsm(x, v, cs, gp).active
    idx = np.concatenate([cs.linear_idx, np.asarray(active, dtype=int)])
    s = cs.steady_margins(v)[idx] / cs.beta_norms[idx]
    w = repulsion_weight(s, gp)
    return w @ cs.rep_dirs[idx]


def navigation_field(x, r, v, cs: ConstraintSet, gp: GovernorParams, active=None) -> np.ndarray:
    return nav_attraction(r, v, gp) + nav_repulsion(x, v, cs, gp, active)


def erg_step(x, g: GovernorState, propagate, gp: GovernorParams,
             cs: ConstraintSet) -> GovernorState:
    """One sampling period of the discrete governor.

    ``propagate(x, v)`` returns the closed-loop state one period ahead under a
    frozen reference ``v``.  The candidate ``v + Ts * Delta * rho`` (its length
    capped at ``|r - v|``) is applied only if the predicted state keeps a
    non-negative safety margin; otherwise ``v`` is held.  The returned state carries the accepted prediction in
    ``x_pred`` (``None`` when the reference was held or did not move).
    """
    x = np.asarray(x, dtype=float)
    here = dsm(x, g.v, cs, gp)
    if g.updates == 0 and here.raw < 0.0:
        raise InfeasibleStartError(f"negative safety margin {here.raw:.3e} at start")
    if here.delta == 0.0:
        return replace(g, updates=g.updates + 1, last_delta=0.0, accepted=True, x_pred=None)

    rho = navigation_field(x, g.r, g.v, cs, gp, here.active)
    step = gp.Ts * here.delta * rho
    # never step further than the remaining distance to the target
    reach = np.linalg.norm(g.r - g.v)
    length = np.linalg.norm(step)
    if length > reach:
        step = step * (reach / length)
    candidate = g.v + step
    if np.array_equal(candidate, g.v):
        return replace(g, updates=g.updates + 1, last_delta=here.delta, accepted=True, x_pred=None)
    x_hat = propagate(x, candidate)
    if dsm(x_hat, candidate, cs, gp).raw >= 0.0:
        return replace(g, v=candidate, updates=g.updates + 1, last_delta=here.delta,
                       accepted=True, x_pred=x_hat)
    return replace(g, updates=g.updates + 1, last_delta=here.delta, accepted=False, x_pred=None)

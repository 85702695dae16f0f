"""State constraints: joint limits, swing bounds and obstacle embeddings.

Every constraint is a half-space ``beta^T x <= d`` on the 8-dim state.
Obstacles are Cartesian boxes mapped into the (pitch, yaw) plane at zero
swing and represented there as a *union* of half-planes: the state is safe
w.r.t. an obstacle if it lies on the outer side of at least one of them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .crane_model import NX, CraneParams
from .synthesis import LevelSetCertificate, level_set_matrix

log = logging.getLogger(__name__)

THETA3_MIN = np.pi / 18
THETA3_MAX = 8 * np.pi / 9
SWING_MAX = np.pi / 36

# State indices of pitch and yaw.
PITCH, YAW = 2, 3


class DegenerateHullError(ValueError):
    pass


@dataclass(frozen=True)
class LinearConstraint:
    beta_x: np.ndarray
    d: float
    label: str = ""

    def __post_init__(self):
        beta = np.asarray(self.beta_x, dtype=float).reshape(NX)
        if not np.any(beta):
            raise ValueError("constraint normal must be nonzero")
        object.__setattr__(self, "beta_x", beta)
        object.__setattr__(self, "d", float(self.d))

    def margin(self, x) -> float:
        return float(self.d - self.beta_x @ np.asarray(x, dtype=float))

    def satisfied(self, x) -> bool:
        return self.margin(x) >= 0.0


def _axis_constraint(index, sign, bound, label):
    beta = np.zeros(NX)
    beta[index] = sign
    return LinearConstraint(beta, bound, label)


def joint_limit_constraints(theta3_min: float = THETA3_MIN, theta3_max: float = THETA3_MAX,
                            swing_max: float = SWING_MAX) -> list[LinearConstraint]:
    """Pitch range and swing bounds as six half-spaces."""
    return [
        _axis_constraint(2, 1.0, theta3_max, "pitch_max"),
        _axis_constraint(2, -1.0, -theta3_min, "pitch_min"),
        _axis_constraint(0, 1.0, swing_max, "swing1_max"),
        _axis_constraint(0, -1.0, swing_max, "swing1_min"),
        _axis_constraint(1, 1.0, swing_max, "swing2_max"),
        _axis_constraint(1, -1.0, swing_max, "swing2_min"),
    ]


def default_safety_margin(p: CraneParams, payload_radius: float = 0.0) -> float:
    """Largest horizontal payload offset allowed by the swing bound, plus payload size."""
    return p.l * np.sin(SWING_MAX) + payload_radius


@dataclass(frozen=True)
class ObstacleBox:
    center: np.ndarray
    half_extents: np.ndarray
    label: str = "custom"
    safety_margin: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        h = np.asarray(self.half_extents, dtype=float).reshape(3)
        if np.any(h <= 0):
            raise ValueError(f"obstacle {self.label!r}: half extents must be positive")
        if self.safety_margin < 0:
            raise ValueError(f"obstacle {self.label!r}: safety margin must be non-negative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "safety_margin", float(self.safety_margin))

    def contains(self, points) -> np.ndarray:
        """Membership of Cartesian points (..., 3) in the margin-inflated box."""
        pts = np.asarray(points, dtype=float)
        return np.all(np.abs(pts - self.center) <= self.half_extents + self.safety_margin, axis=-1)


def zero_swing_position(theta3, theta4, p: CraneParams) -> np.ndarray:
    """Vectorized payload position with ``th1 = th2 = 0``; shape (..., 3)."""
    theta3 = np.asarray(theta3, dtype=float)
    theta4 = np.asarray(theta4, dtype=float)
    reach = p.L * np.sin(theta3)
    return np.stack([reach * np.cos(theta4), reach * np.sin(theta4),
                     p.L * np.cos(theta3) - p.l], axis=-1)


def joint_grid(grid_n: int, theta4_range=(-np.pi, np.pi)):
    th3 = np.linspace(THETA3_MIN, THETA3_MAX, grid_n)
    th4 = np.linspace(theta4_range[0], theta4_range[1], grid_n)
    return np.meshgrid(th3, th4, indexing="ij")


def obstacle_to_joint_space(box: ObstacleBox, p: CraneParams, grid_n: int = 200,
                            theta4_range=(-np.pi, np.pi)) -> np.ndarray:
    """Grid points ``(th3, th4)`` whose zero-swing payload lies inside ``box``."""
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    T3, T4 = joint_grid(grid_n, theta4_range)
    inside = box.contains(zero_swing_position(T3, T4, p))
    return np.column_stack([T3[inside], T4[inside]])


@dataclass(frozen=True)
class ObstacleConstraint:
    """Union of half-planes in the (pitch, yaw) plane, lifted to the state space.

    ``halfplanes`` holds ``(beta_t, d_t)`` pairs; ``beta_t`` is supported on
    the pitch and yaw entries only and has unit norm.
    """

    halfplanes: tuple
    certificates: tuple = ()
    label: str = ""
    hull: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        if len(self.halfplanes) == 0:
            raise ValueError("obstacle needs at least one half-plane")

    @property
    def normals(self) -> np.ndarray:
        """Outward unit normals ``(n, 2)`` of the supporting lines."""
        return -np.array([b[[PITCH, YAW]] for b, _ in self.halfplanes])

    def margins(self, theta) -> np.ndarray:
        """Signed distances ``d_t - beta_t^T x`` for joint points ``(..., 2)``."""
        theta = np.asarray(theta, dtype=float)
        betas = np.array([b[[PITCH, YAW]] for b, _ in self.halfplanes])
        ds = np.array([d for _, d in self.halfplanes])
        return ds - theta @ betas.T

    def satisfied_count(self, theta) -> np.ndarray:
        return np.sum(self.margins(theta) > 0.0, axis=-1)


def _thicken(points, width):
    """Turn a collinear / single-point set into a thin 2-D polygon."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    if np.allclose(centered, 0.0):
        direction = np.array([1.0, 0.0])
    else:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        direction = vt[0]
    normal = np.array([-direction[1], direction[0]])
    along = centered @ direction
    ends = [pts.mean(axis=0) + t * direction
            for t in (along.min() - width, along.max() + width)]
    return np.array([e + s * width * normal for e in ends for s in (-1.0, 1.0)])


def tangent_embedding(points, n_t: int = 8, label: str = "", strict: bool = False,
                      thicken_width: float = 1e-3, pad: float = 0.0) -> ObstacleConstraint:
    """Half-plane union whose safe region is the complement of the convex hull.

    The lines are every facet of the hull plus supporting lines at ``n_t``
    equally spaced directions (coincident directions are merged).  Facets
    make the union cover everything outside the hull; the extra tangents
    give the repulsion field a well-spread set of normals.  ``pad`` pushes
    every line outward, e.g. by half a sampling cell.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("tangent_embedding needs a non-empty point set")
    if n_t < 3:
        raise ValueError("n_t must be at least 3")
    try:
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]
    except (QhullError, ValueError):
        if strict:
            raise DegenerateHullError(f"obstacle {label!r}: points are collinear") from None
        log.warning("obstacle %r has a degenerate hull; thickening it", label)
        hull = ConvexHull(_thicken(pts, thicken_width))
        verts = hull.points[hull.vertices]

    normals = [eq[:2] / np.linalg.norm(eq[:2]) for eq in hull.equations]
    for ang in np.arange(n_t) * 2.0 * np.pi / n_t:
        normals.append(np.array([np.cos(ang), np.sin(ang)]))
    angles = np.mod(np.arctan2([n[1] for n in normals], [n[0] for n in normals]), 2 * np.pi)
    order = np.argsort(angles, kind="stable")

    halfplanes = []
    last = None
    for idx in order:
        ang = angles[idx]
        if last is not None and abs(ang - last) < 1e-9:
            continue
        last = ang
        n = np.array([np.cos(ang), np.sin(ang)])
        n[np.abs(n) < 1e-12] = 0.0
        n /= np.linalg.norm(n)
        support = float((verts @ n).max())
        # a relative slack keeps hull vertices strictly on the unsafe side after rounding
        support += pad + 1e-12 * (1.0 + abs(support))
        beta = np.zeros(NX)
        beta[[PITCH, YAW]] = -n
        # safe side: n . theta >= support
        halfplanes.append((beta, -support))
    # merge across the 0 / 2 pi seam
    if len(halfplanes) > 1 and abs(angles[order[0]] + 2 * np.pi - last) < 1e-9:
        halfplanes.pop()
    return ObstacleConstraint(halfplanes=tuple(halfplanes), label=label, hull=verts)


def embed_obstacle(box: ObstacleBox, p: CraneParams, grid_n: int = 200, n_t: int = 8,
                   theta4_range=(-np.pi, np.pi)) -> ObstacleConstraint | None:
    """Box -> joint-space points -> half-plane union; ``None`` if unreachable."""
    pts = obstacle_to_joint_space(box, p, grid_n, theta4_range)
    if pts.shape[0] == 0:
        log.info("obstacle %r is out of reach; ignored", box.label)
        return None
    T3, T4 = joint_grid(grid_n, theta4_range)
    cell = np.hypot(T3[1, 0] - T3[0, 0], T4[0, 1] - T4[0, 0])
    return tangent_embedding(pts, n_t=n_t, label=box.label, pad=0.5 * cell)


def certify_linear(constraints, Acl, **kwargs) -> list[LevelSetCertificate]:
    return [level_set_matrix(Acl, c.beta_x, constraint_id=c.label, **kwargs)
            for c in constraints]


def attach_certificates(oc: ObstacleConstraint, Acl, **kwargs) -> ObstacleConstraint:
    """Return a copy of ``oc`` with one level-set certificate per half-plane."""
    certs = tuple(level_set_matrix(Acl, beta, constraint_id=f"{oc.label}[{i}]", **kwargs)
                  for i, (beta, _) in enumerate(oc.halfplanes))
    return replace(oc, certificates=certs)

"""Nonlinear dynamics of a 4-DoF boom crane with a fixed-length rope.

Generalized coordinates ``q = [th1, th2, th3, th4]``: radial and tangential
payload swing, boom pitch and boom yaw.  Only pitch and yaw are actuated.
The equations of motion have the form

    M(q) qdd + c(q, qd) + g(q) = S u,    S = [0_2x2; I_2x2]

where ``c`` is the velocity-product vector (the Coriolis matrix is never
built explicitly).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Rows of the state that hold positions / velocities.
NQ = 4
NX = 8

SELECTOR = np.vstack([np.zeros((2, 2)), np.eye(2)])


class SingularMassMatrixError(RuntimeError):
    """Raised when M(q) is too ill-conditioned to invert reliably."""


@dataclass(frozen=True)
class CraneParams:
    """Physical constants of the boom crane.

    Inertias left as ``None`` take slender-rod / point-mass defaults:
    ``Jy = Jz = M L^2 / 3``, ``Jx = 0`` and ``Ib = M1 L1^2``.
    """

    M: float = 2.5
    m: float = 3.5
    M1: float = 6.0
    L: float = 2.0
    l: float = 1.0
    L1: float = 0.5
    Jx: float | None = None
    Jy: float | None = None
    Jz: float | None = None
    Ib: float | None = None
    g: float = 9.81

    def __post_init__(self):
        for name in ("M", "m", "M1", "L", "l", "L1", "g"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise ValueError(f"crane parameter {name} must be positive, got {val}")
        rod = self.M * self.L**2 / 3.0
        defaults = {"Jx": 0.0, "Jy": rod, "Jz": rod, "Ib": self.M1 * self.L1**2}
        for name, default in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
            if getattr(self, name) < 0:
                raise ValueError(f"crane inertia {name} must be non-negative")

    @property
    def gravity_moment(self) -> float:
        """Static moment ``M L / 2 + m L - M1 L1 / 2`` about the pitch axis."""
        return 0.5 * self.M * self.L + self.m * self.L - 0.5 * self.M1 * self.L1

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("M", "m", "M1", "L", "l", "L1", "Jx", "Jy", "Jz", "Ib", "g")}


@dataclass(frozen=True)
class CraneState:
    q: np.ndarray = field(default_factory=lambda: np.zeros(NQ))
    qdot: np.ndarray = field(default_factory=lambda: np.zeros(NQ))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(NQ)
        qd = np.asarray(self.qdot, dtype=float).reshape(NQ)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("crane state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @classmethod
    def from_vector(cls, x) -> "CraneState":
        x = np.asarray(x, dtype=float)
        return cls(x[:NQ], x[NQ:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qdot])


def _mass_entries(t1, t2, t3, p: CraneParams):
    m, l, L = p.m, p.l, p.L
    s3, c3 = math.sin(t3), math.cos(t3)
    ml2, mlL = m * l * l, m * l * L
    m11 = ml2 * (1.0 + t1 * t1)
    m12 = ml2 * t1 * t2
    m13 = mlL * (c3 - t1 * s3)
    m14 = -ml2 * t2
    m22 = ml2 * (1.0 + t2 * t2)
    m23 = -mlL * t2 * s3
    # swing / yaw coupling, symmetric in the two equations
    m24 = ml2 * t1 + mlL * s3
    m33 = m * L * L + p.Jy
    m34 = -mlL * t2 * c3
    m44 = (m * L * L * s3 * s3 + ml2 * (t1 * t1 + t2 * t2) + 2.0 * mlL * t1 * s3
           + p.Ib + p.Jx * s3 * s3 + p.Jz * c3 * c3)
    return m11, m12, m13, m14, m22, m23, m24, m33, m34, m44


def _velocity_entries(t1, t2, t3, d1, d2, d3, d4, p: CraneParams):
    m, l, L = p.m, p.l, p.L
    s3, c3 = math.sin(t3), math.cos(t3)
    s23 = math.sin(2.0 * t3)
    ml2, mlL = m * l * l, m * l * L
    swing_sq = d1 * d1 + d2 * d2
    c1 = (ml2 * t1 * swing_sq
          - mlL * (s3 + t1 * c3) * d3 * d3
          - m * l * (l * t1 + L * s3) * d4 * d4
          - 2.0 * ml2 * d2 * d4)
    c2 = (ml2 * t2 * swing_sq
          - mlL * t2 * c3 * d3 * d3
          - ml2 * t2 * d4 * d4
          + 2.0 * ml2 * d1 * d4
          + 2.0 * mlL * d3 * d4 * c3)
    c3_ = (-mlL * s3 * swing_sq
           - (0.5 * (p.Jx - p.Jz) * s23 + mlL * t1 * c3 + 0.5 * m * L * L * s23) * d4 * d4
           - 2.0 * mlL * d2 * d4 * c3)
    c4 = ((m * L * L * d3 * s23
           + 2.0 * ml2 * (t1 * d1 + t2 * d2)
           + 2.0 * mlL * (d1 * s3 + t1 * d3 * c3)
           + (p.Jx - p.Jz) * d3 * s23) * d4
          + mlL * t2 * d3 * d3 * s3)
    return c1, c2, c3_, c4


def mass_matrix(q, p: CraneParams) -> np.ndarray:
    t1, t2, t3, _ = (float(v) for v in q)
    m11, m12, m13, m14, m22, m23, m24, m33, m34, m44 = _mass_entries(t1, t2, t3, p)
    return np.array([
        [m11, m12, m13, m14],
        [m12, m22, m23, m24],
        [m13, m23, m33, m34],
        [m14, m24, m34, m44],
    ])


def velocity_terms(q, qdot, p: CraneParams) -> np.ndarray:
    """Velocity-product vector ``c(q, qd)`` (the ``C(q, qd) qd`` term)."""
    t1, t2, t3, _ = (float(v) for v in q)
    d1, d2, d3, d4 = (float(v) for v in qdot)
    return np.array(_velocity_entries(t1, t2, t3, d1, d2, d3, d4, p))


def gravity_vector(q, p: CraneParams) -> np.ndarray:
    t1, t2, t3, _ = q
    mgl = p.m * p.g * p.l
    return np.array([mgl * t1, mgl * t2, -p.g * p.gravity_moment * np.sin(t3), 0.0])


def potential_energy(q, p: CraneParams) -> float:
    """Potential whose gradient is :func:`gravity_vector`."""
    t1, t2, t3, _ = q
    return 0.5 * p.m * p.g * p.l * (t1 * t1 + t2 * t2) + p.g * p.gravity_moment * np.cos(t3)


def total_energy(x, p: CraneParams) -> float:
    x = np.asarray(x, dtype=float)
    q, qd = x[:NQ], x[NQ:]
    return 0.5 * qd @ mass_matrix(q, p) @ qd + potential_energy(q, p)


def _accelerations(t1, t2, t3, d1, d2, d3, d4, u3, u4, p: CraneParams, cond_max: float):
    m11, m12, m13, m14, m22, m23, m24, m33, m34, m44 = _mass_entries(t1, t2, t3, p)
    c1, c2, c3, c4 = _velocity_entries(t1, t2, t3, d1, d2, d3, d4, p)
    mgl = p.m * p.g * p.l
    b = [-c1 - mgl * t1,
         -c2 - mgl * t2,
         u3 - c3 + p.g * p.gravity_moment * math.sin(t3),
         u4 - c4]
    a = [[m11, m12, m13, m14],
         [m12, m22, m23, m24],
         [m13, m23, m33, m34],
         [m14, m24, m34, m44]]
    # 4x4 Cholesky in plain floats; numpy call overhead dominates at this size
    Lc = [[0.0] * 4 for _ in range(4)]
    for i in range(4):
        for j in range(i + 1):
            acc = a[i][j]
            for k in range(j):
                acc -= Lc[i][k] * Lc[j][k]
            if i == j:
                if acc <= 0.0:
                    raise SingularMassMatrixError(
                        f"mass matrix not positive definite at q={[t1, t2, t3]}")
                Lc[i][i] = math.sqrt(acc)
            else:
                Lc[i][j] = acc / Lc[j][j]
    diag = [Lc[i][i] for i in range(4)]
    # squared diagonal ratio of the Cholesky factor bounds cond(M) from below
    if (max(diag) / min(diag)) ** 2 > cond_max:
        raise SingularMassMatrixError(f"mass matrix ill-conditioned at q={[t1, t2, t3]}")
    y = [0.0] * 4
    for i in range(4):
        acc = b[i]
        for k in range(i):
            acc -= Lc[i][k] * y[k]
        y[i] = acc / Lc[i][i]
    qdd = [0.0] * 4
    for i in range(3, -1, -1):
        acc = y[i]
        for k in range(i + 1, 4):
            acc -= Lc[k][i] * qdd[k]
        qdd[i] = acc / Lc[i][i]
    return qdd


def forward_dynamics(x, u, p: CraneParams, cond_max: float = 1e10) -> np.ndarray:
    """Joint accelerations ``M^-1 (S u - c - g)`` for a state and torques ``u = [u3, u4]``.

    ``x`` is a :class:`CraneState` or an 8-vector ``[q, qdot]``.  Raises
    :class:`SingularMassMatrixError` when M(q) is not safely invertible.
    """
    if isinstance(x, CraneState):
        x = x.as_vector()
    t1, t2, t3, _, d1, d2, d3, d4 = (float(v) for v in x)
    u3, u4 = (float(v) for v in u)
    return np.array(_accelerations(t1, t2, t3, d1, d2, d3, d4, u3, u4, p, cond_max))


def state_derivative(x, u, p: CraneParams) -> np.ndarray:
    """Full state derivative ``[qdot; qddot]``."""
    t1, t2, t3, _, d1, d2, d3, d4 = (float(v) for v in x)
    u3, u4 = (float(v) for v in u)
    qdd = _accelerations(t1, t2, t3, d1, d2, d3, d4, u3, u4, p, 1e10)
    return np.array([d1, d2, d3, d4, *qdd])


def equilibrium_input(theta3: float, p: CraneParams) -> np.ndarray:
    """Gravity-compensating torques holding the boom at pitch ``theta3``."""
    return np.array([-p.g * p.gravity_moment * np.sin(theta3), 0.0])


def equilibrium_state(v) -> np.ndarray:
    """Steady state ``[0, 0, v3, v4, 0, 0, 0, 0]`` for a boom reference ``v``."""
    x = np.zeros(NX)
    x[2], x[3] = v[0], v[1]
    return x


def forward_kinematics(q, p: CraneParams) -> np.ndarray:
    """Payload position ``(x, y, z)`` in metres, boom pivot at the origin."""
    t1, t2, t3, t4 = q
    L, l = p.L, p.l
    s4, c4 = np.sin(t4), np.cos(t4)
    reach = L * np.sin(t3)
    x = reach * c4 + l * t1 * c4 - l * t2 * s4
    y = reach * s4 + l * t1 * s4 + l * t2 * c4
    z = L * np.cos(t3) - l * np.cos(np.hypot(t1, t2))
    return np.array([x, y, z])

"""Dense control synthesis: Lyapunov solves, Kleinman LQR, level-set matrices.

Everything here operates on small (n <= 8) dense matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .crane_model import equilibrium_state
from .linearize import LinearModel

log = logging.getLogger(__name__)

# Default LQR weights, used when a gain is synthesized instead of given.
DEFAULT_Q = np.diag([10.0, 10.0, 100.0, 100.0, 1.0, 1.0, 10.0, 10.0])
DEFAULT_R = np.eye(2)

# Inner-loop gain for the 2.5/3.5/6 kg, 2/1/0.5 m crane about pitch 60 deg.
REFERENCE_GAIN = np.array([
    [-106.1665, 0.0, 89.6362, 0.0, -11.28, 0.0, 68.877, 0.0],
    [0.0, -91.3357, 0.0, 31.6228, 0.0, -7.8488, 0.0, 52.3688],
])


class NotHurwitzError(ValueError):
    """A matrix that must be Hurwitz is not (or the Lyapunov solve failed)."""


class ConvergenceError(RuntimeError):
    pass


def is_hurwitz(A) -> bool:
    return bool(np.all(np.linalg.eigvals(A).real < 0.0))


def _sym(X):
    return 0.5 * (X + X.T)


def solve_lyapunov(Acl, Q) -> np.ndarray:
    """Solve ``Acl^T P + P Acl + Q = 0`` for symmetric positive definite ``P``.

    Raises NotHurwitzError if ``Acl`` is not Hurwitz or the solution is not PD.
    """
    Acl = np.asarray(Acl, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if not is_hurwitz(Acl):
        raise NotHurwitzError("closed-loop matrix is not Hurwitz")
    try:
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -Q)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NotHurwitzError(f"Lyapunov equation is singular: {exc}") from None
    P = _sym(P)
    if np.linalg.eigvalsh(P).min() <= 0.0:
        raise NotHurwitzError("Lyapunov solution is not positive definite")
    return P


def riccati_residual(A, B, Q, R, P) -> np.ndarray:
    return A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q


def stabilizing_gain(A, B, shift: float | None = None) -> np.ndarray:
    """Pole-shift (Bass) gain: any controllable ``(A, B)`` is stabilized.

    Solves ``(A + mu I) W + W (A + mu I)^T = 2 B B^T`` for ``mu`` larger than
    every ``|Re(eig(A))|`` and returns ``K = B^T W^-1``.  If that ``W`` is
    not invertible the shift is doubled, up to a few times.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    mu = shift if shift is not None else 1.0 + np.abs(np.linalg.eigvals(A).real).max()
    for _ in range(8):
        Am = A + mu * np.eye(n)
        W = scipy.linalg.solve_continuous_lyapunov(Am, 2.0 * B @ B.T)
        try:
            K = B.T @ np.linalg.inv(_sym(W))
        except np.linalg.LinAlgError:
            mu *= 2.0
            continue
        if is_hurwitz(A - B @ K):
            return K
        mu *= 2.0
    raise ConvergenceError("pole-shift initialization failed; (A, B) may be uncontrollable")


def lqr_gain(model: LinearModel, Q=DEFAULT_Q, R=DEFAULT_R, K0=None,
             tol: float = 1e-8, max_iter: int = 50, return_info: bool = False):
    """LQR gain by Kleinman iteration starting from a stabilizing ``K0``.

    ``K0=None`` falls back to :func:`stabilizing_gain`.  With
    ``return_info=True`` also returns ``(P, residual_norm, traces)``.
    """
    A, B = model.A, model.B
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    K = stabilizing_gain(A, B) if K0 is None else np.asarray(K0, dtype=float)
    if not is_hurwitz(A - B @ K):
        raise NotHurwitzError("initial gain does not stabilize A - B K0")

    traces = []
    for it in range(max_iter):
        Acl = A - B @ K
        P = solve_lyapunov(Acl, Q + K.T @ R @ K)
        traces.append(float(np.trace(P)))
        K = np.linalg.solve(R, B.T @ P)
        res = np.linalg.norm(riccati_residual(A, B, Q, R, P))
        log.debug("kleinman iter %d: trace(P)=%.6g residual=%.3e", it, traces[-1], res)
        if res < tol:
            break
    else:
        raise ConvergenceError(f"Kleinman iteration did not converge in {max_iter} steps "
                               f"(residual {res:.3e})")
    if return_info:
        return K, P, res, traces
    return K


@dataclass(frozen=True)
class LevelSetCertificate:
    """Level-set matrix for one half-space, with its verified eigenvalue margins."""

    P: np.ndarray
    constraint_id: int | str
    lyap_residual_max_eig: float
    floor_margin_min_eig: float
    beta: np.ndarray | None = None

    @property
    def valid(self) -> bool:
        return self.lyap_residual_max_eig < 0.0 and self.floor_margin_min_eig > 0.0


def certificate_margins(Acl, beta, P):
    """(max eig of Acl^T P + P Acl, min eig of P - beta beta^T / |beta|^2)."""
    beta = np.asarray(beta, dtype=float)
    N = np.outer(beta, beta) / (beta @ beta)
    lyap = np.linalg.eigvalsh(_sym(Acl.T @ P + P @ Acl)).max()
    floor = np.linalg.eigvalsh(_sym(P - N)).min()
    return float(lyap), float(floor)


def _logdet_pd(X):
    """log det of a symmetric matrix, or None if it is not positive definite."""
    try:
        c = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return None
    return 2.0 * np.log(np.diag(c)).sum()


def _refine_logdet(Acl, N, P, steps: int, eps: float):
    """Feasibility-preserving barrier descent on ``log det P``.

    Minimizes ``log det P - mu (log det F1 + log det F2)`` with
    ``F1 = -(Acl^T P + P Acl)`` and ``F2 = P - N - eps I``; every accepted
    iterate keeps both PD.  ``mu`` shrinks geometrically.  Pass a shifted
    ``Acl + alpha I`` to keep a decay-rate margin.
    """
    n = P.shape[0]
    I = np.eye(n)

    def parts(P):
        F1 = -_sym(Acl.T @ P + P @ Acl)
        F2 = P - N - eps * I
        return F1, F2

    def phi(P, mu):
        l0 = _logdet_pd(P)
        F1, F2 = parts(P)
        l1, l2 = _logdet_pd(F1), _logdet_pd(F2)
        if l0 is None or l1 is None or l2 is None:
            return None
        return l0 - mu * (l1 + l2)

    mu = 1.0
    for _ in range(steps):
        F1, F2 = parts(P)
        F1i, F2i = np.linalg.inv(F1), np.linalg.inv(F2)
        grad = np.linalg.inv(P) + mu * _sym(Acl @ F1i + F1i @ Acl.T) - mu * F2i
        grad = _sym(grad)
        # natural-gradient direction on the PD cone
        D = -P @ grad @ P
        f0 = phi(P, mu)
        slope = float(np.sum(grad * D))
        t = 1.0
        while t > 1e-8:
            Pn = _sym(P + t * D)
            fn = phi(Pn, mu)
            if fn is not None and fn <= f0 + 1e-4 * t * slope:
                P = Pn
                break
            t *= 0.5
        mu *= 0.7
    return P


def level_set_matrix(Acl, beta, constraint_id=0, refine_steps: int = 40,
                     decay_rate: float = 0.0, eps: float = 1e-8) -> LevelSetCertificate:
    """Certified ``P`` with ``Acl^T P + P Acl < 0`` and ``P > beta beta^T/|beta|^2``.

    Starts from the Lyapunov solution with ``Q = I``, scales it just enough
    to dominate the normalized constraint direction, then runs a few
    feasibility-preserving ``log det`` descent steps.  A positive
    ``decay_rate`` additionally enforces ``Acl^T P + P Acl <= -2 decay_rate P``,
    which stops the descent from collapsing ``P`` onto the constraint slab.
    The rate is capped at half the closed-loop stability margin.
    """
    Acl = np.asarray(Acl, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if not np.any(beta):
        raise ValueError("constraint normal must be nonzero")
    n = Acl.shape[0]
    N = np.outer(beta, beta) / (beta @ beta)
    if decay_rate < 0:
        raise ValueError("decay_rate must be non-negative")
    if not is_hurwitz(Acl):
        raise NotHurwitzError("closed-loop matrix is not Hurwitz")
    decay_rate = min(decay_rate, -0.5 * np.linalg.eigvals(Acl).real.max())
    shifted = Acl + decay_rate * np.eye(n)
    P0 = solve_lyapunov(shifted, np.eye(n))
    # smallest c with c P0 >= N + 2 eps I (generalized eigenvalue)
    c = scipy.linalg.eigh(N + 2.0 * eps * np.eye(n), P0, eigvals_only=True).max()
    P = max(1.0, c) * P0
    if refine_steps > 0:
        P = _refine_logdet(shifted, N, P, refine_steps, eps)
    lyap, floor = certificate_margins(Acl, beta, P)
    if not (lyap < 0.0 and floor > 0.0):
        raise NotHurwitzError(f"level-set certificate failed: {lyap:.3e}, {floor:.3e}")
    return LevelSetCertificate(P=P, constraint_id=constraint_id,
                               lyap_residual_max_eig=lyap, floor_margin_min_eig=floor,
                               beta=beta.copy())


def steady_margin(v, beta, d) -> float:
    """``d - beta^T xbar(v)``: positive when the steady state is strictly inside."""
    return float(d - np.asarray(beta) @ equilibrium_state(v))


def gamma_threshold(v, beta, d, P) -> float:
    """Signed Lyapunov threshold ``sign(s) s^2 / (beta^T P^-1 beta)``."""
    beta = np.asarray(beta, dtype=float)
    s = steady_margin(v, beta, d)
    return float(np.sign(s) * s * s / (beta @ np.linalg.solve(P, beta)))

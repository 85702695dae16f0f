"""Numerical linearization of the crane about a steady boom configuration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crane_model import CraneParams, equilibrium_input, equilibrium_state, state_derivative


class EquilibriumResidualError(ValueError):
    """The requested operating point is not an equilibrium of the model."""


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    x_eq: np.ndarray
    u_eq: np.ndarray


def jacobians(f, x0, u0, h: float = 1e-5):
    """Central-difference Jacobians of ``f(x, u)`` with respect to ``x`` and ``u``."""
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    n, m = x0.size, u0.size
    A = np.empty((n, n))
    B = np.empty((n, m))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        A[:, j] = (f(x0 + e, u0) - f(x0 - e, u0)) / (2.0 * h)
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        B[:, j] = (f(x0, u0 + e) - f(x0, u0 - e)) / (2.0 * h)
    return A, B


def linearize(v, p: CraneParams, h: float = 1e-5) -> LinearModel:
    """Linear model ``dx' = A dx + B du`` about the steady state of reference ``v``."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x_eq = equilibrium_state(v)
    u_eq = equilibrium_input(v[0], p)

    def f(x, u):
        return state_derivative(x, u, p)

    residual = np.linalg.norm(f(x_eq, u_eq), np.inf)
    if residual >= 1e-6:
        raise EquilibriumResidualError(f"|f(x_eq, u_eq)| = {residual:.3e} at v = {v}")
    A, B = jacobians(f, x_eq, u_eq, h)
    return LinearModel(A=A, B=B, x_eq=x_eq, u_eq=u_eq)

"""Energies, action variable, correction force, and run error metrics.

The oscillatory energy

    H_osc(z) = (G p)^T (G G^T)^-1 (G p) / 2 + g^T K g / (2 eps^2)

measures how strongly the fast constraint modes are excited; it vanishes on
the tangent manifold {g = 0, G p = 0} and is O(kbt) in thermal equilibrium.
For single-constraint systems the adiabatic invariant of the fast oscillation
is the action

    J(z) = H_osc(z) / |G(q)|,

i.e. the oscillatory energy over the O(1) frequency factor omega_1 = |G(q)|
(the fast frequency itself is omega_1 / eps; dividing by omega_1 keeps J
O(kbt / omega_1) and matches the explicit elliptic-pendulum form).  The slow
dynamics feel the fast energy through the correction force -J grad omega_1,
which is invariant under the common eps-rescaling of J and frequency.

Error metrics follow the convention rmse = |mean - reference| / sqrt(n_dof),
with the momentum error projected onto the tangent space at the reference
position.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import (
    StateVector,
    StiffSystem,
    eval_constraint,
    eval_jacobian,
    soft_constraint_residual,
    tangential_projector,
)

__all__ = [
    "total_energy",
    "oscillatory_energy",
    "fast_frequency",
    "action_variable",
    "action_variable_explicit",
    "correction_force",
    "rmse_position",
    "rmse_momentum_tangential",
    "RunMetrics",
    "ensemble_diagnostics",
]


def total_energy(system: StiffSystem, z: StateVector) -> np.ndarray:
    """H(z) = p.p/2 + g^T K g / (2 eps^2) + V(q)."""
    g = eval_constraint(system, z.q)
    kinetic = 0.5 * np.sum(z.p * z.p, axis=-1)
    constraint = 0.5 * np.sum(system.stiffness * g * g, axis=-1) / system.epsilon**2
    return kinetic + constraint + system.potential(z.q)


def oscillatory_energy(system: StiffSystem, z: StateVector) -> np.ndarray:
    """Energy in the fast constraint modes; zero on the tangent manifold."""
    g = eval_constraint(system, z.q)
    G = eval_jacobian(system, z.q)
    Gp = np.einsum("...ln,...n->...l", G, z.p)
    GGt = np.einsum("...ln,...mn->...lm", G, G)
    sol = np.linalg.solve(GGt, Gp[..., np.newaxis])[..., 0]
    normal_kinetic = 0.5 * np.sum(Gp * sol, axis=-1)
    constraint = 0.5 * np.sum(system.stiffness * g * g, axis=-1) / system.epsilon**2
    return normal_kinetic + constraint


def _omega1(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    if system.n_constraints != 1:
        raise ValueError("frequency diagnostics are defined for single-constraint systems")
    G = eval_jacobian(system, q)
    return np.sqrt(np.sum(G * G, axis=(-2, -1)))


def fast_frequency(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    """omega(q) = eps^-1 |G(q)| for single-constraint systems."""
    return _omega1(system, q) / system.epsilon


def action_variable(system: StiffSystem, z: StateVector) -> np.ndarray:
    """Adiabatic invariant J = H_osc / |G(q)| (single constraint only)."""
    return oscillatory_energy(system, z) / _omega1(system, z.q)


def action_variable_explicit(system: StiffSystem, z: StateVector) -> np.ndarray:
    """J in the explicit normal-coordinate form.

    With omega_1 = |G|, p_x = (G G^T)^-1 G p and x = g(q):
    J = (omega_1^2 p_x^2 + k x^2 / eps^2) / (2 omega_1).  Agrees with
    `action_variable` identically; kept as an independent route for
    cross-checks.
    """
    omega1 = _omega1(system, z.q)
    g = eval_constraint(system, z.q)[..., 0]
    G = eval_jacobian(system, z.q)
    Gp = np.einsum("...ln,...n->...l", G, z.p)[..., 0]
    p_x = Gp / omega1**2
    k = system.stiffness[0]
    return 0.5 * (omega1**2 * p_x**2 + k * g**2 / system.epsilon**2) / omega1


def correction_force(system: StiffSystem, z: StateVector) -> np.ndarray:
    """Soft force -J(z) grad |G(q)| exerted by the fast modes on the slow flow.

    Uses the model's analytic frequency gradient when available, otherwise a
    central finite difference of |G(q)|.
    """
    J = action_variable(system, z)
    if system.frequency_gradient is not None:
        grad = system.frequency_gradient(z.q)
    else:
        q = np.asarray(z.q, dtype=float)
        delta = np.sqrt(np.finfo(float).eps) * (1.0 + float(np.max(np.abs(q))))
        grad = np.empty_like(q)
        for i in range(system.n_dof):
            shift = np.zeros(system.n_dof)
            shift[i] = delta
            grad[..., i] = (_omega1(system, q + shift) - _omega1(system, q - shift)) / (2 * delta)
    return -J[..., np.newaxis] * grad


def rmse_position(q_mean: np.ndarray, q_ref: np.ndarray) -> np.ndarray:
    """|q_mean - q_ref| / sqrt(n_dof), broadcasting over leading axes."""
    diff = np.asarray(q_mean, dtype=float) - np.asarray(q_ref, dtype=float)
    return np.sqrt(np.mean(diff * diff, axis=-1))


def rmse_momentum_tangential(
    system: StiffSystem, p_mean: np.ndarray, z_ref: StateVector
) -> np.ndarray:
    """Tangential momentum error: |Pi_T(q_ref)(p_mean - p_ref)| / sqrt(n_dof)."""
    proj = tangential_projector(system, z_ref.q)
    diff = np.einsum("...nm,...m->...n", proj, np.asarray(p_mean, dtype=float) - z_ref.p)
    return np.sqrt(np.mean(diff * diff, axis=-1))


@dataclass(eq=False)
class RunMetrics:
    """Per-observation-time diagnostics of one assimilation run.

    All series share the ``times`` axis.  ``mean_j`` is NaN for systems with
    more than one constraint (the action is only defined for one); every
    other entry is nonnegative.
    """

    times: np.ndarray
    rmse_q: np.ndarray
    rmse_p_tan: np.ndarray
    mean_hosc: np.ndarray
    mean_j: np.ndarray
    mean_abs_g: np.ndarray
    mean_abs_gtilde: np.ndarray

    _SERIES = ("rmse_q", "rmse_p_tan", "mean_hosc", "mean_j", "mean_abs_g", "mean_abs_gtilde")

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name in self._SERIES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.times.shape:
                raise ValueError(f"{name} and times must have equal length")
            setattr(self, name, arr)
            defined = arr[~np.isnan(arr)]
            if np.any(defined < 0.0) or np.any(np.isinf(arr)):
                raise ValueError(f"{name} must be nonnegative and finite where defined")

    def time_averages(self, burn_in: float = 0.0) -> dict[str, float]:
        """Arithmetic averages over analysis times >= burn_in."""
        keep = self.times >= burn_in
        if not np.any(keep):
            raise ValueError("burn-in leaves no analysis times")
        return {name: float(np.mean(getattr(self, name)[keep])) for name in self._SERIES}


def ensemble_diagnostics(system: StiffSystem, z: StateVector) -> dict[str, float]:
    """Ensemble means of H_osc, J, |g| and |gtilde| for one batched state."""
    hosc = float(np.mean(oscillatory_energy(system, z)))
    if system.n_constraints == 1:
        mean_j = float(np.mean(action_variable(system, z)))
    else:
        mean_j = float("nan")
    g = eval_constraint(system, z.q)
    gtilde = soft_constraint_residual(system, z)
    return {
        "mean_hosc": hosc,
        "mean_j": mean_j,
        "mean_abs_g": float(np.mean(np.linalg.norm(g, axis=-1))),
        "mean_abs_gtilde": float(np.mean(np.linalg.norm(gtilde, axis=-1))),
    }

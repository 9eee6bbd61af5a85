"""Mechanical systems with a stiff constraint-restoring potential.

A system couples slow motion with fast oscillations normal to the manifold
``{g(q) = 0}`` through the energy

    H(q, p) = p.p / 2 + g(q).K g(q) / (2 eps^2) + V(q),

with unit mass matrix, a diagonal positive stiffness ``K`` and a small scale
parameter ``eps``.  The equations of motion are

    dq/dt = p,
    dp/dt = -eps^-2 G(q)^T K g(q) - grad V(q),        G = Dg,

optionally extended by Langevin damping/noise with friction ``gamma`` and
temperature ``kbt``.

Array convention: positions and momenta are ``(..., n_dof)`` arrays where the
leading axes, if any, enumerate independent states (e.g. ensemble members).
Constraint values are ``(..., n_constraints)``, Jacobians
``(..., n_constraints, n_dof)``.  All evaluators broadcast over the leading
axes so an ensemble can be pushed through the dynamics as one array.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SingularConfigurationError",
    "ConvergenceError",
    "StateVector",
    "StiffSystem",
    "eval_constraint",
    "eval_jacobian",
    "eval_hessian_action",
    "eval_stiff_force",
    "lagrange_multiplier",
    "soft_constraint_residual",
    "tangential_projector",
    "balance_initial_state",
    "double_pendulum",
    "elliptic_pendulum",
    "harmonic_oscillator",
    "coupled_oscillator",
]

# Below this, constraint geometry (norms appearing in denominators) counts as
# degenerate and evaluators refuse to continue.
_SINGULAR_TOL = 1e-12


class SingularConfigurationError(ValueError):
    """Raised when a constraint Jacobian is evaluated at a degenerate point."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative solve exhausts its iteration budget."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        if residual is not None:
            message += f" (residual {residual:.3e} after {iterations} iterations)"
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class StateVector:
    """Phase-space point(s): position and momentum of shape ``(..., n_dof)``."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if self.q.shape != self.p.shape:
            raise ValueError(f"q and p shapes differ: {self.q.shape} vs {self.p.shape}")
        if self.q.shape[-1] < 1:
            raise ValueError("state needs at least one degree of freedom")

    @property
    def n_dof(self) -> int:
        return self.q.shape[-1]

    def copy(self) -> "StateVector":
        return StateVector(self.q.copy(), self.p.copy())


@dataclass(eq=False)
class StiffSystem:
    """Bundle of evaluators defining one stiff mechanical system.

    The callables receive ``(..., n_dof)`` position arrays (plus a momentum
    array for ``hessian_action``) and must broadcast over leading axes.
    ``stiffness`` holds the diagonal of K.  ``gamma``/``kbt`` are ``None``
    for purely Hamiltonian systems.
    """

    name: str
    n_dof: int
    n_constraints: int
    epsilon: float
    stiffness: np.ndarray
    constraint: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    grad_potential: Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], np.ndarray]
    hessian_action: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    # analytic gradient of the frequency factor |G(q)| (single-constraint
    # systems only); diagnostics fall back to finite differences without it
    frequency_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    gamma: Optional[float] = None
    kbt: Optional[float] = None

    def __post_init__(self):
        self.stiffness = np.atleast_1d(np.asarray(self.stiffness, dtype=float))
        if self.stiffness.shape != (self.n_constraints,):
            raise ValueError("stiffness must hold one diagonal entry per constraint")
        if np.any(self.stiffness <= 0.0):
            raise ValueError("stiffness entries must be positive")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if (self.gamma is None) != (self.kbt is None):
            raise ValueError("gamma and kbt must be given together")
        if self.gamma is not None and (self.gamma < 0.0 or self.kbt <= 0.0):
            raise ValueError("need gamma >= 0 and kbt > 0")

    @property
    def has_thermostat(self) -> bool:
        return self.gamma is not None

    @property
    def fast_frequency_scale(self) -> float:
        """Rough size of the fastest constraint frequency, sqrt(max K)/eps."""
        return float(np.sqrt(self.stiffness.max()) / self.epsilon)


def _check_positions(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != system.n_dof:
        raise ValueError(f"{system.name}: expected trailing axis {system.n_dof}, got {q.shape}")
    return q


def eval_constraint(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    """Constraint value g(q), shape ``(..., n_constraints)``."""
    return system.constraint(_check_positions(system, q))


def eval_jacobian(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    """Constraint Jacobian G(q) = Dg(q), shape ``(..., n_constraints, n_dof)``."""
    return system.jacobian(_check_positions(system, q))


def eval_hessian_action(system: StiffSystem, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Second directional derivative g_qq(q)[p, p], shape ``(..., n_constraints)``.

    Uses the model's analytic expression when present, otherwise a central
    second difference of s -> g(q + s p).
    """
    q = _check_positions(system, q)
    p = np.asarray(p, dtype=float)
    if system.hessian_action is not None:
        return system.hessian_action(q, p)
    scale = 1.0 + float(np.max(np.abs(q)))
    pmax = float(np.max(np.abs(p)))
    delta = (np.finfo(float).eps ** (1.0 / 3.0)) * scale / max(pmax, 1.0)
    g0 = system.constraint(q)
    gp = system.constraint(q + delta * p)
    gm = system.constraint(q - delta * p)
    return (gp - 2.0 * g0 + gm) / delta**2


def eval_stiff_force(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    """Total force -eps^-2 G(q)^T K g(q) - grad V(q)."""
    q = _check_positions(system, q)
    g = system.constraint(q)
    G = system.jacobian(q)
    kg = system.stiffness * g
    constraint_force = np.einsum("...ln,...l->...n", G, kg)
    return -constraint_force / system.epsilon**2 - system.grad_potential(q)


def lagrange_multiplier(system: StiffSystem, z: StateVector) -> np.ndarray:
    """Multiplier of the limit system, from the hidden constraint d^2g/dt^2 = 0.

    Solves (G G^T K) lam = g_qq[p, p] - G grad V, shape ``(..., n_constraints)``.
    """
    q = _check_positions(system, z.q)
    G = system.jacobian(q)
    rhs = eval_hessian_action(system, q, z.p) - np.einsum(
        "...ln,...n->...l", G, system.grad_potential(q)
    )
    GGt = np.einsum("...ln,...mn->...lm", G, G)
    # (G G^T K) lam = rhs with diagonal K: scale the columns of G G^T.
    return np.linalg.solve(GGt * system.stiffness, rhs[..., np.newaxis])[..., 0]


def soft_constraint_residual(system: StiffSystem, z: StateVector) -> np.ndarray:
    """Order-eps^2 corrected residual gtilde = g(q) - eps^2 lam(q, p)."""
    g = eval_constraint(system, z.q)
    return g - system.epsilon**2 * lagrange_multiplier(system, z)


def tangential_projector(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    """Projector I - G^T (G G^T)^-1 G onto ker G(q), shape ``(..., n, n)``."""
    G = eval_jacobian(system, q)
    GGt = np.einsum("...ln,...mn->...lm", G, G)
    coeff = np.linalg.solve(GGt, G)  # (G G^T)^-1 G
    proj = -np.einsum("...ln,...lm->...nm", G, coeff)
    idx = np.arange(system.n_dof)
    proj[..., idx, idx] += 1.0
    return proj


def balance_initial_state(
    system: StiffSystem,
    z_raw: StateVector,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> StateVector:
    """Project a raw state onto the tangent manifold {g = 0, G p = 0}.

    Newton iteration with minimal-norm updates moves q onto {g = 0}; the
    momentum is then projected onto ker G(q).  Idempotent up to round-off.
    """
    q = _check_positions(system, z_raw.q).copy()
    for _ in range(max_iter):
        g = system.constraint(q)
        if float(np.max(np.abs(g))) <= tol:
            break
        G = system.jacobian(q)
        GGt = np.einsum("...ln,...mn->...lm", G, G)
        step = np.linalg.solve(GGt, g[..., np.newaxis])[..., 0]
        q = q - np.einsum("...ln,...l->...n", G, step)
    else:
        raise ConvergenceError(
            f"{system.name}: balance Newton did not reach {tol:g}",
            residual=float(np.max(np.abs(system.constraint(q)))),
            iterations=max_iter,
        )
    proj = tangential_projector(system, q)
    p = np.einsum("...nm,...m->...n", proj, z_raw.p)
    z = StateVector(q, p)
    if not (np.all(np.isfinite(z.q)) and np.all(np.isfinite(z.p))):
        raise FloatingPointError(f"{system.name}: balance produced non-finite state")
    return z


# ---------------------------------------------------------------------------
# concrete systems


def _distance_constraint_terms(u: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Norm and unit vector of a difference vector, guarding the singular point."""
    r = np.sqrt(np.sum(u * u, axis=-1))
    if np.any(r < _SINGULAR_TOL):
        raise SingularConfigurationError(f"{name}: configuration collapses a rod to zero length")
    return r, u / r[..., np.newaxis]


def double_pendulum(
    epsilon: float,
    stiffness: tuple[float, float] = (1.0, 0.04),
    g0: float = 10.0,
    lengths: tuple[float, float] = (1.0, 1.0),
    gamma: Optional[float] = None,
    kbt: Optional[float] = None,
) -> StiffSystem:
    """Planar double pendulum with stiff rods of rest lengths ``lengths``.

    Coordinates q = (x1, y1, x2, y2) of the two bobs, pivot at the origin.
    g holds the two rod elongations; V = g0 (y1 + y2) is linear gravity.
    """
    l1, l2 = float(lengths[0]), float(lengths[1])
    grav = float(g0)

    def constraint(q):
        r1, _ = _distance_constraint_terms(q[..., 0:2], "double_pendulum")
        r2, _ = _distance_constraint_terms(q[..., 0:2] - q[..., 2:4], "double_pendulum")
        return np.stack([r1 - l1, r2 - l2], axis=-1)

    def jacobian(q):
        _, e1 = _distance_constraint_terms(q[..., 0:2], "double_pendulum")
        _, e2 = _distance_constraint_terms(q[..., 0:2] - q[..., 2:4], "double_pendulum")
        G = np.zeros(q.shape[:-1] + (2, 4))
        G[..., 0, 0:2] = e1
        G[..., 1, 0:2] = e2
        G[..., 1, 2:4] = -e2
        return G

    def hessian_action(q, p):
        # For g = |u(q)| - l with linear u: g_qq[p,p] = (|v|^2 - (e.v)^2) / |u|,
        # v the induced velocity of u and e its unit vector.
        out = []
        for u, v in (
            (q[..., 0:2], p[..., 0:2]),
            (q[..., 0:2] - q[..., 2:4], p[..., 0:2] - p[..., 2:4]),
        ):
            r, e = _distance_constraint_terms(u, "double_pendulum")
            vv = np.sum(v * v, axis=-1)
            ev = np.sum(e * v, axis=-1)
            out.append((vv - ev**2) / r)
        return np.stack(out, axis=-1)

    def grad_potential(q):
        grad = np.zeros_like(q)
        grad[..., 1] = grav
        grad[..., 3] = grav
        return grad

    def potential(q):
        return grav * (q[..., 1] + q[..., 3])

    return StiffSystem(
        name="double_pendulum",
        n_dof=4,
        n_constraints=2,
        epsilon=float(epsilon),
        stiffness=np.asarray(stiffness, dtype=float),
        constraint=constraint,
        jacobian=jacobian,
        grad_potential=grad_potential,
        potential=potential,
        hessian_action=hessian_action,
        gamma=gamma,
        kbt=kbt,
    )


def elliptic_pendulum(
    epsilon: float,
    stiffness: float = 1.0,
    alpha: float = 36.0,
    grad_v: Optional[np.ndarray] = None,
    gamma: Optional[float] = None,
    kbt: Optional[float] = None,
) -> StiffSystem:
    """Planar pendulum whose bob is bound to the ellipse q^T A q = 1, A = diag(1, alpha).

    g(q) = sqrt(q^T A q) - 1; the potential is the linear form grad_v . q
    (zero by default).
    """
    A = np.array([1.0, float(alpha)])
    gv = np.zeros(2) if grad_v is None else np.asarray(grad_v, dtype=float)
    if gv.shape != (2,):
        raise ValueError("grad_v must be a length-2 vector")

    def _phi(q):
        phi = np.sum(A * q * q, axis=-1)
        if np.any(phi < _SINGULAR_TOL**2):
            raise SingularConfigurationError("elliptic_pendulum: q = 0 is singular")
        return phi

    def constraint(q):
        return (np.sqrt(_phi(q)) - 1.0)[..., np.newaxis]

    def jacobian(q):
        root = np.sqrt(_phi(q))
        return (A * q / root[..., np.newaxis])[..., np.newaxis, :]

    def hessian_action(q, p):
        phi = _phi(q)
        root = np.sqrt(phi)
        pap = np.sum(A * p * p, axis=-1)
        qap = np.sum(A * q * p, axis=-1)
        return (pap / root - qap**2 / root**3)[..., np.newaxis]

    def grad_potential(q):
        return np.broadcast_to(gv, q.shape).copy()

    def potential(q):
        return np.sum(gv * q, axis=-1)

    def frequency_gradient(q):
        # |G|^2 = q^T A^2 q / q^T A q; differentiate the quotient.
        v = _phi(q)
        u = np.sum(A * A * q * q, axis=-1)
        omega = np.sqrt(u / v)
        numer = (A * A * q) * v[..., np.newaxis] - u[..., np.newaxis] * (A * q)
        return numer / (v**2 * omega)[..., np.newaxis]

    return StiffSystem(
        name="elliptic_pendulum",
        n_dof=2,
        n_constraints=1,
        epsilon=float(epsilon),
        stiffness=np.asarray([stiffness], dtype=float),
        constraint=constraint,
        jacobian=jacobian,
        grad_potential=grad_potential,
        potential=potential,
        hessian_action=hessian_action,
        frequency_gradient=frequency_gradient,
        gamma=gamma,
        kbt=kbt,
    )


def harmonic_oscillator(k: float) -> StiffSystem:
    """One-dof oscillator H = p^2/2 + k q^2/2 written as a stiff system.

    g(q) = q, V = 0, eps = 1, so the restoring force is exactly -k q.  Used
    for linear stability analysis of the blended propagator.
    """

    def constraint(q):
        return q.copy()

    def jacobian(q):
        return np.ones(q.shape[:-1] + (1, 1))

    def hessian_action(q, p):
        return np.zeros(q.shape[:-1] + (1,))

    def zero_grad(q):
        return np.zeros_like(q)

    def zero_pot(q):
        return np.zeros(q.shape[:-1])

    return StiffSystem(
        name="harmonic_oscillator",
        n_dof=1,
        n_constraints=1,
        epsilon=1.0,
        stiffness=np.asarray([k], dtype=float),
        constraint=constraint,
        jacobian=jacobian,
        grad_potential=zero_grad,
        potential=zero_pot,
        hessian_action=hessian_action,
    )


def coupled_oscillator(k: float) -> StiffSystem:
    """Two unit masses, stiff spring k between them, unit spring holding mass 2.

    H = (p1^2 + p2^2)/2 + k (q1 - q2)^2 / 2 + q2^2 / 2.  As a stiff system:
    g(q) = (q1 - q2)/2 with stiffness 4k (so the constraint energy reproduces
    the stiff spring), eps = 1, V = q2^2/2.  The slow limit locks q1 = q2.
    """

    def constraint(q):
        return (0.5 * (q[..., 0] - q[..., 1]))[..., np.newaxis]

    def jacobian(q):
        G = np.empty(q.shape[:-1] + (1, 2))
        G[..., 0, 0] = 0.5
        G[..., 0, 1] = -0.5
        return G

    def hessian_action(q, p):
        return np.zeros(q.shape[:-1] + (1,))

    def grad_potential(q):
        grad = np.zeros_like(q)
        grad[..., 1] = q[..., 1]
        return grad

    def potential(q):
        return 0.5 * q[..., 1] ** 2

    return StiffSystem(
        name="coupled_oscillator",
        n_dof=2,
        n_constraints=1,
        epsilon=1.0,
        stiffness=np.asarray([4.0 * k], dtype=float),
        constraint=constraint,
        jacobian=jacobian,
        grad_potential=grad_potential,
        potential=potential,
        hessian_action=hessian_action,
    )

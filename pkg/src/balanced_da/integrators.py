"""Time steppers for stiff systems, their slow limit, and blends of the two.

The fast propagator is plain position Verlet on the full stiff dynamics.  The
slow propagator advances the constrained limit system: either RATTLE (state
stays on {g = 0}) or the tangential momentum method, a variant that keeps only
the hidden constraint G(q) p = 0 and therefore accepts states off the
constraint manifold.  A blended step is the convex combination

    psi^alpha_h(z) = alpha psi^fast_h(z) + (1 - alpha) psi^slow_h(z)

of the two one-step maps evaluated at the same input, and a blended forecast
ramps alpha from 0 to 1 over a window before continuing with pure Verlet.

All steppers broadcast over leading state axes (see `models`), so whole
ensembles advance in one call.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .models import ConvergenceError, StateVector, StiffSystem

__all__ = [
    "BlendSchedule",
    "stormer_verlet_step",
    "langevin_step",
    "ou_momentum_update",
    "rattle_step",
    "tangential_momentum_step",
    "blended_step",
    "blended_forecast",
    "advance",
    "blended_advance",
]

_STABILITY_MSG = "stormer_verlet_step: h * omega_fast >= 2, fast oscillation is unstable"


@dataclass(frozen=True)
class BlendSchedule:
    """Alpha ramp for one assimilation-to-assimilation forecast cycle.

    ``alphas`` holds k blending weights with alphas[0] = 0, alphas[-1] = 1,
    nondecreasing and strictly increasing at both ends; ``eta`` is the total
    number of steps in the cycle (the remaining eta - k steps run pure
    Verlet).
    """

    alphas: np.ndarray
    eta: int

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        k = alphas.shape[0] if alphas.ndim == 1 else 0
        if k < 2:
            raise ValueError("schedule needs at least two weights")
        if alphas[0] != 0.0 or alphas[-1] != 1.0:
            raise ValueError("schedule must start at alpha = 0 and end at alpha = 1")
        if np.any(np.diff(alphas) < 0.0):
            raise ValueError("schedule must be nondecreasing")
        if alphas[1] <= 0.0 or alphas[-2] >= 1.0:
            raise ValueError("schedule must leave alpha = 0 and reach alpha = 1 exactly once")
        if int(self.eta) != self.eta or self.eta < k:
            raise ValueError("eta must be an integer >= the window length")
        object.__setattr__(self, "eta", int(self.eta))

    @property
    def window(self) -> int:
        return self.alphas.shape[0]

    @classmethod
    def linear(cls, window: int, eta: int | None = None) -> "BlendSchedule":
        """Linear ramp over ``window`` steps (the default choice)."""
        if window < 2:
            raise ValueError("window must be at least 2 steps")
        return cls(np.linspace(0.0, 1.0, window), eta if eta is not None else window)

    @classmethod
    def cosine(cls, window: int, eta: int | None = None) -> "BlendSchedule":
        """Smoothed ramp (1 - cos(pi t))/2 over ``window`` steps."""
        if window < 2:
            raise ValueError("window must be at least 2 steps")
        t = np.linspace(0.0, 1.0, window)
        alphas = 0.5 * (1.0 - np.cos(np.pi * t))
        alphas[0], alphas[-1] = 0.0, 1.0
        return cls(alphas, eta if eta is not None else window)


# ---------------------------------------------------------------------------
# array-level kernels (leading axes = batch)


def _force(system: StiffSystem, q: np.ndarray) -> np.ndarray:
    g = system.constraint(q)
    G = system.jacobian(q)
    kg = system.stiffness * g
    return (
        -np.einsum("...ln,...l->...n", G, kg) / system.epsilon**2
        - system.grad_potential(q)
    )


def _verlet(system: StiffSystem, q: np.ndarray, p: np.ndarray, h: float):
    q_half = q + (0.5 * h) * p
    p_new = p + h * _force(system, q_half)
    q_new = q_half + (0.5 * h) * p_new
    return q_new, p_new


def _ou(system: StiffSystem, p: np.ndarray, h: float, rng: np.random.Generator):
    decay = np.exp(-system.gamma * h)
    sigma = np.sqrt(system.kbt * (1.0 - decay**2))
    return decay * p + sigma * rng.standard_normal(p.shape)


def _tangential(system: StiffSystem, q, p, h, tol, max_iter):
    q_half = q + (0.5 * h) * p
    base = p - h * system.grad_potential(q_half)
    G_half = system.jacobian(q_half)
    lam = np.zeros(q.shape[:-1] + (system.n_constraints,))
    for _ in range(max_iter):
        p_new = base - np.einsum("...ln,...l->...n", G_half, lam)
        q_new = q_half + (0.5 * h) * p_new
        G_new = system.jacobian(q_new)
        residual = np.einsum("...ln,...n->...l", G_new, p_new)
        res_norm = float(np.max(np.abs(residual)))
        if res_norm <= tol:
            return q_new, p_new
        mat = np.einsum("...ln,...mn->...lm", G_new, G_half)
        rhs = np.einsum("...ln,...n->...l", G_new, base)
        lam = np.linalg.solve(mat, rhs[..., np.newaxis])[..., 0]
    raise ConvergenceError(
        "tangential momentum fixed point stalled", residual=res_norm, iterations=max_iter
    )


def _rattle(system: StiffSystem, q, p, h, tol, max_iter):
    grad_n = system.grad_potential(q)
    G_n = system.jacobian(q)
    nu = np.zeros(q.shape[:-1] + (system.n_constraints,))
    drift = q + h * p - (0.5 * h**2) * grad_n
    for _ in range(max_iter):
        q_new = drift - (0.5 * h**2) * np.einsum("...ln,...l->...n", G_n, nu)
        g = system.constraint(q_new)
        g_norm = float(np.max(np.abs(g)))
        if g_norm <= tol:
            break
        mat = np.einsum("...ln,...mn->...lm", system.jacobian(q_new), G_n)
        step = np.linalg.solve(mat, g[..., np.newaxis])[..., 0]
        nu = nu + (2.0 / h**2) * step
    else:
        raise ConvergenceError("RATTLE position Newton stalled", residual=g_norm, iterations=max_iter)
    p_half = p - (0.5 * h) * (grad_n + np.einsum("...ln,...l->...n", G_n, nu))
    p_raw = p_half - (0.5 * h) * system.grad_potential(q_new)
    G_new = system.jacobian(q_new)
    mat = np.einsum("...ln,...mn->...lm", G_new, G_new)
    rhs = np.einsum("...ln,...n->...l", G_new, p_raw)
    mu = np.linalg.solve(mat, rhs[..., np.newaxis])[..., 0]
    p_new = p_raw - np.einsum("...ln,...l->...n", G_new, mu)
    return q_new, p_new


# ---------------------------------------------------------------------------
# public steppers


def stormer_verlet_step(system: StiffSystem, z: StateVector, h: float) -> StateVector:
    """One position-Verlet step of length h on the full stiff dynamics."""
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if h * system.fast_frequency_scale >= 2.0:
        warnings.warn(_STABILITY_MSG, RuntimeWarning, stacklevel=2)
    q, p = _verlet(system, z.q, z.p, h)
    return StateVector(q, p)


def langevin_step(
    system: StiffSystem, z: StateVector, h: float, rng: np.random.Generator
) -> StateVector:
    """Verlet step composed with an exact Ornstein-Uhlenbeck momentum update.

    The OU factor is sampled exactly, p <- e^{-gamma h} p + sqrt(kbt (1 -
    e^{-2 gamma h})) xi, so the step degenerates bitwise to
    `stormer_verlet_step` at gamma = 0.
    """
    if not system.has_thermostat:
        raise ValueError(f"{system.name} has no Langevin parameters")
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if h * system.fast_frequency_scale >= 2.0:
        warnings.warn(_STABILITY_MSG, RuntimeWarning, stacklevel=2)
    q, p = _verlet(system, z.q, z.p, h)
    return StateVector(q, _ou(system, p, h, rng))


def ou_momentum_update(
    system: StiffSystem, z: StateVector, h: float, rng: np.random.Generator
) -> StateVector:
    """Exact OU thermostat applied to the momenta alone."""
    if not system.has_thermostat:
        raise ValueError(f"{system.name} has no Langevin parameters")
    return StateVector(z.q, _ou(system, z.p, h, rng))


def rattle_step(
    system: StiffSystem,
    z: StateVector,
    h: float,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> StateVector:
    """One RATTLE step of the constrained limit system.

    Newton on the position-stage multipliers enforces g(q_{n+1}) = 0 to
    ``tol``; the momentum stage projects onto ker G(q_{n+1}).  The diagonal
    stiffness only rescales the multipliers, so the projected dynamics do not
    depend on it.
    """
    q, p = _rattle(system, z.q, z.p, h, tol, max_iter)
    return StateVector(q, p)


def tangential_momentum_step(
    system: StiffSystem,
    z: StateVector,
    h: float,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> StateVector:
    """One step of the slow propagator that enforces only G(q) p = 0.

    Fixed-point iteration on the scaled multiplier lam_tilde = h lam:
    momenta follow p_{n+1} = p_n - h grad V(q_half) - G(q_half)^T lam_tilde,
    and lam_tilde solves the linear system that zeroes G(q_{n+1}) p_{n+1}.
    The step is time symmetric (hence second order) and well defined off the
    manifold {g = 0}; negative h is allowed.
    """
    if h == 0.0:
        raise ValueError("step size must be nonzero")
    q, p = _tangential(system, z.q, z.p, h, tol, max_iter)
    return StateVector(q, p)


def blended_step(
    system: StiffSystem,
    z: StateVector,
    h: float,
    alpha: float,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> StateVector:
    """Convex combination alpha * Verlet + (1 - alpha) * tangential momentum.

    The endpoints short-circuit to the pure maps, so alpha = 1 is exactly the
    Verlet step and alpha = 0 exactly the slow step.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return stormer_verlet_step(system, z, h)
    if alpha == 0.0:
        return tangential_momentum_step(system, z, h, tol, max_iter)
    q_fast, p_fast = _verlet(system, z.q, z.p, h)
    q_slow, p_slow = _tangential(system, z.q, z.p, h, tol, max_iter)
    return StateVector(
        alpha * q_fast + (1.0 - alpha) * q_slow,
        alpha * p_fast + (1.0 - alpha) * p_slow,
    )


def blended_forecast(
    system: StiffSystem,
    z0: StateVector,
    h: float,
    schedule: BlendSchedule,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> list[StateVector]:
    """Run one blended cycle: the alpha ramp, then Verlet to eta steps.

    Returns all eta + 1 states including the initial one.
    """
    states = [z0]
    z = z0
    for alpha in schedule.alphas:
        z = blended_step(system, z, h, float(alpha), tol, max_iter)
        states.append(z)
    for _ in range(schedule.eta - schedule.window):
        z = stormer_verlet_step(system, z, h)
        states.append(z)
    return states


def _check_stepping(system: StiffSystem, h: float, rng) -> None:
    if h <= 0.0:
        raise ValueError("step size must be positive")
    if rng is not None and not system.has_thermostat:
        raise ValueError(f"{system.name} has no Langevin parameters")
    if h * system.fast_frequency_scale >= 2.0:
        warnings.warn(_STABILITY_MSG, RuntimeWarning, stacklevel=3)


def advance(
    system: StiffSystem,
    z: StateVector,
    h: float,
    n_steps: int,
    rng: np.random.Generator | None = None,
) -> StateVector:
    """n_steps of Verlet, each followed by the OU thermostat when rng is given.

    Bit-identical to composing `stormer_verlet_step` / `langevin_step`, just
    without per-step wrapper overhead.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    _check_stepping(system, h, rng)
    q, p = z.q, z.p
    for _ in range(n_steps):
        q, p = _verlet(system, q, p, h)
        if rng is not None:
            p = _ou(system, p, h, rng)
    return StateVector(q, p)


def blended_advance(
    system: StiffSystem,
    z: StateVector,
    h: float,
    schedule: BlendSchedule,
    rng: np.random.Generator | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> StateVector:
    """Final state of one blended cycle, optionally with the OU thermostat.

    Without ``rng`` this equals ``blended_forecast(...)[-1]`` bitwise.  With
    it, every step (blended or plain) is followed by the exact OU momentum
    update, so an all-alpha-one schedule reproduces the Langevin forecast.
    """
    _check_stepping(system, h, rng)
    q, p = z.q, z.p
    for alpha in schedule.alphas:
        if alpha == 1.0:
            q, p = _verlet(system, q, p, h)
        elif alpha == 0.0:
            q, p = _tangential(system, q, p, h, tol, max_iter)
        else:
            q_fast, p_fast = _verlet(system, q, p, h)
            q_slow, p_slow = _tangential(system, q, p, h, tol, max_iter)
            q = alpha * q_fast + (1.0 - alpha) * q_slow
            p = alpha * p_fast + (1.0 - alpha) * p_slow
        if rng is not None:
            p = _ou(system, p, h, rng)
    for _ in range(schedule.eta - schedule.window):
        q, p = _verlet(system, q, p, h)
        if rng is not None:
            p = _ou(system, p, h, rng)
    return StateVector(q, p)

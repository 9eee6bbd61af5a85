"""Post-analysis balancing: pull analysis members back toward {g = 0}.

An ensemble analysis mixes states linearly and therefore throws members off
the constraint manifold, exciting fast oscillations with energy of order
error^2 / eps^2.  The two remedies implemented here act on member positions
only (momenta pass through untouched unless projection is requested):

* penalty relaxation - minimize J_i(q) = (q - qhat_i)^T B^-1 (q - qhat_i)/2
  + lam g(q)^T K g(q)/2 per member, by a frozen-Jacobian Newton iteration or
  its one-shot linearization;
* pseudo observations - a Kalman update of the positions against the
  synthetic observation g = 0 with noise covariance kbt eps^2 K^-1, the
  thermal variance of the constraint distance.

The background B defaults to the position block of the analysis covariance,
ridge-regularized by 1e-10 tr(B)/N I (the ridge is always added; it is
negligible whenever B is well conditioned).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .filters import Ensemble
from .models import StateVector, StiffSystem, lagrange_multiplier, tangential_projector

__all__ = [
    "PenaltyConfig",
    "PenaltyResult",
    "regularize_covariance",
    "penalty_newton",
    "penalty_linearized",
    "penalty_balance_ensemble",
    "pseudo_obs_balance",
]

_RIDGE = 1e-10


@dataclass(frozen=True)
class PenaltyConfig:
    """Settings of the penalty relaxation.

    ``background`` is the position-space covariance B; leave it ``None`` to
    have ensemble-level callers fill in the analysis covariance.  With
    ``use_soft_constraint`` the residual g is replaced by the order-eps^2
    corrected gtilde, which needs the member momentum.
    """

    strength: float
    background: Optional[np.ndarray] = None
    use_soft_constraint: bool = False
    project_momentum: bool = False
    newton_tol: float = 1e-10
    newton_max_iter: int = 100

    def __post_init__(self):
        if self.strength < 0.0:
            raise ValueError("penalty strength must be nonnegative")
        if self.newton_tol <= 0.0 or self.newton_max_iter < 1:
            raise ValueError("bad Newton settings")


@dataclass(frozen=True)
class PenaltyResult:
    q: np.ndarray
    converged: bool
    iterations: int


def regularize_covariance(cov: np.ndarray) -> np.ndarray:
    """Tikhonov ridge 1e-10 tr(B)/N I against (near-)singular covariances."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    return cov + (_RIDGE * np.trace(cov) / n) * np.eye(n)


def _background_inverse(cfg: PenaltyConfig, n_dof: int) -> tuple[np.ndarray, np.ndarray]:
    if cfg.background is None:
        raise ValueError("PenaltyConfig.background is unset; provide B or balance an ensemble")
    B = regularize_covariance(cfg.background)
    if B.shape != (n_dof, n_dof):
        raise ValueError(f"background must be ({n_dof}, {n_dof})")
    return B, np.linalg.inv(B)


def _residual_g(system: StiffSystem, cfg: PenaltyConfig, q, p_hat):
    if cfg.use_soft_constraint:
        return (
            system.constraint(q)
            - system.epsilon**2 * lagrange_multiplier(system, StateVector(q, p_hat))
        )
    return system.constraint(q)


def penalty_newton(
    system: StiffSystem,
    q_hat: np.ndarray,
    cfg: PenaltyConfig,
    p_hat: Optional[np.ndarray] = None,
) -> PenaltyResult:
    """Newton iteration on the penalized cost with the Jacobian frozen at qhat.

    Updates solve (B^-1 + lam G(qhat)^T K G(q)) dq = B^-1 (q - qhat)
    + lam G(qhat)^T K g(q), halving the step until the residual norm drops,
    and stop when |dq| falls below the tolerance; on iteration-budget
    exhaustion the last (residual-wise best) iterate is returned with
    ``converged = False``.  ``p_hat`` is required for the soft-constraint
    residual and ignored otherwise.
    """
    q_hat = np.asarray(q_hat, dtype=float)
    if cfg.use_soft_constraint:
        if p_hat is None:
            raise ValueError("soft-constraint residual needs the member momentum p_hat")
        p_hat = np.asarray(p_hat, dtype=float)
    _, B_inv = _background_inverse(cfg, system.n_dof)
    lam = cfg.strength
    G_hat_k = system.jacobian(q_hat).T * system.stiffness  # G(qhat)^T K, (n, L)

    def residual_at(q):
        return B_inv @ (q - q_hat) + lam * (G_hat_k @ _residual_g(system, cfg, q, p_hat))

    q = q_hat.copy()
    for iteration in range(1, cfg.newton_max_iter + 1):
        residual = residual_at(q)
        matrix = B_inv + lam * (G_hat_k @ system.jacobian(q))
        delta = np.linalg.solve(matrix, residual)
        if float(np.linalg.norm(delta)) <= cfg.newton_tol * (1.0 + float(np.linalg.norm(q))):
            return PenaltyResult(q=q - delta, converged=True, iterations=iteration)
        # backtrack on the residual norm; far starts otherwise cycle
        res_norm = float(np.linalg.norm(residual))
        scale, reduced = 1.0, False
        while scale > 2.0**-20:
            q_try = q - scale * delta
            if float(np.linalg.norm(residual_at(q_try))) < res_norm:
                reduced = True
                break
            scale *= 0.5
        if not reduced:
            # the frozen direction no longer descends (member started far
            # off the manifold); keep the best iterate reached so far
            break
        q = q_try
    return PenaltyResult(q=q, converged=False, iterations=iteration)


def penalty_linearized(
    system: StiffSystem,
    q_hat: np.ndarray,
    cfg: PenaltyConfig,
    method: str = "direct",
) -> np.ndarray:
    """One-shot linearized penalty update (the first Newton iterate).

    ``method="direct"`` solves (B^-1 + lam G^T K G) dq = lam G^T K g(qhat);
    ``method="smw"`` is the algebraically equivalent low-rank form
    qhat - B G^T ((lam K)^-1 + G B G^T)^-1 g(qhat).
    """
    q_hat = np.asarray(q_hat, dtype=float)
    B, B_inv = _background_inverse(cfg, system.n_dof)
    lam = cfg.strength
    G = system.jacobian(q_hat)
    g_val = system.constraint(q_hat)
    if method == "direct":
        Gk = G.T * system.stiffness
        delta = np.linalg.solve(B_inv + lam * (Gk @ G), lam * (Gk @ g_val))
        return q_hat - delta
    if method == "smw":
        if lam == 0.0:
            return q_hat.copy()
        BG = B @ G.T
        inner = np.diag(1.0 / (lam * system.stiffness)) + G @ BG
        return q_hat - BG @ np.linalg.solve(inner, g_val)
    raise ValueError(f"unknown method {method!r}")


def penalty_balance_ensemble(
    system: StiffSystem, ens: Ensemble, cfg: PenaltyConfig
) -> Ensemble:
    """Penalty-relax every member of an analysis ensemble.

    A missing background is filled with the ensemble's position covariance.
    Members whose Newton iteration stalls keep their best iterate.  Momenta
    pass through bit-exact unless ``cfg.project_momentum`` asks for the
    tangential projection at the balanced positions.
    """
    if cfg.background is None:
        cfg = replace(cfg, background=ens.cov()[: ens.n_dof, : ens.n_dof])
    positions = ens.positions
    momenta = ens.momenta
    balanced = np.empty_like(positions)
    for i in range(ens.size):
        p_hat = momenta[i] if cfg.use_soft_constraint else None
        balanced[i] = penalty_newton(system, positions[i], cfg, p_hat=p_hat).q
    if cfg.project_momentum:
        proj = tangential_projector(system, balanced)
        momenta = np.einsum("anm,am->an", proj, momenta)
    else:
        momenta = momenta.copy()
    return Ensemble(np.concatenate([balanced, momenta], axis=1), ens.n_dof)


def pseudo_obs_balance(
    system: StiffSystem, ens: Ensemble, rng: np.random.Generator
) -> Ensemble:
    """Assimilate the pseudo observation g = 0 into the member positions.

    Per member i: q_i <- q_i - K_i (g(q_i) + xi_i) with gain
    K_i = B G_i^T (kbt eps^2 K^-1 + G_i B G_i^T)^-1, the Jacobian G_i taken
    at the member, B the shared (regularized) position covariance, and
    xi_i ~ N(0, kbt eps^2 K^-1) drawn per member.  Momenta are untouched.
    """
    if system.kbt is None:
        raise ValueError("pseudo-observation balancing needs a thermal system (kbt set)")
    B = regularize_covariance(ens.cov()[: ens.n_dof, : ens.n_dof])
    positions = ens.positions
    G = system.jacobian(positions)  # (M, L, n)
    g_val = system.constraint(positions)  # (M, L)
    r_diag = system.kbt * system.epsilon**2 / system.stiffness  # (L,)
    noise = np.sqrt(r_diag) * rng.standard_normal(g_val.shape)
    BG = np.einsum("nm,alm->anl", B, G)  # B G_i^T per member
    S = np.einsum("aln,anm->alm", G, BG)
    S[..., np.arange(system.n_constraints), np.arange(system.n_constraints)] += r_diag
    weights = np.linalg.solve(S, (g_val + noise)[..., np.newaxis])[..., 0]
    balanced = positions - np.einsum("anl,al->an", BG, weights)
    return Ensemble(np.concatenate([balanced, ens.momenta.copy()], axis=1), ens.n_dof)
